#pragma once

#include <string_view>

namespace costforge::judging {

/// Reads "Score: <int>" (case-insensitive, ':' or '='); the last occurrence
/// wins so a rubric echo earlier in the reply does not count. Throws
/// JudgeUnparseable or ScoreOutOfRange (outside [0, 100]).
int parse_score(std::string_view reply);

/// Looks for the words `yes_word` / `no_word` (case-insensitive, whole words).
/// Throws JudgeUnparseable when neither or both occur.
bool parse_binary(std::string_view reply, std::string_view yes_word, std::string_view no_word);

}  // namespace costforge::judging
