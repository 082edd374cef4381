#include "costforge/judging.hpp"

#include <cctype>
#include <regex>
#include <string>

#include "costforge/error.hpp"
#include "costforge/text.hpp"

namespace costforge::judging {

int parse_score(std::string_view reply) {
  static const std::regex pattern(R"(score\s*[:=]\s*\**\s*(-?\d+))", std::regex::icase);
  const std::string s(reply);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) throw JudgeUnparseable("no 'Score: <int>' in judge reply: " + s.substr(0, 200));
  const std::string digits = last[1].str();
  if (digits.size() > 6) throw ScoreOutOfRange("judge score " + digits + " outside [0, 100]");
  const int value = std::stoi(digits);
  if (value < 0 || value > 100) throw ScoreOutOfRange("judge score " + digits + " outside [0, 100]");
  return value;
}

bool parse_binary(std::string_view reply, std::string_view yes_word, std::string_view no_word) {
  bool yes = false, no = false;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      yes = yes || text::iequals(word, yes_word);
      no = no || text::iequals(word, no_word);
    }
    word.clear();
  };
  for (char c : reply) {
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      word.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  if (yes == no)
    throw JudgeUnparseable("expected exactly one of " + std::string(yes_word) + "/" + std::string(no_word) +
                           " in judge reply: " + std::string(reply.substr(0, 200)));
  return yes;
}

}  // namespace costforge::judging
