#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace costforge::text {

std::string_view trim(std::string_view s);
std::string_view trim_left(std::string_view s);
bool is_blank(std::string_view s);

/// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool contains(std::string_view haystack, std::string_view needle);

/// Collapses every whitespace run into a single space and trims the ends.
std::string normalize_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace costforge::text
