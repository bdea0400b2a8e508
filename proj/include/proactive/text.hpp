#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace proactive::text {

std::vector<std::string_view> split_whitespace(std::string_view s);
std::size_t count_tokens(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool is_blank(std::string_view s);

// Lowercased alphanumeric words (apostrophes kept), punctuation dropped.
std::vector<std::string> words(std::string_view s);

// 64-bit FNV-1a. Stable across platforms and runs; used for split
// assignment, cache keys and profile hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace proactive::text
