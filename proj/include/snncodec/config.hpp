#pragma once

// Flat key=value configuration text: one pair per line, '#' starts a
// comment, surrounding whitespace is ignored.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace snncodec {

using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError on malformed lines or duplicate keys.
KeyValues parse_key_values(std::string_view text);

bool parse_bool(std::string_view key, std::string_view value);
double parse_real(std::string_view key, std::string_view value);
std::size_t parse_count(std::string_view key, std::string_view value);
std::uint64_t parse_seed(std::string_view key, std::string_view value);
/// Comma-separated seeds.
std::vector<std::uint64_t> parse_seed_list(std::string_view key, std::string_view value);

/// Shortest text that parses back to the same double.
std::string format_real(double v);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace snncodec
