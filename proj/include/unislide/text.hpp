#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unislide::text {

// All lengths and offsets in this project are measured in Unicode code
// points unless a name says otherwise.

std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
std::size_t code_point_count(std::string_view s);

/// Code-point substring; out-of-range bounds are clamped.
std::string substr_cp(std::string_view s, std::size_t start, std::size_t length);
std::string truncate_cp(std::string_view s, std::size_t max_code_points);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Lowercased word tokens; ASCII punctuation and whitespace separate tokens,
/// non-ASCII code points are kept inside tokens.
std::vector<std::string> tokenize(std::string_view s);

/// Sentence split on . ! ? followed by whitespace, and on newlines.
std::vector<std::string> split_sentences(std::string_view s);

bool is_number_token(std::string_view token);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0);
std::uint64_t splitmix64(std::uint64_t& state);
std::string sha256_hex(std::string_view data);

/// Fixed-point rendering used in reports and markdown ("%.*f").
std::string fixed(double value, int decimals = 2);

/// First balanced {...} or [...] block in a model response (code fences and
/// prose around it are ignored). Returns nullopt when none is found.
std::optional<std::string> extract_json_block(std::string_view response);

std::string base64_encode(std::string_view data);

}  // namespace unislide::text
