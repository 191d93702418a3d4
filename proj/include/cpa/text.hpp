#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpa::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
/// Splits on runs of spaces/tabs, dropping empty tokens.
std::vector<std::string_view> split_ws(std::string_view s);
bool is_comment_or_blank(std::string_view line);

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<double> parse_double(std::string_view s);

/// Shortest round-trip decimal rendering.
std::string format_double(double v);
/// Exact hexadecimal rendering, for checkpoint files.
std::string format_hexfloat(double v);
std::optional<double> parse_hexfloat(std::string_view s);

/// 64-bit FNV-1a, used for stage fingerprints.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace cpa::text
