#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpa {

/// Malformed textual input (bad token, bad row). Maps to CLI exit code 1.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or unusable input data. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An internal invariant was violated. Maps to CLI exit code 2.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct IpAddr {
    std::uint32_t value = 0;

    friend constexpr auto operator<=>(IpAddr, IpAddr) = default;
};

IpAddr parse_ip(std::string_view text);
std::optional<IpAddr> try_parse_ip(std::string_view text);
std::string to_string(IpAddr ip);

struct Asn {
    std::uint32_t value = 0;

    friend constexpr auto operator<=>(Asn, Asn) = default;
};

Asn parse_asn(std::string_view text);
std::string to_string(Asn asn);

/// IPv4 prefix in canonical form: host bits below `length()` are zero.
class Prefix {
public:
    constexpr Prefix() = default;
    /// Clears host bits of `base`; length must be in [0, 32].
    Prefix(IpAddr base, int length);

    constexpr IpAddr base() const { return base_; }
    constexpr int length() const { return length_; }
    /// Number of addresses, 2^(32 - length).
    constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - length_); }
    bool contains(IpAddr ip) const;
    bool contains(const Prefix& other) const;

    friend constexpr auto operator<=>(const Prefix&, const Prefix&) = default;

private:
    IpAddr base_{};
    int length_ = 0;
};

std::uint32_t prefix_mask(int length);
Prefix parse_prefix(std::string_view text);
std::string to_string(const Prefix& p);

/// Two-letter uppercase ISO 3166 code.
class CountryCode {
public:
    constexpr CountryCode() = default;

    static std::optional<CountryCode> parse(std::string_view text);
    /// Throws ParseError on anything but two ASCII letters (case folded).
    static CountryCode from(std::string_view text);

    std::string str() const { return {chars_[0], chars_[1]}; }
    constexpr bool empty() const { return chars_[0] == '\0'; }
    /// Dense index in [0, 676) for A..Z pairs.
    constexpr int index() const { return (chars_[0] - 'A') * 26 + (chars_[1] - 'A'); }
    static CountryCode from_index(int idx);

    friend constexpr auto operator<=>(const CountryCode&, const CountryCode&) = default;

private:
    std::array<char, 2> chars_{'\0', '\0'};
};

inline constexpr int kCountrySlots = 26 * 26;

/// Registry codes that name a region rather than a country.
bool is_vague_code(CountryCode code);

/// HK is folded into CN; EU/AP yield nullopt.
std::optional<CountryCode> normalize_country(CountryCode code);

/// First element is the AS nearest the observer, last is the origin.
using AsPath = std::vector<Asn>;
using CountryPath = std::vector<CountryCode>;

/// Collapses runs of equal codes; non-consecutive repeats stay.
CountryPath dedupe_countries(std::span<const CountryCode> path);

std::string format_as_path(std::span<const Asn> path, char sep = ' ');
AsPath parse_as_path(std::string_view text, char sep);
std::string format_country_path(std::span<const CountryCode> path, char sep = ',');
CountryPath parse_country_path(std::string_view text, char sep = ',');

struct Traceroute {
    IpAddr src;
    IpAddr dst;
    /// nullopt marks an unresponsive hop.
    std::vector<std::optional<IpAddr>> hops;

    bool incomplete() const;
};

struct PathHash {
    std::size_t operator()(std::span<const Asn> path) const noexcept;
};

inline std::size_t hash_mix(std::size_t h, std::uint64_t v) noexcept {
    v *= 0x9E3779B97F4A7C15ULL;
    v ^= v >> 32;
    return (h ^ v) * 0x100000001B3ULL + 0x7F4A7C15;
}

}  // namespace cpa

template <>
struct std::hash<cpa::IpAddr> {
    std::size_t operator()(cpa::IpAddr ip) const noexcept { return cpa::hash_mix(0, ip.value); }
};

template <>
struct std::hash<cpa::Asn> {
    std::size_t operator()(cpa::Asn a) const noexcept { return cpa::hash_mix(0, a.value); }
};

template <>
struct std::hash<cpa::Prefix> {
    std::size_t operator()(const cpa::Prefix& p) const noexcept {
        return cpa::hash_mix(cpa::hash_mix(0, p.base().value), static_cast<std::uint64_t>(p.length()));
    }
};

template <>
struct std::hash<cpa::CountryCode> {
    std::size_t operator()(const cpa::CountryCode& c) const noexcept {
        return static_cast<std::size_t>(c.index());
    }
};
