#include "cpa/net_model.hpp"

#include "cpa/text.hpp"

namespace cpa {

std::optional<IpAddr> try_parse_ip(std::string_view text) {
    auto parts = text::split(text, '.');
    if (parts.size() != 4) return std::nullopt;
    std::uint32_t value = 0;
    for (auto part : parts) {
        if (part.empty() || part.size() > 3) return std::nullopt;
        auto octet = text::parse_int<unsigned>(part);
        if (!octet || *octet > 255) return std::nullopt;
        value = (value << 8) | *octet;
    }
    return IpAddr{value};
}

IpAddr parse_ip(std::string_view text) {
    auto ip = try_parse_ip(text);
    if (!ip) throw ParseError("bad IPv4 address '" + std::string(text) + "'");
    return *ip;
}

std::string to_string(IpAddr ip) {
    const auto v = ip.value;
    return std::to_string(v >> 24) + '.' + std::to_string((v >> 16) & 0xff) + '.' +
           std::to_string((v >> 8) & 0xff) + '.' + std::to_string(v & 0xff);
}

Asn parse_asn(std::string_view text) {
    auto v = text::parse_int<std::uint32_t>(text);
    if (!v || *v == 0) throw ParseError("bad AS number '" + std::string(text) + "'");
    return Asn{*v};
}

std::string to_string(Asn asn) { return std::to_string(asn.value); }

std::uint32_t prefix_mask(int length) {
    return length == 0 ? 0u : ~std::uint32_t{0} << (32 - length);
}

Prefix::Prefix(IpAddr base, int length) : base_{base.value & prefix_mask(length)}, length_{length} {
    if (length < 0 || length > 32) throw ParseError("prefix length out of range: " + std::to_string(length));
}

bool Prefix::contains(IpAddr ip) const { return (ip.value & prefix_mask(length_)) == base_.value; }

bool Prefix::contains(const Prefix& other) const {
    return other.length_ >= length_ && contains(other.base_);
}

Prefix parse_prefix(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos)
        throw ParseError("bad prefix '" + std::string(text) + "': missing '/len'");
    auto ip = try_parse_ip(text.substr(0, slash));
    if (!ip) throw ParseError("bad prefix '" + std::string(text) + "': address '" +
                              std::string(text.substr(0, slash)) + "'");
    auto len = text::parse_int<int>(text.substr(slash + 1));
    if (!len || *len < 0 || *len > 32)
        throw ParseError("bad prefix '" + std::string(text) + "': length '" +
                         std::string(text.substr(slash + 1)) + "'");
    return Prefix(*ip, *len);
}

std::string to_string(const Prefix& p) { return to_string(p.base()) + '/' + std::to_string(p.length()); }

std::optional<CountryCode> CountryCode::parse(std::string_view text) {
    if (text.size() != 2) return std::nullopt;
    CountryCode c;
    for (int i = 0; i < 2; ++i) {
        char ch = text[i];
        if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
        if (ch < 'A' || ch > 'Z') return std::nullopt;
        c.chars_[i] = ch;
    }
    return c;
}

CountryCode CountryCode::from(std::string_view text) {
    auto c = parse(text);
    if (!c) throw ParseError("bad country code '" + std::string(text) + "'");
    return *c;
}

CountryCode CountryCode::from_index(int idx) {
    CountryCode c;
    c.chars_ = {static_cast<char>('A' + idx / 26), static_cast<char>('A' + idx % 26)};
    return c;
}

bool is_vague_code(CountryCode code) {
    static const auto eu = CountryCode::from("EU");
    static const auto ap = CountryCode::from("AP");
    return code == eu || code == ap;
}

std::optional<CountryCode> normalize_country(CountryCode code) {
    static const auto hk = CountryCode::from("HK");
    static const auto cn = CountryCode::from("CN");
    if (code.empty() || is_vague_code(code)) return std::nullopt;
    if (code == hk) return cn;
    return code;
}

CountryPath dedupe_countries(std::span<const CountryCode> path) {
    CountryPath out;
    out.reserve(path.size());
    for (const auto& c : path)
        if (out.empty() || out.back() != c) out.push_back(c);
    return out;
}

std::string format_as_path(std::span<const Asn> path, char sep) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(path[i].value);
    }
    return out;
}

AsPath parse_as_path(std::string_view text, char sep) {
    AsPath out;
    for (auto tok : text::split(text, sep)) {
        tok = text::trim(tok);
        if (!tok.empty()) out.push_back(parse_asn(tok));
    }
    return out;
}

std::string format_country_path(std::span<const CountryCode> path, char sep) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += sep;
        out += path[i].str();
    }
    return out;
}

CountryPath parse_country_path(std::string_view text, char sep) {
    CountryPath out;
    for (auto tok : text::split(text, sep)) {
        tok = text::trim(tok);
        if (!tok.empty()) out.push_back(CountryCode::from(tok));
    }
    return out;
}

bool Traceroute::incomplete() const {
    for (const auto& h : hops)
        if (!h) return true;
    return false;
}

std::size_t PathHash::operator()(std::span<const Asn> path) const noexcept {
    std::size_t h = path.size();
    for (auto a : path) h = hash_mix(h, a.value);
    return h;
}

}  // namespace cpa
