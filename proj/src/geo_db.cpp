#include "cpa/geo_db.hpp"

#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "cpa/text.hpp"

namespace cpa {

std::string_view source_name(GeoSource s) {
    switch (s) {
        case GeoSource::Registry: return "registry";
        case GeoSource::WhoisFallback: return "whois-fallback";
        case GeoSource::Override: return "override";
    }
    return "?";
}

bool GeoDb::add(const Prefix& p, CountryCode raw_country, Asn asn, GeoSource source) {
    if (const auto* old = trie_.find(p)) {
        if (old->country) {
            auto& votes = as_votes_[old->asn];
            if (--votes[*old->country] == 0) votes.erase(*old->country);
        }
    }
    GeoEntry entry{normalize_country(raw_country), asn, source};
    if (entry.country) ++as_votes_[asn][*entry.country];
    return trie_.insert(p, entry);
}

std::optional<GeoAnswer> GeoDb::lookup(IpAddr ip) const {
    const auto* hit = trie_.longest_match(ip);
    if (!hit || !hit->second.country) return std::nullopt;
    return GeoAnswer{*hit->second.country, hit->second.asn, hit->second.source};
}

std::optional<GeoAnswer> GeoDb::lookup(const Prefix& p) const {
    const auto* hit = trie_.covering(p);
    if (!hit || !hit->second.country) return std::nullopt;
    return GeoAnswer{*hit->second.country, hit->second.asn, hit->second.source};
}

std::optional<CountryCode> GeoDb::country_of_as(Asn asn) const {
    auto it = as_votes_.find(asn);
    if (it == as_votes_.end() || it->second.empty()) return std::nullopt;
    auto best = it->second.begin();
    for (auto c = it->second.begin(); c != it->second.end(); ++c)
        if (c->second > best->second) best = c;
    return best->first;
}

std::optional<Prefix> longest_match(const GeoDb& db, IpAddr ip) {
    const auto* hit = db.longest_match(ip);
    if (!hit) return std::nullopt;
    return hit->first;
}

namespace {

void load_rows(std::istream& in, GeoSource source, GeoDbBuild& out) {
    static const auto hk = CountryCode::from("HK");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(text::trim(line), ',');
        if (f.size() != 3) {
            out.rejects.push_back({lineno, "expected prefix,country_code,asn"});
            continue;
        }
        try {
            const auto prefix = parse_prefix(text::trim(f[0]));
            const auto code = CountryCode::from(text::trim(f[1]));
            const auto asn = parse_asn(text::trim(f[2]));
            if (is_vague_code(code)) ++out.vague_rows;
            if (code == hk) ++out.hk_rewrites;
            if (out.db.add(prefix, code, asn, source)) ++out.duplicate_rows;
        } catch (const ParseError& e) {
            out.rejects.push_back({lineno, e.what()});
        }
    }
}

}  // namespace

GeoDbBuild build_geodb(std::istream& registry, std::istream* overrides) {
    GeoDbBuild out;
    load_rows(registry, GeoSource::Registry, out);
    if (overrides) load_rows(*overrides, GeoSource::Override, out);
    return out;
}

GeoDbBuild build_geodb(const std::string& registry_file, const std::optional<std::string>& overrides_file) {
    std::ifstream reg(registry_file);
    if (!reg) throw InputError("cannot open registry file '" + registry_file + "'");
    if (!overrides_file) return build_geodb(reg, nullptr);
    std::ifstream ovr(*overrides_file);
    if (!ovr) throw InputError("cannot open override file '" + *overrides_file + "'");
    return build_geodb(reg, &ovr);
}

void write_geodb(std::ostream& out, const GeoDb& db) {
    for (const auto& [p, e] : db.entries())
        out << to_string(p) << ',' << (e.country ? e.country->str() : std::string("EU")) << ',' << e.asn.value
            << '\n';
}

FileLookupClient::FileLookupClient(std::istream& in) {
    std::stringstream ss;
    ss << in.rdbuf();
    answers_ = parse_bulk_response(ss.str());
}

FileLookupClient FileLookupClient::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open lookup file '" + path + "'");
    return FileLookupClient(in);
}

std::optional<LookupAnswer> FileLookupClient::request(IpAddr ip) {
    ++requests_;
    auto it = answers_.find(ip);
    if (it == answers_.end()) return std::nullopt;
    return it->second;
}

std::string encode_bulk_request(std::span<const IpAddr> ips) {
    std::string out = "begin\n";
    for (auto ip : ips) out += to_string(ip) + '\n';
    out += "end\n";
    return out;
}

std::unordered_map<IpAddr, LookupAnswer> parse_bulk_response(std::string_view body) {
    std::unordered_map<IpAddr, LookupAnswer> out;
    for (auto line : text::split(body, '\n')) {
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(line, '|');
        if (f.size() != 3) continue;
        auto ip = try_parse_ip(text::trim(f[0]));
        auto asn = text::parse_int<std::uint32_t>(text::trim(f[1]));
        auto cc = CountryCode::parse(text::trim(f[2]));
        if (!ip || !asn || *asn == 0 || !cc) continue;
        out[*ip] = LookupAnswer{*cc, Asn{*asn}};
    }
    return out;
}

std::optional<GeoAnswer> Resolver::resolve(IpAddr ip) const {
    {
        std::shared_lock lock(mutex_);
        auto it = cache_.find(ip);
        if (it != cache_.end()) return it->second;
    }
    std::optional<GeoAnswer> answer = db_->lookup(ip);
    if (!answer && client_) {
        std::unique_lock lock(mutex_);
        auto it = cache_.find(ip);
        if (it != cache_.end()) return it->second;
        if (auto remote = client_->request(ip)) {
            if (auto country = normalize_country(remote->country))
                answer = GeoAnswer{*country, remote->asn, GeoSource::WhoisFallback};
        }
        cache_[ip] = answer;
        return answer;
    }
    std::unique_lock lock(mutex_);
    cache_[ip] = answer;
    return answer;
}

std::optional<GeoAnswer> Resolver::resolve(const Prefix& p) const {
    if (auto a = db_->lookup(p)) return a;
    return resolve(p.base());
}

std::optional<GeoAnswer> resolve(const GeoDb& db, LookupClient* client, IpAddr ip) {
    return Resolver(db, client).resolve(ip);
}

}  // namespace cpa
