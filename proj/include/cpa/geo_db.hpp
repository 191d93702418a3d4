#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpa/net_model.hpp"
#include "cpa/prefix_trie.hpp"
#include "cpa/rib_ingest.hpp"

namespace cpa {

enum class GeoSource : std::uint8_t { Registry, WhoisFallback, Override };

std::string_view source_name(GeoSource s);

struct GeoEntry {
    /// nullopt when the registry code was vague (EU/AP).
    std::optional<CountryCode> country;
    Asn asn;
    GeoSource source = GeoSource::Registry;
};

struct GeoAnswer {
    CountryCode country;
    Asn asn;
    GeoSource source = GeoSource::Registry;

    friend bool operator==(const GeoAnswer&, const GeoAnswer&) = default;
};

/// Longest-prefix-match table from address space to (country, AS).
/// Entries are normalized on insert: HK becomes CN, EU/AP become unresolved.
class GeoDb {
public:
    /// Returns true if an entry for exactly this prefix was replaced.
    bool add(const Prefix& p, CountryCode raw_country, Asn asn, GeoSource source = GeoSource::Registry);

    const std::pair<Prefix, GeoEntry>* longest_match(IpAddr ip) const { return trie_.longest_match(ip); }
    const std::pair<Prefix, GeoEntry>* covering(const Prefix& p) const { return trie_.covering(p); }

    /// Registry answer for an address, if its longest match is specific.
    std::optional<GeoAnswer> lookup(IpAddr ip) const;
    /// Registry answer for the longest entry covering a whole prefix.
    std::optional<GeoAnswer> lookup(const Prefix& p) const;

    /// Majority country across an AS's specific entries (ties to the lowest code).
    std::optional<CountryCode> country_of_as(Asn asn) const;

    std::size_t size() const { return trie_.size(); }
    const std::vector<std::pair<Prefix, GeoEntry>>& entries() const { return trie_.entries(); }

private:
    PrefixTrie<GeoEntry> trie_;
    std::map<Asn, std::map<CountryCode, std::size_t>> as_votes_;
};

struct GeoDbBuild {
    GeoDb db;
    std::vector<RejectRecord> rejects;
    std::size_t duplicate_rows = 0;
    std::size_t vague_rows = 0;
    std::size_t hk_rewrites = 0;
};

/// CSV `prefix,country_code,asn`; '#' comments. Duplicate prefixes: last row wins.
GeoDbBuild build_geodb(std::istream& registry, std::istream* overrides = nullptr);
GeoDbBuild build_geodb(const std::string& registry_file, const std::optional<std::string>& overrides_file = {});

void write_geodb(std::ostream& out, const GeoDb& db);

/// Generic longest-match query over a trie.
template <typename T>
std::optional<Prefix> longest_match(const PrefixTrie<T>& table, IpAddr ip) {
    auto* hit = table.longest_match(ip);
    if (!hit) return std::nullopt;
    return hit->first;
}

std::optional<Prefix> longest_match(const GeoDb& db, IpAddr ip);

struct LookupAnswer {
    CountryCode country;
    Asn asn;
};

/// Remote registry lookup used when the local table has no specific answer.
/// Failures are returned as nullopt.
class LookupClient {
public:
    virtual ~LookupClient() = default;
    virtual std::optional<LookupAnswer> request(IpAddr ip) = 0;
};

/// Answers from a file of `ip|asn|country` lines (the bulk protocol's output).
class FileLookupClient final : public LookupClient {
public:
    FileLookupClient() = default;
    explicit FileLookupClient(std::istream& in);
    static FileLookupClient from_file(const std::string& path);

    void set(IpAddr ip, LookupAnswer answer) { answers_[ip] = answer; }
    std::optional<LookupAnswer> request(IpAddr ip) override;
    std::size_t requests() const { return requests_; }

private:
    std::unordered_map<IpAddr, LookupAnswer> answers_;
    std::size_t requests_ = 0;
};

/// Encodes newline-delimited IPs wrapped in begin/end markers.
std::string encode_bulk_request(std::span<const IpAddr> ips);
/// Parses `ip|asn|country` lines. Malformed or NA rows are skipped.
std::unordered_map<IpAddr, LookupAnswer> parse_bulk_response(std::string_view text);

/// Registry table plus fallback client, with a thread-safe answer cache.
class Resolver {
public:
    explicit Resolver(const GeoDb& db, LookupClient* client = nullptr) : db_(&db), client_(client) {}

    /// Specific registry answer, else normalized client answer, else nullopt.
    std::optional<GeoAnswer> resolve(IpAddr ip) const;
    std::optional<GeoAnswer> resolve(const Prefix& p) const;

    const GeoDb& db() const { return *db_; }

private:
    const GeoDb* db_;
    LookupClient* client_;
    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<IpAddr, std::optional<GeoAnswer>> cache_;
};

std::optional<GeoAnswer> resolve(const GeoDb& db, LookupClient* client, IpAddr ip);

}  // namespace cpa
