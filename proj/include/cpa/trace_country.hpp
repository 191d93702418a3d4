#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cpa/geo_db.hpp"
#include "cpa/net_model.hpp"
#include "cpa/rib_ingest.hpp"

namespace cpa {

/// `src<TAB>dst<TAB>hop1,hop2,...`, `*` for an unresponsive hop.
std::vector<Traceroute> parse_traceroutes(std::istream& in, std::vector<RejectRecord>* rejects = nullptr);
std::vector<Traceroute> parse_traceroutes_file(const std::string& path);
void write_traceroutes(std::ostream& out, std::span<const Traceroute> traces);

struct AnnotatedHop {
    std::optional<IpAddr> ip;
    /// nullopt for unresponsive or unresolved hops.
    std::optional<GeoAnswer> geo;
};

/// Maximal run of hops in one AS. Unknown hops inside the run set `has_gap`.
struct AsSegment {
    Asn asn;
    std::size_t first = 0;  // ingress hop
    std::size_t last = 0;   // egress hop
    bool has_gap = false;
};

/// Step from segment i to segment i + 1.
struct AsTransition {
    IpAddr entry;         // ingress of segment i
    IpAddr next_ingress;  // ingress of segment i + 1
    /// Countries of hops from `entry` through `next_ingress`, deduplicated.
    CountryPath countries;
    bool usable = true;
};

struct AnnotatedTrace {
    Traceroute trace;
    /// src, intermediate hops, dst.
    std::vector<AnnotatedHop> hops;
    std::vector<AsSegment> segments;
    std::vector<AsTransition> transitions;

    AsPath as_path() const;
    /// Deduplicated countries of the resolved hops.
    CountryPath country_path() const;
    /// Every hop responded and resolved.
    bool complete() const;
};

struct Skipped {
    std::string reason;
};

std::variant<AnnotatedTrace, Skipped> annotate(const Traceroute& trace, const Resolver& resolver);

struct TraceCorpusStats {
    std::size_t total = 0;
    std::size_t complete = 0;
    std::size_t unresolved_ip = 0;
    std::size_t skipped = 0;
    std::size_t observation_points = 0;
};

/// Next ingress plus the countries crossed on the way there.
struct IngressStep {
    IpAddr next_ingress;
    std::uint32_t segment = 0;  // index into IngressModel::segments()
};

struct TableKey {
    std::uint32_t a = 0, b = 0, c = 0, d = 0;
    friend bool operator==(const TableKey&, const TableKey&) = default;
};

struct TableKeyHash {
    std::size_t operator()(const TableKey& k) const noexcept {
        std::size_t h = hash_mix(0, k.a);
        h = hash_mix(h, k.b);
        h = hash_mix(h, k.c);
        return hash_mix(h, k.d);
    }
};

enum class MatchSource : std::uint8_t { KnownD, KnownS, FreqDC, FreqD, FreqSC, FreqS, Bridge };
std::string_view match_source_name(MatchSource s);

/// Resolved lookup tables: each key maps to its most frequently observed
/// value, ties broken by lowest ingress IP then country sequence.
class IngressModel {
public:
    using StepTable = std::unordered_map<TableKey, IngressStep, TableKeyHash>;
    using IpTable = std::unordered_map<TableKey, IpAddr, TableKeyHash>;

    const StepTable& known_d() const { return known_d_; }
    const StepTable& known_s() const { return known_s_; }
    const StepTable& freq_dc() const { return freq_dc_; }
    const StepTable& freq_d() const { return freq_d_; }
    const IpTable& freq_sc() const { return freq_sc_; }
    const IpTable& freq_s() const { return freq_s_; }
    const std::vector<CountryPath>& segments() const { return segments_; }
    std::vector<CountryPath>& mutable_segments() { return segments_; }

    /// Country observed for an ingress address during training.
    std::optional<CountryCode> ip_country(IpAddr ip) const;

    std::size_t entry_count() const;
    bool empty() const { return entry_count() == 0; }

private:
    friend class IngressModelBuilder;
    StepTable known_d_, known_s_, freq_dc_, freq_d_;
    IpTable freq_sc_, freq_s_;
    std::vector<CountryPath> segments_;
    std::unordered_map<IpAddr, CountryCode> ip_country_;
};

/// Mergeable per-table occurrence counts.
class IngressModelBuilder {
public:
    void add(const AnnotatedTrace& trace);
    /// Sums counts; the result is independent of merge order.
    void merge(const IngressModelBuilder& other);
    IngressModel finalize() const;

    std::size_t transitions_used() const { return transitions_used_; }

    /// Versioned TSV with one section per table; `geo` adds a registry section.
    void write(std::ostream& out, const GeoDb* geo = nullptr) const;
    static IngressModelBuilder read(std::istream& in, GeoDb* geo = nullptr);

private:
    using StepValue = std::pair<IpAddr, CountryPath>;
    using StepCounts = std::map<StepValue, std::uint64_t>;
    using IpCounts = std::map<IpAddr, std::uint64_t>;
    struct KeyLess {
        bool operator()(const TableKey& x, const TableKey& y) const {
            return std::tie(x.a, x.b, x.c, x.d) < std::tie(y.a, y.b, y.c, y.d);
        }
    };
    template <typename V>
    using Table = std::map<TableKey, V, KeyLess>;

    Table<StepCounts> known_d_, known_s_, freq_dc_, freq_d_;
    Table<IpCounts> freq_sc_, freq_s_;
    std::map<IpAddr, CountryCode> ip_country_;
    std::size_t transitions_used_ = 0;
};

IngressModel build_model(std::span<const AnnotatedTrace> traces);

struct Prediction {
    CountryPath path;
    /// Table that resolved each AS transition.
    std::vector<MatchSource> sources;
    /// Some transition was bridged with a registry country.
    bool low_confidence = false;
    /// Table probes performed; linear in the AS path length.
    std::size_t lookups = 0;
};

/// Walks the AS path with the known/frequency cascade. Throws InputError
/// if the path is empty or the source or destination has no country.
Prediction predict_country_path(std::span<const Asn> as_path, IpAddr src_ip, const Prefix& dst_prefix,
                                const IngressModel& model, const GeoDb& db);

/// Same, with the endpoint countries already resolved.
Prediction predict_country_path(std::span<const Asn> as_path, IpAddr src_ip, CountryCode src_country,
                                CountryCode dst_country, const IngressModel& model, const GeoDb& db);

/// |P ∩ A| / |P ∪ A| over country sets; 1 when both are empty.
double path_agreement(std::span<const CountryCode> predicted, std::span<const CountryCode> actual);

struct AnnotatedCorpus {
    std::vector<AnnotatedTrace> traces;
    TraceCorpusStats stats;
};

AnnotatedCorpus annotate_all(std::span<const Traceroute> traces, const Resolver& resolver);

/// Keeps each vantage point (source address) on one side.
std::pair<std::vector<Traceroute>, std::vector<Traceroute>> split_traces(std::span<const Traceroute> traces,
                                                                         double ratio, std::uint64_t seed);

}  // namespace cpa
