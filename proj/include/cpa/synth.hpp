#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cpa/as_rel.hpp"
#include "cpa/bgp_propagate.hpp"
#include "cpa/centrality.hpp"
#include "cpa/geo_db.hpp"
#include "cpa/pipeline.hpp"
#include "cpa/rib_ingest.hpp"
#include "cpa/trace_country.hpp"

namespace cpa::synth {

struct PrefixDecl {
    Prefix prefix;
    Asn origin;
    CountryCode country;
    /// Neighbors the origin announces to; empty means all.
    std::set<Asn> announce;
};

/// A small Internet: labeled topology, routable prefixes, registry data,
/// RIB routes and traceroutes.
struct Internet {
    std::map<Edge, Relationship> labels;
    std::vector<Asn> vertices;
    std::vector<PrefixDecl> prefixes;
    RibCorpus routes;
    GeoDb geo;
    std::vector<Traceroute> traces;

    Topology topology() const;
    CountryPrefixTable table() const;
    AnnouncementPolicy policy() const;
    /// Routes for one prefix as plain paths.
    std::vector<AsPath> routes_for(const Prefix& p) const;
    /// Pipeline inputs. Prefixes without a route get a route at their origin
    /// so every prefix has a known origin.
    PipelineData data() const;
};

/// Text fixtures, one directive per line ('#' comments):
///   as <asn>...
///   edge <asn> <asn> <c2p|p2c|p2p|s2s>
///   prefix <prefix> origin=<asn> country=<cc> [announce=<asn>,...]
///   route <observer> <prefix> <asn>...
///   geo <prefix> <cc> <asn>
///   trace <src> <dst> <hop,...|->
/// Each prefix also becomes a registry entry unless a geo line names it.
Internet parse_fixture(std::istream& in);
Internet parse_fixture_file(const std::string& path);

struct SynthSpec {
    std::size_t ases = 12;
    std::size_t countries = 4;
    /// Upper bound; each AS gets 0..max prefixes (stubs at least one).
    std::size_t max_prefixes_per_as = 2;
    std::size_t tiers = 3;
    /// Probability of an extra same-tier peer edge per AS.
    double peer_probability = 0.3;
    /// Probability that a lower-tier AS gets a second provider.
    double multihome_probability = 0.4;
    /// Probability of turning one provider edge into a sibling edge.
    double sibling_probability = 0.0;
    /// ASes whose best paths are dumped as RIB routes.
    std::size_t observers = 3;
    /// Traceroute sources; each traces to every reachable prefix.
    std::size_t trace_sources = 3;
    std::uint64_t seed = 1;
};

/// Deterministic per seed. Routes and traces follow the stable routing
/// state, and each trace's routers are placed so the ingress tables can
/// memorize it exactly. Throws InputError for an infeasible spec.
Internet generate(const SynthSpec& spec);

/// Exhaustive path sets for one prefix. Shares no selection logic with the
/// propagation engine.
struct OraclePaths {
    /// Every loop-free path each AS could legally hold.
    std::map<Asn, std::set<AsPath>> legal;
    /// Paths each AS holds once routing has settled, and its best.
    std::map<Asn, std::set<AsPath>> stable;
    std::map<Asn, AsPath> best;
};

/// Throws InputError when the topology has more than `max_ases` vertices.
OraclePaths oracle_paths(const Topology& topo, const Prefix& prefix, Asn origin, const std::vector<AsPath>& training,
                         const AnnouncementPolicy* policy = nullptr, std::size_t max_ases = 10);

/// Settled state only, without enumerating every legal path (no size guard).
OraclePaths oracle_stable_state(const Topology& topo, const Prefix& prefix, Asn origin,
                                const std::vector<AsPath>& training, const AnnouncementPolicy* policy = nullptr);

/// Asynchronous simulation with a random activation order, to the state
/// where no activation changes anything.
OraclePaths oracle_random_order(const Topology& topo, const Prefix& prefix, Asn origin,
                                const std::vector<AsPath>& training, const AnnouncementPolicy* policy,
                                std::uint64_t seed);

struct OracleCentrality {
    std::map<CountryCode, double> cc;
    std::map<CountryCode, double> scc;
};

/// Double loop over ordered prefix pairs with exact rational weights.
/// Throws InputError beyond `max_countries` or `max_prefixes`.
OracleCentrality oracle_centrality(const std::vector<PathAssignment>& assignments, const CountryPrefixTable& table,
                                   std::size_t max_countries = 6, std::size_t max_prefixes = 12);

/// TSV dumps for diffing.
void write_oracle_paths(std::ostream& out, const OraclePaths& paths);
void write_oracle_centrality(std::ostream& out, const OracleCentrality& c);

/// Assignments for every ordered pair of table prefixes, from the engine's
/// propagation and prediction with source-group representative addresses.
std::vector<PathAssignment> engine_assignments(const PipelineData& data, const IngressModel& model,
                                               const PropagationParams& params = {});

/// Large random model plus queries for throughput measurement.
struct PredictWorkload {
    GeoDb geo;
    IngressModel model;
    struct Query {
        AsPath path;
        IpAddr src;
        CountryCode src_country;
        CountryCode dst_country;
    };
    std::vector<Query> queries;
};

PredictWorkload make_predict_workload(std::size_t min_entries, std::size_t queries, std::uint64_t seed);

struct ThroughputResult {
    std::size_t inferences = 0;
    double seconds = 0.0;
    double per_second = 0.0;
    std::size_t lookups = 0;
};

/// Single-threaded predict_country_path over the workload's queries,
/// repeated until `min_seconds` has elapsed.
ThroughputResult measure_predict(const PredictWorkload& w, double min_seconds = 0.5);

}  // namespace cpa::synth
