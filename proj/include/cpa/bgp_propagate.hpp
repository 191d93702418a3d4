#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cpa/as_rel.hpp"
#include "cpa/net_model.hpp"
#include "cpa/rib_ingest.hpp"

namespace cpa {

/// Ranking attributes of a candidate path.
struct PathRank {
    /// Leading ASes not covered by the longest known suffix.
    std::uint32_t ulen = 0;
    /// AS-path hop count.
    std::uint32_t length = 0;
    /// Training routes containing that known suffix.
    std::uint32_t freq = 0;

    friend bool operator==(const PathRank&, const PathRank&) = default;
};

/// Lower ulen, then shorter, then higher freq, then lexicographically
/// smaller ASN sequence. `less` means p1 is preferred.
std::strong_ordering compare_paths(std::span<const Asn> p1, const PathRank& r1, std::span<const Asn> p2,
                                   const PathRank& r2);

/// Suffix-occurrence table of the training routes for one prefix.
class KnownPaths {
public:
    KnownPaths() = default;
    void add_route(std::span<const Asn> path);

    std::uint32_t count(const AsPath& path) const;
    bool empty() const { return counts_.empty(); }
    /// Rank computed from scratch by scanning suffixes.
    PathRank rank(const AsPath& path) const;
    /// Rank of `path` given the rank of its tail path[1..].
    PathRank extend(const AsPath& path, const PathRank& tail) const;

private:
    std::unordered_map<AsPath, std::uint32_t, PathHash> counts_;
};

struct Candidate {
    AsPath path;
    PathRank rank;
    /// Neighbor whose best path produced this entry.
    std::optional<VertexId> via;
    /// Relationship toward the owning AS of the neighbor the route was
    /// effectively learned from (siblings pass through); nullopt = originated.
    std::optional<Relationship> learned;
    bool primed = false;
};

struct PropagationParams {
    /// Queue pops allowed per vertex before the run is declared divergent.
    std::size_t max_pops_per_vertex = 64;
    /// Candidate list cap per (AS, prefix).
    std::size_t max_alternates = 16;
};

/// Per-prefix announcement restriction: origin -> neighbors it announces to.
struct AnnouncementPolicy {
    std::map<Prefix, std::set<Asn>> announce_to;

    bool allows(const Prefix& p, Asn neighbor) const;
};

struct PropagationStats {
    std::size_t pops = 0;
    std::size_t offers = 0;
    std::size_t truncated = 0;
    std::size_t dropped_seeds = 0;
};

class PropagationError : public std::runtime_error {
public:
    PropagationError(const std::string& what, PropagationStats stats)
        : std::runtime_error(what), stats_(stats) {}
    const PropagationStats& stats() const { return stats_; }

private:
    PropagationStats stats_;
};

/// Candidate lists of every AS for a single destination prefix.
class PrefixRib {
public:
    PrefixRib() = default;
    PrefixRib(const Topology& topo, Prefix prefix);

    const Prefix& prefix() const { return prefix_; }
    const Topology& topology() const { return *topo_; }
    const KnownPaths& known() const { return known_; }
    const PropagationStats& stats() const { return stats_; }

    /// Ordered candidates at a vertex, best first.
    std::span<const Candidate> candidates(VertexId v) const { return lists_[v]; }
    std::span<const Candidate> candidates(Asn asn) const;

    std::vector<Candidate>& mutable_list(VertexId v) { return lists_[v]; }
    KnownPaths& mutable_known() { return known_; }
    PropagationStats& mutable_stats() { return stats_; }

private:
    const Topology* topo_ = nullptr;
    Prefix prefix_;
    KnownPaths known_;
    std::vector<std::vector<Candidate>> lists_;
    PropagationStats stats_;
};

/// Seeds every AS on each training route for `prefix` with its suffix.
/// Seeds that are not loop-free and valley-free under `topo` are dropped
/// and counted. Throws InputError if the corpus has no route for the prefix.
PrefixRib prime(const RibCorpus& corpus, const Prefix& prefix, const Topology& topo);

/// Seeds only the origin, for prefixes without training routes.
PrefixRib prime_origin(Asn origin, const Prefix& prefix, const Topology& topo);

/// Work-queue relaxation to a fixed point. Primed ASes keep receiving
/// offers. Throws PropagationError when the pop budget is exhausted.
PrefixRib propagate(const Topology& topo, PrefixRib primed, const PropagationParams& params = {},
                    const AnnouncementPolicy* policy = nullptr);

/// All prefixes' candidate lists.
class RibIn {
public:
    void insert(PrefixRib rib);
    const PrefixRib* find(const Prefix& p) const;
    const std::map<Prefix, PrefixRib>& prefixes() const { return ribs_; }

private:
    std::map<Prefix, PrefixRib> ribs_;
};

/// nullopt means unreachable.
std::optional<AsPath> best_path(const RibIn& rib, Asn asn, const Prefix& prefix);
std::optional<AsPath> best_path(const PrefixRib& rib, Asn asn);
/// Whole ordered candidate list including the best; empty if unreachable.
std::vector<AsPath> alternate_paths(const RibIn& rib, Asn asn, const Prefix& prefix);
std::vector<AsPath> alternate_paths(const PrefixRib& rib, Asn asn);

/// `prefix<TAB>asn<TAB>rank<TAB>as-path`, sorted by prefix, ASN, rank.
void write_snapshot(std::ostream& out, const PrefixRib& rib);
void write_snapshot(std::ostream& out, const RibIn& rib);

/// Snapshot rows grouped back into ordered path lists.
using RibSnapshot = std::map<Prefix, std::map<Asn, std::vector<AsPath>>>;
RibSnapshot read_snapshot(std::istream& in);

}  // namespace cpa
