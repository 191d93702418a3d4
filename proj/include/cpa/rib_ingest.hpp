#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpa/net_model.hpp"

namespace cpa {

struct RibRoute {
    Asn observer;
    Prefix prefix;
    AsPath path;

    Asn origin() const { return path.back(); }
    friend bool operator==(const RibRoute&, const RibRoute&) = default;
};

/// Routes in input order, indexed by prefix and by observer AS.
class RibCorpus {
public:
    RibCorpus() = default;
    explicit RibCorpus(std::vector<RibRoute> routes);

    void add(RibRoute route);
    /// Appends `other`'s routes; indexes stay consistent.
    void merge(const RibCorpus& other);

    const std::vector<RibRoute>& routes() const { return routes_; }
    bool empty() const { return routes_.empty(); }
    std::size_t size() const { return routes_.size(); }

    /// Route indices for a prefix, input order.
    const std::vector<std::size_t>& routes_for(const Prefix& p) const;
    const std::vector<std::size_t>& routes_from(Asn observer) const;

    /// Distinct prefixes in first-seen order.
    const std::vector<Prefix>& prefixes() const { return prefix_order_; }
    /// Distinct observer ASes, ascending.
    std::vector<Asn> observers() const;
    /// Majority origin AS of a prefix (ties to the lowest ASN).
    std::optional<Asn> origin_of(const Prefix& p) const;

private:
    std::vector<RibRoute> routes_;
    std::vector<Prefix> prefix_order_;
    std::unordered_map<Prefix, std::vector<std::size_t>> by_prefix_;
    std::map<Asn, std::vector<std::size_t>> by_observer_;
};

struct RejectRecord {
    std::size_t line = 0;
    std::string reason;
};

struct RibParseResult {
    RibCorpus corpus;
    std::vector<RejectRecord> rejects;
    std::size_t as_set_tokens_dropped = 0;
    std::size_t prepends_collapsed = 0;
};

/// Parses `observer<TAB>prefix<TAB>as path` lines; '#' lines are comments.
/// Bad lines go to `rejects`. Throws InputError if no route survives.
RibParseResult parse_rib(std::istream& in);
RibParseResult parse_rib_file(const std::string& path);

void write_rib(std::ostream& out, const RibCorpus& corpus);
/// CSV `line,reason`.
void write_rejects(std::ostream& out, const std::vector<RejectRecord>& rejects);

struct TrainTestSplit {
    RibCorpus train;
    RibCorpus test;
    std::vector<Asn> train_observers;
    std::vector<Asn> test_observers;
};

/// Partitions whole observer ASes between the sides, greedily balancing
/// route counts towards `ratio` for training. Deterministic for a seed.
TrainTestSplit split_train_test(const RibCorpus& corpus, double ratio, std::uint64_t seed);

/// Observer-to-side assignment used by split_train_test; exposed for the
/// trace splitter, which groups by vantage point the same way.
std::vector<bool> greedy_side_assignment(const std::vector<std::size_t>& weights, double ratio,
                                         std::uint64_t seed);

struct Edge {
    Asn a;  // a < b
    Asn b;

    static Edge of(Asn x, Asn y) { return x < y ? Edge{x, y} : Edge{y, x}; }
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct TopologySkeleton {
    std::vector<Asn> vertices;  // ascending
    /// Edge -> index of one route witnessing the adjacency.
    std::map<Edge, std::size_t> edges;
};

TopologySkeleton extract_topology(const RibCorpus& corpus);

}  // namespace cpa
