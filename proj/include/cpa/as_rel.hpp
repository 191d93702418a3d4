#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cpa/net_model.hpp"
#include "cpa/rib_ingest.hpp"

namespace cpa {

/// Relationship of one AS toward another: `CustomerOf` means "is a customer of".
enum class Relationship : std::uint8_t { CustomerOf, ProviderOf, Peer, Sibling };

constexpr Relationship reverse(Relationship r) {
    switch (r) {
        case Relationship::CustomerOf: return Relationship::ProviderOf;
        case Relationship::ProviderOf: return Relationship::CustomerOf;
        default: return r;
    }
}

/// "c2p" / "p2c" / "p2p" / "s2s" for the relationship of the first AS toward the second.
std::string_view label_name(Relationship r);
std::optional<Relationship> parse_label(std::string_view text);

using VertexId = std::uint32_t;

/// Labeled AS graph. Immutable once built; adjacency is sorted by neighbor ASN.
class Topology {
public:
    struct Neighbor {
        VertexId vertex;
        /// The neighbor's relationship toward this vertex.
        Relationship role;
    };

    Topology() = default;
    /// `labels` maps each edge to the relationship of edge.a toward edge.b.
    explicit Topology(const std::map<Edge, Relationship>& labels, std::span<const Asn> extra_vertices = {});

    std::size_t vertex_count() const { return asns_.size(); }
    std::size_t edge_count() const { return labels_.size(); }
    std::optional<VertexId> index_of(Asn asn) const;
    Asn asn(VertexId v) const { return asns_[v]; }
    const std::vector<Asn>& vertices() const { return asns_; }
    std::span<const Neighbor> neighbors(VertexId v) const {
        return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
    }
    std::size_t degree(VertexId v) const { return offsets_[v + 1] - offsets_[v]; }

    /// Relationship of `a` toward `b`, if they are adjacent.
    std::optional<Relationship> relation(Asn a, Asn b) const;
    const std::map<Edge, Relationship>& labels() const { return labels_; }

    /// Smallest vertex of the sibling-connected component containing v.
    VertexId sibling_group(VertexId v) const { return sibling_rep_[v]; }

private:
    std::vector<Asn> asns_;
    std::unordered_map<Asn, VertexId> index_;
    std::vector<std::size_t> offsets_;
    std::vector<Neighbor> adjacency_;
    std::map<Edge, Relationship> labels_;
    std::vector<VertexId> sibling_rep_;
};

struct RelationshipParams {
    /// Vote-count threshold below which bidirectional transit votes mean siblings.
    std::size_t sibling_threshold = 1;
    /// Maximum degree ratio for a peer edge.
    double peer_degree_ratio = 60.0;
};

struct RelationshipStats {
    std::size_t customer_provider = 0;
    std::size_t peer = 0;
    std::size_t sibling = 0;
    /// Edges with no transit votes, oriented by degree alone.
    std::size_t low_confidence = 0;
};

struct InferredTopology {
    Topology topology;
    RelationshipStats stats;
};

/// Degree-based transit voting with sibling and peer phases.
InferredTopology infer_relationships(const TopologySkeleton& skeleton, const RibCorpus& corpus,
                                     const RelationshipParams& params = {});

/// Labels with each override applied; unknown edges are added.
std::map<Edge, Relationship> apply_overrides(std::map<Edge, Relationship> labels,
                                             const std::map<Edge, Relationship>& overrides);

/// CSV `asn1,asn2,label`. Also accepts CAIDA-style -1 (p2c) and 0 (p2p).
std::map<Edge, Relationship> read_relationships(std::istream& in, std::vector<RejectRecord>* rejects = nullptr);
std::map<Edge, Relationship> read_relationships_file(const std::string& path);
void write_relationships(std::ostream& out, const std::map<Edge, Relationship>& labels);

RelationshipStats count_labels(const std::map<Edge, Relationship>& labels);

/// Uphill steps, at most one peer step, then downhill steps. Sibling steps
/// are transparent. Throws InputError naming the pair on an unknown edge.
bool is_valley_free(std::span<const Asn> path, const Topology& topo);

/// Whether an AS may pass a route on. Both arguments give the neighbor's
/// relationship toward the exporting AS; `learned_from` is nullopt for a
/// locally originated route.
bool may_export(std::optional<Relationship> learned_from, Relationship to_neighbor);

/// Path with sibling groups folded to one representative ASN per run.
AsPath collapse_siblings(std::span<const Asn> path, const Topology& topo);
/// No AS (or sibling group) appears twice.
bool is_loop_free(std::span<const Asn> path, const Topology& topo);

}  // namespace cpa
