#include "cpa/as_rel.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include "cpa/text.hpp"

namespace cpa {

std::string_view label_name(Relationship r) {
    switch (r) {
        case Relationship::CustomerOf: return "c2p";
        case Relationship::ProviderOf: return "p2c";
        case Relationship::Peer: return "p2p";
        case Relationship::Sibling: return "s2s";
    }
    return "?";
}

std::optional<Relationship> parse_label(std::string_view text) {
    text = text::trim(text);
    if (text == "c2p" || text == "customer") return Relationship::CustomerOf;
    if (text == "p2c" || text == "provider" || text == "-1") return Relationship::ProviderOf;
    if (text == "p2p" || text == "peer" || text == "0") return Relationship::Peer;
    if (text == "s2s" || text == "sibling" || text == "1") return Relationship::Sibling;
    return std::nullopt;
}

Topology::Topology(const std::map<Edge, Relationship>& labels, std::span<const Asn> extra_vertices)
    : labels_(labels) {
    std::set<Asn> all(extra_vertices.begin(), extra_vertices.end());
    for (const auto& [e, _] : labels) {
        if (e.a == e.b) throw InvariantError("self edge on AS " + to_string(e.a));
        all.insert(e.a);
        all.insert(e.b);
    }
    asns_.assign(all.begin(), all.end());
    index_.reserve(asns_.size());
    for (VertexId i = 0; i < asns_.size(); ++i) index_.emplace(asns_[i], i);

    std::vector<std::vector<Neighbor>> adj(asns_.size());
    for (const auto& [e, rel] : labels) {
        const auto a = index_.at(e.a);
        const auto b = index_.at(e.b);
        // Neighbor role is the neighbor's relation toward the owner.
        adj[a].push_back({b, reverse(rel)});
        adj[b].push_back({a, rel});
    }
    offsets_.assign(asns_.size() + 1, 0);
    for (std::size_t v = 0; v < adj.size(); ++v) {
        std::sort(adj[v].begin(), adj[v].end(),
                  [](const Neighbor& x, const Neighbor& y) { return x.vertex < y.vertex; });
        offsets_[v + 1] = offsets_[v] + adj[v].size();
        adjacency_.insert(adjacency_.end(), adj[v].begin(), adj[v].end());
    }

    // Union-find over sibling edges; representative is the smallest member.
    sibling_rep_.resize(asns_.size());
    std::iota(sibling_rep_.begin(), sibling_rep_.end(), VertexId{0});
    auto find = [&](VertexId v) {
        while (sibling_rep_[v] != v) v = sibling_rep_[v] = sibling_rep_[sibling_rep_[v]];
        return v;
    };
    for (const auto& [e, rel] : labels) {
        if (rel != Relationship::Sibling) continue;
        auto ra = find(index_.at(e.a));
        auto rb = find(index_.at(e.b));
        if (ra != rb) sibling_rep_[std::max(ra, rb)] = std::min(ra, rb);
    }
    for (VertexId v = 0; v < sibling_rep_.size(); ++v) sibling_rep_[v] = find(v);
}

std::optional<VertexId> Topology::index_of(Asn asn) const {
    auto it = index_.find(asn);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<Relationship> Topology::relation(Asn a, Asn b) const {
    auto it = labels_.find(Edge::of(a, b));
    if (it == labels_.end()) return std::nullopt;
    return a < b ? it->second : reverse(it->second);
}

namespace {

struct Votes {
    std::size_t a_customer = 0;  // votes that edge.a is a customer of edge.b
    std::size_t b_customer = 0;
};

std::size_t top_provider(const std::vector<Asn>& path, const std::map<Asn, std::size_t>& degree) {
    std::size_t j = 0;
    for (std::size_t i = 1; i < path.size(); ++i)
        if (degree.at(path[i]) > degree.at(path[j])) j = i;
    return j;
}

}  // namespace

InferredTopology infer_relationships(const TopologySkeleton& skeleton, const RibCorpus& corpus,
                                     const RelationshipParams& params) {
    std::map<Asn, std::size_t> degree;
    for (auto v : skeleton.vertices) degree[v] = 0;
    for (const auto& [e, _] : skeleton.edges) {
        ++degree[e.a];
        ++degree[e.b];
    }

    // Phase 1: transit votes on either side of each path's top provider.
    std::map<Edge, Votes> votes;
    std::set<Edge> not_peering;
    for (const auto& route : corpus.routes()) {
        const auto& p = route.path;
        if (p.size() < 2) continue;
        for (auto a : p)
            if (!degree.count(a)) throw InputError("AS " + to_string(a) + " missing from topology skeleton");
        const auto j = top_provider(p, degree);
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            const auto e = Edge::of(p[i], p[i + 1]);
            // Left of the top provider the path climbs, right of it the path descends.
            const Asn customer = i < j ? p[i] : p[i + 1];
            auto& v = votes[e];
            if (customer == e.a)
                ++v.a_customer;
            else
                ++v.b_customer;
        }
        // Phase 3 bookkeeping: edges that cannot be peerings.
        for (std::size_t i = 0; i + 1 < j; ++i) not_peering.insert(Edge::of(p[i], p[i + 1]));
        for (std::size_t i = j + 1; i + 1 < p.size(); ++i) not_peering.insert(Edge::of(p[i], p[i + 1]));
        if (j >= 1 && j + 1 < p.size()) {
            if (degree.at(p[j - 1]) > degree.at(p[j + 1]))
                not_peering.insert(Edge::of(p[j], p[j + 1]));
            else
                not_peering.insert(Edge::of(p[j - 1], p[j]));
        }
    }

    InferredTopology out;
    std::map<Edge, Relationship> labels;
    const auto L = params.sibling_threshold;
    for (const auto& [e, _] : skeleton.edges) {
        auto it = votes.find(e);
        const Votes v = it == votes.end() ? Votes{} : it->second;
        Relationship rel;
        if (v.a_customer == 0 && v.b_customer == 0) {
            // No votes: the higher-degree endpoint is taken as provider.
            const auto da = degree.at(e.a), db = degree.at(e.b);
            rel = da > db ? Relationship::ProviderOf : Relationship::CustomerOf;
            ++out.stats.low_confidence;
        } else if ((v.a_customer > L && v.b_customer > L) ||
                   (v.a_customer > 0 && v.a_customer <= L && v.b_customer > 0 && v.b_customer <= L)) {
            rel = Relationship::Sibling;
        } else if (v.b_customer > L || v.a_customer == 0) {
            rel = Relationship::ProviderOf;
        } else {
            rel = Relationship::CustomerOf;
        }
        labels[e] = rel;
    }

    // Phase 4: peerings among edges adjacent to top providers.
    for (auto& [e, rel] : labels) {
        if (rel == Relationship::Sibling || not_peering.count(e)) continue;
        if (!votes.count(e)) continue;
        const double da = static_cast<double>(degree.at(e.a));
        const double db = static_cast<double>(degree.at(e.b));
        if (da / db < params.peer_degree_ratio && db / da < params.peer_degree_ratio) rel = Relationship::Peer;
    }

    const auto low = out.stats.low_confidence;
    out.stats = count_labels(labels);
    out.stats.low_confidence = low;
    out.topology = Topology(labels, skeleton.vertices);
    return out;
}

std::map<Edge, Relationship> apply_overrides(std::map<Edge, Relationship> labels,
                                             const std::map<Edge, Relationship>& overrides) {
    for (const auto& [e, rel] : overrides) labels[e] = rel;
    return labels;
}

std::map<Edge, Relationship> read_relationships(std::istream& in, std::vector<RejectRecord>* rejects) {
    std::map<Edge, Relationship> out;
    std::string line;
    std::size_t lineno = 0;
    auto reject = [&](std::string reason) {
        if (rejects) rejects->push_back({lineno, std::move(reason)});
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(text::trim(line), line.find('|') != std::string::npos ? '|' : ',');
        if (f.size() < 3) {
            reject("expected asn1,asn2,label");
            continue;
        }
        try {
            const Asn a = parse_asn(text::trim(f[0]));
            const Asn b = parse_asn(text::trim(f[1]));
            auto rel = parse_label(f[2]);
            if (!rel) {
                reject("unknown label '" + std::string(text::trim(f[2])) + "'");
                continue;
            }
            if (a == b) {
                reject("self edge");
                continue;
            }
            out[Edge::of(a, b)] = a < b ? *rel : reverse(*rel);
        } catch (const ParseError& e) {
            reject(e.what());
        }
    }
    return out;
}

std::map<Edge, Relationship> read_relationships_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open relationship file '" + path + "'");
    std::vector<RejectRecord> rejects;
    auto labels = read_relationships(in, &rejects);
    if (!rejects.empty())
        throw InputError("relationship file '" + path + "' line " + std::to_string(rejects.front().line) + ": " +
                         rejects.front().reason);
    return labels;
}

void write_relationships(std::ostream& out, const std::map<Edge, Relationship>& labels) {
    for (const auto& [e, rel] : labels) out << e.a.value << ',' << e.b.value << ',' << label_name(rel) << '\n';
}

RelationshipStats count_labels(const std::map<Edge, Relationship>& labels) {
    RelationshipStats s;
    for (const auto& [_, rel] : labels) {
        switch (rel) {
            case Relationship::Peer: ++s.peer; break;
            case Relationship::Sibling: ++s.sibling; break;
            default: ++s.customer_provider; break;
        }
    }
    return s;
}

bool is_valley_free(std::span<const Asn> path, const Topology& topo) {
    bool descending = false;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto rel = topo.relation(path[i], path[i + 1]);
        if (!rel)
            throw InputError("no edge between AS " + to_string(path[i]) + " and AS " + to_string(path[i + 1]));
        switch (*rel) {
            case Relationship::Sibling: break;
            case Relationship::CustomerOf:
                if (descending) return false;
                break;
            case Relationship::Peer:
                if (descending) return false;
                descending = true;
                break;
            case Relationship::ProviderOf: descending = true; break;
        }
    }
    return true;
}

bool may_export(std::optional<Relationship> learned_from, Relationship to_neighbor) {
    if (to_neighbor == Relationship::CustomerOf || to_neighbor == Relationship::Sibling) return true;
    return !learned_from || *learned_from == Relationship::CustomerOf || *learned_from == Relationship::Sibling;
}

AsPath collapse_siblings(std::span<const Asn> path, const Topology& topo) {
    AsPath out;
    out.reserve(path.size());
    for (auto a : path) {
        auto v = topo.index_of(a);
        const Asn rep = v ? topo.asn(topo.sibling_group(*v)) : a;
        if (out.empty() || out.back() != rep) out.push_back(rep);
    }
    return out;
}

bool is_loop_free(std::span<const Asn> path, const Topology& topo) {
    auto collapsed = collapse_siblings(path, topo);
    std::sort(collapsed.begin(), collapsed.end());
    return std::adjacent_find(collapsed.begin(), collapsed.end()) == collapsed.end();
}

}  // namespace cpa
