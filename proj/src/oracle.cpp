// Brute-force references for tests. Nothing here calls into the
// propagation engine or the centrality accumulator.

#include <algorithm>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

#include <boost/multiprecision/cpp_int.hpp>

#include "cpa/synth.hpp"
#include "cpa/text.hpp"

namespace cpa::synth {

namespace {

enum class Learned { Origin, FromCustomer, FromPeer, FromProvider };

/// Plain relationship lookup over the edge labels, plus sibling groups.
class Graph {
public:
    Graph(const Topology& topo, const AnnouncementPolicy* policy, const Prefix& prefix, Asn origin)
        : policy_(policy), prefix_(prefix), origin_(origin) {
        for (const auto& [e, rel] : topo.labels()) {
            rel_[{e.a, e.b}] = rel;
            rel_[{e.b, e.a}] = reverse(rel);
            adj_[e.a].push_back(e.b);
            adj_[e.b].push_back(e.a);
        }
        for (auto a : topo.vertices()) adj_[a];
        for (auto& [a, list] : adj_) std::sort(list.begin(), list.end());
        // Sibling groups named by their smallest ASN.
        for (const auto& [a, _] : adj_) {
            if (group_.count(a)) continue;
            std::vector<Asn> stack{a}, members;
            group_[a] = a;
            while (!stack.empty()) {
                auto x = stack.back();
                stack.pop_back();
                members.push_back(x);
                for (auto y : adj_[x])
                    if (rel_.at({x, y}) == Relationship::Sibling && !group_.count(y)) {
                        group_[y] = a;
                        stack.push_back(y);
                    }
            }
            const auto low = *std::min_element(members.begin(), members.end());
            for (auto m : members) group_[m] = low;
        }
    }

    const std::vector<Asn>& neighbors(Asn a) const { return adj_.at(a); }
    std::size_t size() const { return adj_.size(); }
    bool has_vertex(Asn a) const { return adj_.count(a) > 0; }
    std::vector<Asn> vertices() const {
        std::vector<Asn> out;
        for (const auto& [a, _] : adj_) out.push_back(a);
        return out;
    }

    /// Relationship of x toward y, if adjacent.
    std::optional<Relationship> rel(Asn x, Asn y) const {
        auto it = rel_.find({x, y});
        if (it == rel_.end()) return std::nullopt;
        return it->second;
    }

    bool adjacent_chain(const AsPath& p) const {
        for (std::size_t i = 0; i + 1 < p.size(); ++i)
            if (!rel(p[i], p[i + 1])) return false;
        return true;
    }

    bool loop_free(const AsPath& p) const {
        std::set<Asn> seen(p.begin(), p.end());
        if (seen.size() != p.size()) return false;
        std::vector<Asn> groups;
        for (auto a : p) {
            auto g = group_.at(a);
            if (!groups.empty() && groups.back() == g) continue;
            if (std::find(groups.begin(), groups.end(), g) != groups.end()) return false;
            groups.push_back(g);
        }
        return true;
    }

    /// Walks from the origin outward: climbs, at most one peer step, descends.
    bool valley_free(const AsPath& p) const {
        int phase = 0;  // 0 climbing, 1 after the peer step or first descent
        for (std::size_t j = p.size() - 1; j > 0; --j) {
            const auto r = *rel(p[j - 1], p[j]);  // receiver toward sender
            if (r == Relationship::Sibling) continue;
            if (r == Relationship::ProviderOf) {
                if (phase != 0) return false;
            } else if (r == Relationship::Peer) {
                if (phase != 0) return false;
                phase = 1;
            } else {
                phase = 1;
            }
        }
        return true;
    }

    /// How p.front() learned the route, looking through sibling hops.
    Learned learned(const AsPath& p) const {
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            switch (*rel(p[i + 1], p[i])) {
                case Relationship::CustomerOf: return Learned::FromCustomer;
                case Relationship::Peer: return Learned::FromPeer;
                case Relationship::ProviderOf: return Learned::FromProvider;
                case Relationship::Sibling: break;
            }
        }
        return Learned::Origin;
    }

    /// Could `receiver` be handed `p` by p.front()?
    bool exportable(Asn receiver, const AsPath& p) const {
        const auto r = rel(receiver, p.front());
        if (!r) return false;
        if (p.size() == 1 && p.front() == origin_ && policy_ && !policy_->allows(prefix_, receiver)) return false;
        if (*r == Relationship::CustomerOf || *r == Relationship::Sibling) return true;
        const auto how = learned(p);
        return how == Learned::Origin || how == Learned::FromCustomer;
    }

    /// Adjacency, loops, export rules and valley shape.
    bool legal(const AsPath& p) const {
        if (p.empty() || !adjacent_chain(p) || !loop_free(p)) return false;
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            AsPath tail(p.begin() + static_cast<std::ptrdiff_t>(i) + 1, p.end());
            if (!exportable(p[i], tail)) return false;
        }
        return valley_free(p);
    }

private:
    std::map<std::pair<Asn, Asn>, Relationship> rel_;
    std::map<Asn, std::vector<Asn>> adj_;
    std::map<Asn, Asn> group_;
    const AnnouncementPolicy* policy_;
    Prefix prefix_;
    Asn origin_;
};

/// Ranking from training-route suffix counts.
class Ranker {
public:
    explicit Ranker(const std::vector<AsPath>& training) {
        for (const auto& r : training)
            for (std::size_t i = 0; i < r.size(); ++i) ++counts_[AsPath(r.begin() + static_cast<std::ptrdiff_t>(i), r.end())];
    }

    /// (unknown leading hops, hop count, -suffix count, path)
    std::tuple<std::size_t, std::size_t, long, AsPath> key(const AsPath& p) const {
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto it = counts_.find(AsPath(p.begin() + static_cast<std::ptrdiff_t>(k), p.end()));
            if (it != counts_.end()) return {k, p.size(), -static_cast<long>(it->second), p};
        }
        return {p.size(), p.size(), 0, p};
    }

    bool better(const AsPath& a, const AsPath& b) const { return key(a) < key(b); }

private:
    std::map<AsPath, std::size_t> counts_;
};

std::map<Asn, std::set<AsPath>> seeds_of(const Graph& g, const std::vector<AsPath>& training) {
    std::map<Asn, std::set<AsPath>> out;
    for (const auto& r : training)
        for (std::size_t i = 0; i < r.size(); ++i) {
            AsPath s(r.begin() + static_cast<std::ptrdiff_t>(i), r.end());
            const bool known_vertices =
                std::all_of(s.begin(), s.end(), [&](Asn a) { return g.has_vertex(a); });
            if (known_vertices && g.adjacent_chain(s) && g.loop_free(s) && g.valley_free(s)) out[s.front()].insert(s);
        }
    return out;
}

/// Candidate set of v given its neighbors' current bests.
std::set<AsPath> holdings(const Graph& g, Asn v, const std::map<Asn, std::set<AsPath>>& seeds,
                          const std::map<Asn, AsPath>& best) {
    std::set<AsPath> out;
    if (auto it = seeds.find(v); it != seeds.end()) out = it->second;
    for (auto u : g.neighbors(v)) {
        auto it = best.find(u);
        if (it == best.end()) continue;
        AsPath p{v};
        p.insert(p.end(), it->second.begin(), it->second.end());
        if (g.legal(p)) out.insert(std::move(p));
    }
    return out;
}

OraclePaths finish(const Graph& g, const std::map<Asn, std::set<AsPath>>& seeds, std::map<Asn, AsPath> best) {
    OraclePaths out;
    for (auto v : g.vertices()) {
        auto h = holdings(g, v, seeds, best);
        if (!h.empty()) out.stable[v] = std::move(h);
    }
    out.best = std::move(best);
    return out;
}

void check_origin(const Topology& topo, Asn origin) {
    if (!topo.index_of(origin)) throw InputError("origin AS " + to_string(origin) + " not in topology");
}

}  // namespace

OraclePaths oracle_stable_state(const Topology& topo, const Prefix& prefix, Asn origin,
                                const std::vector<AsPath>& training, const AnnouncementPolicy* policy) {
    check_origin(topo, origin);
    const Graph g(topo, policy, prefix, origin);
    const Ranker rank(training);
    const auto seeds = seeds_of(g, training);

    // Extending a path strictly worsens (unknown hops, length), so ASes can
    // be settled in order of their best available path.
    std::map<Asn, AsPath> best;
    const auto verts = g.vertices();
    while (true) {
        std::optional<std::pair<Asn, AsPath>> pick;
        for (auto v : verts) {
            if (best.count(v)) continue;
            for (const auto& p : holdings(g, v, seeds, best))
                if (!pick || rank.better(p, pick->second)) pick = {v, p};
        }
        if (!pick) break;
        best.emplace(pick->first, pick->second);
    }
    return finish(g, seeds, std::move(best));
}

OraclePaths oracle_random_order(const Topology& topo, const Prefix& prefix, Asn origin,
                                const std::vector<AsPath>& training, const AnnouncementPolicy* policy,
                                std::uint64_t seed) {
    check_origin(topo, origin);
    const Graph g(topo, policy, prefix, origin);
    const Ranker rank(training);
    const auto seeds = seeds_of(g, training);
    std::mt19937_64 rng(seed);
    auto order = g.vertices();
    std::map<Asn, AsPath> best;
    for (std::size_t round = 0;; ++round) {
        if (round > 100 * (order.size() + 1)) throw InvariantError("random-order simulation did not settle");
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        bool changed = false;
        for (auto v : order) {
            auto h = holdings(g, v, seeds, best);
            std::optional<AsPath> top;
            for (const auto& p : h)
                if (!top || rank.better(p, *top)) top = p;
            auto it = best.find(v);
            if (!top) {
                if (it != best.end()) {
                    best.erase(it);
                    changed = true;
                }
            } else if (it == best.end() || it->second != *top) {
                best[v] = *top;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return finish(g, seeds, std::move(best));
}

OraclePaths oracle_paths(const Topology& topo, const Prefix& prefix, Asn origin, const std::vector<AsPath>& training,
                         const AnnouncementPolicy* policy, std::size_t max_ases) {
    if (topo.vertex_count() > max_ases)
        throw InputError("oracle limited to " + std::to_string(max_ases) + " ASes, got " +
                         std::to_string(topo.vertex_count()));
    auto out = oracle_stable_state(topo, prefix, origin, training, policy);
    const Graph g(topo, policy, prefix, origin);

    // Depth-first growth from the origin, keeping only legal paths.
    std::vector<AsPath> stack{{origin}};
    while (!stack.empty()) {
        auto p = std::move(stack.back());
        stack.pop_back();
        out.legal[p.front()].insert(p);
        for (auto r : g.neighbors(p.front())) {
            AsPath q{r};
            q.insert(q.end(), p.begin(), p.end());
            if (g.legal(q)) stack.push_back(std::move(q));
        }
    }
    return out;
}

OracleCentrality oracle_centrality(const std::vector<PathAssignment>& assignments, const CountryPrefixTable& table,
                                   std::size_t max_countries, std::size_t max_prefixes) {
    using boost::multiprecision::cpp_rational;
    if (table.countries().size() > max_countries || table.size() > max_prefixes)
        throw InputError("centrality oracle limited to " + std::to_string(max_countries) + " countries and " +
                         std::to_string(max_prefixes) + " prefixes");

    std::map<CountryCode, cpp_rational> space;
    for (const auto& [p, c] : table.prefixes()) space[c] += cpp_rational(p.size());
    auto weight = [&](const Prefix& p) {
        const auto c = table.prefixes().at(p);
        return cpp_rational(p.size()) / space.at(c);
    };

    std::multimap<std::pair<Prefix, Prefix>, const PathAssignment*> by_pair;
    std::set<CountryCode> universe;
    for (const auto& [p, c] : table.prefixes()) universe.insert(c);
    for (const auto& a : assignments) {
        if (!table.prefixes().count(a.src)) throw InputError("prefix " + to_string(a.src) + " missing from table");
        if (!table.prefixes().count(a.dst)) throw InputError("prefix " + to_string(a.dst) + " missing from table");
        by_pair.emplace(std::make_pair(a.src, a.dst), &a);
        for (auto c : a.best) universe.insert(c);
    }

    OracleCentrality out;
    for (auto v : universe) {
        cpp_rational cc_num, scc_num, den;
        for (const auto& [ps, cs] : table.prefixes()) {
            for (const auto& [pt, ct] : table.prefixes()) {
                if (cs == ct || v == cs || v == ct) continue;
                auto range = by_pair.equal_range({ps, pt});
                for (auto it = range.first; it != range.second; ++it) {
                    const auto& a = *it->second;
                    const auto w = weight(ps) * weight(pt);
                    den += w;
                    if (std::find(a.best.begin(), a.best.end(), v) == a.best.end()) continue;
                    cc_num += w;
                    bool everywhere = true;
                    for (const auto& alt : a.alternates)
                        everywhere = everywhere && std::find(alt.begin(), alt.end(), v) != alt.end();
                    if (everywhere) scc_num += w;
                }
            }
        }
        auto ratio = [&](const cpp_rational& num) {
            if (den == 0) return 0.0;
            return static_cast<double>(num / den);
        };
        out.cc[v] = ratio(cc_num);
        out.scc[v] = ratio(scc_num);
    }
    return out;
}

void write_oracle_paths(std::ostream& out, const OraclePaths& paths) {
    for (const auto& [a, set] : paths.stable)
        for (const auto& p : set)
            out << "stable\t" << a.value << '\t' << format_as_path(p) << (paths.best.count(a) && paths.best.at(a) == p ? "\tbest" : "")
                << '\n';
    for (const auto& [a, set] : paths.legal)
        for (const auto& p : set) out << "legal\t" << a.value << '\t' << format_as_path(p) << '\n';
}

void write_oracle_centrality(std::ostream& out, const OracleCentrality& c) {
    for (const auto& [code, v] : c.cc) out << code.str() << "\tCC\t" << text::format_double(v) << '\n';
    for (const auto& [code, v] : c.scc) out << code.str() << "\tSCC\t" << text::format_double(v) << '\n';
}

}  // namespace cpa::synth
