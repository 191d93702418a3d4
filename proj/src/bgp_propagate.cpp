#include "cpa/bgp_propagate.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <ostream>

#include "cpa/text.hpp"

namespace cpa {

std::strong_ordering compare_paths(std::span<const Asn> p1, const PathRank& r1, std::span<const Asn> p2,
                                   const PathRank& r2) {
    if (r1.ulen != r2.ulen) return r1.ulen <=> r2.ulen;
    if (r1.length != r2.length) return r1.length <=> r2.length;
    // Higher frequency wins.
    if (r1.freq != r2.freq) return r2.freq <=> r1.freq;
    return std::lexicographical_compare_three_way(p1.begin(), p1.end(), p2.begin(), p2.end());
}

void KnownPaths::add_route(std::span<const Asn> path) {
    for (std::size_t i = 0; i < path.size(); ++i) ++counts_[AsPath(path.begin() + i, path.end())];
}

std::uint32_t KnownPaths::count(const AsPath& path) const {
    auto it = counts_.find(path);
    return it == counts_.end() ? 0 : it->second;
}

PathRank KnownPaths::rank(const AsPath& path) const {
    PathRank r{static_cast<std::uint32_t>(path.size()), static_cast<std::uint32_t>(path.size() - 1), 0};
    for (std::size_t i = 0; i < path.size(); ++i) {
        AsPath suffix(path.begin() + i, path.end());
        if (auto c = count(suffix)) {
            r.ulen = static_cast<std::uint32_t>(i);
            r.freq = c;
            break;
        }
    }
    return r;
}

PathRank KnownPaths::extend(const AsPath& path, const PathRank& tail) const {
    const auto length = static_cast<std::uint32_t>(path.size() - 1);
    // Known paths are closed under suffixes, so only the whole path needs a lookup.
    if (auto c = count(path)) return {0, length, c};
    return {tail.ulen + 1, length, tail.freq};
}

bool AnnouncementPolicy::allows(const Prefix& p, Asn neighbor) const {
    auto it = announce_to.find(p);
    return it == announce_to.end() || it->second.count(neighbor) > 0;
}

PrefixRib::PrefixRib(const Topology& topo, Prefix prefix)
    : topo_(&topo), prefix_(prefix), lists_(topo.vertex_count()) {}

std::span<const Candidate> PrefixRib::candidates(Asn asn) const {
    if (!topo_) return {};
    auto v = topo_->index_of(asn);
    if (!v) return {};
    return lists_[*v];
}

namespace {

bool candidate_less(const Candidate& a, const Candidate& b) {
    return compare_paths(a.path, a.rank, b.path, b.rank) < 0;
}

/// Relationship of the first non-sibling hop's neighbor toward the path head.
std::optional<Relationship> learned_class(std::span<const Asn> path, const Topology& topo) {
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto rel = topo.relation(path[i + 1], path[i]);
        if (rel && *rel != Relationship::Sibling) return rel;
    }
    return std::nullopt;
}

void seed(PrefixRib& rib, const Topology& topo, const AsPath& path) {
    auto& stats = rib.mutable_stats();
    for (std::size_t i = 0; i < path.size(); ++i) {
        AsPath suffix(path.begin() + static_cast<std::ptrdiff_t>(i), path.end());
        auto v = topo.index_of(suffix.front());
        bool ok = v.has_value();
        for (std::size_t k = 0; ok && k + 1 < suffix.size(); ++k) ok = topo.relation(suffix[k], suffix[k + 1]).has_value();
        ok = ok && is_loop_free(suffix, topo) && is_valley_free(suffix, topo);
        if (!ok) {
            ++stats.dropped_seeds;
            continue;
        }
        auto& list = rib.mutable_list(*v);
        auto dup = std::find_if(list.begin(), list.end(), [&](const Candidate& c) { return c.path == suffix; });
        if (dup != list.end()) continue;
        Candidate c;
        c.rank = rib.known().rank(suffix);
        c.learned = learned_class(suffix, topo);
        c.path = std::move(suffix);
        c.primed = true;
        list.push_back(std::move(c));
    }
}

void sort_all(PrefixRib& rib, std::size_t n) {
    for (VertexId v = 0; v < n; ++v) {
        auto& list = rib.mutable_list(v);
        std::sort(list.begin(), list.end(), candidate_less);
    }
}

}  // namespace

PrefixRib prime(const RibCorpus& corpus, const Prefix& prefix, const Topology& topo) {
    const auto& idx = corpus.routes_for(prefix);
    if (idx.empty()) throw InputError("no training route for prefix " + to_string(prefix));
    PrefixRib rib(topo, prefix);
    for (auto i : idx) rib.mutable_known().add_route(corpus.routes()[i].path);
    for (auto i : idx) seed(rib, topo, corpus.routes()[i].path);
    sort_all(rib, topo.vertex_count());
    return rib;
}

PrefixRib prime_origin(Asn origin, const Prefix& prefix, const Topology& topo) {
    if (!topo.index_of(origin)) throw InputError("origin AS " + to_string(origin) + " not in topology");
    PrefixRib rib(topo, prefix);
    const AsPath path{origin};
    rib.mutable_known().add_route(path);
    seed(rib, topo, path);
    return rib;
}

PrefixRib propagate(const Topology& topo, PrefixRib rib, const PropagationParams& params,
                    const AnnouncementPolicy* policy) {
    const std::size_t n = topo.vertex_count();
    const std::size_t budget = params.max_pops_per_vertex * std::max<std::size_t>(n, 1);
    bool has_siblings = false;
    for (VertexId v = 0; v < n && !has_siblings; ++v) has_siblings = topo.sibling_group(v) != v;
    auto& stats = rib.mutable_stats();

    std::deque<VertexId> queue;
    std::vector<char> queued(n, 0);
    for (VertexId v = 0; v < n; ++v) {
        if (!rib.candidates(v).empty()) {
            queue.push_back(v);
            queued[v] = 1;
        }
    }

    while (!queue.empty()) {
        const VertexId u = queue.front();
        queue.pop_front();
        queued[u] = 0;
        if (++stats.pops > budget)
            throw PropagationError("propagation for " + to_string(rib.prefix()) + " exceeded " +
                                       std::to_string(budget) + " queue pops",
                                   stats);

        const auto u_list = rib.candidates(u);
        const Candidate* best = u_list.empty() ? nullptr : &u_list.front();
        const bool originated = best && best->path.size() == 1;

        for (const auto& nb : topo.neighbors(u)) {
            const VertexId v = nb.vertex;
            const Asn v_asn = topo.asn(v);
            auto& list = rib.mutable_list(v);
            const AsPath old_best = list.empty() ? AsPath{} : list.front().path;

            // Implicit withdrawal of whatever u advertised before.
            for (auto it = list.begin(); it != list.end();) {
                if (it->via == u) {
                    if (it->primed) {
                        it->via.reset();
                        ++it;
                    } else {
                        it = list.erase(it);
                    }
                } else {
                    ++it;
                }
            }

            bool offer = best != nullptr && may_export(best->learned, nb.role);
            if (offer && originated && policy) offer = policy->allows(rib.prefix(), v_asn);
            if (offer) offer = std::find(best->path.begin(), best->path.end(), v_asn) == best->path.end();
            if (offer) {
                AsPath path;
                path.reserve(best->path.size() + 1);
                path.push_back(v_asn);
                path.insert(path.end(), best->path.begin(), best->path.end());
                if (has_siblings && !is_loop_free(path, topo)) offer = false;
                if (offer) {
                    ++stats.offers;
                    // v learns from u; u's role toward v is the reverse of v's toward u.
                    const Relationship u_role = reverse(nb.role);
                    auto dup = std::find_if(list.begin(), list.end(), [&](const Candidate& c) { return c.path == path; });
                    if (dup != list.end()) {
                        dup->via = u;
                    } else {
                        Candidate c;
                        c.rank = rib.known().extend(path, best->rank);
                        c.learned = u_role == Relationship::Sibling ? best->learned : std::optional{u_role};
                        c.path = std::move(path);
                        c.via = u;
                        list.push_back(std::move(c));
                    }
                }
            }
            std::sort(list.begin(), list.end(), candidate_less);
            if (list.size() > params.max_alternates) {
                // Drop the worst non-primed entries.
                for (std::size_t i = list.size(); i-- > 0 && list.size() > params.max_alternates;) {
                    if (!list[i].primed) {
                        list.erase(list.begin() + static_cast<std::ptrdiff_t>(i));
                        ++stats.truncated;
                    }
                }
            }
            const bool changed = list.empty() ? !old_best.empty() : list.front().path != old_best;
            if (changed && !queued[v]) {
                queue.push_back(v);
                queued[v] = 1;
            }
        }
    }
    return rib;
}

void RibIn::insert(PrefixRib rib) {
    auto p = rib.prefix();
    ribs_.insert_or_assign(p, std::move(rib));
}

const PrefixRib* RibIn::find(const Prefix& p) const {
    auto it = ribs_.find(p);
    return it == ribs_.end() ? nullptr : &it->second;
}

std::optional<AsPath> best_path(const PrefixRib& rib, Asn asn) {
    auto c = rib.candidates(asn);
    if (c.empty()) return std::nullopt;
    return c.front().path;
}

std::optional<AsPath> best_path(const RibIn& rib, Asn asn, const Prefix& prefix) {
    const auto* r = rib.find(prefix);
    if (!r) return std::nullopt;
    return best_path(*r, asn);
}

std::vector<AsPath> alternate_paths(const PrefixRib& rib, Asn asn) {
    std::vector<AsPath> out;
    for (const auto& c : rib.candidates(asn)) out.push_back(c.path);
    return out;
}

std::vector<AsPath> alternate_paths(const RibIn& rib, Asn asn, const Prefix& prefix) {
    const auto* r = rib.find(prefix);
    if (!r) return {};
    return alternate_paths(*r, asn);
}

void write_snapshot(std::ostream& out, const PrefixRib& rib) {
    const auto& topo = rib.topology();
    const auto prefix = to_string(rib.prefix());
    // Vertices are stored in ascending ASN order.
    for (VertexId v = 0; v < topo.vertex_count(); ++v) {
        const auto list = rib.candidates(v);
        for (std::size_t r = 0; r < list.size(); ++r)
            out << prefix << '\t' << topo.asn(v).value << '\t' << r << '\t' << format_as_path(list[r].path) << '\n';
    }
}

void write_snapshot(std::ostream& out, const RibIn& rib) {
    for (const auto& [_, r] : rib.prefixes()) write_snapshot(out, r);
}

RibSnapshot read_snapshot(std::istream& in) {
    std::map<Prefix, std::map<Asn, std::map<std::size_t, AsPath>>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(text::trim(line), '\t');
        if (f.size() != 4) throw ParseError("snapshot line " + std::to_string(lineno) + ": expected 4 fields");
        auto rank = text::parse_int<std::size_t>(f[2]);
        if (!rank) throw ParseError("snapshot line " + std::to_string(lineno) + ": bad rank");
        rows[parse_prefix(f[0])][parse_asn(f[1])][*rank] = parse_as_path(f[3], ' ');
    }
    RibSnapshot out;
    for (auto& [p, by_asn] : rows)
        for (auto& [a, ranked] : by_asn)
            for (auto& [_, path] : ranked) out[p][a].push_back(std::move(path));
    return out;
}

}  // namespace cpa
