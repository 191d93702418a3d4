#include "cpa/rib_ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "cpa/text.hpp"

namespace cpa {

namespace {
const std::vector<std::size_t> kNoRoutes;
}

RibCorpus::RibCorpus(std::vector<RibRoute> routes) {
    routes_.reserve(routes.size());
    for (auto& r : routes) add(std::move(r));
}

void RibCorpus::add(RibRoute route) {
    if (route.path.empty()) throw InvariantError("RibRoute with empty path");
    const auto idx = routes_.size();
    auto [it, fresh] = by_prefix_.try_emplace(route.prefix);
    if (fresh) prefix_order_.push_back(route.prefix);
    it->second.push_back(idx);
    by_observer_[route.observer].push_back(idx);
    routes_.push_back(std::move(route));
}

void RibCorpus::merge(const RibCorpus& other) {
    for (const auto& r : other.routes_) add(r);
}

const std::vector<std::size_t>& RibCorpus::routes_for(const Prefix& p) const {
    auto it = by_prefix_.find(p);
    return it == by_prefix_.end() ? kNoRoutes : it->second;
}

const std::vector<std::size_t>& RibCorpus::routes_from(Asn observer) const {
    auto it = by_observer_.find(observer);
    return it == by_observer_.end() ? kNoRoutes : it->second;
}

std::vector<Asn> RibCorpus::observers() const {
    std::vector<Asn> out;
    out.reserve(by_observer_.size());
    for (const auto& [asn, _] : by_observer_) out.push_back(asn);
    return out;
}

std::optional<Asn> RibCorpus::origin_of(const Prefix& p) const {
    const auto& idx = routes_for(p);
    if (idx.empty()) return std::nullopt;
    std::map<Asn, std::size_t> votes;
    for (auto i : idx) ++votes[routes_[i].origin()];
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

RibParseResult parse_rib(std::istream& in) {
    RibParseResult result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto fields = text::split(text::trim(line), '\t');
        if (fields.size() != 3) {
            result.rejects.push_back({lineno, "expected 3 tab-separated fields"});
            continue;
        }
        try {
            RibRoute route{parse_asn(text::trim(fields[0])), parse_prefix(text::trim(fields[1])), {}};
            for (auto tok : text::split_ws(fields[2])) {
                if (tok.front() == '{' || tok.front() == '(' || tok.front() == '[') {
                    ++result.as_set_tokens_dropped;
                    continue;
                }
                Asn a = parse_asn(tok);
                if (!route.path.empty() && route.path.back() == a) {
                    ++result.prepends_collapsed;
                    continue;
                }
                route.path.push_back(a);
            }
            if (route.path.empty()) {
                result.rejects.push_back({lineno, "empty AS path"});
                continue;
            }
            std::set<Asn> seen(route.path.begin(), route.path.end());
            if (seen.size() != route.path.size()) {
                result.rejects.push_back({lineno, "AS path contains a loop"});
                continue;
            }
            result.corpus.add(std::move(route));
        } catch (const ParseError& e) {
            result.rejects.push_back({lineno, e.what()});
        }
    }
    if (result.corpus.empty()) throw InputError("RIB input contains no usable routes");
    return result;
}

RibParseResult parse_rib_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open RIB file '" + path + "'");
    return parse_rib(in);
}

void write_rib(std::ostream& out, const RibCorpus& corpus) {
    for (const auto& r : corpus.routes())
        out << r.observer.value << '\t' << to_string(r.prefix) << '\t' << format_as_path(r.path) << '\n';
}

void write_rejects(std::ostream& out, const std::vector<RejectRecord>& rejects) {
    out << "line,reason\n";
    for (const auto& r : rejects) {
        std::string reason = r.reason;
        std::replace(reason.begin(), reason.end(), '"', '\'');
        out << r.line << ",\"" << reason << "\"\n";
    }
}

std::vector<bool> greedy_side_assignment(const std::vector<std::size_t>& weights, double ratio,
                                         std::uint64_t seed) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates over mt19937_64 (bit-exact across standard libraries).
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });

    const double total = static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::size_t{0}));
    double train = 0, test = 0;
    std::size_t train_n = 0;
    std::vector<bool> to_train(n, false);
    for (auto i : order) {
        const double train_deficit = ratio * total - train;
        const double test_deficit = (1.0 - ratio) * total - test;
        if (train_deficit >= test_deficit) {
            to_train[i] = true;
            train += static_cast<double>(weights[i]);
            ++train_n;
        } else {
            test += static_cast<double>(weights[i]);
        }
    }
    // Both sides must be populated.
    if (n >= 2 && (train_n == 0 || train_n == n)) {
        const bool from = train_n == n;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (to_train[*it] == from) {
                to_train[*it] = !from;
                break;
            }
        }
    }
    return to_train;
}

TrainTestSplit split_train_test(const RibCorpus& corpus, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split ratio must lie in (0, 1)");
    auto observers = corpus.observers();
    if (observers.size() < 2) throw InputError("split needs at least 2 observer ASes");
    std::vector<std::size_t> weights;
    weights.reserve(observers.size());
    for (auto o : observers) weights.push_back(corpus.routes_from(o).size());
    auto to_train = greedy_side_assignment(weights, ratio, seed);

    TrainTestSplit split;
    std::set<Asn> train_set;
    for (std::size_t i = 0; i < observers.size(); ++i) {
        if (to_train[i]) {
            split.train_observers.push_back(observers[i]);
            train_set.insert(observers[i]);
        } else {
            split.test_observers.push_back(observers[i]);
        }
    }
    for (const auto& r : corpus.routes()) {
        if (train_set.count(r.observer))
            split.train.add(r);
        else
            split.test.add(r);
    }
    return split;
}

TopologySkeleton extract_topology(const RibCorpus& corpus) {
    TopologySkeleton topo;
    std::set<Asn> vertices;
    const auto& routes = corpus.routes();
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const auto& path = routes[i].path;
        for (std::size_t k = 0; k < path.size(); ++k) {
            vertices.insert(path[k]);
            if (k + 1 < path.size() && path[k] != path[k + 1])
                topo.edges.try_emplace(Edge::of(path[k], path[k + 1]), i);
        }
    }
    topo.vertices.assign(vertices.begin(), vertices.end());
    return topo;
}

}  // namespace cpa
