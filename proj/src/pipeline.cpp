#include "cpa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cpa/prefix_trie.hpp"
#include "cpa/text.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cpa {

namespace {

PrefixTrie<CountryCode> table_trie(const CountryPrefixTable& table) {
    PrefixTrie<CountryCode> trie;
    for (const auto& [p, c] : table.prefixes()) trie.insert(p, c);
    return trie;
}

std::optional<Prefix> table_prefix(const PrefixTrie<CountryCode>& trie, IpAddr ip) {
    const auto* hit = trie.longest_match(ip);
    if (!hit) return std::nullopt;
    return hit->first;
}

int effective_workers(int requested) {
#ifdef _OPENMP
    return std::max(1, requested);
#else
    (void)requested;
    return 1;
#endif
}

}  // namespace

IngressModel build_model_parallel(std::span<const AnnotatedTrace> traces, int workers) {
    const int n = effective_workers(workers);
    const std::size_t chunk = std::max<std::size_t>(1, (traces.size() + static_cast<std::size_t>(n) - 1) /
                                                           static_cast<std::size_t>(n));
    const std::size_t shards = traces.empty() ? 0 : (traces.size() + chunk - 1) / chunk;
    std::vector<IngressModelBuilder> parts(shards);
#pragma omp parallel for schedule(static) num_threads(n)
    for (std::size_t s = 0; s < shards; ++s) {
        const std::size_t end = std::min(traces.size(), (s + 1) * chunk);
        for (std::size_t i = s * chunk; i < end; ++i) parts[s].add(traces[i]);
    }
    IngressModelBuilder all;
    for (const auto& p : parts) all.merge(p);
    return all.finalize();
}

IngressModel cached_model(std::span<const AnnotatedTrace> traces, const StageCache& cache, std::uint64_t key,
                          int workers, const Log& log) {
    if (auto hit = cache.load("model", key)) {
        std::istringstream in(*hit);
        auto model = IngressModelBuilder::read(in).finalize();
        log.event("model", {{"cache", "hit"}, {"entries", std::to_string(model.entry_count())}});
        return model;
    }
    IngressModelBuilder b;
    for (const auto& t : traces) b.add(t);
    if (cache.enabled()) {
        std::ostringstream out;
        b.write(out);
        cache.store("model", key, out.str());
    }
    auto model = workers > 1 ? build_model_parallel(traces, workers) : b.finalize();
    log.event("model", {{"cache", cache.enabled() ? "miss" : "off"},
                        {"transitions", std::to_string(b.transitions_used())},
                        {"entries", std::to_string(model.entry_count())}});
    return model;
}

std::vector<SourceGroup> source_groups(const RibCorpus& corpus, const CountryPrefixTable& table,
                                       const Topology& topo) {
    std::map<std::pair<Asn, CountryCode>, SourceGroup> groups;
    for (const auto& [p, country] : table.prefixes()) {
        auto origin = corpus.origin_of(p);
        if (!origin || !topo.index_of(*origin)) continue;
        auto& g = groups[{*origin, country}];
        g.origin = *origin;
        g.country = country;
        g.members.push_back(p);
    }
    std::vector<SourceGroup> out;
    out.reserve(groups.size());
    for (auto& [key, g] : groups) {
        // Members are ascending, so the first of the largest is the lowest.
        const Prefix* largest = &g.members.front();
        CompensatedSum w;
        for (const auto& p : g.members) {
            w.add(table.weight(p));
            if (p.length() < largest->length()) largest = &p;
        }
        g.weight = w.value();
        g.representative = largest->base();
        out.push_back(std::move(g));
    }
    return out;
}

CentralityReport observed_traceroute_cc(const AnnotatedCorpus& traces, const CountryPrefixTable& table,
                                        std::size_t* pairs) {
    const auto trie = table_trie(table);
    CentralityAccumulator acc(table);
    std::set<std::pair<Prefix, Prefix>> seen;
    for (const auto& t : traces.traces) {
        if (!t.complete()) continue;
        auto src = table_prefix(trie, t.trace.src);
        auto dst = table_prefix(trie, t.trace.dst);
        if (!src || !dst || !seen.insert({*src, *dst}).second) continue;
        auto path = t.country_path();
        // Endpoint countries come from the prefix table.
        const auto s = *table.country_of(*src), d = *table.country_of(*dst);
        if (path.front() != s) path.insert(path.begin(), s);
        if (path.back() != d) path.push_back(d);
        acc.add({*src, *dst, path, {path}});
    }
    if (seen.empty()) throw InputError("no complete traceroute maps onto the prefix table");
    if (pairs) *pairs = seen.size();
    return acc.report(MetricKind::CC, PathSource::Observed);
}

CentralityReport observed_bgp_cc(const RibCorpus& corpus, const std::vector<SourceGroup>& groups,
                                 const IngressModel& model, const GeoDb& geo, const CountryPrefixTable& table,
                                 std::size_t* routes_used) {
    std::map<Asn, std::vector<const SourceGroup*>> by_origin;
    for (const auto& g : groups) by_origin[g.origin].push_back(&g);
    CentralityAccumulator acc(table);
    std::set<std::pair<Asn, Prefix>> seen;
    std::size_t used = 0;
    for (const auto& r : corpus.routes()) {
        auto dst_country = table.country_of(r.prefix);
        auto it = by_origin.find(r.observer);
        if (!dst_country || it == by_origin.end() || !seen.insert({r.observer, r.prefix}).second) continue;
        ++used;
        const double w_dst = table.weight(r.prefix);
        for (const auto* g : it->second) {
            if (g->country == *dst_country) continue;
            auto pred = predict_country_path(r.path, g->representative, g->country, *dst_country, model, geo);
            const CountryPath alts[] = {pred.path};
            acc.add_weighted(g->country, *dst_country, g->weight * w_dst, pred.path, alts);
        }
    }
    if (used == 0) throw InputError("no RIB route starts at an AS with prefixes in the table");
    if (routes_used) *routes_used = used;
    return acc.report(MetricKind::CC, PathSource::Inferred);
}

ObservedResult run_observed_cc(const PipelineData& data, const PipelineConfig& config, const StageCache& cache,
                               const Log& log) {
    ObservedResult out;
    Resolver resolver(data.geo, data.lookup.get());
    auto annotated = annotate_all(data.traces, resolver);
    out.trace_stats = annotated.stats;
    log.event("annotate", {{"total", std::to_string(annotated.stats.total)},
                           {"complete", std::to_string(annotated.stats.complete)},
                           {"skipped", std::to_string(annotated.stats.skipped)},
                           {"observation_points", std::to_string(annotated.stats.observation_points)}});
    out.traceroute_cc = observed_traceroute_cc(annotated, data.table, &out.traceroute_pairs);

    const auto model = cached_model(annotated.traces, cache, text::fnv1a("all|" + text::hex64(config_fingerprint(config))),
                                    config.workers, log);
    const auto groups = source_groups(data.corpus, data.table, data.topology);
    out.bgp_cc = observed_bgp_cc(data.corpus, groups, model, data.geo, data.table, &out.bgp_routes_used);
    for (auto* rep : {&out.traceroute_cc, &out.bgp_cc})
        for (const auto& [k, v] : config.echo()) rep->metadata["config." + k] = v;
    log.event("observed_cc", {{"traceroute_pairs", std::to_string(out.traceroute_pairs)},
                              {"bgp_routes", std::to_string(out.bgp_routes_used)}});
    return out;
}

std::optional<LogLogFit> fit_loglog(std::span<const std::pair<double, double>> xy) {
    std::vector<std::pair<double, double>> pts;
    for (auto [x, y] : xy)
        if (x > 0.0 && y > 0.0) pts.emplace_back(std::log(x), std::log(y));
    if (pts.size() < 3) return std::nullopt;
    const double n = static_cast<double>(pts.size());
    double mx = 0, my = 0;
    for (auto [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) return std::nullopt;
    LogLogFit fit;
    fit.points = pts.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

std::size_t inject_segment_noise(IngressModel& model, double fraction, std::uint64_t seed) {
    auto& segs = model.mutable_segments();
    if (segs.size() < 2 || fraction <= 0.0) return 0;
    const auto donors = segs;
    std::vector<std::size_t> order(segs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const auto count = std::min(segs.size(), static_cast<std::size_t>(std::llround(fraction * static_cast<double>(segs.size()))));
    std::size_t changed = 0;
    for (std::size_t k = 0; k < count; ++k) {
        auto& seg = segs[order[k]];
        // Another segment's interior, redrawn until the result differs.
        for (int attempt = 0; attempt < 16; ++attempt) {
            const auto& donor = donors[rng() % donors.size()];
            std::vector<CountryCode> raw{seg.front()};
            if (donor.size() > 2) raw.insert(raw.end(), donor.begin() + 1, donor.end() - 1);
            raw.push_back(seg.back());
            auto next = dedupe_countries(raw);
            if (next != seg) {
                seg = std::move(next);
                ++changed;
                break;
            }
        }
    }
    return changed;
}

ValidationResult run_validation(const PipelineData& data, const PipelineConfig& config, const StageCache& cache,
                                const Log& log) {
    ValidationResult out;
    const auto rib_split = split_train_test(data.corpus, config.split_ratio, config.seed);
    auto [train_traces, test_traces] = split_traces(data.traces, config.split_ratio, config.seed);
    Resolver resolver(data.geo, data.lookup.get());

    auto train = annotate_all(train_traces, resolver);
    auto model = cached_model(train.traces, cache,
                              text::fnv1a("train|" + text::hex64(config_fingerprint(config))), config.workers, log);
    if (config.segment_noise > 0.0) {
        const auto changed =
            inject_segment_noise(model, config.segment_noise, config.seed ^ 0x5eedULL);
        log.event("noise", {{"segments_changed", std::to_string(changed)}});
    }

    const auto trie = table_trie(data.table);
    std::map<Prefix, PrefixRib> ribs;
    auto rib_for = [&](const Prefix& p) -> const PrefixRib* {
        if (auto it = ribs.find(p); it != ribs.end()) return &it->second;
        PrefixRib seeded;
        if (!rib_split.train.routes_for(p).empty()) {
            seeded = prime(rib_split.train, p, data.topology);
        } else {
            auto origin = data.corpus.origin_of(p);
            if (!origin || !data.topology.index_of(*origin)) return nullptr;
            seeded = prime_origin(*origin, p, data.topology);
        }
        try {
            auto done = propagate(data.topology, std::move(seeded), config.propagation, &data.policy);
            return &ribs.emplace(p, std::move(done)).first->second;
        } catch (const PropagationError& e) {
            log.event("validate", {{"prefix", to_string(p)}, {"error", e.what()}});
            return nullptr;
        }
    };

    CentralityAccumulator actual(data.table), inferred(data.table);
    std::set<std::pair<Prefix, Prefix>> seen;
    double agreement = 0.0;
    for (const auto& tr : test_traces) {
        auto r = annotate(tr, resolver);
        const auto* at = std::get_if<AnnotatedTrace>(&r);
        if (!at || !at->complete()) continue;
        ++out.test_traces;
        const auto& src_geo = *at->hops.front().geo;
        const auto& dst_geo = *at->hops.back().geo;
        if (src_geo.country == dst_geo.country) continue;
        auto src = table_prefix(trie, tr.src);
        auto dst = table_prefix(trie, tr.dst);
        if (!src || !dst) continue;
        // Routes from the source AS toward this prefix were used for priming.
        bool overlap = false;
        for (auto idx : rib_split.train.routes_for(*dst)) {
            const auto& path = rib_split.train.routes()[idx].path;
            if (std::find(path.begin(), path.end(), src_geo.asn) != path.end()) {
                overlap = true;
                break;
            }
        }
        if (overlap) {
            ++out.excluded_overlap;
            continue;
        }
        if (!seen.insert({*src, *dst}).second) continue;
        const auto* rib = rib_for(*dst);
        auto best = rib ? best_path(*rib, src_geo.asn) : std::nullopt;
        if (!best) {
            ++out.unreachable;
            continue;
        }
        const auto s = *data.table.country_of(*src), d = *data.table.country_of(*dst);
        auto real = at->country_path();
        if (real.front() != s) real.insert(real.begin(), s);
        if (real.back() != d) real.push_back(d);
        auto pred = predict_country_path(*best, tr.src, s, d, model, data.geo).path;
        ++out.used;
        if (pred == real) ++out.exact_matches;
        agreement += path_agreement(pred, real);
        actual.add({*src, *dst, real, {real}});
        inferred.add({*src, *dst, pred, {pred}});
    }
    if (out.used == 0) throw InputError("validation: no test traceroute survived the filters");
    out.mean_agreement = agreement / static_cast<double>(out.used);
    out.actual_cc = actual.report(MetricKind::CC, PathSource::Observed);
    out.inferred_cc = inferred.report(MetricKind::CC, PathSource::Inferred);

    std::map<CountryCode, ValidationRow> rows;
    for (const auto& r : out.actual_cc.rows) rows[r.country] = {r.country, r.normalized, 0.0};
    for (const auto& r : out.inferred_cc.rows) {
        auto& row = rows[r.country];
        row.country = r.country;
        row.inferred = r.normalized;
    }
    std::vector<std::pair<double, double>> xy;
    for (const auto& [c, row] : rows) {
        out.rows.push_back(row);
        xy.emplace_back(row.actual, row.inferred);
    }
    out.fit = fit_loglog(xy);
    if (!out.fit) out.notice = "fewer than 3 countries with nonzero values on both sides; fit skipped";
    log.event("validate", {{"test_traces", std::to_string(out.test_traces)},
                           {"used", std::to_string(out.used)},
                           {"excluded_overlap", std::to_string(out.excluded_overlap)},
                           {"exact", std::to_string(out.exact_matches)},
                           {"agreement", text::format_double(out.mean_agreement)}});
    return out;
}

namespace {

struct ShardOutcome {
    std::size_t failed = 0;
    std::size_t truncated = 0;
};

/// Propagated RIB for a destination, or nullopt on failure.
std::optional<PrefixRib> destination_rib(const PipelineData& data, const Prefix& dst, const PropagationParams& params,
                                         const Log& log) {
    try {
        PrefixRib seeded;
        if (!data.corpus.routes_for(dst).empty()) {
            seeded = prime(data.corpus, dst, data.topology);
        } else {
            auto origin = data.corpus.origin_of(dst);
            if (!origin || !data.topology.index_of(*origin)) return std::nullopt;
            seeded = prime_origin(*origin, dst, data.topology);
        }
        return propagate(data.topology, std::move(seeded), params, &data.policy);
    } catch (const PropagationError& e) {
        log.event("full_mesh", {{"prefix", to_string(dst)}, {"error", e.what()}});
    } catch (const InputError& e) {
        log.event("full_mesh", {{"prefix", to_string(dst)}, {"error", e.what()}});
    }
    return std::nullopt;
}

void credit_source(CentralityAccumulator& acc, const PrefixRib& rib, VertexId src, IpAddr src_ip, CountryCode s,
                   CountryCode t, double weight, const IngressModel& model, const GeoDb& geo) {
    const auto cands = rib.candidates(src);
    if (cands.empty()) {
        acc.add_weighted(s, t, weight, {}, {});
        return;
    }
    std::vector<CountryPath> alts;
    alts.reserve(cands.size());
    for (const auto& c : cands) alts.push_back(predict_country_path(c.path, src_ip, s, t, model, geo).path);
    acc.add_weighted(s, t, weight, alts.front(), alts);
}

std::vector<Prefix> destinations(const PipelineData& data) {
    std::vector<Prefix> out;
    for (const auto& [p, c] : data.table.prefixes()) out.push_back(p);
    return out;
}

void finish_reports(FullMeshResult& r, const CentralityAccumulator& acc) {
    r.cc = acc.report(MetricKind::CC, PathSource::Inferred);
    r.scc = acc.report(MetricKind::SCC, PathSource::Inferred);
    for (auto* rep : {&r.cc, &r.scc}) {
        rep->metadata["destinations"] = std::to_string(r.destinations);
        rep->metadata["failed_destinations"] = std::to_string(r.failed_destinations);
        rep->metadata["truncated_lists"] = std::to_string(r.truncated_lists);
    }
}

}  // namespace

FullMeshResult run_full_mesh(const PipelineData& data, const IngressModel& model, const FullMeshOptions& options,
                             const Log& log) {
    if (options.shard_size < 1) throw InputError("shard size must be at least 1");
    const auto groups = source_groups(data.corpus, data.table, data.topology);
    std::vector<std::optional<VertexId>> group_vertex;
    for (const auto& g : groups) group_vertex.push_back(data.topology.index_of(g.origin));
    const auto dests = destinations(data);

    FullMeshResult result;
    result.destinations = dests.size();
    result.shards = (dests.size() + options.shard_size - 1) / options.shard_size;
    if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

    CentralityAccumulator total(data.table);
    const int workers = effective_workers(options.workers);
    const auto shard_count = static_cast<std::int64_t>(result.shards);

#pragma omp parallel for ordered schedule(dynamic, 1) num_threads(workers)
    for (std::int64_t shard = 0; shard < shard_count; ++shard) {
        CentralityAccumulator acc(data.table);
        ShardOutcome outcome;
        bool resumed = false;
        const auto ckpt = options.checkpoint_dir.empty()
                              ? std::filesystem::path{}
                              : options.checkpoint_dir / ("shard-" + std::to_string(shard) + ".ckpt");

        if (!ckpt.empty() && std::filesystem::exists(ckpt)) {
            std::ifstream in(ckpt);
            std::string header, body, line;
            std::getline(in, header);
            bool complete = false;
            while (std::getline(in, line)) {
                if (line == "#complete") complete = true;
                else body += line + "\n";
            }
            unsigned long long failed = 0, truncated = 0;
            if (complete && std::sscanf(header.c_str(), "#shard failed=%llu truncated=%llu", &failed, &truncated) == 2) {
                std::istringstream bin(body);
                acc.read_checkpoint(bin);
                outcome = {static_cast<std::size_t>(failed), static_cast<std::size_t>(truncated)};
                resumed = true;
            }
        }

        if (!resumed) {
            const std::size_t begin = static_cast<std::size_t>(shard) * options.shard_size;
            const std::size_t end = std::min(dests.size(), begin + options.shard_size);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& dst = dests[i];
                auto rib = destination_rib(data, dst, options.propagation, log);
                if (!rib) {
                    ++outcome.failed;
                    continue;
                }
                outcome.truncated += rib->stats().truncated;
                const auto t = *data.table.country_of(dst);
                const double w_dst = data.table.weight(dst);
                for (std::size_t g = 0; g < groups.size(); ++g) {
                    if (groups[g].country == t || !group_vertex[g]) continue;
                    credit_source(acc, *rib, *group_vertex[g], groups[g].representative, groups[g].country, t,
                                  groups[g].weight * w_dst, model, data.geo);
                }
            }
            if (!ckpt.empty()) {
                auto tmp = ckpt;
                tmp += ".tmp";
                {
                    std::ofstream out(tmp);
                    out << "#shard failed=" << outcome.failed << " truncated=" << outcome.truncated << '\n';
                    acc.write_checkpoint(out);
                    out << "#complete\n";
                }
                std::filesystem::rename(tmp, ckpt);
            }
        }

#pragma omp ordered
        {
            total.merge(acc);
            result.failed_destinations += outcome.failed;
            result.truncated_lists += outcome.truncated;
            if (resumed) ++result.resumed_shards;
            log.event("full_mesh", {{"shard", std::to_string(shard)},
                                    {"resumed", resumed ? "true" : "false"},
                                    {"failed", std::to_string(outcome.failed)}});
        }
    }

    finish_reports(result, total);
    return result;
}

FullMeshResult run_full_mesh_reference(const PipelineData& data, const IngressModel& model,
                                       const PropagationParams& params) {
    const auto groups = source_groups(data.corpus, data.table, data.topology);
    std::map<Prefix, const SourceGroup*> group_of;
    for (const auto& g : groups)
        for (const auto& p : g.members) group_of[p] = &g;

    FullMeshResult result;
    const auto dests = destinations(data);
    result.destinations = dests.size();
    result.shards = 1;
    CentralityAccumulator acc(data.table);
    const Log quiet;
    for (const auto& dst : dests) {
        auto rib = destination_rib(data, dst, params, quiet);
        if (!rib) {
            ++result.failed_destinations;
            continue;
        }
        result.truncated_lists += rib->stats().truncated;
        const auto t = *data.table.country_of(dst);
        for (const auto& [src, s] : data.table.prefixes()) {
            auto it = group_of.find(src);
            if (it == group_of.end() || s == t) continue;
            const auto v = *data.topology.index_of(it->second->origin);
            credit_source(acc, *rib, v, it->second->representative, s, t,
                          data.table.weight(src) * data.table.weight(dst), model, data.geo);
        }
    }
    finish_reports(result, acc);
    return result;
}

}  // namespace cpa
