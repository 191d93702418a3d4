#include "cpa/synth.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <istream>
#include <random>

#include "cpa/text.hpp"

namespace cpa::synth {

Topology Internet::topology() const { return Topology(labels, vertices); }

CountryPrefixTable Internet::table() const {
    CountryPrefixTable t;
    for (const auto& d : prefixes) t.add(d.prefix, d.country);
    return t;
}

AnnouncementPolicy Internet::policy() const {
    AnnouncementPolicy p;
    for (const auto& d : prefixes)
        if (!d.announce.empty()) p.announce_to[d.prefix] = d.announce;
    return p;
}

std::vector<AsPath> Internet::routes_for(const Prefix& p) const {
    std::vector<AsPath> out;
    for (auto i : routes.routes_for(p)) out.push_back(routes.routes()[i].path);
    return out;
}

PipelineData Internet::data() const {
    PipelineData d;
    d.corpus = routes;
    for (const auto& decl : prefixes)
        if (d.corpus.routes_for(decl.prefix).empty()) d.corpus.add({decl.origin, decl.prefix, {decl.origin}});
    d.topology = topology();
    d.relationship_stats = count_labels(labels);
    for (const auto& [p, e] : geo.entries())
        d.geo.add(p, e.country ? *e.country : CountryCode::from("EU"), e.asn, e.source);
    d.table = table();
    d.traces = traces;
    d.policy = policy();
    return d;
}

namespace {

std::pair<std::string_view, std::string_view> key_value(std::string_view token, std::size_t lineno) {
    auto eq = token.find('=');
    if (eq == std::string_view::npos)
        throw ParseError("fixture line " + std::to_string(lineno) + ": expected key=value, got '" +
                         std::string(token) + "'");
    return {token.substr(0, eq), token.substr(eq + 1)};
}

void add_vertex(Internet& net, Asn a) {
    auto it = std::lower_bound(net.vertices.begin(), net.vertices.end(), a);
    if (it == net.vertices.end() || *it != a) net.vertices.insert(it, a);
}

}  // namespace

Internet parse_fixture(std::istream& in) {
    Internet net;
    std::set<Prefix> explicit_geo;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) {
        throw ParseError("fixture line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split_ws(line);
        const auto verb = f[0];
        if (verb == "as") {
            for (std::size_t i = 1; i < f.size(); ++i) add_vertex(net, parse_asn(f[i]));
        } else if (verb == "edge") {
            if (f.size() != 4) fail("edge needs two ASNs and a label");
            const auto a = parse_asn(f[1]), b = parse_asn(f[2]);
            if (a == b) fail("self edge");
            auto rel = parse_label(f[3]);
            if (!rel) fail("unknown label '" + std::string(f[3]) + "'");
            const auto e = Edge::of(a, b);
            net.labels[e] = e.a == a ? *rel : reverse(*rel);
            add_vertex(net, a);
            add_vertex(net, b);
        } else if (verb == "prefix") {
            if (f.size() < 4) fail("prefix needs origin= and country=");
            PrefixDecl d;
            d.prefix = parse_prefix(f[1]);
            bool has_origin = false, has_country = false;
            for (std::size_t i = 2; i < f.size(); ++i) {
                auto [k, v] = key_value(f[i], lineno);
                if (k == "origin") {
                    d.origin = parse_asn(v);
                    has_origin = true;
                } else if (k == "country") {
                    d.country = CountryCode::from(v);
                    has_country = true;
                } else if (k == "announce") {
                    for (auto a : text::split(v, ',')) d.announce.insert(parse_asn(a));
                } else {
                    fail("unknown prefix attribute '" + std::string(k) + "'");
                }
            }
            if (!has_origin || !has_country) fail("prefix needs origin= and country=");
            add_vertex(net, d.origin);
            net.prefixes.push_back(std::move(d));
        } else if (verb == "route") {
            if (f.size() < 4) fail("route needs observer, prefix and a path");
            RibRoute r{parse_asn(f[1]), parse_prefix(f[2]), {}};
            for (std::size_t i = 3; i < f.size(); ++i) r.path.push_back(parse_asn(f[i]));
            net.routes.add(std::move(r));
        } else if (verb == "geo") {
            if (f.size() != 4) fail("geo needs prefix, country and ASN");
            const auto p = parse_prefix(f[1]);
            net.geo.add(p, CountryCode::from(f[2]), parse_asn(f[3]));
            explicit_geo.insert(p);
        } else if (verb == "trace") {
            if (f.size() != 4) fail("trace needs src, dst and hops ('-' for none)");
            Traceroute t{parse_ip(f[1]), parse_ip(f[2]), {}};
            if (f[3] != "-")
                for (auto h : text::split(f[3], ','))
                    t.hops.push_back(h == "*" ? std::nullopt : std::optional<IpAddr>(parse_ip(h)));
            net.traces.push_back(std::move(t));
        } else {
            fail("unknown directive '" + std::string(verb) + "'");
        }
    }
    for (const auto& d : net.prefixes)
        if (!explicit_geo.count(d.prefix)) net.geo.add(d.prefix, d.country, d.origin);
    return net;
}

Internet parse_fixture_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open fixture '" + path + "'");
    return parse_fixture(in);
}

namespace {

constexpr const char* kCodes[] = {"US", "GB", "DE", "FR", "NL", "SE", "JP", "CN",
                                  "BR", "AU", "CA", "IT", "ES", "RU", "IN", "ZA"};
constexpr std::size_t kMaxCountries = std::size(kCodes);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(gen_() % n); }
    bool chance(double p) { return static_cast<double>(gen_() >> 11) * 0x1.0p-53 < p; }

private:
    std::mt19937_64 gen_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
    return hash_mix(hash_mix(hash_mix(seed, a), b), tag);
}

/// Infrastructure /24 of AS index `i` in its country slot `j`.
Prefix router_block(std::size_t i, std::size_t j) {
    return Prefix(IpAddr{(172u << 24) + static_cast<std::uint32_t>((i * kMaxCountries + j) << 8)}, 24);
}

}  // namespace

Internet generate(const SynthSpec& spec) {
    if (spec.ases == 0) throw InputError("synthetic spec needs at least one AS");
    if (spec.countries == 0 || spec.countries > kMaxCountries)
        throw InputError("synthetic spec needs 1.." + std::to_string(kMaxCountries) + " countries");
    if (spec.tiers == 0) throw InputError("synthetic spec needs at least one tier");
    if (spec.ases > 4096) throw InputError("synthetic spec supports at most 4096 ASes");

    Rng rng(spec.seed);
    Internet net;
    const std::size_t n = spec.ases;
    auto asn = [](std::size_t i) { return Asn{static_cast<std::uint32_t>(i + 1)}; };
    for (std::size_t i = 0; i < n; ++i) net.vertices.push_back(asn(i));

    // Tier boundaries: a small core, the rest split evenly.
    std::vector<std::size_t> tier_start{0};
    const std::size_t core = std::max<std::size_t>(1, std::min<std::size_t>(3, n / 4));
    tier_start.push_back(std::min(n, core));
    for (std::size_t t = 1; t < spec.tiers; ++t) {
        const std::size_t rest = n - tier_start[1];
        tier_start.push_back(std::min(n, tier_start[1] + rest * t / (spec.tiers - 1)));
    }
    if (spec.tiers == 1) tier_start.back() = n;
    auto tier_of = [&](std::size_t i) {
        std::size_t t = 0;
        while (t + 1 < tier_start.size() && i >= tier_start[t + 1]) ++t;
        return t;
    };

    auto link = [&](std::size_t a, std::size_t b, Relationship a_to_b) {
        const auto e = Edge::of(asn(a), asn(b));
        if (net.labels.count(e)) return false;
        net.labels[e] = e.a == asn(a) ? a_to_b : reverse(a_to_b);
        return true;
    };
    for (std::size_t a = 0; a < tier_start[1]; ++a)
        for (std::size_t b = a + 1; b < tier_start[1]; ++b) link(a, b, Relationship::Peer);
    std::vector<bool> has_customer(n, false);
    for (std::size_t i = tier_start[1]; i < n; ++i) {
        const std::size_t above = tier_start[tier_of(i)];
        const std::size_t p1 = rng.below(above);
        link(i, p1, Relationship::CustomerOf);
        has_customer[p1] = true;
        if (above > 1 && rng.chance(spec.multihome_probability)) {
            const std::size_t p2 = rng.below(above);
            if (link(i, p2, Relationship::CustomerOf)) has_customer[p2] = true;
        }
    }
    for (std::size_t i = tier_start[1]; i < n; ++i) {
        if (!rng.chance(spec.peer_probability)) continue;
        const std::size_t t = tier_of(i);
        const std::size_t lo = tier_start[t], hi = t + 1 < tier_start.size() ? tier_start[t + 1] : n;
        if (hi - lo < 2) continue;
        const std::size_t j = lo + rng.below(hi - lo);
        if (j != i) link(i, j, Relationship::Peer);
    }
    if (spec.sibling_probability > 0.0)
        for (auto& [e, rel] : net.labels)
            if (rel != Relationship::Peer && rng.chance(spec.sibling_probability)) rel = Relationship::Sibling;

    // Countries and address space.
    std::vector<std::vector<CountryCode>> as_countries(n);
    for (std::size_t i = 0; i < n; ++i) {
        as_countries[i].push_back(CountryCode::from(kCodes[rng.below(spec.countries)]));
        if (rng.chance(tier_of(i) == 0 ? 0.7 : 0.3)) {
            auto extra = CountryCode::from(kCodes[rng.below(spec.countries)]);
            if (extra != as_countries[i].front()) as_countries[i].push_back(extra);
        }
        for (std::size_t j = 0; j < as_countries[i].size(); ++j)
            net.geo.add(router_block(i, j), as_countries[i][j], asn(i));
    }
    std::uint64_t next = std::uint64_t{10} << 24;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = rng.below(spec.max_prefixes_per_as + 1);
        if (count == 0 && !has_customer[i] && spec.max_prefixes_per_as > 0) count = 1;
        for (std::size_t k = 0; k < count; ++k) {
            const int len = std::array{16, 20, 24}[rng.below(3)];
            const std::uint64_t size = std::uint64_t{1} << (32 - len);
            next = (next + size - 1) / size * size;
            PrefixDecl d{Prefix(IpAddr{static_cast<std::uint32_t>(next)}, len), asn(i),
                         as_countries[i][rng.below(as_countries[i].size())], {}};
            next += size;
            net.geo.add(d.prefix, d.country, d.origin);
            net.prefixes.push_back(std::move(d));
        }
    }
    if (net.prefixes.empty()) {
        PrefixDecl d{Prefix(IpAddr{static_cast<std::uint32_t>(next)}, 24), asn(n - 1), as_countries[n - 1].front(), {}};
        net.geo.add(d.prefix, d.country, d.origin);
        net.prefixes.push_back(std::move(d));
    }

    // Routing ground truth from the settled state of each prefix.
    const auto topo = net.topology();
    std::vector<OraclePaths> truth;
    for (const auto& d : net.prefixes) truth.push_back(oracle_stable_state(topo, d.prefix, d.origin, {{d.origin}}));

    auto pick = [&](std::size_t want, const std::vector<std::size_t>& pool) {
        std::vector<std::size_t> p = pool;
        for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
        p.resize(std::min(want, p.size()));
        std::sort(p.begin(), p.end());
        return p;
    };
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (auto o : pick(spec.observers, all))
        for (std::size_t k = 0; k < net.prefixes.size(); ++k)
            if (auto it = truth[k].best.find(asn(o)); it != truth[k].best.end())
                net.routes.add({asn(o), net.prefixes[k].prefix, it->second});

    // Traceroutes: routers are chosen by (AS, neighbor) only, so every
    // transition's context determines its next ingress and countries.
    std::map<Asn, std::size_t> first_prefix;
    for (std::size_t k = 0; k < net.prefixes.size(); ++k) first_prefix.try_emplace(net.prefixes[k].origin, k);
    std::vector<std::size_t> sources;
    for (const auto& [a, k] : first_prefix) sources.push_back(a.value - 1);
    auto router = [&](std::size_t at, std::size_t other, std::uint64_t tag) {
        const auto h = mix(spec.seed, at, other, tag);
        const auto slot = h % as_countries[at].size();
        return IpAddr{router_block(at, slot).base().value + 1 + static_cast<std::uint32_t>((h >> 8) % 100) +
                      static_cast<std::uint32_t>(tag * 100)};
    };
    for (auto s : pick(spec.trace_sources, sources)) {
        const IpAddr src{net.prefixes[first_prefix.at(asn(s))].prefix.base().value + 1};
        for (std::size_t k = 0; k < net.prefixes.size(); ++k) {
            auto it = truth[k].best.find(asn(s));
            if (it == truth[k].best.end()) continue;
            const auto& path = it->second;
            Traceroute t{src, IpAddr{net.prefixes[k].prefix.base().value + 1}, {}};
            for (std::size_t i = 0; i < path.size(); ++i) {
                const std::size_t cur = path[i].value - 1;
                if (i > 0) t.hops.emplace_back(router(cur, path[i - 1].value - 1, 0));
                if (i + 1 < path.size()) t.hops.emplace_back(router(cur, path[i + 1].value - 1, 1));
            }
            net.traces.push_back(std::move(t));
        }
    }
    return net;
}

std::vector<PathAssignment> engine_assignments(const PipelineData& data, const IngressModel& model,
                                               const PropagationParams& params) {
    const auto groups = source_groups(data.corpus, data.table, data.topology);
    std::map<Prefix, const SourceGroup*> group_of;
    for (const auto& g : groups)
        for (const auto& p : g.members) group_of[p] = &g;
    std::vector<PathAssignment> out;
    for (const auto& [dst, t] : data.table.prefixes()) {
        auto seeded = data.corpus.routes_for(dst).empty()
                          ? prime_origin(*data.corpus.origin_of(dst), dst, data.topology)
                          : prime(data.corpus, dst, data.topology);
        const auto rib = propagate(data.topology, std::move(seeded), params, &data.policy);
        for (const auto& [src, s] : data.table.prefixes()) {
            if (src == dst) continue;
            auto it = group_of.find(src);
            if (it == group_of.end()) continue;
            PathAssignment a{src, dst, {}, {}};
            for (const auto& c : rib.candidates(it->second->origin))
                a.alternates.push_back(
                    predict_country_path(c.path, it->second->representative, s, t, model, data.geo).path);
            if (!a.alternates.empty()) a.best = a.alternates.front();
            out.push_back(std::move(a));
        }
    }
    return out;
}

PredictWorkload make_predict_workload(std::size_t min_entries, std::size_t queries, std::uint64_t seed) {
    PredictWorkload w;
    Rng rng(seed);
    std::vector<CountryCode> codes;
    for (int i = 0; codes.size() < 60; ++i) {
        auto c = CountryCode::from_index(i);
        if (normalize_country(c) == c) codes.push_back(c);
    }
    const std::size_t n_as = 3000;
    auto block = [](std::size_t i) { return Prefix(IpAddr{(20u << 24) + static_cast<std::uint32_t>(i << 16)}, 16); };
    std::vector<CountryCode> country(n_as);
    for (std::size_t i = 0; i < n_as; ++i) {
        country[i] = codes[rng.below(codes.size())];
        w.geo.add(block(i), country[i], Asn{static_cast<std::uint32_t>(i + 1)});
    }
    auto host = [&](std::size_t i) { return IpAddr{block(i).base().value + 1 + static_cast<std::uint32_t>(rng.below(60000))}; };
    auto random_path = [&](std::size_t len) {
        std::vector<std::size_t> p;
        while (p.size() < len) {
            auto a = rng.below(n_as);
            if (std::find(p.begin(), p.end(), a) == p.end()) p.push_back(a);
        }
        return p;
    };

    const Resolver resolver(w.geo);
    IngressModelBuilder builder;
    std::vector<std::pair<std::vector<std::size_t>, IpAddr>> seen;
    while (true) {
        for (int batch = 0; batch < 4000; ++batch) {
            const auto p = random_path(3 + rng.below(5));
            Traceroute t{host(p.front()), host(p.back()), {}};
            t.hops.emplace_back(host(p.front()));
            for (std::size_t i = 1; i + 1 < p.size(); ++i) {
                const auto routers = 1 + rng.below(3);
                for (std::size_t r = 0; r < routers; ++r) t.hops.emplace_back(host(p[i]));
            }
            t.hops.emplace_back(host(p.back()));
            auto r = annotate(t, resolver);
            if (const auto* at = std::get_if<AnnotatedTrace>(&r)) builder.add(*at);
            if (seen.size() < queries) seen.emplace_back(p, t.src);
        }
        w.model = builder.finalize();
        if (w.model.entry_count() >= min_entries) break;
    }

    auto to_path = [](const std::vector<std::size_t>& p) {
        AsPath out;
        for (auto i : p) out.push_back(Asn{static_cast<std::uint32_t>(i + 1)});
        return out;
    };
    for (std::size_t q = 0; q < queries; ++q) {
        // Alternate memorized contexts with fresh random ones.
        std::vector<std::size_t> p;
        IpAddr src;
        if (q % 2 == 0 && !seen.empty()) {
            std::tie(p, src) = seen[rng.below(seen.size())];
        } else {
            p = random_path(3 + rng.below(5));
            src = host(p.front());
        }
        w.queries.push_back({to_path(p), src, country[p.front()], country[p.back()]});
    }
    return w;
}

ThroughputResult measure_predict(const PredictWorkload& w, double min_seconds) {
    ThroughputResult r;
    if (w.queries.empty()) return r;
    const auto start = std::chrono::steady_clock::now();
    double elapsed = 0.0;
    do {
        for (const auto& q : w.queries) {
            auto p = predict_country_path(q.path, q.src, q.src_country, q.dst_country, w.model, w.geo);
            r.lookups += p.lookups;
        }
        r.inferences += w.queries.size();
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } while (elapsed < min_seconds);
    r.seconds = elapsed;
    r.per_second = static_cast<double>(r.inferences) / elapsed;
    return r;
}

}  // namespace cpa::synth
