#include <sstream>

#include <gtest/gtest.h>

#include "cpa/synth.hpp"

using namespace cpa;

namespace {

AsPath path(std::initializer_list<std::uint32_t> asns) {
    AsPath p;
    for (auto a : asns) p.push_back(Asn{a});
    return p;
}

synth::Internet fixture(const std::string& text) {
    std::istringstream in(text);
    return synth::parse_fixture(in);
}

std::string dump(const synth::Internet& net) {
    std::ostringstream out;
    write_rib(out, net.routes);
    write_traceroutes(out, net.traces);
    write_geodb(out, net.geo);
    for (const auto& [e, r] : net.labels) out << e.a.value << ' ' << e.b.value << ' ' << label_name(r) << '\n';
    return out.str();
}

const Prefix kP = parse_prefix("10.0.0.0/16");

}  // namespace

TEST(Generate, DeterministicPerSeed) {
    synth::SynthSpec spec;
    spec.ases = 6;
    spec.seed = 7;
    const auto a = synth::generate(spec), b = synth::generate(spec);
    EXPECT_EQ(dump(a), dump(b));
    spec.seed = 8;
    spec.ases = 30;
    const auto c = synth::generate(spec);
    spec.seed = 9;
    EXPECT_NE(dump(c), dump(synth::generate(spec)));
}

TEST(Generate, InfeasibleSpecs) {
    synth::SynthSpec spec;
    spec.ases = 0;
    EXPECT_THROW(synth::generate(spec), InputError);
    spec.ases = 5000;
    EXPECT_THROW(synth::generate(spec), InputError);
    spec.ases = 10;
    spec.countries = 17;
    EXPECT_THROW(synth::generate(spec), InputError);
    spec.countries = 0;
    EXPECT_THROW(synth::generate(spec), InputError);
}

TEST(Generate, EveryPrefixHasRegistryCountryAndRoutesAreValleyFree) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        synth::SynthSpec spec;
        spec.ases = 40;
        spec.seed = seed;
        spec.sibling_probability = seed % 2 ? 0.1 : 0.0;
        const auto net = synth::generate(spec);
        const auto topo = net.topology();
        for (const auto& d : net.prefixes) EXPECT_EQ(net.geo.lookup(d.prefix)->country, d.country);
        for (const auto& r : net.routes.routes()) {
            EXPECT_TRUE(is_valley_free(r.path, topo));
            EXPECT_TRUE(is_loop_free(r.path, topo));
            EXPECT_EQ(r.path.front(), r.observer);
        }
    }
}

TEST(Fixture, ParseErrorsNameTheLine) {
    for (const char* bad : {"edge 1 2\n", "edge 1 1 c2p\n", "edge 1 2 friends\n", "prefix 10.0.0.0/8 origin=1\n",
                            "prefix 10.0.0.0/8 origin=1 country=US color=red\n", "teleport 1\n",
                            "as 1\ngeo 10.0.0.0/8 US\n", "trace 1.1.1.1 2.2.2.2\n"}) {
        try {
            fixture(bad);
            ADD_FAILURE() << bad;
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
        }
    }
    EXPECT_THROW(synth::parse_fixture_file("/nonexistent.fix"), InputError);
}

TEST(Fixture, LabelsReadFromFirstAs) {
    const auto net = fixture("edge 2 1 c2p\nprefix 10.0.0.0/16 origin=1 country=US\n");
    const auto topo = net.topology();
    EXPECT_EQ(topo.relation(Asn{2}, Asn{1}), Relationship::CustomerOf);
    EXPECT_EQ(topo.relation(Asn{1}, Asn{2}), Relationship::ProviderOf);
    EXPECT_EQ(net.geo.lookup(kP)->country, CountryCode::from("US"));
    const auto d = net.data();
    EXPECT_EQ(d.corpus.origin_of(kP), Asn{1});
}

TEST(OraclePaths, Line) {
    // 1 is a customer of 2, 2 of 3.
    const auto net = fixture("edge 1 2 c2p\nedge 2 3 c2p\n");
    const auto o = synth::oracle_paths(net.topology(), kP, Asn{1}, {path({1})});
    EXPECT_EQ(o.best.at(Asn{3}), path({3, 2, 1}));
    EXPECT_EQ(o.stable.at(Asn{3}), std::set<AsPath>{path({3, 2, 1})});
    const auto up = synth::oracle_paths(net.topology(), kP, Asn{3}, {path({3})});
    EXPECT_EQ(up.best.at(Asn{1}), path({1, 2, 3}));
}

TEST(OraclePaths, DiamondOffersBothBranches) {
    const auto net = fixture("edge 1 2 c2p\nedge 1 3 c2p\nedge 2 4 c2p\nedge 3 4 c2p\n");
    const auto o = synth::oracle_paths(net.topology(), kP, Asn{1}, {path({1})});
    EXPECT_EQ(o.stable.at(Asn{4}), (std::set<AsPath>{path({4, 2, 1}), path({4, 3, 1})}));
    EXPECT_EQ(o.best.at(Asn{4}), path({4, 2, 1}));
    // 2 may also hold the path through 4 and 3, but never exports it down to 1.
    EXPECT_TRUE(o.legal.at(Asn{2}).count(path({2, 4, 3, 1})));
    EXPECT_FALSE(o.stable.count(Asn{1}) && o.stable.at(Asn{1}).size() > 1);
}

TEST(OraclePaths, PeerChainStopsAfterOnePeerHop) {
    const auto net = fixture("edge 1 2 p2p\nedge 2 3 p2p\n");
    const auto o = synth::oracle_paths(net.topology(), kP, Asn{1}, {path({1})});
    EXPECT_EQ(o.best.at(Asn{2}), path({2, 1}));
    EXPECT_FALSE(o.best.count(Asn{3}));
    EXPECT_FALSE(o.legal.count(Asn{3}));
}

TEST(OraclePaths, SizeGuard) {
    synth::SynthSpec spec;
    spec.ases = 11;
    const auto net = synth::generate(spec);
    EXPECT_THROW(synth::oracle_paths(net.topology(), kP, Asn{1}, {path({1})}), InputError);
}

TEST(OracleStableState, ActivationOrderDoesNotMatter) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        synth::SynthSpec spec;
        spec.ases = 25;
        spec.seed = seed;
        const auto net = synth::generate(spec);
        const auto topo = net.topology();
        const auto policy = net.policy();
        for (const auto& d : net.prefixes) {
            const auto training = net.routes_for(d.prefix);
            std::vector<AsPath> seeds = training.empty() ? std::vector<AsPath>{{d.origin}} : training;
            const auto stable = synth::oracle_stable_state(topo, d.prefix, d.origin, seeds, &policy);
            for (std::uint64_t order = 0; order < 3; ++order) {
                const auto r = synth::oracle_random_order(topo, d.prefix, d.origin, seeds, &policy, order);
                EXPECT_EQ(r.best, stable.best) << seed << ' ' << to_string(d.prefix);
                EXPECT_EQ(r.stable, stable.stable);
            }
        }
    }
}

TEST(ClosedLoop, TracesFollowSettledRoutesAndResolveCompletely) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        synth::SynthSpec spec;
        spec.ases = 30;
        spec.seed = seed;
        const auto net = synth::generate(spec);
        const auto topo = net.topology();
        Resolver r(net.geo);
        std::map<Prefix, synth::OraclePaths> truth;
        std::map<Prefix, PrefixRib> engine;
        for (const auto& d : net.prefixes) {
            truth.emplace(d.prefix, synth::oracle_stable_state(topo, d.prefix, d.origin, {{d.origin}}));
            engine.emplace(d.prefix, propagate(topo, prime_origin(d.origin, d.prefix, topo)));
        }
        for (const auto& t : net.traces) {
            const auto a = std::get<AnnotatedTrace>(annotate(t, r));
            EXPECT_TRUE(a.complete());
            const synth::PrefixDecl* dst = nullptr;
            for (const auto& d : net.prefixes)
                if (d.prefix.contains(t.dst)) dst = &d;
            ASSERT_NE(dst, nullptr);
            const auto src_as = a.as_path().front();
            EXPECT_EQ(a.as_path(), truth.at(dst->prefix).best.at(src_as));
            EXPECT_EQ(best_path(engine.at(dst->prefix), src_as), a.as_path());
            EXPECT_EQ(a.country_path().back(), dst->country);
        }
    }
}

TEST(Multipaths, SplitAnnouncementsGiveDistinctCountryPaths) {
    const auto net = synth::parse_fixture_file(CPA_FIXTURES "/multipaths.fix");
    const auto d = net.data();
    auto rib_for = [&](const char* p) {
        const auto prefix = parse_prefix(p);
        return propagate(d.topology, prime(d.corpus, prefix, d.topology), {}, &d.policy);
    };
    const auto r1 = rib_for("10.1.0.0/16"), r2 = rib_for("10.2.0.0/16"), r3 = rib_for("10.3.0.0/16");
    EXPECT_EQ(best_path(r1, Asn{1}), path({1, 3, 2}));
    EXPECT_EQ(best_path(r2, Asn{1}), path({1, 5, 2}));
    EXPECT_EQ(best_path(r3, Asn{1}), path({1, 3, 2}));

    const IngressModel empty;
    const auto src = parse_ip("10.9.0.1");
    auto country_path = [&](const char* dst) {
        return predict_country_path(*best_path(r1, Asn{1}), src, parse_prefix(dst), empty, d.geo).path;
    };
    EXPECT_EQ(country_path("10.1.0.0/16"), parse_country_path("GB,US"));
    EXPECT_EQ(country_path("10.3.0.0/16"), parse_country_path("GB,US,AU"));
}

TEST(EngineAssignments, CoverEveryOrderedPair) {
    synth::SynthSpec spec;
    spec.ases = 10;
    spec.seed = 4;
    const auto d = synth::generate(spec).data();
    Resolver r(d.geo);
    const auto model = build_model(annotate_all(d.traces, r).traces);
    const auto as = synth::engine_assignments(d, model);
    const auto n = d.table.size();
    EXPECT_EQ(as.size(), n * (n - 1));
    for (const auto& a : as) {
        if (a.best.empty()) continue;
        EXPECT_EQ(a.best.front(), *d.table.country_of(a.src));
        EXPECT_EQ(a.best.back(), *d.table.country_of(a.dst));
        EXPECT_EQ(a.best, a.alternates.front());
    }
}

TEST(PredictWorkload, SizeAndThroughputReport) {
    const auto w = synth::make_predict_workload(20000, 500, 3);
    EXPECT_GE(w.model.entry_count(), 20000u);
    EXPECT_EQ(w.queries.size(), 500u);
    const auto t = synth::measure_predict(w, 0.01);
    EXPECT_GE(t.inferences, 500u);
    EXPECT_GT(t.per_second, 0.0);
}
