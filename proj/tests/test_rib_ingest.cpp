#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cpa/rib_ingest.hpp"

using namespace cpa;

namespace {

RibParseResult parse(const std::string& s) {
    std::istringstream in(s);
    return parse_rib(in);
}

AsPath path(std::initializer_list<std::uint32_t> asns) {
    AsPath p;
    for (auto a : asns) p.push_back(Asn{a});
    return p;
}

RibCorpus random_corpus(std::mt19937& rng, std::size_t observers, std::size_t routes) {
    RibCorpus c;
    for (std::size_t i = 0; i < routes; ++i) {
        const Asn obs{static_cast<std::uint32_t>(1 + rng() % observers)};
        AsPath p{obs};
        for (int k = static_cast<int>(rng() % 4); k > 0; --k) {
            Asn a{static_cast<std::uint32_t>(100 + rng() % 30)};
            if (std::find(p.begin(), p.end(), a) == p.end()) p.push_back(a);
        }
        c.add({obs, Prefix(IpAddr{static_cast<std::uint32_t>(rng() % 50) << 16}, 16), p});
    }
    return c;
}

}  // namespace

TEST(ParseRib, DirectFieldMapping) {
    auto r = parse("65001\t10.0.0.0/8\t65001 65002 65003\n");
    ASSERT_EQ(r.corpus.size(), 1u);
    const auto& route = r.corpus.routes()[0];
    EXPECT_EQ(route.observer, Asn{65001});
    EXPECT_EQ(route.prefix, parse_prefix("10.0.0.0/8"));
    EXPECT_EQ(route.path, path({65001, 65002, 65003}));
    EXPECT_EQ(route.origin(), Asn{65003});
}

TEST(ParseRib, CollapsesPrepending) {
    auto r = parse("65001\t10.0.0.0/8\t65001 65002 65002 65003\n");
    EXPECT_EQ(r.corpus.routes()[0].path, path({65001, 65002, 65003}));
    EXPECT_EQ(r.prepends_collapsed, 1u);
}

TEST(ParseRib, DropsAsSetTokens) {
    auto r = parse("1\t10.0.0.0/8\t1 2 {3,4}\n");
    EXPECT_EQ(r.corpus.routes()[0].path, path({1, 2}));
    EXPECT_EQ(r.as_set_tokens_dropped, 1u);
}

TEST(ParseRib, RejectsBadLinesAndContinues) {
    auto r = parse("# comment\n1\t10.0.0.0/8\t1 2\nbad line\n2\t10.0.0.0/33\t2 3\n3\t11.0.0.0/8\t3 4 3\n4\t12.0.0.0/8\t4\n");
    EXPECT_EQ(r.corpus.size(), 2u);
    ASSERT_EQ(r.rejects.size(), 3u);
    EXPECT_EQ(r.rejects[0].line, 3u);
    EXPECT_EQ(r.rejects[1].line, 4u);
    EXPECT_EQ(r.rejects[2].line, 5u);
    std::ostringstream out;
    write_rejects(out, r.rejects);
    EXPECT_EQ(out.str().substr(0, 12), "line,reason\n");
}

TEST(ParseRib, EmptyCorpusIsAnError) {
    EXPECT_THROW(parse("# nothing\n"), InputError);
    EXPECT_THROW(parse("garbage\n"), InputError);
}

TEST(ParseRib, WriteReadRoundTrip) {
    std::mt19937 rng(4);
    const auto c = random_corpus(rng, 5, 200);
    std::ostringstream out;
    write_rib(out, c);
    auto back = parse(out.str());
    EXPECT_EQ(back.corpus.routes(), c.routes());
}

TEST(RibCorpus, IndexesKeepInputOrder) {
    auto r = parse("2\t10.0.0.0/8\t2 9\n1\t10.0.0.0/8\t1 9\n1\t11.0.0.0/8\t1 8\n");
    const auto& idx = r.corpus.routes_for(parse_prefix("10.0.0.0/8"));
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(r.corpus.routes_from(Asn{1}), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(r.corpus.observers(), (std::vector<Asn>{Asn{1}, Asn{2}}));
    EXPECT_EQ(r.corpus.origin_of(parse_prefix("10.0.0.0/8")), Asn{9});
    EXPECT_TRUE(r.corpus.routes_for(parse_prefix("12.0.0.0/8")).empty());
}

TEST(SplitTrainTest, TwoObserversOnePerSide) {
    auto r = parse("1\t10.0.0.0/8\t1 9\n2\t10.0.0.0/8\t2 9\n");
    const auto s = split_train_test(r.corpus, 0.5, 1);
    EXPECT_EQ(s.train_observers.size(), 1u);
    EXPECT_EQ(s.test_observers.size(), 1u);
}

TEST(SplitTrainTest, Deterministic) {
    std::mt19937 rng(8);
    const auto c = random_corpus(rng, 12, 400);
    const auto a = split_train_test(c, 0.5, 77);
    const auto b = split_train_test(c, 0.5, 77);
    EXPECT_EQ(a.train_observers, b.train_observers);
    EXPECT_EQ(a.train.routes(), b.train.routes());
}

TEST(SplitTrainTest, TenEqualObserversSplitFiveFive) {
    RibCorpus c;
    for (std::uint32_t o = 1; o <= 10; ++o)
        for (std::uint32_t k = 0; k < 4; ++k) c.add({Asn{o}, Prefix(IpAddr{k << 24}, 8), {Asn{o}, Asn{100}}});
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto s = split_train_test(c, 0.5, seed);
        EXPECT_EQ(s.train_observers.size(), 5u);
        EXPECT_EQ(s.test_observers.size(), 5u);
    }
}

TEST(SplitTrainTest, RejectsBadInputs) {
    auto r = parse("1\t10.0.0.0/8\t1 9\n1\t11.0.0.0/8\t1 9\n");
    EXPECT_THROW(split_train_test(r.corpus, 0.5, 1), InputError);
    auto two = parse("1\t10.0.0.0/8\t1 9\n2\t10.0.0.0/8\t2 9\n");
    EXPECT_THROW(split_train_test(two.corpus, 0.0, 1), InputError);
    EXPECT_THROW(split_train_test(two.corpus, 1.0, 1), InputError);
}

TEST(SplitTrainTest, PartitionByObserverProperty) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        std::mt19937 rng(static_cast<unsigned>(seed));
        const auto c = random_corpus(rng, 2 + seed % 9, 150);
        const double ratio = 0.2 + 0.02 * static_cast<double>(seed);
        const auto s = split_train_test(c, ratio, seed);
        EXPECT_EQ(s.train.size() + s.test.size(), c.size());
        std::set<Asn> tr(s.train_observers.begin(), s.train_observers.end());
        for (auto o : s.test_observers) EXPECT_FALSE(tr.count(o));
        for (const auto& route : s.train.routes()) EXPECT_TRUE(tr.count(route.observer));
        for (const auto& route : s.test.routes()) EXPECT_FALSE(tr.count(route.observer));
        EXPECT_FALSE(s.train_observers.empty());
        EXPECT_FALSE(s.test_observers.empty());
    }
}

TEST(ExtractTopology, SingleRoute) {
    auto r = parse("1\t10.0.0.0/8\t1 2 3\n");
    const auto t = extract_topology(r.corpus);
    EXPECT_EQ(t.vertices, (std::vector<Asn>{Asn{1}, Asn{2}, Asn{3}}));
    ASSERT_EQ(t.edges.size(), 2u);
    EXPECT_TRUE(t.edges.count(Edge::of(Asn{1}, Asn{2})));
    EXPECT_TRUE(t.edges.count(Edge::of(Asn{3}, Asn{2})));
}

TEST(ExtractTopology, ReversedRoutesShareOneEdge) {
    auto r = parse("1\t10.0.0.0/8\t1 2\n2\t11.0.0.0/8\t2 1\n");
    EXPECT_EQ(extract_topology(r.corpus).edges.size(), 1u);
}

TEST(ExtractTopology, TrainIsSubgraphAndEdgesWitnessed) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937 rng(seed);
        const auto c = random_corpus(rng, 6, 120);
        const auto s = split_train_test(c, 0.5, seed);
        const auto full = extract_topology(c);
        const auto train = extract_topology(s.train);
        for (auto v : train.vertices) EXPECT_TRUE(std::binary_search(full.vertices.begin(), full.vertices.end(), v));
        for (const auto& [e, _] : train.edges) EXPECT_TRUE(full.edges.count(e));
        for (const auto& [e, witness] : full.edges) {
            const auto& p = c.routes()[witness].path;
            bool found = false;
            for (std::size_t k = 0; k + 1 < p.size(); ++k) found |= Edge::of(p[k], p[k + 1]) == e;
            EXPECT_TRUE(found);
            EXPECT_NE(e.a, e.b);
        }
    }
}
