#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cpa/centrality.hpp"
#include "cpa/synth.hpp"

using namespace cpa;

namespace {

CountryCode cc(const char* s) { return CountryCode::from(s); }
CountryPath cp(std::string_view s) { return parse_country_path(s); }

CountryPrefixTable line_table() {
    CountryPrefixTable t;
    t.add(parse_prefix("10.1.0.0/16"), cc("AA"));
    t.add(parse_prefix("10.2.0.0/16"), cc("BB"));
    t.add(parse_prefix("10.3.0.0/16"), cc("CC"));
    return t;
}

std::vector<PathAssignment> line_assignments() {
    const auto a = parse_prefix("10.1.0.0/16"), b = parse_prefix("10.2.0.0/16"), c = parse_prefix("10.3.0.0/16");
    return {{a, c, cp("AA,BB,CC"), {}}, {c, a, cp("CC,BB,AA"), {}}, {a, b, cp("AA,BB"), {}},
            {b, a, cp("BB,AA"), {}},    {b, c, cp("BB,CC"), {}},    {c, b, cp("CC,BB"), {}}};
}

struct RandomCase {
    CountryPrefixTable table;
    std::vector<PathAssignment> assignments;
};

RandomCase random_case(std::mt19937& rng) {
    static const char* codes[] = {"AA", "BB", "CC", "DD", "EE", "FF"};
    RandomCase rc;
    const int countries = 2 + static_cast<int>(rng() % 5);
    const int prefixes = countries + static_cast<int>(rng() % (13 - countries));
    for (int i = 0; i < prefixes; ++i) {
        const int len = 16 + static_cast<int>(rng() % 9);
        rc.table.add(Prefix(IpAddr{static_cast<std::uint32_t>(i + 1) << 24}, len),
                     cc(codes[i < countries ? i : static_cast<int>(rng() % countries)]));
    }
    auto random_path = [&](CountryCode s, CountryCode t) {
        CountryPath p{s};
        for (int k = static_cast<int>(rng() % 4); k > 0; --k) p.push_back(cc(codes[rng() % 6]));
        p.push_back(t);
        return dedupe_countries(p);
    };
    for (const auto& [ps, cs] : rc.table.prefixes())
        for (const auto& [pt, ct] : rc.table.prefixes()) {
            if (ps == pt) continue;
            PathAssignment a{ps, pt, {}, {}};
            if (rng() % 8) {
                a.best = random_path(cs, ct);
                a.alternates.push_back(a.best);
                for (int k = static_cast<int>(rng() % 3); k > 0; --k) a.alternates.push_back(random_path(cs, ct));
            }
            rc.assignments.push_back(std::move(a));
        }
    return rc;
}

CentralityAccumulator fold(const CountryPrefixTable& table, std::span<const PathAssignment> as) {
    CentralityAccumulator acc(table);
    for (const auto& a : as) acc.add(a);
    return acc;
}

}  // namespace

TEST(CompensatedSum, RecoversCancelledTerms) {
    CompensatedSum s;
    s.add(1.0);
    s.add(1e100);
    s.add(1.0);
    s.add(-1e100);
    EXPECT_EQ(s.value(), 2.0);
    CompensatedSum a, b;
    for (int i = 0; i < 1000; ++i) (i % 2 ? a : b).add(0.1);
    a.merge(b);
    EXPECT_NEAR(a.value(), 100.0, 1e-12);
}

TEST(Betweenness, LineStarAndSplitPaths) {
    EXPECT_EQ(betweenness({{1}, {0, 2}, {1}}), (std::vector<double>{0, 1, 0}));
    const auto star = betweenness({{1, 2, 3, 4}, {0}, {0}, {0}, {0}});
    EXPECT_EQ(star[0], 6.0);
    // Square: each opposite pair has two shortest paths.
    const auto sq = betweenness({{1, 3}, {0, 2}, {1, 3}, {2, 0}});
    for (double x : sq) EXPECT_DOUBLE_EQ(x, 0.5);
    // Two stars joined at their centres.
    const auto joined = betweenness({{1, 2, 5}, {0}, {0}, {4, 5}, {3}, {0, 3}});
    EXPECT_GT(joined[5], joined[1]);
    EXPECT_GT(joined[0], joined[5] - 1e-9);
    EXPECT_THROW(betweenness({{7}}), InputError);
}

TEST(CountryPrefixTable, WeightsBySize) {
    CountryPrefixTable t;
    t.add(parse_prefix("10.0.0.0/24"), cc("XX"));
    t.add(parse_prefix("10.0.1.0/32"), cc("XX"));
    EXPECT_DOUBLE_EQ(t.weight(parse_prefix("10.0.0.0/24")), 256.0 / 257.0);
    EXPECT_DOUBLE_EQ(t.weight(parse_prefix("10.0.1.0/32")), 1.0 / 257.0);
    EXPECT_EQ(t.country_size(cc("XX")), 257u);
    EXPECT_THROW(t.add(parse_prefix("10.0.0.0/24"), cc("YY")), InputError);
    EXPECT_NO_THROW(t.add(parse_prefix("10.0.0.0/24"), cc("XX")));
    try {
        t.weight(parse_prefix("11.0.0.0/8"));
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("11.0.0.0/8"), std::string::npos);
    }
}

TEST(CountryPrefixTable, ReadWriteRoundTripAndErrors) {
    const auto t = line_table();
    std::ostringstream out;
    write_prefix_table(out, t);
    std::istringstream in("# c\n" + out.str());
    EXPECT_EQ(read_prefix_table(in).prefixes(), t.prefixes());
    std::istringstream bad("10.0.0.0/8\n");
    EXPECT_THROW(read_prefix_table(bad), ParseError);
    std::istringstream hk("10.0.0.0/8,HK\n");
    EXPECT_EQ(read_prefix_table(hk).countries(), std::vector<CountryCode>{cc("CN")});
}

TEST(Centrality, ThreeCountryLine) {
    const auto table = line_table();
    const auto rep = fold(table, line_assignments()).report(MetricKind::CC, PathSource::Inferred);
    EXPECT_EQ(rep.normalized(cc("BB")), 1.0);
    EXPECT_EQ(rep.normalized(cc("AA")), 0.0);
    EXPECT_EQ(rep.normalized(cc("CC")), 0.0);
    EXPECT_EQ(rep.rows.front().country, cc("BB"));
    EXPECT_EQ(rep.rows.front().rank, 1u);
    EXPECT_EQ(rep.find(cc("BB"))->denominator, 2.0);
}

TEST(Centrality, SccNeedsEveryAlternate) {
    const auto table = line_table();
    auto as = line_assignments();
    as[0].alternates = {cp("AA,BB,CC"), cp("AA,CC")};
    const auto acc = fold(table, as);
    EXPECT_EQ(acc.report(MetricKind::CC, PathSource::Inferred).normalized(cc("BB")), 1.0);
    EXPECT_EQ(acc.report(MetricKind::SCC, PathSource::Inferred).normalized(cc("BB")), 0.5);
}

TEST(Centrality, UnreachablePairsCountInDenominator) {
    const auto table = line_table();
    auto as = line_assignments();
    as[1].best.clear();
    const auto acc = fold(table, as);
    EXPECT_EQ(acc.unreachable(), 1u);
    EXPECT_EQ(acc.pairs(), 6u);
    EXPECT_EQ(acc.report(MetricKind::CC, PathSource::Inferred).normalized(cc("BB")), 0.5);
}

TEST(Centrality, TransitOnlyCountryIsListed) {
    const auto table = line_table();
    std::vector<PathAssignment> as{{parse_prefix("10.1.0.0/16"), parse_prefix("10.3.0.0/16"), cp("AA,ZZ,CC"), {}}};
    const auto rep = fold(table, as).report(MetricKind::CC, PathSource::Inferred);
    EXPECT_EQ(rep.normalized(cc("ZZ")), 1.0);
}

TEST(Centrality, MissingPrefixNamed) {
    const auto table = line_table();
    CentralityAccumulator acc(table);
    try {
        acc.add({parse_prefix("10.9.0.0/16"), parse_prefix("10.1.0.0/16"), cp("AA"), {}});
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("10.9.0.0/16"), std::string::npos);
    }
}

TEST(Centrality, MatchesExactOracle) {
    for (unsigned seed = 0; seed < 60; ++seed) {
        std::mt19937 rng(seed);
        const auto rc = random_case(rng);
        const auto acc = fold(rc.table, rc.assignments);
        const auto oracle = synth::oracle_centrality(rc.assignments, rc.table);
        const auto cc_rep = acc.report(MetricKind::CC, PathSource::Inferred);
        const auto scc_rep = acc.report(MetricKind::SCC, PathSource::Inferred);
        for (const auto& [c, v] : oracle.cc) EXPECT_NEAR(cc_rep.normalized(c), v, 1e-12) << seed << ' ' << c.str();
        for (const auto& [c, v] : oracle.scc) EXPECT_NEAR(scc_rep.normalized(c), v, 1e-12) << seed << ' ' << c.str();
    }
}

TEST(Centrality, BoundsAndSccBelowCc) {
    for (unsigned seed = 100; seed < 140; ++seed) {
        std::mt19937 rng(seed);
        const auto rc = random_case(rng);
        const auto acc = fold(rc.table, rc.assignments);
        const auto c = acc.report(MetricKind::CC, PathSource::Inferred);
        const auto s = acc.report(MetricKind::SCC, PathSource::Inferred);
        for (const auto& row : c.rows) {
            EXPECT_GE(row.normalized, 0.0);
            EXPECT_LE(row.normalized, 1.0);
            EXPECT_LE(s.normalized(row.country), row.normalized + 1e-15);
        }
        for (std::size_t i = 1; i < c.rows.size(); ++i) EXPECT_GE(c.rows[i - 1].normalized, c.rows[i].normalized);
    }
}

TEST(Centrality, MergeMatchesSingleStreamAndCheckpointIsExact) {
    std::mt19937 rng(77);
    const auto rc = random_case(rng);
    const std::span<const PathAssignment> all(rc.assignments);
    const auto whole = fold(rc.table, all);
    const auto half = all.size() / 2;
    auto left = fold(rc.table, all.first(half));
    const auto right = fold(rc.table, all.subspan(half));

    std::ostringstream ck;
    right.write_checkpoint(ck);
    CentralityAccumulator restored(rc.table);
    std::istringstream in(ck.str());
    restored.read_checkpoint(in);
    std::ostringstream again;
    restored.write_checkpoint(again);
    EXPECT_EQ(again.str(), ck.str());

    left.merge(restored);
    EXPECT_EQ(left.pairs(), whole.pairs());
    const auto a = left.report(MetricKind::CC, PathSource::Inferred);
    const auto b = whole.report(MetricKind::CC, PathSource::Inferred);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_NEAR(a.rows[i].normalized, b.normalized(a.rows[i].country), 1e-14);

    std::istringstream bad("cc\t1\tnope\t0x0p+0\n");
    CentralityAccumulator x(rc.table);
    EXPECT_THROW(x.read_checkpoint(bad), ParseError);
}

TEST(Report, CsvRoundTripAndJsonl) {
    const auto table = line_table();
    const auto acc = fold(table, line_assignments());
    const std::vector<CentralityReport> reps{acc.report(MetricKind::CC, PathSource::Inferred),
                                             acc.report(MetricKind::SCC, PathSource::Observed)};
    std::ostringstream csv;
    write_report_csv(csv, reps);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "country,metric,raw,normalized,rank,path_source");
    std::istringstream in(csv.str());
    const auto back = read_report_csv(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].source, PathSource::Observed);
    for (std::size_t i = 0; i < reps[0].rows.size(); ++i) {
        EXPECT_EQ(back[0].rows[i].country, reps[0].rows[i].country);
        EXPECT_EQ(back[0].rows[i].normalized, reps[0].rows[i].normalized);
        EXPECT_EQ(back[0].rows[i].rank, reps[0].rows[i].rank);
    }

    std::ostringstream jl;
    write_report_jsonl(jl, reps);
    std::istringstream lines(jl.str());
    std::string line;
    std::size_t rows = 0, metas = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("metadata")) {
            ++metas;
            EXPECT_EQ(j["metadata"]["pairs"], "6");
        } else {
            ++rows;
            EXPECT_TRUE(j.contains("denominator"));
        }
    }
    EXPECT_EQ(rows, 6u);
    EXPECT_EQ(metas, 2u);

    std::istringstream bad("AA,XX,1,1,1,inferred\n");
    EXPECT_THROW(read_report_csv(bad), ParseError);
}

TEST(Report, RanksBreakTiesByCode) {
    std::vector<CentralityRow> rows{{cc("CC"), 0, 0.5, 0, 0}, {cc("AA"), 0, 0.5, 0, 0}, {cc("BB"), 0, 0.9, 0, 0}};
    assign_ranks(rows);
    EXPECT_EQ(rows[0].country, cc("BB"));
    EXPECT_EQ(rows[1].country, cc("AA"));
    EXPECT_EQ(rows[2].rank, 3u);
    CentralityReport rep;
    rep.rows = rows;
    EXPECT_EQ(rank_report(rep, 2).size(), 2u);
}

TEST(Assignments, ReadWriteRoundTrip) {
    auto as = line_assignments();
    as[0].alternates = {cp("AA,BB,CC"), cp("AA,CC")};
    as[1].best.clear();
    std::ostringstream out;
    write_assignments(out, as);
    std::istringstream in(out.str());
    const auto back = read_assignments(in);
    ASSERT_EQ(back.size(), as.size());
    for (std::size_t i = 0; i < as.size(); ++i) {
        EXPECT_EQ(back[i].best, as[i].best);
        EXPECT_EQ(back[i].alternates, as[i].alternates);
    }
    std::istringstream bad("10.0.0.0/8\n");
    EXPECT_THROW(read_assignments(bad), ParseError);
}
