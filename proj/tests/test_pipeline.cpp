#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "cpa/pipeline.hpp"
#include "cpa/synth.hpp"

using namespace cpa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cpa-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

synth::Internet small_net(std::uint64_t seed, std::size_t ases = 24) {
    synth::SynthSpec spec;
    spec.ases = ases;
    spec.countries = 5;
    spec.seed = seed;
    return synth::generate(spec);
}

IngressModel model_for(const PipelineData& d) {
    Resolver r(d.geo);
    return build_model(annotate_all(d.traces, r).traces);
}

template <typename Table>
void expect_same_steps(const Table& a, const Table& b, const IngressModel& ma, const IngressModel& mb) {
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        ASSERT_NE(it, b.end());
        EXPECT_EQ(v.next_ingress, it->second.next_ingress);
        EXPECT_EQ(ma.segments()[v.segment], mb.segments()[it->second.segment]);
    }
}

void expect_same_model(const IngressModel& a, const IngressModel& b) {
    expect_same_steps(a.known_d(), b.known_d(), a, b);
    expect_same_steps(a.known_s(), b.known_s(), a, b);
    expect_same_steps(a.freq_dc(), b.freq_dc(), a, b);
    expect_same_steps(a.freq_d(), b.freq_d(), a, b);
    EXPECT_EQ(a.freq_sc(), b.freq_sc());
    EXPECT_EQ(a.freq_s(), b.freq_s());
}

void expect_same_report(const CentralityReport& a, const CentralityReport& b, double tol = 0.0) {
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (tol == 0.0) {
            EXPECT_EQ(a.rows[i].country, b.rows[i].country);
            EXPECT_EQ(a.rows[i].raw, b.rows[i].raw);
            EXPECT_EQ(a.rows[i].normalized, b.rows[i].normalized);
        } else {
            EXPECT_NEAR(a.rows[i].normalized, b.normalized(a.rows[i].country), tol);
        }
    }
}

}  // namespace

TEST(Config, ParsesKeyValueLinesAndSections) {
    std::istringstream in(
        "# comment\n[inputs]\nrib = a.tsv\n; other\ntraces=b.tsv\nworkers = 4\nmax_alternates = 5\nwhois = true\n"
        "mode = validate\nsegment_noise = 0.25\n");
    const auto c = read_config(in);
    EXPECT_EQ(c.rib_file, "a.tsv");
    EXPECT_EQ(c.trace_file, "b.tsv");
    EXPECT_EQ(c.workers, 4);
    EXPECT_EQ(c.propagation.max_alternates, 5u);
    EXPECT_TRUE(c.whois);
    EXPECT_EQ(c.mode, Mode::Validate);
    EXPECT_EQ(c.segment_noise, 0.25);
    EXPECT_EQ(c.echo().at("workers"), "4");
}

TEST(Config, Errors) {
    PipelineConfig c;
    EXPECT_THROW(c.set("no_such_key", "1"), InputError);
    EXPECT_THROW(c.set("workers", "many"), InputError);
    EXPECT_THROW(c.set("mode", "sideways"), InputError);
    std::istringstream bad("rib\n");
    EXPECT_THROW(read_config(bad), ParseError);
    EXPECT_THROW(read_config_file("/nonexistent/cpa.ini"), InputError);
    PipelineConfig missing;
    missing.rib_file = "/nonexistent/rib.tsv";
    EXPECT_THROW(missing.validate(), InputError);
    PipelineConfig range;
    range.split_ratio = 1.5;
    EXPECT_THROW(range.validate(), InputError);
}

TEST(Config, FingerprintFollowsSettings) {
    PipelineConfig a, b;
    EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
    b.set("seed", "9");
    EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
}

TEST(Mode, NamesRoundTrip) {
    for (auto m : {Mode::ObservedCc, Mode::Validate, Mode::FullMesh}) EXPECT_EQ(parse_mode(mode_name(m)), m);
    EXPECT_FALSE(parse_mode("x"));
}

TEST(StageCache, StoreLoadAndDisabled) {
    const auto dir = scratch("cache");
    StageCache cache(dir);
    EXPECT_FALSE(cache.load("model", 7));
    cache.store("model", 7, "payload");
    EXPECT_EQ(cache.load("model", 7), "payload");
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 1u);
    StageCache off;
    EXPECT_FALSE(off.enabled());
    off.store("model", 7, "x");
    EXPECT_FALSE(off.load("model", 7));
    fs::remove_all(dir);
}

TEST(Log, WritesStructuredLines) {
    std::ostringstream out;
    Log log(&out);
    log.event("ingest", {{"routes", "3"}});
    EXPECT_EQ(out.str(), "stage=ingest routes=3\n");
    Log quiet;
    EXPECT_NO_THROW(quiet.event("x", {}));
}

TEST(LoadData, ReadsFilesWrittenFromSyntheticInternet) {
    const auto net = small_net(4);
    const auto dir = scratch("load");
    {
        std::ofstream rib(dir / "rib.tsv");
        write_rib(rib, net.routes);
        std::ofstream tr(dir / "traces.tsv");
        write_traceroutes(tr, net.traces);
        std::ofstream reg(dir / "registry.csv");
        write_geodb(reg, net.geo);
    }
    PipelineConfig c;
    c.rib_file = (dir / "rib.tsv").string();
    c.trace_file = (dir / "traces.tsv").string();
    c.registry_file = (dir / "registry.csv").string();
    c.validate();
    const auto d = load_data(c, StageCache{}, Log{});
    EXPECT_EQ(d.corpus.size(), net.routes.size());
    EXPECT_EQ(d.traces.size(), net.traces.size());
    EXPECT_GT(d.table.size(), 0u);
    EXPECT_GT(d.topology.edge_count(), 0u);
    fs::remove_all(dir);
}

TEST(DerivePrefixTable, RegistryCountryPerCorpusPrefix) {
    const auto net = small_net(5);
    std::size_t unresolved = 99;
    const auto t = derive_prefix_table(net.routes, net.geo, &unresolved);
    EXPECT_EQ(unresolved, 0u);
    for (const auto& [p, c] : t.prefixes()) EXPECT_EQ(net.geo.lookup(p)->country, c);
}

TEST(BuildModelParallel, SameForAnyWorkerCount) {
    const auto net = small_net(6, 40);
    Resolver r(net.geo);
    const auto traces = annotate_all(net.traces, r).traces;
    const auto serial = build_model(traces);
    for (int w : {1, 2, 8}) expect_same_model(build_model_parallel(traces, w), serial);
}

TEST(CachedModel, HitEqualsColdBuild) {
    const auto net = small_net(7);
    Resolver r(net.geo);
    const auto traces = annotate_all(net.traces, r).traces;
    const auto dir = scratch("model-cache");
    StageCache cache(dir);
    const auto cold = cached_model(traces, cache, 42, 1, Log{});
    const auto warm = cached_model(traces, cache, 42, 1, Log{});
    EXPECT_EQ(cache.hits(), 1u);
    expect_same_model(warm, cold);
    fs::remove_all(dir);
}

TEST(SourceGroups, GroupByOriginAndCountry) {
    const auto net = synth::parse_fixture_file(CPA_FIXTURES "/multipaths.fix");
    const auto d = net.data();
    const auto groups = source_groups(d.corpus, d.table, d.topology);
    ASSERT_EQ(groups.size(), 3u);
    // Origin 1 in GB, origin 2 in AU, origin 2 in US.
    EXPECT_EQ(groups[0].origin, Asn{1});
    EXPECT_EQ(groups[1].country, CountryCode::from("AU"));
    EXPECT_EQ(groups[2].members.size(), 2u);
    EXPECT_DOUBLE_EQ(groups[2].weight, 1.0);
    EXPECT_EQ(groups[2].representative, parse_ip("10.1.0.0"));
}

TEST(FitLogLog, PowerLaw) {
    std::vector<std::pair<double, double>> xy;
    for (double x : {0.01, 0.1, 0.3, 0.7}) xy.emplace_back(x, 2.0 * std::pow(x, 1.5));
    xy.emplace_back(0.0, 1.0);
    const auto fit = fit_loglog(xy);
    ASSERT_TRUE(fit);
    EXPECT_NEAR(fit->slope, 1.5, 1e-12);
    EXPECT_NEAR(fit->intercept, std::log(2.0), 1e-12);
    EXPECT_NEAR(fit->r2, 1.0, 1e-12);
    EXPECT_EQ(fit->points, 4u);
    EXPECT_FALSE(fit_loglog(std::span(xy).first(2)));
}

TEST(SegmentNoise, ChangesRequestedShareAndKeepsEnds) {
    const auto net = small_net(8, 40);
    auto model = model_for(net.data());
    const auto before = model.segments();
    const auto changed = inject_segment_noise(model, 0.5, 3);
    EXPECT_GT(changed, 0u);
    EXPECT_LE(changed, static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(before.size()))));
    std::set<CountryCode> seen;
    for (const auto& seg : before) seen.insert(seg.begin(), seg.end());
    std::size_t differ = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(model.segments()[i].front(), before[i].front());
        EXPECT_EQ(model.segments()[i].back(), before[i].back());
        differ += model.segments()[i] != before[i];
        for (auto c : model.segments()[i]) EXPECT_TRUE(seen.count(c));
    }
    EXPECT_EQ(differ, changed);
    EXPECT_EQ(inject_segment_noise(model, 0.0, 3), 0u);
}

TEST(ObservedCc, TracerouteAndBgpViews) {
    const auto net = small_net(9, 30);
    const auto d = net.data();
    PipelineConfig c;
    const auto r = run_observed_cc(d, c, StageCache{}, Log{});
    EXPECT_GT(r.traceroute_pairs, 0u);
    EXPECT_GT(r.bgp_routes_used, 0u);
    EXPECT_EQ(r.traceroute_cc.source, PathSource::Observed);
    for (const auto* rep : {&r.traceroute_cc, &r.bgp_cc})
        for (const auto& row : rep->rows) {
            EXPECT_GE(row.normalized, 0.0);
            EXPECT_LE(row.normalized, 1.0);
        }
    EXPECT_TRUE(r.bgp_cc.metadata.count("config.seed"));
}

TEST(ObservedCc, NoUsablePathIsAnError) {
    AnnotatedCorpus empty;
    EXPECT_THROW(observed_traceroute_cc(empty, CountryPrefixTable{}), InputError);
}

TEST(Validation, SyntheticInternetAgreesClosely) {
    synth::SynthSpec spec;
    spec.ases = 40;
    spec.countries = 6;
    spec.observers = 6;
    spec.trace_sources = 8;
    spec.seed = 12;
    const auto d = synth::generate(spec).data();
    PipelineConfig c;
    const auto r = run_validation(d, c, StageCache{}, Log{});
    EXPECT_GT(r.used, 0u);
    EXPECT_GT(r.mean_agreement, 0.5);
    EXPECT_FALSE(r.rows.empty());
    for (const auto& row : r.rows) {
        EXPECT_GE(row.actual, 0.0);
        EXPECT_LE(row.inferred, 1.0);
    }
}

class FullMesh : public ::testing::Test {
protected:
    void SetUp() override {
        synth::SynthSpec spec;
        spec.ases = 30;
        spec.countries = 6;
        spec.seed = 31;
        data_ = synth::generate(spec).data();
        model_ = model_for(data_);
    }
    FullMeshResult run(int workers, const fs::path& ckpt = {}, std::size_t shard_size = 3) {
        FullMeshOptions o;
        o.workers = workers;
        o.shard_size = shard_size;
        o.checkpoint_dir = ckpt;
        return run_full_mesh(data_, model_, o, Log{});
    }
    PipelineData data_;
    IngressModel model_;
};

TEST_F(FullMesh, BitwiseIdenticalAcrossWorkerCounts) {
    const auto one = run(1);
    EXPECT_GT(one.destinations, 0u);
    for (int w : {2, 8}) {
        const auto many = run(w);
        expect_same_report(many.cc, one.cc);
        expect_same_report(many.scc, one.scc);
    }
}

TEST_F(FullMesh, MatchesUngroupedReference) {
    const auto par = run(4);
    const auto ref = run_full_mesh_reference(data_, model_, {});
    EXPECT_EQ(par.failed_destinations, ref.failed_destinations);
    expect_same_report(par.cc, ref.cc, 1e-12);
    expect_same_report(par.scc, ref.scc, 1e-12);
}

TEST_F(FullMesh, ResumesFromCheckpointsWithoutDoubleCounting) {
    const auto dir = scratch("ckpt");
    const auto first = run(2, dir);
    EXPECT_EQ(first.resumed_shards, 0u);
    const auto again = run(2, dir);
    EXPECT_EQ(again.resumed_shards, again.shards);
    expect_same_report(again.cc, first.cc);

    // A lost shard and a torn one are recomputed.
    fs::remove(dir / "shard-0.ckpt");
    { std::ofstream torn(dir / "shard-1.ckpt"); torn << "#shard failed=0 truncated=0\npairs\t1\n"; }
    const auto partial = run(3, dir);
    EXPECT_EQ(partial.resumed_shards, partial.shards - 2);
    expect_same_report(partial.cc, first.cc);
    expect_same_report(partial.scc, first.scc);
    fs::remove_all(dir);
}

TEST_F(FullMesh, ShardSizeDoesNotChangeValues) {
    const auto a = run(2, {}, 1);
    const auto b = run(2, {}, 100);
    expect_same_report(a.cc, b.cc, 1e-12);
    FullMeshOptions bad;
    bad.shard_size = 0;
    EXPECT_THROW(run_full_mesh(data_, model_, bad, Log{}), InputError);
}

TEST(FullMeshOracle, SmallInternetsMatchExactDoubleLoop) {
    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        synth::SynthSpec spec;
        spec.ases = 8;
        spec.countries = 4;
        spec.max_prefixes_per_as = 1;
        spec.seed = seed;
        const auto d = synth::generate(spec).data();
        if (d.table.size() > 12) continue;
        const auto model = model_for(d);
        const auto fm = run_full_mesh_reference(d, model, {});
        const auto oracle = synth::oracle_centrality(synth::engine_assignments(d, model), d.table);
        for (const auto& [c, v] : oracle.cc) EXPECT_NEAR(fm.cc.normalized(c), v, 1e-12) << seed;
        for (const auto& [c, v] : oracle.scc) EXPECT_NEAR(fm.scc.normalized(c), v, 1e-12) << seed;
        ++checked;
    }
    EXPECT_GT(checked, 10u);
}
