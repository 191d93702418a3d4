#include <benchmark/benchmark.h>

#include "cpa/pipeline.hpp"
#include "cpa/synth.hpp"

using namespace cpa;

namespace {

struct MeshInputs {
    PipelineData data;
    IngressModel model;
};

const MeshInputs& mesh_inputs() {
    static const MeshInputs inputs = [] {
        synth::SynthSpec spec;
        spec.ases = 60;
        spec.countries = 8;
        spec.observers = 6;
        spec.trace_sources = 6;
        spec.seed = 11;
        const auto net = synth::generate(spec);
        MeshInputs m{net.data(), {}};
        Resolver resolver(m.data.geo);
        const auto annotated = annotate_all(m.data.traces, resolver);
        m.model = build_model(annotated.traces);
        return m;
    }();
    return inputs;
}

void BM_FullMeshParallel(benchmark::State& state) {
    const auto& in = mesh_inputs();
    FullMeshOptions opt;
    opt.workers = static_cast<int>(state.range(0));
    opt.shard_size = 4;
    const Log log;
    for (auto _ : state) benchmark::DoNotOptimize(run_full_mesh(in.data, in.model, opt, log));
    state.counters["destinations"] = static_cast<double>(in.data.table.size());
}
BENCHMARK(BM_FullMeshParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_FullMeshReference(benchmark::State& state) {
    const auto& in = mesh_inputs();
    for (auto _ : state) benchmark::DoNotOptimize(run_full_mesh_reference(in.data, in.model, {}));
}
BENCHMARK(BM_FullMeshReference)->Unit(benchmark::kMillisecond);

void BM_PredictCountryPath(benchmark::State& state) {
    static const auto w = synth::make_predict_workload(100000, 20000, 42);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& q = w.queries[i++ % w.queries.size()];
        benchmark::DoNotOptimize(
            predict_country_path(q.path, q.src, q.src_country, q.dst_country, w.model, w.geo));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
    state.counters["entries"] = static_cast<double>(w.model.entry_count());
}
BENCHMARK(BM_PredictCountryPath);

void BM_ModelBuild(benchmark::State& state) {
    const auto& in = mesh_inputs();
    Resolver resolver(in.data.geo);
    const auto annotated = annotate_all(in.data.traces, resolver);
    for (auto _ : state)
        benchmark::DoNotOptimize(build_model_parallel(annotated.traces, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_ModelBuild)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
