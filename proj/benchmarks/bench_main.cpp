#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "strata/clustering.hpp"
#include "strata/dataset.hpp"
#include "strata/distance.hpp"
#include "strata/graph.hpp"
#include "strata/hierarchy.hpp"
#include "strata/wire.hpp"

using namespace strata;

namespace {

// Shared fixtures build once per process, outside the timed loops.
const Dataset& corpus() {
    static Dataset ds = generate_synthetic(20000, 32, 24, 0.18, 42);
    return ds;
}

const VectorArray& queries() {
    static VectorArray q = generate_synthetic(256, 32, 24, 0.18, 43).vectors;
    return q;
}

const ProximityGraph& flat_graph() {
    static ProximityGraph g = [] {
        GraphBuildParams p;
        p.max_degree = 16;
        p.build_beam = 64;
        return build_graph(corpus().vectors, corpus().metric, p);
    }();
    return g;
}

const HierarchicalIndex& hierarchy() {
    static HierarchicalIndex idx = [] {
        BuildParams p;
        p.budget = 200;
        p.density = 0.05;
        p.seed = 9;
        return build_levels(corpus(), p);
    }();
    return idx;
}

std::vector<float> random_vec(std::uint32_t dim, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

} // namespace

static void BM_Distance(benchmark::State& state, Metric metric) {
    const auto dim = static_cast<std::uint32_t>(state.range(0));
    const auto a = random_vec(dim, 1);
    const auto b = random_vec(dim, 2);
    for (auto _ : state) benchmark::DoNotOptimize(distance(a, b, metric));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK_CAPTURE(BM_Distance, l2, Metric::SquaredL2)->Arg(16)->Arg(128);
BENCHMARK_CAPTURE(BM_Distance, cosine, Metric::Cosine)->Arg(128);
BENCHMARK_CAPTURE(BM_Distance, ip, Metric::NegInnerProduct)->Arg(128);

static void BM_KMeans(benchmark::State& state) {
    const auto k = static_cast<std::uint32_t>(state.range(0));
    const auto points = generate_synthetic(4000, 32, 24, 0.18, 44).vectors;
    for (auto _ : state) {
        auto r = kmeans(points, Metric::SquaredL2, k, 7);
        benchmark::DoNotOptimize(r.assignment.data());
    }
}
BENCHMARK(BM_KMeans)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_PartitionAtDensity(benchmark::State& state) {
    const double density = static_cast<double>(state.range(0)) / 1000.0;
    for (auto _ : state) {
        auto r = partition_at_density(corpus().vectors, corpus().metric, density, 7);
        benchmark::DoNotOptimize(r.partitions.data());
    }
    state.counters["partitions"] =
        static_cast<double>(partition_at_density(corpus().vectors, corpus().metric,
                                                 density, 7)
                                .partitions.size());
}
BENCHMARK(BM_PartitionAtDensity)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_GraphBuild(benchmark::State& state) {
    const auto points = generate_synthetic(4000, 32, 24, 0.18, 44).vectors;
    GraphBuildParams p;
    p.max_degree = 16;
    p.build_beam = 64;
    for (auto _ : state) {
        auto g = build_graph(points, Metric::SquaredL2, p);
        benchmark::DoNotOptimize(g.offsets.data());
    }
}
BENCHMARK(BM_GraphBuild)->Unit(benchmark::kMillisecond);

static void BM_GraphSearch(benchmark::State& state) {
    const auto beam = static_cast<std::uint32_t>(state.range(0));
    const auto& g = flat_graph();
    std::size_t qi = 0;
    for (auto _ : state) {
        auto [cands, stats] = graph_search(g, queries().row(qi), 10, beam);
        benchmark::DoNotOptimize(cands.data());
        qi = (qi + 1) % queries().size();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GraphSearch)->Arg(16)->Arg(64)->Arg(256);

static void BM_HierarchyBuild(benchmark::State& state) {
    const auto small = generate_synthetic(5000, 32, 24, 0.18, 45);
    BuildParams p;
    p.budget = 100;
    p.density = 0.05;
    p.seed = 9;
    for (auto _ : state) {
        auto idx = build_levels(small, p);
        benchmark::DoNotOptimize(idx.levels.data());
    }
}
BENCHMARK(BM_HierarchyBuild)->Unit(benchmark::kMillisecond);

static void BM_HierarchySearch(benchmark::State& state) {
    const auto m = static_cast<std::uint32_t>(state.range(0));
    const auto& idx = hierarchy();
    SearchParams params;
    params.m = m;
    params.k = 10;
    std::size_t qi = 0;
    for (auto _ : state) {
        auto [cands, trace] = search(idx, queries().row(qi), params);
        benchmark::DoNotOptimize(cands.data());
        qi = (qi + 1) % queries().size();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HierarchySearch)->Arg(32)->Arg(128)->Arg(256);

static void BM_RequestCodec(benchmark::State& state) {
    PartitionRequest req;
    req.level = 1;
    req.m = 256;
    req.query = random_vec(64, 3);
    req.pids.resize(256);
    for (std::size_t i = 0; i < req.pids.size(); ++i) req.pids[i] = 100 + i;
    for (auto _ : state) {
        auto bytes = encode_partition_request(req);
        auto back = decode_partition_request(bytes);
        benchmark::DoNotOptimize(back.pids.data());
    }
    state.SetBytesProcessed(
        static_cast<std::int64_t>(state.iterations() *
                                  encode_partition_request(req).size()));
}
BENCHMARK(BM_RequestCodec);

static void BM_ResponseCodec(benchmark::State& state) {
    std::vector<Candidate> cands(512);
    for (std::size_t i = 0; i < cands.size(); ++i)
        cands[i] = {i, static_cast<float>(i) * 0.25f};
    for (auto _ : state) {
        auto bytes = encode_partition_response(cands);
        auto back = decode_partition_response(bytes, 512);
        benchmark::DoNotOptimize(back.data());
    }
    state.SetBytesProcessed(
        static_cast<std::int64_t>(state.iterations() *
                                  encode_partition_response(cands).size()));
}
BENCHMARK(BM_ResponseCodec);

BENCHMARK_MAIN();
