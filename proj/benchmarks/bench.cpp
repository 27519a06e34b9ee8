#include "semtsdf/network.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace semtsdf;

// Scattered grid observations with duplicates, mimicking a sensor sweep.
ObservationBatch random_batch(std::mt19937_64& rng, int n_points, int span) {
    std::uniform_int_distribution<int> cell(-span, span);
    std::uniform_real_distribution<double> label(-0.3, 0.3);
    std::uniform_int_distribution<int> count(1, 4);
    ObservationBatch b;
    std::unordered_map<GridKey, std::size_t, GridKeyHash> idx;
    for (int i = 0; i < n_points; ++i) {
        std::int64_t kx = cell(rng), ky = cell(rng);
        GridKey k(kx, ky);
        auto it = idx.find(k);
        if (it == idx.end()) {
            idx.emplace(k, b.keys.size());
            b.keys.push_back(k);
            b.counts.push_back(count(rng));
            b.means.push_back(label(rng));
        } else {
            b.counts[it->second] += 1;
        }
    }
    return b;
}

GpStats stats_from(const ObservationBatch& b, double voxel) {
    GpStats s;
    s.voxel_size = voxel;
    s = merge_batch(std::move(s), b, 1.0);
    return s;
}

void BM_GramAssembly(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(7);
    GpStats s = stats_from(random_batch(rng, 4 * n, 60), 0.1);
    while (static_cast<int>(s.size()) < n) s = merge_batch(std::move(s), random_batch(rng, n, 60), 1.0);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    Points pts = s.pts.leftCols(n);
    for (auto _ : state) {
        Mat K = kernel_gram(k, pts, pts);
        benchmark::DoNotOptimize(K.data());
    }
}
BENCHMARK(BM_GramAssembly)->Arg(256)->Arg(1024);

void BM_CompressedTrainPredict(benchmark::State& state) {
    const int n_obs = static_cast<int>(state.range(0));
    std::mt19937_64 rng(11);
    ObservationBatch b = random_batch(rng, n_obs, 40);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    Points q = Points::Random(2, 64);
    for (auto _ : state) {
        GpStats s = stats_from(b, 0.1);
        GpMarginals m = compressed_marginals(k, s, 1.0, q);
        benchmark::DoNotOptimize(m.mean.data());
    }
}
BENCHMARK(BM_CompressedTrainPredict)->Arg(1000)->Arg(4000);

void BM_FullGpTrainPredict(benchmark::State& state) {
    const int n_obs = static_cast<int>(state.range(0));
    std::mt19937_64 rng(11);
    ObservationBatch b = random_batch(rng, n_obs, 40);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    // expand to raw rows: count m becomes m identical observations
    std::vector<Eigen::Vector2d> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::int64_t c = 0; c < b.counts[i]; ++c) {
            xs.push_back(Eigen::Vector2d(b.keys[i].c[0] * 0.1, b.keys[i].c[1] * 0.1));
            ys.push_back(b.means[i]);
        }
    Points X(2, static_cast<Eigen::Index>(xs.size()));
    Vec y(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        X.col(static_cast<Eigen::Index>(i)) = xs[i];
        y[static_cast<Eigen::Index>(i)] = ys[i];
    }
    Points q = Points::Random(2, 64);
    for (auto _ : state) {
        GpPosterior p = full_gp_posterior(KernelSpec::defaults_for_voxel(0.1), 0.0, X, y, 1.0, q);
        benchmark::DoNotOptimize(p.mean.data());
    }
}
BENCHMARK(BM_FullGpTrainPredict)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TreeInsert(benchmark::State& state) {
    const int n_obs = static_cast<int>(state.range(0));
    std::mt19937_64 rng(13);
    ObservationBatch b = random_batch(rng, n_obs, 90);
    TreeParams tp;
    Vec ctr = Vec::Zero(2);
    for (auto _ : state) {
        SpatialTree tree(2, ctr, 20.0, KernelSpec::defaults_for_voxel(0.1), 1.0, tp);
        tree.insert(b);
        benchmark::DoNotOptimize(tree.empty());
    }
}
BENCHMARK(BM_TreeInsert)->Arg(2000)->Arg(8000);

void BM_TreeQuery(benchmark::State& state) {
    std::mt19937_64 rng(17);
    TreeParams tp;
    Vec ctr = Vec::Zero(2);
    SpatialTree tree(2, ctr, 20.0, KernelSpec::defaults_for_voxel(0.1), 1.0, tp);
    tree.insert(random_batch(rng, 8000, 90));
    Points q = 9.0 * Points::Random(2, 256);
    for (auto _ : state) {
        GpMarginals m = tree.predict_many(q);
        benchmark::DoNotOptimize(m.mean.data());
    }
}
BENCHMARK(BM_TreeQuery);

void BM_EcholessRound(benchmark::State& state) {
    Mat A = Mat::Zero(5, 5);
    for (int i = 0; i < 5; ++i) {
        A(i, (i + 1) % 5) = 1.0;
        A((i + 1) % 5, i) = 1.0;
    }
    NetworkGraph g = build_weight_matrix(A, 0.25);
    std::mt19937_64 rng(19);
    std::vector<std::map<int, ObservationBatch>> batches(5);
    for (int i = 0; i < 5; ++i) batches[static_cast<std::size_t>(i)][1] = random_batch(rng, 800, 90);
    MapParams mp;
    for (auto _ : state) {
        state.PauseTiming();
        std::vector<RobotState> robots(5);
        Vec ctr = Vec::Zero(2);
        for (int i = 0; i < 5; ++i) {
            robots[static_cast<std::size_t>(i)].id = i;
            robots[static_cast<std::size_t>(i)].store = ConsensusStore::Tree;
            robots[static_cast<std::size_t>(i)].map = SemanticMap(ctr, 20.0, mp);
        }
        state.ResumeTiming();
        for (int t = 1; t <= 5; ++t)
            echoless_round(robots, g, t == 1 ? batches
                                             : std::vector<std::map<int, ObservationBatch>>(5),
                           t);
        benchmark::DoNotOptimize(robots.front().seen.size());
    }
}
BENCHMARK(BM_EcholessRound)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
