#include "semtsdf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace semtsdf {

namespace {

Eigen::Vector2d point_at_arc_length(const Polygon& poly, double s) {
    const std::size_t k = poly.v.size();
    for (std::size_t e = 0; e < k; ++e) {
        const Eigen::Vector2d& a = poly.v[e];
        const Eigen::Vector2d& b = poly.v[(e + 1) % k];
        double len = (b - a).norm();
        if (s <= len || e + 1 == k) {
            double t = len > 0.0 ? std::min(s / len, 1.0) : 0.0;
            return a + t * (b - a);
        }
        s -= len;
    }
    return poly.v[0];
}

}  // namespace

std::vector<BoundaryPoint> boundary_test_points(const Environment& env, double spacing) {
    if (!(spacing > 0.0)) throw MetricError("boundary spacing must be > 0");
    std::vector<BoundaryPoint> out;
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        for (const Polygon& poly : env.obstacles[static_cast<std::size_t>(cls - 1)]) {
            double P = poly.perimeter();
            int count = std::max(1, static_cast<int>(std::floor(P / spacing)));
            for (int k = 0; k < count; ++k)
                out.push_back({point_at_arc_length(poly, k * spacing), cls});
        }
    }
    return out;
}

std::vector<BoundaryPoint> boundary_test_points_random(const Environment& env, double spacing,
                                                       std::uint64_t seed) {
    if (!(spacing > 0.0)) throw MetricError("boundary spacing must be > 0");
    std::mt19937_64 rng(seed);
    std::vector<BoundaryPoint> out;
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        for (const Polygon& poly : env.obstacles[static_cast<std::size_t>(cls - 1)]) {
            double P = poly.perimeter();
            int count = std::max(1, static_cast<int>(std::floor(P / spacing)));
            std::uniform_real_distribution<double> u(0.0, P);
            for (int k = 0; k < count; ++k)
                out.push_back({point_at_arc_length(poly, u(rng)), cls});
        }
    }
    return out;
}

std::vector<BoundaryPoint> sdf_band_points(const Environment& env, double grid_res, double band) {
    if (!(grid_res > 0.0) || !(band > 0.0)) throw MetricError("sdf grid needs positive res/band");
    std::vector<BoundaryPoint> out;
    Eigen::Vector2d ext = env.bbox.extent();
    int nx = static_cast<int>(std::floor(ext.x() / grid_res));
    int ny = static_cast<int>(std::floor(ext.y() / grid_res));
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                Eigen::Vector2d p = env.bbox.lo + grid_res * Eigen::Vector2d(i + 0.5, j + 0.5);
                double d = env.boundary_distance(cls, p);
                if (d < band) out.push_back({p, cls});
            }
        }
    }
    return out;
}

double sdf_error(const SemanticMap& map, const Environment& env,
                 const std::vector<BoundaryPoint>& pts) {
    if (pts.empty()) throw MetricError("sdf_error: no test points");
    const double trunc = map.params().truncation;
    double total = 0.0;
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < pts.size(); ++k)
            if (pts[k].cls == cls) idx.push_back(k);
        if (idx.empty()) continue;
        Points q(2, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) q.col(static_cast<Eigen::Index>(k)) = pts[idx[k]].p;
        Vec est;
        if (map.has_class(cls)) {
            est = map.tree(cls).predict_many(q).mean;
        } else {
            est = Vec::Constant(q.cols(), map.params().tree.prior_mean);
        }
        for (std::size_t k = 0; k < idx.size(); ++k) {
            double truth = env.signed_distance(cls, pts[idx[k]].p, trunc);
            total += std::abs(est[static_cast<Eigen::Index>(k)] - truth);
        }
    }
    return total / static_cast<double>(pts.size());
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw MetricError("spearman_rho: need paired data");
    std::vector<double> ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
    double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t k = 0; k < ra.size(); ++k) {
        num += (ra[k] - ma) * (rb[k] - mb);
        va += (ra[k] - ma) * (ra[k] - ma);
        vb += (rb[k] - mb) * (rb[k] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw MetricError("spearman_rho: constant ranks");
    return num / std::sqrt(va * vb);
}

std::pair<double, double> mae_vs_centralized(const SemanticMap& robot, const SemanticMap& central,
                                             const std::map<int, GpStats>& central_stats) {
    double mean_mae = 0.0, var_mae = 0.0;
    int n_classes = 0;
    for (const auto& [cls, cs] : central_stats) {
        if (cs.empty()) continue;
        if (!central.has_class(cls))
            throw MetricError("mae_vs_centralized: reference map missing a class");
        GpMarginals ref = central.tree(cls).predict_many(cs.pts);
        GpMarginals mine;
        if (robot.has_class(cls)) {
            mine = robot.tree(cls).predict_many(cs.pts);
        } else {
            mine.mean = Vec::Constant(cs.pts.cols(), robot.params().tree.prior_mean);
            mine.var = Vec::Constant(cs.pts.cols(), robot.params().kernel.signal_variance);
        }
        mean_mae += (mine.mean - ref.mean).cwiseAbs().mean();
        var_mae += (mine.var - ref.var).cwiseAbs().mean();
        ++n_classes;
    }
    if (n_classes == 0) throw MetricError("mae_vs_centralized: reference has no points");
    return {mean_mae / n_classes, var_mae / n_classes};
}

MetricReport evaluate_map(const SemanticMap& map, const Environment& env) {
    MetricReport rep;
    const double voxel = map.params().tree.voxel_size;
    const double spacing = 0.5 * voxel;

    // Surface classification at boundary points, using batched per-class
    // marginals and the surface-conditioned posterior.
    std::vector<BoundaryPoint> bpts = boundary_test_points(env, spacing);
    rep.n_class_points = static_cast<int>(bpts.size());
    std::vector<int> observed = map.observed_classes();
    std::vector<int> predicted(bpts.size(), 0);
    if (!observed.empty() && !bpts.empty()) {
        Points q(2, static_cast<Eigen::Index>(bpts.size()));
        for (std::size_t k = 0; k < bpts.size(); ++k)
            q.col(static_cast<Eigen::Index>(k)) = bpts[k].p;
        std::vector<GpMarginals> marg(observed.size());
        for (std::size_t c = 0; c < observed.size(); ++c)
            marg[c] = map.tree(observed[c]).predict_many(q);
        std::vector<double> mu(observed.size()), sig(observed.size());
        for (std::size_t k = 0; k < bpts.size(); ++k) {
            for (std::size_t c = 0; c < observed.size(); ++c) {
                mu[c] = marg[c].mean[static_cast<Eigen::Index>(k)];
                sig[c] = std::sqrt(std::max(0.0, marg[c].var[static_cast<Eigen::Index>(k)]));
            }
            std::vector<double> post = surface_class_posterior(mu, sig);
            std::size_t best = 0;
            for (std::size_t c = 1; c < post.size(); ++c)
                if (post[c] > post[best]) best = c;
            predicted[k] = observed[best];
        }
    }
    int wrong = 0;
    std::map<int, std::array<std::int64_t, 3>> confusion;  // cls -> {tp, fp, fn}
    for (std::size_t k = 0; k < bpts.size(); ++k) {
        int truth = bpts[k].cls;
        int pred = predicted[k];
        if (pred != truth) ++wrong;
        auto& ct = confusion[truth];
        auto& cp = confusion[pred];
        if (pred == truth) {
            ++ct[0];
        } else {
            ++cp[1];
            ++ct[2];
        }
    }
    rep.misclassification_rate =
        bpts.empty() ? 1.0 : static_cast<double>(wrong) / static_cast<double>(bpts.size());
    double prec = 0.0, rec = 0.0;
    int n_truth_classes = 0;
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        if (env.obstacles[static_cast<std::size_t>(cls - 1)].empty()) continue;
        ++n_truth_classes;
        auto it = confusion.find(cls);
        std::int64_t tp = it == confusion.end() ? 0 : it->second[0];
        std::int64_t fp = it == confusion.end() ? 0 : it->second[1];
        std::int64_t fn = it == confusion.end() ? 0 : it->second[2];
        prec += tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        rec += tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    }
    if (n_truth_classes > 0) {
        rep.precision = prec / n_truth_classes;
        rep.recall = rec / n_truth_classes;
    }
    rep.false_discovery_rate = 1.0 - rep.precision;
    rep.false_negative_rate = 1.0 - rep.recall;

    // Distance accuracy in a band around the surfaces.
    std::vector<BoundaryPoint> spts = sdf_band_points(env, spacing, map.params().truncation);
    rep.n_sdf_points = static_cast<int>(spts.size());
    if (!spts.empty()) {
        std::vector<double> est_all, truth_all;
        est_all.reserve(spts.size());
        truth_all.reserve(spts.size());
        double total = 0.0;
        for (int cls = 1; cls <= env.num_classes; ++cls) {
            std::vector<std::size_t> idx;
            for (std::size_t k = 0; k < spts.size(); ++k)
                if (spts[k].cls == cls) idx.push_back(k);
            if (idx.empty()) continue;
            Points q(2, static_cast<Eigen::Index>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k)
                q.col(static_cast<Eigen::Index>(k)) = spts[idx[k]].p;
            Vec est = map.has_class(cls)
                          ? map.tree(cls).predict_many(q).mean
                          : Vec::Constant(q.cols(), map.params().tree.prior_mean);
            for (std::size_t k = 0; k < idx.size(); ++k) {
                double truth =
                    env.signed_distance(cls, spts[idx[k]].p, map.params().truncation);
                double e = est[static_cast<Eigen::Index>(k)];
                total += std::abs(e - truth);
                est_all.push_back(e);
                truth_all.push_back(truth);
            }
        }
        rep.sdf_error = total / static_cast<double>(spts.size());
        rep.normalized_sdf_error = rep.sdf_error / voxel;
        // an untrained map answers with a constant, which has no rank order
        try {
            rep.sdf_spearman = spearman_rho(est_all, truth_all);
        } catch (const MetricError&) {
            rep.sdf_spearman = 0.0;
        }
    }
    return rep;
}

SemanticMap run_single_robot(const Environment& env, const std::vector<Pose2>& traj,
                             const SingleRunParams& p) {
    const double voxel = p.map.tree.voxel_size;
    SemanticMap map = SemanticMap::for_environment(env, p.map, p.frame_size * voxel);
    std::mt19937_64 rng(p.seed + 0x9E3779B97F4A7C15ULL * 7);
    for (const Pose2& pose : traj) {
        SensorObservation obs =
            observe(env, pose, p.frame, p.sensor_noise_var, p.class_error_prob, rng);
        std::map<int, ObservationBatch> batches = build_training_batch_2d(obs, voxel, p.frame_size);
        std::map<int, ObservationBatch> clipped;
        for (const auto& [cls, batch] : batches) {
            ObservationBatch kept =
                clip_batch_to_box(batch, map.root_ctr(), map.root_side(), voxel);
            if (!kept.empty()) clipped[cls] = std::move(kept);
        }
        map.ingest(clipped);
    }
    return map;
}

std::vector<SweepRow> parameter_sweep(const SingleRunParams& base,
                                      const std::vector<SweepPoint>& grid,
                                      const std::vector<std::uint64_t>& seeds) {
    if (grid.empty() || seeds.empty()) throw MetricError("parameter_sweep: empty grid or seeds");
    const int n = static_cast<int>(grid.size() * seeds.size());
    std::vector<SweepRow> rows(static_cast<std::size_t>(n));
    parallel_for(n, [&](int cell) {
        const std::size_t g = static_cast<std::size_t>(cell) / seeds.size();
        const std::size_t s = static_cast<std::size_t>(cell) % seeds.size();
        SingleRunParams p = base;
        grid[g].apply(p);
        p.seed = seeds[s];
        Environment env = generate_environment(p.seed, p.bbox, p.num_classes, p.env_gen);
        std::vector<Pose2> traj =
            sample_trajectory(env, p.seed + 0x9E3779B97F4A7C15ULL * 13, p.trajectory_length);
        SemanticMap map = run_single_robot(env, traj, p);
        SweepRow& row = rows[static_cast<std::size_t>(cell)];
        row.label = grid[g].label;
        row.seed = p.seed;
        row.report = evaluate_map(map, env);
    });
    return rows;
}

}  // namespace semtsdf
