#include "semtsdf/semantic_map.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace semtsdf {

SemanticMap::SemanticMap(Vec root_ctr, double root_side, MapParams params)
    : params_(params), root_ctr_(std::move(root_ctr)), root_side_(root_side) {
    params_.validate();
    if (!(root_side_ > 0.0)) throw ConfigError("root side must be > 0");
}

SemanticMap SemanticMap::for_environment(const Environment& env, MapParams params,
                                         double pad) {
    if (pad < 0.0) throw ConfigError("root padding must be >= 0");
    Eigen::Vector2d c = env.bbox.center();
    Vec ctr(2);
    ctr << c.x(), c.y();
    double side = env.bbox.extent().maxCoeff() + 2.0 * pad;
    double voxel = params.tree.voxel_size;
    side = std::ceil(side / voxel - 1e-9) * voxel;
    return SemanticMap(ctr, side, params);
}

SemanticMap SemanticMap::clone() const {
    SemanticMap m;
    m.params_ = params_;
    m.root_ctr_ = root_ctr_;
    m.root_side_ = root_side_;
    for (const auto& [cls, tree] : trees_) m.trees_.emplace(cls, tree.clone());
    return m;
}

void SemanticMap::ensure_tree(int cls) {
    if (cls < 1 || cls > params_.num_classes)
        throw InvalidInputError("class id out of range: " + std::to_string(cls));
    if (trees_.count(cls)) return;
    trees_.emplace(cls, SpatialTree(static_cast<int>(root_ctr_.size()), root_ctr_,
                                    root_side_, params_.kernel, params_.sigma2,
                                    params_.tree));
}

void SemanticMap::ingest(const std::map<int, ObservationBatch>& batches) {
    for (const auto& [cls, batch] : batches) {
        if (batch.empty()) continue;
        ensure_tree(cls);
        trees_.at(cls).insert(batch);
    }
}

void SemanticMap::ingest_weighted(int cls, const WeightedBatch& batch) {
    if (batch.empty()) return;
    ensure_tree(cls);
    trees_.at(cls).insert_weighted(batch);
}

TsdfEstimate SemanticMap::query_tsdf(int cls, const Eigen::Ref<const Vec>& x) const {
    auto it = trees_.find(cls);
    if (it == trees_.end()) {
        return TsdfEstimate{params_.tree.prior_mean,
                            std::sqrt(params_.kernel.signal_variance)};
    }
    GpMarginals m = it->second.predict(x);
    return TsdfEstimate{m.mean[0], std::sqrt(std::max(m.var[0], 0.0))};
}

GpMarginals SemanticMap::query_tsdf_many(int cls,
                                         const Eigen::Ref<const Points>& queries) const {
    auto it = trees_.find(cls);
    if (it == trees_.end()) {
        GpMarginals m;
        m.mean = Vec::Constant(queries.cols(), params_.tree.prior_mean);
        m.var = Vec::Constant(queries.cols(), params_.kernel.signal_variance);
        return m;
    }
    return it->second.predict_many(queries);
}

std::vector<int> SemanticMap::observed_classes() const {
    std::vector<int> out;
    out.reserve(trees_.size());
    for (const auto& [cls, _] : trees_) out.push_back(cls);
    return out;
}

std::map<int, double> SemanticMap::class_posterior(
    const Eigen::Ref<const Vec>& x) const {
    if (trees_.empty())
        throw InvalidInputError("class_posterior: no class observed yet");
    std::vector<int> classes = observed_classes();
    std::vector<double> mu, sigma;
    mu.reserve(classes.size());
    sigma.reserve(classes.size());
    for (int cls : classes) {
        TsdfEstimate e = query_tsdf(cls, x);
        mu.push_back(e.mean);
        sigma.push_back(e.stddev);
    }
    std::vector<double> p = surface_class_posterior(mu, sigma);
    std::map<int, double> out;
    for (std::size_t i = 0; i < classes.size(); ++i) out[classes[i]] = p[i];
    return out;
}

ObservationBatch clip_batch_to_box(const ObservationBatch& batch, const Vec& ctr, double side,
                                   double voxel_size) {
    ObservationBatch kept;
    const double half = 0.5 * side + 1e-12;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        Vec x = batch.keys[k].world(voxel_size);
        if (x.size() != ctr.size()) throw InvalidInputError("clip_batch_to_box: dim mismatch");
        if (!((x - ctr).cwiseAbs().array() <= half).all()) continue;
        kept.keys.push_back(batch.keys[k]);
        kept.counts.push_back(batch.counts[k]);
        kept.means.push_back(batch.means[k]);
    }
    return kept;
}

std::vector<double> surface_class_posterior(const std::vector<double>& mu,
                                            const std::vector<double>& sigma) {
    std::size_t n = mu.size();
    if (n == 0 || sigma.size() != n)
        throw InvalidInputError("surface_class_posterior: bad inputs");
    std::vector<double> p(n, 0.0);

    // sigma = 0 means the field value is known exactly: a class certain to
    // be zero at x takes all the mass (shared uniformly among such classes);
    // a class certainly nonzero takes none.
    bool any_zero_sigma = false;
    std::size_t certain_surface = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sigma[i] == 0.0) {
            any_zero_sigma = true;
            if (mu[i] == 0.0) ++certain_surface;
        }
    }
    if (any_zero_sigma && certain_surface > 0) {
        for (std::size_t i = 0; i < n; ++i)
            if (sigma[i] == 0.0 && mu[i] == 0.0)
                p[i] = 1.0 / static_cast<double>(certain_surface);
        return p;
    }

    std::vector<double> logw(n, -std::numeric_limits<double>::infinity());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (sigma[i] == 0.0) continue;
        if (sigma[i] < 0.0)
            throw InvalidInputError("surface_class_posterior: negative sigma");
        double z = mu[i] / sigma[i];
        logw[i] = -0.5 * z * z - std::log(sigma[i]);
        best = std::max(best, logw[i]);
    }
    if (!std::isfinite(best)) {
        // Every class is degenerate away from the surface; conditioning event
        // has probability zero. Fall back to uniform so the op stays total.
        for (auto& v : p) v = 1.0 / static_cast<double>(n);
        return p;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(logw[i])) continue;
        p[i] = std::exp(logw[i] - best);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

namespace {

struct SegmentSink {
    std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> segments;

    void add(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        if ((a - b).norm() < 1e-12) return;
        segments.emplace_back(a, b);
    }
};

// Chains loose segments into polylines; deterministic: walks start from the
// lexicographically smallest open endpoint.
std::vector<std::vector<Eigen::Vector2d>> chain_segments(SegmentSink&& sink) {
    struct QKey {
        std::int64_t x, y;
        bool operator<(const QKey& o) const {
            return x < o.x || (x == o.x && y < o.y);
        }
    };
    auto quantize = [](const Eigen::Vector2d& p) {
        return QKey{static_cast<std::int64_t>(std::llround(p.x() * 1e7)),
                    static_cast<std::int64_t>(std::llround(p.y() * 1e7))};
    };
    std::map<QKey, std::vector<int>> incident;
    int ns = static_cast<int>(sink.segments.size());
    for (int i = 0; i < ns; ++i) {
        incident[quantize(sink.segments[i].first)].push_back(i);
        incident[quantize(sink.segments[i].second)].push_back(i);
    }
    std::vector<bool> used(ns, false);
    std::vector<std::vector<Eigen::Vector2d>> polylines;

    auto walk = [&](int seed_idx, bool from_first) {
        std::vector<Eigen::Vector2d> line;
        const auto& s = sink.segments[seed_idx];
        Eigen::Vector2d cur = from_first ? s.first : s.second;
        Eigen::Vector2d nxt = from_first ? s.second : s.first;
        used[seed_idx] = true;
        line.push_back(cur);
        line.push_back(nxt);
        for (;;) {
            const auto& cands = incident[quantize(line.back())];
            int next_seg = -1;
            for (int c : cands)
                if (!used[c]) {
                    next_seg = c;
                    break;
                }
            if (next_seg < 0) break;
            used[next_seg] = true;
            const auto& t = sink.segments[next_seg];
            bool first_matches =
                quantize(t.first).x == quantize(line.back()).x &&
                quantize(t.first).y == quantize(line.back()).y;
            line.push_back(first_matches ? t.second : t.first);
        }
        return line;
    };

    // Endpoint-ordered seed scan keeps output independent of segment order.
    std::vector<std::pair<QKey, int>> seeds;
    for (int i = 0; i < ns; ++i) {
        seeds.emplace_back(quantize(sink.segments[i].first), i);
        seeds.emplace_back(quantize(sink.segments[i].second), i);
    }
    std::sort(seeds.begin(), seeds.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [key, idx] : seeds) {
        if (used[idx]) continue;
        bool from_first =
            quantize(sink.segments[idx].first).x == key.x &&
            quantize(sink.segments[idx].first).y == key.y;
        polylines.push_back(walk(idx, from_first));
    }
    return polylines;
}

}  // namespace

SurfaceContours SemanticMap::extract_surface(double grid_res,
                                             double var_threshold) const {
    if (!(grid_res > 0.0)) throw InvalidInputError("extract_surface: bad resolution");
    if (root_ctr_.size() != 2)
        throw InvalidInputError("extract_surface: 2-D maps only");
    SurfaceContours out;

    int nodes = static_cast<int>(std::floor(root_side_ / grid_res)) + 1;
    double x0 = root_ctr_[0] - 0.5 * root_side_;
    double y0 = root_ctr_[1] - 0.5 * root_side_;

    Points grid(2, static_cast<Eigen::Index>(nodes) * nodes);
    for (int j = 0; j < nodes; ++j)
        for (int i = 0; i < nodes; ++i)
            grid.col(static_cast<Eigen::Index>(j) * nodes + i) =
                Eigen::Vector2d(x0 + i * grid_res, y0 + j * grid_res);

    for (const auto& [cls, tree] : trees_) {
        GpMarginals m = tree.predict_many(grid);
        auto value = [&](int i, int j) { return m.mean[j * nodes + i]; };
        auto var = [&](int i, int j) { return m.var[j * nodes + i]; };
        auto node = [&](int i, int j) {
            return Eigen::Vector2d(x0 + i * grid_res, y0 + j * grid_res);
        };
        auto lerp = [&](int i0, int j0, int i1, int j1) {
            double a = value(i0, j0), b = value(i1, j1);
            double t = a / (a - b);
            return Eigen::Vector2d(node(i0, j0) + t * (node(i1, j1) - node(i0, j0)));
        };

        SegmentSink sink;
        for (int j = 0; j + 1 < nodes; ++j) {
            for (int i = 0; i + 1 < nodes; ++i) {
                if (std::max(std::max(var(i, j), var(i + 1, j)),
                             std::max(var(i, j + 1), var(i + 1, j + 1))) >
                    var_threshold)
                    continue;
                double v00 = value(i, j), v10 = value(i + 1, j);
                double v01 = value(i, j + 1), v11 = value(i + 1, j + 1);
                int c = (v00 < 0 ? 1 : 0) | (v10 < 0 ? 2 : 0) | (v11 < 0 ? 4 : 0) |
                        (v01 < 0 ? 8 : 0);
                if (c == 0 || c == 15) continue;
                Eigen::Vector2d bottom, right, top, left;
                if ((c & 1) != ((c >> 1) & 1)) bottom = lerp(i, j, i + 1, j);
                if (((c >> 1) & 1) != ((c >> 2) & 1)) right = lerp(i + 1, j, i + 1, j + 1);
                if (((c >> 3) & 1) != ((c >> 2) & 1)) top = lerp(i, j + 1, i + 1, j + 1);
                if ((c & 1) != ((c >> 3) & 1)) left = lerp(i, j, i, j + 1);
                switch (c) {
                    case 1: case 14: sink.add(left, bottom); break;
                    case 2: case 13: sink.add(bottom, right); break;
                    case 3: case 12: sink.add(left, right); break;
                    case 4: case 11: sink.add(right, top); break;
                    case 6: case 9: sink.add(bottom, top); break;
                    case 7: case 8: sink.add(left, top); break;
                    case 5: case 10: {
                        double center = 0.25 * (v00 + v10 + v01 + v11);
                        bool flip = (center < 0) == (c == 5);
                        if (flip) {
                            sink.add(left, top);
                            sink.add(bottom, right);
                        } else {
                            sink.add(left, bottom);
                            sink.add(right, top);
                        }
                        break;
                    }
                    default: break;
                }
            }
        }
        auto lines = chain_segments(std::move(sink));
        if (!lines.empty()) out.emplace(cls, std::move(lines));
    }
    return out;
}

}  // namespace semtsdf
