#include "semtsdf/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <optional>
#include <unordered_set>

namespace semtsdf {

namespace {

// Factor K + noise once, solve against several right-hand sides. Cholesky is
// the fast path; the hard kernel cutoff is not exactly positive definite, so
// densely sampled regions can leave the system mildly indefinite while still
// invertible — LU then solves the identical system.
class SymSolver {
  public:
    SymSolver(Mat A, const char* what) : A_(std::move(A)), llt_(A_) {
        if (llt_.info() == Eigen::Success) return;
        lu_.emplace(A_);
        if (!lu_->isInvertible())
            throw NumericalError(std::string(what) + ": singular system");
    }

    Mat solve(const Eigen::Ref<const Mat>& B) const {
        if (lu_) return lu_->solve(B);
        return llt_.solve(B);
    }

  private:
    Mat A_;
    Eigen::LLT<Mat> llt_;
    std::optional<Eigen::FullPivLU<Mat>> lu_;
};

void add_noise_diag(Mat& A, const Eigen::Ref<const Vec>& counts, double sigma2) {
    A.diagonal() += sigma2 * counts.cwiseInverse();
}

}  // namespace

void ObservationBatch::validate() const {
    if (keys.size() != counts.size() || keys.size() != means.size())
        throw InvalidInputError("ObservationBatch: field lengths differ");
    std::unordered_set<GridKey, GridKeyHash> seen;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (counts[i] < 1) throw InvalidInputError("ObservationBatch: count < 1");
        if (!seen.insert(keys[i]).second)
            throw InvalidInputError("ObservationBatch: duplicate key " + keys[i].str());
    }
}

int GpStats::find(const GridKey& k) const {
    auto it = index_.find(k);
    return it == index_.end() ? -1 : it->second;
}

void GpStats::reserve(int n) {
    keys.reserve(n);
    index_.reserve(n);
}

void GpStats::append(const GridKey& k, double m, double zeta) {
    if (find(k) >= 0) throw InvalidInputError("GpStats: key already present");
    if (!(m > 0.0)) throw InvalidInputError("GpStats: count must be positive");
    int n = size();
    if (pts.cols() == 0) pts.resize(k.dim, 0);
    if (pts.rows() != k.dim) throw InvalidInputError("GpStats: mixed dimensions");
    pts.conservativeResize(Eigen::NoChange, n + 1);
    pts.col(n) = k.world(voxel_size);
    counts.conservativeResize(n + 1);
    means.conservativeResize(n + 1);
    counts[n] = m;
    means[n] = zeta;
    keys.push_back(k);
    index_.emplace(k, n);
}

GpPosterior full_gp_posterior(const KernelSpec& kernel, double prior_mean,
                              const Eigen::Ref<const Points>& X,
                              const Eigen::Ref<const Vec>& y, double sigma2,
                              const Eigen::Ref<const Points>& queries) {
    if (X.cols() != y.size() || X.cols() < 1)
        throw InvalidInputError("full_gp_posterior: need |X| = |y| >= 1");
    if (!(sigma2 > 0.0)) throw InvalidInputError("full_gp_posterior: sigma2 must be > 0");

    // In-place factorizations: K can be large (one row per raw observation).
    // A cutoff kernel can make K + sigma2*I indefinite yet invertible; LU
    // solves that same system when Cholesky refuses.
    Mat K = kernel_gram(kernel, X, X);
    K.diagonal().array() += sigma2;
    std::optional<Eigen::LLT<Eigen::Ref<Mat>>> llt;
    std::optional<Eigen::PartialPivLU<Eigen::Ref<Mat>>> lu;
    llt.emplace(K);
    if (llt->info() != Eigen::Success) {
        llt.reset();
        K = kernel_gram(kernel, X, X);
        K.diagonal().array() += sigma2;
        lu.emplace(K);
    }
    auto solve = [&](const Mat& B) { return lu ? Mat(lu->solve(B)) : Mat(llt->solve(B)); };

    Mat Kxq = kernel_gram(kernel, X, queries);
    Vec resid = y.array() - prior_mean;
    Vec alpha = solve(resid);
    Mat V = solve(Kxq);

    GpPosterior post;
    post.mean = (Kxq.transpose() * alpha).array() + prior_mean;
    Mat cov = kernel_gram(kernel, queries, queries) - Kxq.transpose() * V;
    post.cov = 0.5 * (cov + cov.transpose());
    return post;
}

GpPosterior compressed_posterior(const KernelSpec& kernel, const GpStats& stats,
                                 double sigma2, const Eigen::Ref<const Points>& queries,
                                 const PrecisionCache* cache) {
    GpPosterior post;
    if (stats.empty()) {
        post.mean = Vec::Constant(queries.cols(), stats.prior_mean);
        post.cov = kernel_gram(kernel, queries, queries);
        return post;
    }
    Mat Kpq = kernel_gram(kernel, stats.pts, queries);
    Vec resid = stats.means.array() - stats.prior_mean;
    Vec alpha;
    Mat V;
    if (cache != nullptr) {
        alpha = cache->Z * resid;
        V = cache->Z * Kpq;
    } else {
        Mat Zinv = kernel_gram(kernel, stats.pts, stats.pts);
        add_noise_diag(Zinv, stats.counts, sigma2);
        SymSolver solver(std::move(Zinv), "compressed_posterior");
        alpha = solver.solve(resid);
        V = solver.solve(Kpq);
    }
    post.mean = (Kpq.transpose() * alpha).array() + stats.prior_mean;
    Mat cov = kernel_gram(kernel, queries, queries) - Kpq.transpose() * V;
    post.cov = 0.5 * (cov + cov.transpose());
    return post;
}

GpMarginals compressed_marginals(const KernelSpec& kernel, const GpStats& stats,
                                 double sigma2, const Eigen::Ref<const Points>& queries,
                                 const PrecisionCache* cache) {
    GpMarginals out;
    if (stats.empty()) {
        out.mean = Vec::Constant(queries.cols(), stats.prior_mean);
        out.var = Vec::Constant(queries.cols(), kernel.signal_variance);
        return out;
    }
    Mat Kpq = kernel_gram(kernel, stats.pts, queries);
    Vec resid = stats.means.array() - stats.prior_mean;
    Vec alpha;
    Mat V;
    if (cache != nullptr) {
        alpha = cache->Z * resid;
        V = cache->Z * Kpq;
    } else {
        Mat Zinv = kernel_gram(kernel, stats.pts, stats.pts);
        add_noise_diag(Zinv, stats.counts, sigma2);
        SymSolver solver(std::move(Zinv), "compressed_marginals");
        alpha = solver.solve(resid);
        V = solver.solve(Kpq);
    }
    out.mean = (Kpq.transpose() * alpha).array() + stats.prior_mean;
    out.var = Vec(queries.cols());
    for (Eigen::Index i = 0; i < queries.cols(); ++i)
        out.var[i] = kernel.signal_variance - Kpq.col(i).dot(V.col(i));
    return out;
}

WeightedBatch WeightedBatch::from(const ObservationBatch& batch, double weight) {
    batch.validate();
    if (!(weight > 0.0)) throw InvalidInputError("WeightedBatch: weight must be positive");
    WeightedBatch w;
    w.keys = batch.keys;
    w.counts.resize(batch.size());
    w.means.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        w.counts[i] = weight * static_cast<double>(batch.counts[i]);
        w.means[i] = batch.means[i];
    }
    return w;
}

GpStats merge_weighted(GpStats stats, const WeightedBatch& batch) {
    stats.reserve(stats.size() + static_cast<int>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double add = batch.counts[i];
        if (!(add > 0.0)) throw InvalidInputError("merge_weighted: count must be positive");
        int l = stats.find(batch.keys[i]);
        if (l >= 0) {
            double m_new = stats.counts[l] + add;
            stats.means[l] = (stats.counts[l] * stats.means[l] + add * batch.means[i]) / m_new;
            stats.counts[l] = m_new;
        } else {
            stats.append(batch.keys[i], add, batch.means[i]);
        }
    }
    return stats;
}

GpStats merge_batch(GpStats stats, const ObservationBatch& batch, double weight) {
    return merge_weighted(std::move(stats), WeightedBatch::from(batch, weight));
}

PrecisionCache build_precision(const KernelSpec& kernel, const GpStats& stats,
                               double sigma2) {
    PrecisionCache cache;
    if (stats.empty()) return cache;
    Mat Zinv = kernel_gram(kernel, stats.pts, stats.pts);
    add_noise_diag(Zinv, stats.counts, sigma2);
    SymSolver solver(std::move(Zinv), "build_precision");
    Mat Z = solver.solve(Mat::Identity(stats.size(), stats.size()));
    cache.Z = 0.5 * (Z + Z.transpose());
    return cache;
}

PrecisionCache update_precision_existing(PrecisionCache cache, int l, double m_old,
                                         double m_new, double sigma2) {
    if (l < 0 || l >= cache.Z.rows())
        throw InvalidInputError("update_precision_existing: index out of range");
    if (m_new == m_old) return cache;
    if (!(m_new > m_old) || !(m_old > 0.0))
        throw InvalidInputError("update_precision_existing: need m_new > m_old > 0");
    double eps = sigma2 * (1.0 / m_new - 1.0 / m_old);
    double denom = 1.0 / eps + cache.Z(l, l);
    if (std::abs(denom) <= 1e-12 * (std::abs(1.0 / eps) + std::abs(cache.Z(l, l))))
        throw NumericalError("update_precision_existing: vanishing denominator");
    Vec Bl = cache.Z.col(l);
    cache.Z -= (Bl * Bl.transpose()) / denom;
    cache.Z = 0.5 * (cache.Z + cache.Z.transpose()).eval();
    return cache;
}

PrecisionCache extend_precision_raw(const PrecisionCache& cache, const GpStats& stats,
                                    const Eigen::Ref<const Points>& new_pts,
                                    const Eigen::Ref<const Vec>& new_counts,
                                    const KernelSpec& kernel, double sigma2) {
    int k = static_cast<int>(new_pts.cols());
    if (k == 0) return cache;
    Mat D = kernel_gram(kernel, new_pts, new_pts);
    add_noise_diag(D, new_counts, sigma2);

    int n = stats.size();
    if (n != cache.Z.rows())
        throw InvalidInputError("extend_precision: cache size does not match stats");
    PrecisionCache out;
    if (n == 0) {
        SymSolver solver(std::move(D), "extend_precision");
        Mat Z = solver.solve(Mat::Identity(k, k));
        out.Z = 0.5 * (Z + Z.transpose());
        return out;
    }
    Mat C = kernel_gram(kernel, stats.pts, new_pts);
    Mat BC = cache.Z * C;
    Mat M = D - C.transpose() * BC;
    SymSolver solver(std::move(M), "extend_precision");
    Mat S = solver.solve(Mat::Identity(k, k));
    S = 0.5 * (S + S.transpose()).eval();

    out.Z.resize(n + k, n + k);
    Mat BCS = BC * S;
    out.Z.topLeftCorner(n, n) = cache.Z + BCS * BC.transpose();
    out.Z.topRightCorner(n, k) = -BCS;
    out.Z.bottomLeftCorner(k, n) = -BCS.transpose();
    out.Z.bottomRightCorner(k, k) = S;
    out.Z = 0.5 * (out.Z + out.Z.transpose()).eval();
    return out;
}

PrecisionCache extend_precision_new_points(const PrecisionCache& cache,
                                           const GpStats& stats,
                                           const ObservationBatch& new_batch,
                                           const KernelSpec& kernel, double sigma2) {
    new_batch.validate();
    int k = static_cast<int>(new_batch.size());
    if (k == 0) return cache;
    int dim = new_batch.keys.front().dim;
    Points pts(dim, k);
    Vec counts(k);
    for (int i = 0; i < k; ++i) {
        if (stats.find(new_batch.keys[i]) >= 0)
            throw InvalidInputError("extend_precision: batch point already present");
        pts.col(i) = new_batch.keys[i].world(stats.voxel_size);
        counts[i] = static_cast<double>(new_batch.counts[i]);
    }
    return extend_precision_raw(cache, stats, pts, counts, kernel, sigma2);
}

void merge_weighted_with_cache(GpStats& stats, PrecisionCache& cache,
                               const WeightedBatch& batch, const KernelSpec& kernel,
                               double sigma2) {
    std::vector<int> fresh;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double add = batch.counts[i];
        if (!(add > 0.0)) throw InvalidInputError("merge_weighted_with_cache: bad count");
        int l = stats.find(batch.keys[i]);
        if (l < 0) {
            fresh.push_back(static_cast<int>(i));
            continue;
        }
        double m_old = stats.counts[l];
        double m_new = m_old + add;
        cache = update_precision_existing(std::move(cache), l, m_old, m_new, sigma2);
        stats.means[l] = (m_old * stats.means[l] + add * batch.means[i]) / m_new;
        stats.counts[l] = m_new;
    }
    if (!fresh.empty()) {
        int dim = batch.keys[fresh.front()].dim;
        Points pts(dim, static_cast<Eigen::Index>(fresh.size()));
        Vec counts(fresh.size());
        for (std::size_t j = 0; j < fresh.size(); ++j) {
            pts.col(j) = batch.keys[fresh[j]].world(stats.voxel_size);
            counts[j] = batch.counts[fresh[j]];
        }
        cache = extend_precision_raw(cache, stats, pts, counts, kernel, sigma2);
        for (std::size_t j = 0; j < fresh.size(); ++j)
            stats.append(batch.keys[fresh[j]], counts[j], batch.means[fresh[j]]);
    }
}

void merge_batch_with_cache(GpStats& stats, PrecisionCache& cache,
                            const ObservationBatch& batch, const KernelSpec& kernel,
                            double sigma2, double weight) {
    merge_weighted_with_cache(stats, cache, WeightedBatch::from(batch, weight), kernel,
                              sigma2);
}

}  // namespace semtsdf
