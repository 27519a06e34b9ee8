#pragma once

#include "semtsdf/kernel.hpp"

#include <unordered_map>
#include <vector>

namespace semtsdf {

// A batch of fresh observations aggregated per grid point: each key carries
// how many raw observations fell on it and their mean value.
struct ObservationBatch {
    std::vector<GridKey> keys;
    std::vector<std::int64_t> counts;
    std::vector<double> means;

    std::size_t size() const { return keys.size(); }
    bool empty() const { return keys.empty(); }
    void validate() const;
};

// Compressed per-point statistics of everything observed so far: observation
// count m and running mean zeta per stored grid point. Counts are real-valued
// so credibility-weighted merges stay representable.
struct GpStats {
    std::vector<GridKey> keys;
    Points pts;  // d x n world coordinates, column i = keys[i] * voxel_size
    Vec counts;
    Vec means;
    double prior_mean = 0.0;
    double voxel_size = 0.1;

    int size() const { return static_cast<int>(keys.size()); }
    bool empty() const { return keys.empty(); }
    // Index of a key, -1 if absent.
    int find(const GridKey& k) const;
    void append(const GridKey& k, double m, double zeta);
    void reserve(int n);

  private:
    std::unordered_map<GridKey, int, GridKeyHash> index_;
};

// Z = inverse(K(P,P) + sigma2 * diag(m)^-1), maintained incrementally.
struct PrecisionCache {
    Mat Z;
    bool empty() const { return Z.size() == 0; }
};

struct GpPosterior {
    Vec mean;
    Mat cov;
};

struct GpMarginals {
    Vec mean;
    Vec var;
};

// Dense-solve posterior over raw (uncompressed) training data; the reference
// implementation the compressed path is tested against.
GpPosterior full_gp_posterior(const KernelSpec& kernel, double prior_mean,
                              const Eigen::Ref<const Points>& X,
                              const Eigen::Ref<const Vec>& y, double sigma2,
                              const Eigen::Ref<const Points>& queries);

// Posterior from compressed statistics. If cache is non-null it must hold the
// precision matrix for stats and is used instead of a fresh factorization.
GpPosterior compressed_posterior(const KernelSpec& kernel, const GpStats& stats,
                                 double sigma2, const Eigen::Ref<const Points>& queries,
                                 const PrecisionCache* cache = nullptr);

// Means and marginal variances only (no cross-covariances).
GpMarginals compressed_marginals(const KernelSpec& kernel, const GpStats& stats,
                                 double sigma2, const Eigen::Ref<const Points>& queries,
                                 const PrecisionCache* cache = nullptr);

// Batch with real-valued counts; the internal currency of merges so that
// credibility-weighted contributions stay representable.
struct WeightedBatch {
    std::vector<GridKey> keys;
    Vec counts;
    Vec means;

    std::size_t size() const { return keys.size(); }
    bool empty() const { return keys.empty(); }
    static WeightedBatch from(const ObservationBatch& batch, double weight = 1.0);
};

// Count-weighted merge of a batch: counts add, means average, new points are
// appended in batch order. weight scales the batch counts (credibility
// weighting); weight = 1 is the plain update.
[[nodiscard]] GpStats merge_batch(GpStats stats, const ObservationBatch& batch,
                                  double weight = 1.0);
[[nodiscard]] GpStats merge_weighted(GpStats stats, const WeightedBatch& batch);

PrecisionCache build_precision(const KernelSpec& kernel, const GpStats& stats,
                               double sigma2);

// Rank-one precision update after the count at index l changed from m_old to
// m_new (the noise term sigma2/m shrank).
PrecisionCache update_precision_existing(PrecisionCache cache, int l, double m_old,
                                         double m_new, double sigma2);

// Block extension of the precision matrix for points observed the first time.
// stats must be the statistics *before* the new points are appended.
PrecisionCache extend_precision_new_points(const PrecisionCache& cache,
                                           const GpStats& stats,
                                           const ObservationBatch& new_batch,
                                           const KernelSpec& kernel, double sigma2);

PrecisionCache extend_precision_raw(const PrecisionCache& cache, const GpStats& stats,
                                    const Eigen::Ref<const Points>& new_pts,
                                    const Eigen::Ref<const Vec>& new_counts,
                                    const KernelSpec& kernel, double sigma2);

// merge_batch plus incremental cache maintenance (count updates first, then
// the block extension), equivalent to rebuilding the precision from scratch.
void merge_batch_with_cache(GpStats& stats, PrecisionCache& cache,
                            const ObservationBatch& batch, const KernelSpec& kernel,
                            double sigma2, double weight = 1.0);
void merge_weighted_with_cache(GpStats& stats, PrecisionCache& cache,
                               const WeightedBatch& batch, const KernelSpec& kernel,
                               double sigma2);

}  // namespace semtsdf
