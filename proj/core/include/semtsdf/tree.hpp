#pragma once

#include "semtsdf/gp.hpp"

#include <memory>

namespace semtsdf {

// Node of the overlapping-octant tree. Test boxes of the children tile the
// parent's test box (half-open convention); support boxes are the test boxes
// scaled by delta > 1 and overlap, so a pseudo point may be stored in several
// sibling leaves. Only leaves hold statistics.
struct TreeNode {
    int level = 0;
    Vec ctr;
    std::vector<std::unique_ptr<TreeNode>> children;
    GpStats stats;
    PrecisionCache cache;

    bool is_leaf() const { return children.empty(); }
};

struct TreeParams {
    double delta = 1.5;
    int max_leaf_points = 100;
    double voxel_size = 0.1;
    double prior_mean = 0.0;
    bool maintain_cache = false;

    void validate() const {
        if (!(delta > 1.0)) throw ConfigError("tree delta must be > 1");
        if (max_leaf_points < 1) throw ConfigError("max leaf points must be >= 1");
        if (!(voxel_size > 0.0)) throw ConfigError("voxel_size must be > 0");
    }
};

class SpatialTree {
  public:
    SpatialTree() = default;
    SpatialTree(int dim, Vec root_ctr, double root_side, KernelSpec kernel,
                double sigma2, TreeParams params);

    SpatialTree(SpatialTree&&) = default;
    SpatialTree& operator=(SpatialTree&&) = default;

    SpatialTree clone() const;

    bool in_root(const Eigen::Ref<const Vec>& x) const;

    // Merges the batch into every leaf whose support box contains each point;
    // overfull leaves split. weight scales the batch counts.
    void insert(const ObservationBatch& batch, double weight = 1.0);
    void insert_weighted(const WeightedBatch& batch);

    const TreeNode& locate_leaf(const Eigen::Ref<const Vec>& x) const;

    // Posterior of the leaf owning x; an empty leaf yields the prior.
    GpMarginals predict(const Eigen::Ref<const Vec>& x) const;
    // Batched prediction, one factorization per touched leaf.
    GpMarginals predict_many(const Eigen::Ref<const Points>& queries) const;

    // Union of all leaf statistics keyed by grid point (duplicated entries
    // across sibling leaves hold identical values).
    GpStats flat_stats() const;

    void for_each_leaf(const std::function<void(const TreeNode&)>& fn) const;

    bool empty() const { return root_ == nullptr || total_points_ == 0; }
    const TreeNode& root() const { return *root_; }
    int dim() const { return dim_; }
    double root_side() const { return root_side_; }
    const Vec& root_ctr() const { return root_ctr_; }
    const TreeParams& params() const { return params_; }
    const KernelSpec& kernel() const { return kernel_; }
    double sigma2() const { return sigma2_; }

  private:
    double test_half_side(int level) const;
    bool support_contains(const TreeNode& node, const Eigen::Ref<const Vec>& x) const;
    void insert_rec(TreeNode& node, const WeightedBatch& batch, const Points& pts,
                    const std::vector<int>& idx);
    void split(TreeNode& node);

    int dim_ = 2;
    Vec root_ctr_;
    double root_side_ = 1.0;
    KernelSpec kernel_;
    double sigma2_ = 1.0;
    TreeParams params_;
    std::unique_ptr<TreeNode> root_;
    std::size_t total_points_ = 0;
};

}  // namespace semtsdf
