#pragma once

#include "semtsdf/environment.hpp"
#include "semtsdf/tree.hpp"

#include <map>

namespace semtsdf {

struct MapParams {
    KernelSpec kernel;
    double sigma2 = 1.0;
    double truncation = 0.3;
    int num_classes = 2;
    TreeParams tree;

    void validate() const {
        kernel.validate();
        tree.validate();
        if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be > 0");
        if (!(truncation > 0.0)) throw ConfigError("truncation must be > 0");
        if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    }
};

struct TsdfEstimate {
    double mean = 0.0;
    double stddev = 0.0;
};

// Per-class zero-level-set polylines.
using SurfaceContours = std::map<int, std::vector<std::vector<Eigen::Vector2d>>>;

// One distance-field tree per observed semantic class over a shared root
// box; all trees share kernel, noise and grid geometry.
class SemanticMap {
  public:
    SemanticMap() = default;
    SemanticMap(Vec root_ctr, double root_side, MapParams params);

    // Root box centered on the environment, side = max bbox extent plus
    // 2*pad, rounded up to a voxel multiple. Pad with the sensor frame
    // halo so observation blocks near the boundary stay inside the root.
    static SemanticMap for_environment(const Environment& env, MapParams params,
                                       double pad = 0.0);

    SemanticMap clone() const;

    void ingest(const std::map<int, ObservationBatch>& batches);
    void ingest_weighted(int cls, const WeightedBatch& batch);

    TsdfEstimate query_tsdf(int cls, const Eigen::Ref<const Vec>& x) const;
    GpMarginals query_tsdf_many(int cls, const Eigen::Ref<const Points>& queries) const;

    // Probability of each observed class conditioned on x lying on a class
    // surface; keys are the observed class ids.
    std::map<int, double> class_posterior(const Eigen::Ref<const Vec>& x) const;

    SurfaceContours extract_surface(double grid_res, double var_threshold) const;

    std::vector<int> observed_classes() const;
    bool has_class(int cls) const { return trees_.count(cls) > 0; }
    const SpatialTree& tree(int cls) const { return trees_.at(cls); }
    const MapParams& params() const { return params_; }
    const Vec& root_ctr() const { return root_ctr_; }
    double root_side() const { return root_side_; }
    bool empty() const { return trees_.empty(); }

  private:
    void ensure_tree(int cls);

    MapParams params_;
    Vec root_ctr_;
    double root_side_ = 1.0;
    std::map<int, SpatialTree> trees_;
};

// Drops batch cells whose grid point lies outside the cube of side `side`
// centered at `ctr` (sensor frames near the workspace edge can overhang the
// map root).
ObservationBatch clip_batch_to_box(const ObservationBatch& batch, const Vec& ctr, double side,
                                   double voxel_size);

// The surface-conditioned class posterior from per-class TSDF marginals:
// weight_l = phi(mu_l/sigma_l)/sigma_l, normalized (computed in log space).
// Degenerate entries with sigma = 0 follow the documented limit rule.
std::vector<double> surface_class_posterior(const std::vector<double>& mu,
                                            const std::vector<double>& sigma);

}  // namespace semtsdf
