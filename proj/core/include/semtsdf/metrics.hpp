#pragma once

#include "semtsdf/network.hpp"

#include <functional>
#include <string>

namespace semtsdf {

struct MetricReport {
    double misclassification_rate = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double false_discovery_rate = 0.0;
    double false_negative_rate = 0.0;
    double sdf_error = 0.0;
    double normalized_sdf_error = 0.0;
    double sdf_spearman = 0.0;
    int n_class_points = 0;
    int n_sdf_points = 0;
};

struct BoundaryPoint {
    Eigen::Vector2d p;
    int cls = 0;
};

// Deterministic arc-length resampling of every obstacle boundary, one point
// per `spacing` meters of perimeter starting at each polygon's first vertex.
std::vector<BoundaryPoint> boundary_test_points(const Environment& env, double spacing);

// Seeded alternative: the same point count per polygon, placed uniformly at
// random by arc length.
std::vector<BoundaryPoint> boundary_test_points_random(const Environment& env, double spacing,
                                                       std::uint64_t seed);

// (point, class) pairs on a regular grid, kept where the class's signed
// distance magnitude is below `band`.
std::vector<BoundaryPoint> sdf_band_points(const Environment& env, double grid_res, double band);

// Mean absolute difference between the map's distance estimate and the true
// truncated signed distance over the given (point, class) pairs.
double sdf_error(const SemanticMap& map, const Environment& env,
                 const std::vector<BoundaryPoint>& pts);

// Spearman rank correlation (average ranks on ties).
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

// Mean/variance discrepancy of a robot map against the centralized reference
// map, evaluated at the reference's pseudo points and macro-averaged over its
// classes.
std::pair<double, double> mae_vs_centralized(const SemanticMap& robot, const SemanticMap& central,
                                             const std::map<int, GpStats>& central_stats);

// Surface classification + distance accuracy of a map against ground truth.
MetricReport evaluate_map(const SemanticMap& map, const Environment& env);

struct SingleRunParams {
    std::uint64_t seed = 1;
    BBox bbox{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(20.0, 20.0)};
    int num_classes = 2;
    EnvGenParams env_gen;
    SensorFrame frame = SensorFrame::radial(180, 2.0 * M_PI, 10.0);
    double sensor_noise_var = 0.0;
    double class_error_prob = 0.0;
    int frame_size = 10;
    int trajectory_length = 60;
    MapParams map;
};

// Observe the environment along the trajectory and build the map.
SemanticMap run_single_robot(const Environment& env, const std::vector<Pose2>& traj,
                             const SingleRunParams& p);

struct SweepPoint {
    std::string label;
    std::function<void(SingleRunParams&)> apply;
};

struct SweepRow {
    std::string label;
    std::uint64_t seed = 0;
    MetricReport report;
};

// Full pipeline (generate, traverse, map, evaluate) for every grid point and
// seed; rows come back in grid-major, seed-minor order regardless of the
// worker count.
std::vector<SweepRow> parameter_sweep(const SingleRunParams& base,
                                      const std::vector<SweepPoint>& grid,
                                      const std::vector<std::uint64_t>& seeds);

}  // namespace semtsdf
