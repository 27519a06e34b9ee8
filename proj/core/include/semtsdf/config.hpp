#pragma once

#include "semtsdf/metrics.hpp"

#include <string>
#include <utility>

namespace semtsdf {

// One flat run description; -1 (or empty) means "derive the documented
// default". resolve() fills every derived field and validates the result.
struct RunConfig {
    std::string mode;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    // environment
    std::string env_file;
    BBox bbox{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(20.0, 20.0)};
    int num_classes = 2;
    EnvGenParams env_gen;

    // map / gp
    double voxel_size = 0.1;
    double sigma2 = 1.0;
    double truncation = -1.0;       // default 3 * voxel_size
    double prior_mean = -1.0;       // default truncation (the free-space value)
    bool prior_mean_set = false;
    double lengthscale = -1.0;      // default voxel_size
    double signal_variance = 1.0;
    double cutoff_radius = -1.0;    // default 3 * lengthscale
    double delta = 1.5;
    int max_leaf_points = 100;
    bool maintain_cache = false;

    // sensor
    int rays = 180;
    double fov = 2.0 * M_PI;
    double max_range = 10.0;
    double noise_var = 0.0;
    double class_error_prob = 0.0;
    int frame_size = 10;
    double epsilon = -1.0;          // default (frame_size - 1) * voxel_size / 2

    int trajectory_length = 60;

    // network
    Mat adjacency;                  // default: the bundled 3-robot graph
    double nu = -1.0;               // default 1 / (max_degree + 1)
    std::string protocol = "echoless";
    int rounds = 10;
    int extra_rounds = -1;          // default n - 1
    bool log_messages = false;

    // evaluation
    double contour_grid_res = -1.0;  // default 0.5 * voxel_size
    double var_threshold = -1.0;     // default 0.5 * signal_variance
    double boundary_spacing = -1.0;  // default 0.5 * voxel_size

    // sweep
    std::vector<std::pair<std::string, std::vector<double>>> sweep_params;
    std::vector<std::uint64_t> sweep_seeds;

    // Fill derived defaults in place and check every field; throws
    // ConfigError naming the offending field.
    void resolve();

    // Resolved views (call resolve() first).
    MapParams map_params() const;
    SensorFrame sensor_frame() const;
    SingleRunParams single_params() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

}  // namespace semtsdf
