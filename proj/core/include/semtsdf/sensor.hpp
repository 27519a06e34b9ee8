#pragma once

#include "semtsdf/environment.hpp"
#include "semtsdf/gp.hpp"

#include <map>
#include <random>

namespace semtsdf {

inline constexpr int kNoHit = 0;

struct SensorFrame {
    std::vector<Eigen::Vector2d> directions;  // unit vectors in the sensor frame
    double max_range = 10.0;

    // rays evenly spaced over [0, fov).
    static SensorFrame radial(int rays, double fov, double max_range);
    void validate() const;
};

struct Pose2 {
    Eigen::Vector2d p;
    double theta = 0.0;

    Eigen::Matrix2d rotation() const;
};

struct SensorObservation {
    Pose2 pose;
    std::vector<double> lambdas;          // measured distances, <= max_range
    std::vector<int> classes;             // 1..L, kNoHit when nothing in range
    std::vector<Eigen::Vector2d> dirs;    // world-frame ray directions
    double max_range = 10.0;
};

// Ray-cast class-and-distance measurement: per ray the class with the
// smallest absolute directional distance wins (ties to the lowest id), the
// reported range gets zero-mean Gaussian noise (clamped at 0), and with
// class_error_prob the label is swapped for a uniformly random wrong class.
SensorObservation observe(const Environment& env, const Pose2& pose,
                          const SensorFrame& frame, double noise_var,
                          double class_error_prob, std::mt19937_64& rng);

// Converts hit rays into per-class training batches: around each ray
// endpoint a frame_size x frame_size block of grid points is labeled with
// the signed perpendicular distance to the local surface segment (through
// the endpoint of the neighboring ray), normal oriented toward the sensor.
// Duplicate grid points within the batch aggregate by count and mean.
std::map<int, ObservationBatch> build_training_batch_2d(const SensorObservation& obs,
                                                        double voxel_size,
                                                        int frame_size);

// Signed distance from x to the surface plane through three neighboring hit
// points, normal oriented toward the sensor at p_t.
double tsdf_label_plane_3d(const Eigen::Vector3d& x, const Eigen::Vector3d& x_hat,
                           const Eigen::Vector3d& x_right, const Eigen::Vector3d& x_up,
                           const Eigen::Vector3d& p_t);

// Deterministic rejection sampling of free-space poses with uniform headings.
std::vector<Pose2> sample_trajectory(const Environment& env, std::uint64_t seed,
                                     int length, int retry_budget = 1000);

}  // namespace semtsdf
