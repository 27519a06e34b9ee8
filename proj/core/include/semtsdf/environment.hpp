#pragma once

#include "semtsdf/common.hpp"

#include <random>

namespace semtsdf {

struct BBox {
    Eigen::Vector2d lo;
    Eigen::Vector2d hi;

    Eigen::Vector2d center() const { return 0.5 * (lo + hi); }
    Eigen::Vector2d extent() const { return hi - lo; }
};

// Simple convex polygon, counter-clockwise vertex order.
struct Polygon {
    std::vector<Eigen::Vector2d> v;

    bool contains(const Eigen::Vector2d& x) const;
    double boundary_distance(const Eigen::Vector2d& x) const;
    // Smallest t >= 0 with x + t*dir on the boundary; +inf if the ray misses.
    double ray_distance(const Eigen::Vector2d& x, const Eigen::Vector2d& dir) const;
    double perimeter() const;
};

struct Environment {
    BBox bbox;
    int num_classes = 0;
    // obstacles[l-1] holds the polygons of class l; interiors are pairwise
    // disjoint across the whole environment.
    std::vector<std::vector<Polygon>> obstacles;

    bool class_contains(int cls, const Eigen::Vector2d& x) const;
    bool occupied(const Eigen::Vector2d& x) const;
    bool in_bounds(const Eigen::Vector2d& x) const;

    // Unsigned distance from x to the boundary of class cls; +inf if the
    // class has no polygons.
    double boundary_distance(int cls, const Eigen::Vector2d& x) const;
    // Truncated signed distance to the class boundary (negative inside).
    double signed_distance(int cls, const Eigen::Vector2d& x, double truncation) const;
    // Smallest ray distance to the class boundary; +inf if missed.
    double ray_distance(int cls, const Eigen::Vector2d& x,
                        const Eigen::Vector2d& dir) const;
};

struct EnvGenParams {
    int min_polygons = 6;
    int max_polygons = 10;
    double min_radius = 0.8;
    double max_radius = 2.5;
    int min_vertices = 5;
    int max_vertices = 9;
    double separation = 0.6;
    int retry_budget = 500;

    void validate() const;
};

// Deterministic per seed: random convex polygons assigned round-robin to
// classes, rejection-sampled until pairwise separated by params.separation.
Environment generate_environment(std::uint64_t seed, const BBox& bbox, int num_classes,
                                 const EnvGenParams& params);

// Per-class truncated signed directional distance along the ray (x, eta):
// entry l-1 is the ray distance to the class-l boundary truncated at
// truncation, negated when x sits inside class l.
Vec directional_distance(const Environment& env, const Eigen::Vector2d& x,
                         const Eigen::Vector2d& eta, double truncation);

}  // namespace semtsdf
