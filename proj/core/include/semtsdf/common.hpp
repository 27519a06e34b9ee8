#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace semtsdf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Point sets are stored one point per column (d x n).
using Points = Eigen::MatrixXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidInputError : Error { using Error::Error; };
struct OutOfBoundsError : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct GenerationError : Error { using Error::Error; };
struct TopologyError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct InvalidPoseError : Error { using Error::Error; };
struct DegenerateGeometryError : Error { using Error::Error; };
struct MetricError : Error { using Error::Error; };

// Integer lattice coordinate of a pseudo-point grid cell; the world
// coordinate is key * voxel_size componentwise.
struct GridKey {
    std::array<std::int64_t, 3> c{0, 0, 0};
    int dim = 2;

    GridKey() = default;
    GridKey(std::int64_t x, std::int64_t y) : c{x, y, 0}, dim(2) {}
    GridKey(std::int64_t x, std::int64_t y, std::int64_t z) : c{x, y, z}, dim(3) {}

    bool operator==(const GridKey& o) const { return dim == o.dim && c == o.c; }
    bool operator<(const GridKey& o) const {
        if (dim != o.dim) return dim < o.dim;
        return c < o.c;
    }

    Vec world(double voxel_size) const {
        Vec w(dim);
        for (int a = 0; a < dim; ++a) w[a] = static_cast<double>(c[a]) * voxel_size;
        return w;
    }

    static GridKey snap(const Eigen::Ref<const Vec>& x, double voxel_size) {
        GridKey k;
        k.dim = static_cast<int>(x.size());
        for (int a = 0; a < k.dim; ++a) k.c[a] = std::llround(x[a] / voxel_size);
        return k;
    }

    std::string str() const {
        std::string s = std::to_string(c[0]);
        for (int a = 1; a < dim; ++a) s += "," + std::to_string(c[a]);
        return s;
    }
};

struct GridKeyHash {
    std::size_t operator()(const GridKey& k) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(k.dim);
        for (int a = 0; a < k.dim; ++a) {
            std::uint64_t v = static_cast<std::uint64_t>(k.c[a]);
            v *= 0xbf58476d1ce4e5b9ULL;
            v ^= v >> 31;
            h = (h ^ v) * 0x94d049bb133111ebULL;
        }
        return static_cast<std::size_t>(h);
    }
};

// Number of workers to use: min(SEMTSDF_THREADS, hardware threads), >= 1.
int worker_count();

// Runs fn(i) for i in [0, n); work is sharded over worker_count() threads.
// fn must only touch per-index state so results are identical for any
// worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace semtsdf
