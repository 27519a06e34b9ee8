#pragma once

#include "semtsdf/common.hpp"

#include <limits>

namespace semtsdf {

// Matern nu=3/2 covariance with a hard compact-support cutoff: beyond
// cutoff_radius the covariance is exactly zero. The cutoff is a documented
// stand-in for a tapered compactly-supported construction.
struct KernelSpec {
    double lengthscale = 0.1;
    double signal_variance = 1.0;
    double cutoff_radius = 0.3;

    // Lengthscale at the training-grid pitch: distance fields have kinks at
    // object corners, and wider supports let labels from adjacent faces bleed
    // across them, biasing the zero crossing.
    static KernelSpec defaults_for_voxel(double voxel_size) {
        KernelSpec k;
        k.lengthscale = voxel_size;
        k.signal_variance = 1.0;
        k.cutoff_radius = 3.0 * k.lengthscale;
        return k;
    }

    void validate() const {
        if (!(lengthscale > 0.0) || !(signal_variance > 0.0) || !(cutoff_radius > 0.0))
            throw ConfigError("kernel parameters must be positive");
    }
};

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vec>& x,
                   const Eigen::Ref<const Vec>& y);

// Gram matrix |A| x |B| for point sets stored one point per column.
Mat kernel_gram(const KernelSpec& spec, const Eigen::Ref<const Points>& A,
                const Eigen::Ref<const Points>& B);

}  // namespace semtsdf
