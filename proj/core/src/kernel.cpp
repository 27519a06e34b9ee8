#include "semtsdf/kernel.hpp"

#include <cmath>

namespace semtsdf {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

inline double matern32(double r, double lengthscale, double signal_variance) {
    double a = kSqrt3 * r / lengthscale;
    return signal_variance * (1.0 + a) * std::exp(-a);
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vec>& x,
                   const Eigen::Ref<const Vec>& y) {
    if (x.size() != y.size()) throw InvalidInputError("kernel_eval: dimension mismatch");
    if (!x.allFinite() || !y.allFinite())
        throw InvalidInputError("kernel_eval: non-finite coordinates");
    double r = (x - y).norm();
    if (r >= spec.cutoff_radius) return 0.0;
    return matern32(r, spec.lengthscale, spec.signal_variance);
}

Mat kernel_gram(const KernelSpec& spec, const Eigen::Ref<const Points>& A,
                const Eigen::Ref<const Points>& B) {
    if (A.rows() != B.rows()) throw InvalidInputError("kernel_gram: dimension mismatch");
    if (!A.allFinite() || !B.allFinite())
        throw InvalidInputError("kernel_gram: non-finite coordinates");
    Mat K(A.cols(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.cols(); ++i) {
            double r = (A.col(i) - B.col(j)).norm();
            K(i, j) = r >= spec.cutoff_radius
                          ? 0.0
                          : matern32(r, spec.lengthscale, spec.signal_variance);
        }
    }
    return K;
}

}  // namespace semtsdf
