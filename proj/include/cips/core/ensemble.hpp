#pragma once

#include "cips/core/numerics.hpp"

#include <utility>

namespace cips {

/// N particles in R^d stored as the columns of a d x N matrix, plus a
/// time stamp. Weights are implicitly uniform.
class Ensemble {
public:
    Ensemble() = default;

    Ensemble(Matrix particles, double t) : x_(std::move(particles)), t_(t) {
        detail::require(x_.cols() >= 2, "Ensemble: need at least 2 particles");
        if (!x_.allFinite()) throw NumericError("Ensemble: non-finite particle coordinate");
    }

    Eigen::Index size() const { return x_.cols(); }
    Eigen::Index dim() const { return x_.rows(); }
    double time() const { return t_; }
    const Matrix& particles() const { return x_; }
    auto particle(Eigen::Index i) const { return x_.col(i); }

private:
    Matrix x_;
    double t_ = 0.0;
};

struct Moments {
    Vector mean;
    SymMatrix cov;
};

/// Column mean, summed in particle-index order.
inline Vector column_mean(const Matrix& x) {
    Vector m = Vector::Zero(x.rows());
    for (Eigen::Index i = 0; i < x.cols(); ++i) m += x.col(i);
    return m / static_cast<double>(x.cols());
}

/// Mean and (N-1)-normalised covariance of the columns of x.
inline Moments empirical_moments(const Matrix& x) {
    detail::require(x.cols() >= 2, "empirical_moments: need at least 2 particles");
    Vector m = column_mean(x);
    const Matrix c = x.colwise() - m;
    Matrix s = c * c.transpose() / static_cast<double>(x.cols() - 1);
    return {std::move(m), SymMatrix::symmetrize(s)};
}

inline Moments empirical_moments(const Ensemble& ens) { return empirical_moments(ens.particles()); }

} // namespace cips
