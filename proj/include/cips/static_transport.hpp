#pragma once

// Static Gaussian conditioning maps and deterministic heat-equation transport.

#include "cips/core/ensemble.hpp"
#include "cips/kalman.hpp"

#include <string>
#include <utility>

namespace cips {

struct JointGaussian {
    Vector mean_x;
    Vector mean_y;
    Matrix cov_x;
    Matrix cov_xy;
    Matrix cov_y;

    JointGaussian(Vector mx, Vector my, Matrix sx, Matrix sxy, Matrix sy)
        : mean_x(std::move(mx)), mean_y(std::move(my)), cov_x(std::move(sx)), cov_xy(std::move(sxy)),
          cov_y(std::move(sy)) {
        const Eigen::Index d = mean_x.size(), m = mean_y.size();
        detail::require(d >= 1 && m >= 1, "JointGaussian: empty block");
        detail::require(cov_x.rows() == d && cov_x.cols() == d, "JointGaussian: Sigma_X has wrong shape");
        detail::require(cov_y.rows() == m && cov_y.cols() == m, "JointGaussian: Sigma_Y has wrong shape");
        detail::require(cov_xy.rows() == d && cov_xy.cols() == m, "JointGaussian: Sigma_XY has wrong shape");
        const SymMatrix full(joint_cov());
        Vector ev;
        try {
            detail::psd_eigen(full, ev, "JointGaussian");
        } catch (const NumericError& e) {
            throw ConfigError(e.what());
        }
        detail::require(SymMatrix(cov_y).is_positive_definite(), "JointGaussian: Sigma_Y must be positive definite");
    }

    Eigen::Index x_dim() const { return mean_x.size(); }
    Eigen::Index y_dim() const { return mean_y.size(); }

    Matrix joint_cov() const {
        const Eigen::Index d = x_dim(), m = y_dim();
        Matrix c(d + m, d + m);
        c << cov_x, cov_xy, cov_xy.transpose(), cov_y;
        return c;
    }

    Vector joint_mean() const {
        Vector v(x_dim() + y_dim());
        v << mean_x, mean_y;
        return v;
    }

    /// K = Sigma_XY Sigma_Y^{-1}.
    Matrix gain() const {
        Eigen::LLT<Matrix> llt(cov_y);
        if (llt.info() != Eigen::Success) throw NumericError("JointGaussian: Sigma_Y is singular");
        return llt.solve(cov_xy.transpose()).transpose();
    }
};

/// x -> matrix * x + offset.
struct AffineMap {
    Matrix matrix;
    Vector offset;

    Vector operator()(const Vector& x) const { return matrix * x + offset; }
    Matrix apply_columns(const Matrix& x) const { return (matrix * x).colwise() + offset; }
};

/// Conditional mean and covariance of X given Y = y.
inline GaussianBelief blue_update(const JointGaussian& jg, const Vector& y) {
    detail::require(y.size() == jg.y_dim(), "blue_update: observation has wrong dimension");
    const Matrix K = jg.gain();
    Vector mean = jg.mean_x + K * (y - jg.mean_y);
    Matrix cov = jg.cov_x - K * jg.cov_xy.transpose();
    return {std::move(mean), SymMatrix::symmetrize(cov)};
}

/// Symmetric PSD solution of A Sigma_X A = Sigma_X - Sigma_XY Sigma_Y^{-1} Sigma_YX.
inline Matrix ot_transport_matrix(const JointGaussian& jg) {
    const SymMatrix sx(jg.cov_x);
    if (!sx.is_positive_definite()) throw ConfigError("ot_affine_map: Sigma_X must be positive definite");
    const Matrix K = jg.gain();
    const SymMatrix target = SymMatrix::symmetrize(jg.cov_x - K * jg.cov_xy.transpose());
    const Matrix root = sym_sqrt(sx).mat();
    const Matrix inv_root = sym_inv_sqrt(sx).mat();
    const SymMatrix inner = SymMatrix::symmetrize(root * target.mat() * root);
    const Matrix A = inv_root * sym_sqrt(inner).mat() * inv_root;
    return 0.5 * (A + A.transpose());
}

/// x0 -> A (x0 - E[X]) + K (y - E[Y]) + E[X].
inline AffineMap ot_affine_map(const JointGaussian& jg, const Vector& y) {
    detail::require(y.size() == jg.y_dim(), "ot_affine_map: observation has wrong dimension");
    Matrix A = ot_transport_matrix(jg);
    Vector offset = jg.mean_x - A * jg.mean_x + jg.gain() * (y - jg.mean_y);
    return {std::move(A), std::move(offset)};
}

/// x0 + K (y - y0) for an independent joint sample (x0, y0).
inline Vector perturbed_enkf_map(const JointGaussian& jg, const Vector& y, const Vector& x0, const Vector& y0) {
    return x0 + jg.gain() * (y - y0);
}

/// n posterior samples from the perturbed map applied to fresh joint samples.
inline Matrix perturbed_enkf_samples(const JointGaussian& jg, const Vector& y, Eigen::Index n, RngStream& rng) {
    const Eigen::Index d = jg.x_dim();
    const Matrix joint = sample_gaussian_columns(rng, jg.joint_mean(), SymMatrix::symmetrize(jg.joint_cov()), n);
    const Matrix K = jg.gain();
    Matrix out = joint.topRows(d) + K * ((-joint.bottomRows(jg.y_dim())).colwise() + y);
    return out;
}

/// n posterior samples from the OT map applied to prior samples of X.
inline Matrix ot_map_samples(const JointGaussian& jg, const Vector& y, Eigen::Index n, RngStream& rng) {
    const Matrix x0 = sample_gaussian_columns(rng, jg.mean_x, SymMatrix::symmetrize(jg.cov_x), n);
    return ot_affine_map(jg, y).apply_columns(x0);
}

/// Forward-Euler step of dX/dt = (Sigma0 + 2t I)^{-1} (X - m0), which
/// transports N(m0, Sigma0) along the heat-equation solution N(m0, Sigma0 + 2t I).
inline Ensemble heat_transport_step(const Ensemble& ens, double t, double dt, const GaussianBelief& prior) {
    detail::require(dt > 0.0, "heat_transport_step: dt must be positive");
    detail::require(prior.mean.size() == ens.dim(), "heat_transport_step: prior dimension mismatch");
    const Eigen::Index d = ens.dim();
    const Matrix cov_t = prior.cov.mat() + 2.0 * t * Matrix::Identity(d, d);
    const Matrix inv = spd_inverse_with_jitter(cov_t, "heat_transport_step");
    Matrix next = ens.particles() + inv * (ens.particles().colwise() - prior.mean) * dt;
    return Ensemble(std::move(next), t + dt);
}

/// Stochastic counterpart with the same marginal law: X += sqrt(2) dB.
inline Ensemble heat_brownian_step(const Ensemble& ens, double dt, RngStream& rng) {
    detail::require(dt > 0.0, "heat_brownian_step: dt must be positive");
    Matrix next = ens.particles() + std::sqrt(2.0 * dt) * rng.normal_matrix(ens.dim(), ens.size());
    return Ensemble(std::move(next), ens.time() + dt);
}

} // namespace cips
