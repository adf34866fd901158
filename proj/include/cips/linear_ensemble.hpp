#pragma once

#include "cips/core/ensemble.hpp"
#include "cips/fpf.hpp"
#include "cips/kalman.hpp"
#include "cips/models.hpp"

#include <string>
#include <string_view>

namespace cips {

enum class LinearVariant { sqrt, perturbed, deterministic };

inline std::string_view to_string(LinearVariant v) {
    switch (v) {
    case LinearVariant::sqrt: return "sqrt";
    case LinearVariant::perturbed: return "perturbed";
    case LinearVariant::deterministic: return "det";
    }
    return "?";
}

inline LinearVariant parse_linear_variant(std::string_view s) {
    if (s == "sqrt") return LinearVariant::sqrt;
    if (s == "perturbed") return LinearVariant::perturbed;
    if (s == "det" || s == "deterministic") return LinearVariant::deterministic;
    throw ConfigError("unknown linear ensemble variant '" + std::string(s) + "'");
}

/// Linear mean-field coefficients (G, sigma, sigma') implied by a variant at
/// covariance S: dX = G (X - m) dt + sigma dB + sigma' dW + (mean terms).
struct VariantCoefficients {
    Matrix G;
    Matrix sigma;
    Matrix sigma_prime;
};

inline VariantCoefficients variant_coefficients(LinearVariant v, const Matrix& A, const Matrix& H,
                                                const Matrix& sigma_b, const Matrix& S) {
    const Eigen::Index d = A.rows();
    const Matrix SHt = S * H.transpose();
    switch (v) {
    case LinearVariant::sqrt:
        return {A - 0.5 * SHt * H, sigma_b, Matrix::Zero(d, H.rows())};
    case LinearVariant::perturbed:
        return {A - SHt * H, sigma_b, SHt};
    case LinearVariant::deterministic: {
        const Matrix sb = sigma_b * sigma_b.transpose();
        const Matrix S_inv = spd_inverse_with_jitter(S, "variant_coefficients");
        return {A - 0.5 * SHt * H + 0.5 * sb * S_inv, Matrix::Zero(d, sigma_b.cols()), Matrix::Zero(d, H.rows())};
    }
    }
    throw ConfigError("variant_coefficients: unknown variant");
}

/// ||G S + S G^T + sigma sigma^T + sigma' sigma'^T - Ricc(S)||_F.
inline double consistency_residual(LinearVariant v, const Matrix& A, const Matrix& H, const Matrix& sigma_b,
                                   const Matrix& S) {
    const auto c = variant_coefficients(v, A, H, sigma_b, S);
    const Matrix lhs = c.G * S + S * c.G.transpose() + c.sigma * c.sigma.transpose() +
                       c.sigma_prime * c.sigma_prime.transpose();
    return (lhs - filter_riccati_rhs(A, H, sigma_b * sigma_b.transpose(), S)).norm();
}

/// One Euler step of a linear-Gaussian ensemble filter with empirical
/// (N-1)-normalised moments.
inline Ensemble linear_enkf_step(const Ensemble& ens, const Vector& dz, double dt, const FilterModel& model,
                                 LinearVariant variant, RngStream& rng) {
    if (!model.linear) throw ConfigError("linear_enkf_step: model has no linear descriptor");
    detail::require(dt > 0.0, "linear_enkf_step: dt must be positive");
    detail::require(dz.size() == model.obs_dim, "linear_enkf_step: observation increment has wrong dimension");
    detail::require(ens.dim() == model.state_dim, "linear_enkf_step: ensemble dimension does not match the model");
    const auto& lin = *model.linear;
    const Matrix H = lin.H / model.obs_noise;
    const Vector dzs = dz / model.obs_noise;
    const Matrix& x = ens.particles();
    const Eigen::Index N = ens.size(), m = H.rows();
    const auto mom = empirical_moments(x);
    const Matrix& S = mom.cov.mat();

    const double resid = consistency_residual(variant, lin.A, H, lin.sigma_b, S);
    const double scale = std::max(1.0, filter_riccati_rhs(lin.A, H, lin.process_cov().mat(), S).norm());
    if (!(resid <= 1e-8 * scale))
        throw NumericError("linear_enkf_step: consistency equation violated (residual " + std::to_string(resid) + ")");

    const Matrix gain = S * H.transpose();
    const double sdt = std::sqrt(dt);
    Matrix next(x.rows(), N);
    if (variant == LinearVariant::deterministic) {
        const Matrix S_inv = spd_inverse_with_jitter(S, "linear_enkf_step");
        const Matrix pull = 0.5 * lin.process_cov().mat() * S_inv;
        for (Eigen::Index i = 0; i < N; ++i) {
            const Vector xi = x.col(i);
            next.col(i) = xi + lin.A * xi * dt + pull * (xi - mom.mean) * dt +
                          gain * (dzs - 0.5 * H * (xi + mom.mean) * dt);
        }
    } else {
        for (Eigen::Index i = 0; i < N; ++i) {
            const Vector xi = x.col(i);
            const Vector db = rng.normal_vector(lin.sigma_b.cols()) * sdt;
            Vector innovation;
            if (variant == LinearVariant::sqrt) {
                innovation = dzs - 0.5 * H * (xi + mom.mean) * dt;
            } else {
                innovation = dzs - H * xi * dt - rng.normal_vector(m) * sdt;
            }
            next.col(i) = xi + lin.A * xi * dt + lin.sigma_b * db + gain * innovation;
        }
    }
    if (!next.allFinite()) throw NumericError("linear_enkf_step: non-finite particle");
    return Ensemble(std::move(next), ens.time() + dt);
}

inline FilterTrace run_linear_enkf(const FilterModel& model, const ObservationPath& obs, Eigen::Index n,
                                   LinearVariant variant, RngStream& rng) {
    detail::require(n >= 2, "run_linear_enkf: need at least 2 particles");
    Ensemble ens(model.sample_prior_columns(rng, n), obs.t0);
    FilterTrace trace;
    trace.times.push_back(ens.time());
    trace.moments.push_back(empirical_moments(ens));
    for (Eigen::Index k = 0; k < obs.steps(); ++k) {
        ens = linear_enkf_step(ens, obs.increments.col(k), obs.dt, model, variant, rng);
        trace.times.push_back(ens.time());
        trace.moments.push_back(empirical_moments(ens));
    }
    trace.final = std::move(ens);
    return trace;
}

} // namespace cips
