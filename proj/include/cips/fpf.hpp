#pragma once

#include "cips/core/ensemble.hpp"
#include "cips/gain.hpp"
#include "cips/models.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cips {

/// Per-step posterior summaries of a filter run plus the final ensemble.
struct FilterTrace {
    std::vector<double> times;
    std::vector<Moments> moments;
    Ensemble final;
};

/// One step of the finite-N feedback particle filter
///     X^i += a(X^i) dt + sigma_B dB^i + K^i (dZ - (h(X^i) + h_N)/2 dt)
/// with the gain evaluated on the pre-step ensemble. Observations with
/// non-unit noise are rescaled to unit noise first.
inline Ensemble fpf_step(const Ensemble& ens, const Vector& dz, double dt, const FilterModel& model,
                         GainApproximator& gain, RngStream& rng) {
    detail::require(dt > 0.0, "fpf_step: dt must be positive");
    detail::require(dz.size() == model.obs_dim, "fpf_step: observation increment has wrong dimension");
    detail::require(ens.dim() == model.state_dim, "fpf_step: ensemble dimension does not match the model");
    const Matrix& x = ens.particles();
    const Eigen::Index N = ens.size();
    const Matrix hv = (model.linear ? Matrix(model.linear->H * x) : model.observe_all(x)) / model.obs_noise;
    const Vector hbar = column_mean(hv);
    const Vector dzs = dz / model.obs_noise;

    GainField k;
    try {
        k = gain(x, hv);
    } catch (const NumericError& e) {
        throw NumericError(std::string("fpf_step at t=") + std::to_string(ens.time()) + ": " + e.what());
    }

    const double sdt = std::sqrt(dt);
    Matrix next(x.rows(), N);
    if (model.linear && k.is_constant()) {
        // Same draws in the same order as the per-particle loop below,
        // none at all when the process noise is identically zero.
        const auto& lin = *model.linear;
        Matrix innovation = -0.5 * dt * (hv.colwise() + hbar);
        innovation.colwise() += dzs;
        next = x + lin.A * x * dt + k.at(0) * innovation;
        if (!lin.sigma_b.isZero(0.0)) next += lin.sigma_b * rng.normal_matrix(model.noise_dim, N) * sdt;
        if (!next.allFinite()) throw NumericError("fpf_step: non-finite particle at t=" + std::to_string(ens.time() + dt));
        return Ensemble(std::move(next), ens.time() + dt);
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector xi = x.col(i);
        const Vector innovation = dzs - 0.5 * (hv.col(i) + hbar) * dt;
        const Vector db = rng.normal_vector(model.noise_dim) * sdt;
        next.col(i) = xi + model.drift(xi) * dt + model.diffusion(xi) * db + k.at(i) * innovation;
    }
    if (!next.allFinite()) throw NumericError("fpf_step: non-finite particle at t=" + std::to_string(ens.time() + dt));
    return Ensemble(std::move(next), ens.time() + dt);
}

/// Unweighted particle average (1/N) sum_i f(X^i).
inline double fpf_estimate(const Ensemble& ens, const std::function<double(const Vector&)>& f) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < ens.size(); ++i) s += f(ens.particles().col(i));
    return s / static_cast<double>(ens.size());
}

inline FilterTrace run_fpf(const FilterModel& model, const ObservationPath& obs, Eigen::Index n,
                           const GainMethod& method, RngStream& rng) {
    detail::require(n >= 2, "run_fpf: need at least 2 particles");
    detail::require(obs.increments.rows() == model.obs_dim, "run_fpf: observation dimension mismatch");
    GainApproximator gain(method);
    Ensemble ens(model.sample_prior_columns(rng, n), obs.t0);
    FilterTrace trace;
    trace.times.push_back(ens.time());
    trace.moments.push_back(empirical_moments(ens));
    for (Eigen::Index k = 0; k < obs.steps(); ++k) {
        ens = fpf_step(ens, obs.increments.col(k), obs.dt, model, gain, rng);
        trace.times.push_back(ens.time());
        trace.moments.push_back(empirical_moments(ens));
    }
    trace.final = std::move(ens);
    return trace;
}

} // namespace cips
