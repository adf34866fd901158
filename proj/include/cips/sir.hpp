#pragma once

// Importance-sampling baselines: static Bayes-rule estimators and a
// bootstrap particle filter with systematic resampling.

#include "cips/core/ensemble.hpp"
#include "cips/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace cips {

class WeightedEnsemble {
public:
    WeightedEnsemble() = default;

    WeightedEnsemble(Matrix particles, Vector weights, double t)
        : x_(std::move(particles)), w_(std::move(weights)), t_(t) {
        detail::require(x_.cols() >= 1, "WeightedEnsemble: need at least one particle");
        detail::require(w_.size() == x_.cols(), "WeightedEnsemble: one weight per particle required");
        detail::require(w_.allFinite() && (w_.array() >= 0.0).all(), "WeightedEnsemble: weights must be finite and >= 0");
        detail::require(std::abs(w_.sum() - 1.0) <= 1e-12, "WeightedEnsemble: weights must sum to 1");
        if (!x_.allFinite()) throw NumericError("WeightedEnsemble: non-finite particle coordinate");
    }

    static WeightedEnsemble uniform(Matrix particles, double t) {
        const auto n = particles.cols();
        return WeightedEnsemble(std::move(particles), Vector::Constant(n, 1.0 / static_cast<double>(n)), t);
    }

    Eigen::Index size() const { return x_.cols(); }
    Eigen::Index dim() const { return x_.rows(); }
    double time() const { return t_; }
    const Matrix& particles() const { return x_; }
    const Vector& weights() const { return w_; }

    Moments moments() const {
        Vector m = x_ * w_;
        const Matrix c = x_.colwise() - m;
        Matrix s = c * w_.asDiagonal() * c.transpose();
        return {std::move(m), SymMatrix::symmetrize(s)};
    }

private:
    Matrix x_;
    Vector w_;
    double t_ = 0.0;
};

/// 1 / sum_i W_i^2.
inline double ess(const WeightedEnsemble& w) { return 1.0 / w.weights().squaredNorm(); }

namespace detail {

/// exp(logw - logsumexp(logw)); throws on total collapse.
inline Vector normalize_log_weights(const Vector& logw, const char* what) {
    const double top = logw.maxCoeff();
    if (!(top > -std::numeric_limits<double>::infinity()) || std::isnan(top))
        throw NumericError(std::string(what) + ": weight collapse (all weights are zero)");
    Vector w = (logw.array() - top).exp();
    const double s = w.sum();
    return w / s;
}

inline Vector static_log_likelihood(const Matrix& samples, const Vector& z, double sigma_w) {
    require(samples.rows() == z.size(), "static estimator: observation dimension mismatch");
    require(sigma_w > 0.0, "static estimator: sigma_w must be positive");
    return -(samples.colwise() - z).colwise().squaredNorm().transpose() / (2.0 * sigma_w * sigma_w);
}

} // namespace detail

/// Self-normalized importance-sampling estimate of E[f(X) | Z1] from prior
/// samples (columns), weights exp(-|Z1 - X^i|^2 / (2 sigma_w^2)).
inline double static_is_estimate(const Matrix& samples, const Vector& z, double sigma_w,
                                 const std::function<double(const Vector&)>& f) {
    detail::require(samples.cols() >= 1, "static_is_estimate: need at least one sample");
    const Vector w = detail::normalize_log_weights(detail::static_log_likelihood(samples, z, sigma_w), "static_is_estimate");
    double s = 0.0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) s += w(i) * f(samples.col(i));
    return s;
}

/// log D(Z) for the N(0, sigma0^2 I) prior: the exact normalizing constant
/// of the unnormalized weights.
inline double static_log_evidence(const Vector& z, double sigma0, double sigma_w) {
    const double v = sigma0 * sigma0 + sigma_w * sigma_w;
    const double per = 0.5 * std::log(sigma_w * sigma_w / v);
    return static_cast<double>(z.size()) * per - z.squaredNorm() / (2.0 * v);
}

/// Unnormalized weights exp(-|Z1 - X^i|^2 / (2 sigma_w^2)) / (N D(Z1)).
inline Vector static_modified_weights(const Matrix& samples, const Vector& z, double sigma0, double sigma_w) {
    detail::require(samples.cols() >= 1, "static_is_modified: need at least one sample");
    detail::require(sigma0 > 0.0, "static_is_modified: sigma0 must be positive");
    const Vector logw = detail::static_log_likelihood(samples, z, sigma_w);
    const double shift = std::log(static_cast<double>(samples.cols())) + static_log_evidence(z, sigma0, sigma_w);
    return (logw.array() - shift).exp();
}

/// Estimator with the denominator replaced by its exact value.
inline double static_is_modified(const Matrix& samples, const Vector& z, double sigma0, double sigma_w,
                                 const std::function<double(const Vector&)>& f) {
    const Vector w = static_modified_weights(samples, z, sigma0, sigma_w);
    double s = 0.0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) s += w(i) * f(samples.col(i));
    return s;
}

/// Indices drawn by systematic resampling with a single uniform offset.
inline std::vector<Eigen::Index> systematic_resample(const Vector& w, RngStream& rng) {
    const Eigen::Index n = w.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    const double u0 = rng.uniform() / static_cast<double>(n);
    double cum = w(0);
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
        while (u > cum && j + 1 < n) cum += w(++j);
        idx[static_cast<std::size_t>(i)] = j;
    }
    return idx;
}

/// Bootstrap filter step: reweight by exp(h^T dZ - |h|^2 dt / 2) at the
/// pre-step particles, resample systematically when ESS < threshold * N,
/// then propagate by Euler-Maruyama.
inline WeightedEnsemble bootstrap_pf_step(const WeightedEnsemble& wens, const Vector& dz, double dt,
                                          const FilterModel& model, RngStream& rng, double resample_threshold = 0.5) {
    detail::require(dt > 0.0, "bootstrap_pf_step: dt must be positive");
    detail::require(dz.size() == model.obs_dim, "bootstrap_pf_step: observation increment has wrong dimension");
    const Eigen::Index N = wens.size();
    const Matrix& x = wens.particles();
    const Vector dzs = dz / model.obs_noise;

    Vector logw = wens.weights().array().log();
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector h = model.scaled_observation(x.col(i));
        logw(i) += h.dot(dzs) - 0.5 * h.squaredNorm() * dt;
    }
    Vector w = detail::normalize_log_weights(logw, "bootstrap_pf_step");

    Matrix src = x;
    if (1.0 / w.squaredNorm() < resample_threshold * static_cast<double>(N)) {
        const auto idx = systematic_resample(w, rng);
        for (Eigen::Index i = 0; i < N; ++i) src.col(i) = x.col(idx[static_cast<std::size_t>(i)]);
        w.setConstant(1.0 / static_cast<double>(N));
    }

    const double sdt = std::sqrt(dt);
    Matrix next(x.rows(), N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector xi = src.col(i);
        next.col(i) = xi + model.drift(xi) * dt + model.diffusion(xi) * (rng.normal_vector(model.noise_dim) * sdt);
    }
    if (!next.allFinite()) throw NumericError("bootstrap_pf_step: non-finite particle");
    w /= w.sum();
    return WeightedEnsemble(std::move(next), std::move(w), wens.time() + dt);
}

struct WeightedTrace {
    std::vector<double> times;
    std::vector<Moments> moments;
    WeightedEnsemble final;
};

inline WeightedTrace run_bootstrap_pf(const FilterModel& model, const ObservationPath& obs, Eigen::Index n,
                                      RngStream& rng, double resample_threshold = 0.5) {
    detail::require(n >= 1, "run_bootstrap_pf: need at least one particle");
    WeightedEnsemble w = WeightedEnsemble::uniform(model.sample_prior_columns(rng, n), obs.t0);
    WeightedTrace trace;
    trace.times.push_back(w.time());
    trace.moments.push_back(w.moments());
    for (Eigen::Index k = 0; k < obs.steps(); ++k) {
        w = bootstrap_pf_step(w, obs.increments.col(k), obs.dt, model, rng, resample_threshold);
        trace.times.push_back(w.time());
        trace.moments.push_back(w.moments());
    }
    trace.final = std::move(w);
    return trace;
}

} // namespace cips
