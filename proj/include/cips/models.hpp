#pragma once

// Filtering and control model constructors, mixture densities and
// truth/observation path simulation.

#include "cips/core/numerics.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cips {

/// Matrices of the linear Gaussian model dX = AX dt + sigma_B dB,
/// dZ = HX dt + dW, X_0 ~ N(m0, Sigma0).
struct LinearDescriptor {
    Matrix A;
    Matrix H;
    Matrix sigma_b;
    Vector m0;
    SymMatrix sigma0;

    SymMatrix process_cov() const { return SymMatrix::symmetrize(sigma_b * sigma_b.transpose()); }
};

/// State dynamics, observation function and prior of a filtering problem.
///
/// Observations follow dZ = h(X) dt + obs_noise * dW. Filters that assume
/// unit observation noise consume the rescaled pair (h / obs_noise,
/// dZ / obs_noise), see `scaled_observation`.
struct FilterModel {
    Eigen::Index state_dim = 0;
    Eigen::Index obs_dim = 0;
    Eigen::Index noise_dim = 0;
    std::function<Vector(const Vector&)> drift;
    std::function<Matrix(const Vector&)> diffusion;
    std::function<Vector(const Vector&)> observation;
    std::function<Vector(RngStream&)> sample_prior;
    double obs_noise = 1.0;
    std::optional<LinearDescriptor> linear;

    bool is_linear() const { return linear.has_value(); }

    /// h(x) / obs_noise, i.e. the observation function of the unit-noise
    /// model with increments dZ / obs_noise.
    Vector scaled_observation(const Vector& x) const { return observation(x) / obs_noise; }

    /// h evaluated on every column of a d x N particle matrix (m x N).
    Matrix observe_all(const Matrix& x) const {
        Matrix out(obs_dim, x.cols());
        for (Eigen::Index i = 0; i < x.cols(); ++i) out.col(i) = observation(x.col(i));
        return out;
    }

    Matrix sample_prior_columns(RngStream& rng, Eigen::Index n) const {
        Matrix out(state_dim, n);
        for (Eigen::Index i = 0; i < n; ++i) out.col(i) = sample_prior(rng);
        return out;
    }
};

inline FilterModel make_linear_gaussian(const Matrix& A, const Matrix& H, const Matrix& sigma_b, const Vector& m0,
                                        const Matrix& sigma0, double obs_noise = 1.0) {
    const Eigen::Index d = A.rows();
    detail::require(A.cols() == d && d >= 1, "make_linear_gaussian: A must be square");
    detail::require(H.cols() == d && H.rows() >= 1, "make_linear_gaussian: H must have d columns");
    detail::require(sigma_b.rows() == d && sigma_b.cols() >= 1, "make_linear_gaussian: sigma_B must have d rows");
    detail::require(m0.size() == d, "make_linear_gaussian: m0 has wrong dimension");
    detail::require(sigma0.rows() == d && sigma0.cols() == d, "make_linear_gaussian: Sigma0 has wrong dimension");
    detail::require(obs_noise > 0.0, "make_linear_gaussian: observation noise must be positive");
    SymMatrix s0(sigma0);
    detail::require(s0.is_positive_definite(), "make_linear_gaussian: Sigma0 must be positive definite");

    LinearDescriptor lin{A, H, sigma_b, m0, s0};
    FilterModel m;
    m.state_dim = d;
    m.obs_dim = H.rows();
    m.noise_dim = sigma_b.cols();
    m.drift = [A](const Vector& x) -> Vector { return A * x; };
    m.diffusion = [sigma_b](const Vector&) -> Matrix { return sigma_b; };
    m.observation = [H](const Vector& x) -> Vector { return H * x; };
    const Matrix factor = covariance_factor(s0);
    m.sample_prior = [m0, factor](RngStream& rng) -> Vector { return m0 + factor * rng.normal_vector(m0.size()); };
    m.obs_noise = obs_noise;
    m.linear = std::move(lin);
    return m;
}

/// Fully observed static parameter: dX = 0, dZ = X dt + sigma_w dW,
/// X_0 ~ N(0, sigma0^2 I_d).
inline FilterModel make_static_param(Eigen::Index d, double sigma0, double sigma_w) {
    detail::require(d >= 1, "make_static_param: d must be >= 1");
    detail::require(sigma0 > 0.0 && sigma_w > 0.0, "make_static_param: sigma0 and sigma_w must be positive");
    return make_linear_gaussian(Matrix::Zero(d, d), Matrix::Identity(d, d), Matrix::Zero(d, d), Vector::Zero(d),
                                sigma0 * sigma0 * Matrix::Identity(d, d), sigma_w);
}

/// Stable 2-D benchmark: damped rotation observed through its first
/// coordinate, process noise 0.5 I, prior N((1, -1), I).
inline FilterModel make_linear2d_benchmark(double obs_noise = 1.0) {
    Matrix A(2, 2);
    A << -0.5, 1.0, -1.0, -0.5;
    Matrix H(1, 2);
    H << 1.0, 0.0;
    Vector m0(2);
    m0 << 1.0, -1.0;
    return make_linear_gaussian(A, H, 0.5 * Matrix::Identity(2, 2), m0, Matrix::Identity(2, 2), obs_noise);
}

/// Replaces the prior of a model. The linear descriptor is dropped because
/// the prior is no longer Gaussian in general.
inline FilterModel with_prior(FilterModel model, std::function<Vector(RngStream&)> sampler) {
    model.sample_prior = std::move(sampler);
    model.linear.reset();
    return model;
}

/// Largest deviation between descriptor matrices and function oracles at
/// `points` random states.
inline double linear_descriptor_mismatch(const FilterModel& model, RngStream& rng, int points = 10) {
    if (!model.linear) return 0.0;
    const auto& lin = *model.linear;
    double worst = 0.0;
    for (int k = 0; k < points; ++k) {
        const Vector x = rng.normal_vector(model.state_dim) * 3.0;
        worst = std::max(worst, (model.drift(x) - lin.A * x).cwiseAbs().maxCoeff());
        worst = std::max(worst, (model.observation(x) - lin.H * x).cwiseAbs().maxCoeff());
        worst = std::max(worst, (model.diffusion(x) - lin.sigma_b).cwiseAbs().maxCoeff());
    }
    return worst;
}

/// Finite Gaussian mixture on the real line.
class Density1D {
public:
    struct Component {
        double mean;
        double variance;
        double weight;
    };

    explicit Density1D(std::vector<Component> components) : c_(std::move(components)) {
        detail::require(!c_.empty(), "Density1D: need at least one component");
        double total = 0.0;
        for (const auto& c : c_) {
            detail::require(c.variance > 0.0, "Density1D: component variances must be positive");
            detail::require(c.weight >= 0.0, "Density1D: component weights must be nonnegative");
            total += c.weight;
        }
        detail::require(std::abs(total - 1.0) <= 1e-12, "Density1D: weights must sum to 1");
    }

    const std::vector<Component>& components() const { return c_; }

    double pdf(double x) const {
        double p = 0.0;
        for (const auto& c : c_)
            p += c.weight * std::exp(-(x - c.mean) * (x - c.mean) / (2.0 * c.variance)) /
                 std::sqrt(2.0 * std::numbers::pi * c.variance);
        return p;
    }

    /// Derivative of the density, used by the finite-difference oracle.
    double pdf_derivative(double x) const {
        double p = 0.0;
        for (const auto& c : c_)
            p -= c.weight * (x - c.mean) / c.variance * std::exp(-(x - c.mean) * (x - c.mean) / (2.0 * c.variance)) /
                 std::sqrt(2.0 * std::numbers::pi * c.variance);
        return p;
    }

    double mean() const {
        double m = 0.0;
        for (const auto& c : c_) m += c.weight * c.mean;
        return m;
    }

    double variance() const {
        const double m = mean();
        double second = 0.0;
        for (const auto& c : c_) second += c.weight * (c.variance + c.mean * c.mean);
        return second - m * m;
    }

    double sample(RngStream& rng) const {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t k = 0;
        for (; k + 1 < c_.size(); ++k) {
            acc += c_[k].weight;
            if (u < acc) break;
        }
        return c_[k].mean + std::sqrt(c_[k].variance) * rng.normal();
    }

    /// Bounded interval covering every component to `sds` standard
    /// deviations.
    std::pair<double, double> support(double sds = 8.0) const {
        double lo = c_.front().mean, hi = c_.front().mean;
        for (const auto& c : c_) {
            lo = std::min(lo, c.mean - sds * std::sqrt(c.variance));
            hi = std::max(hi, c.mean + sds * std::sqrt(c.variance));
        }
        return {lo, hi};
    }

private:
    std::vector<Component> c_;
};

/// Equal-weight mixture of N(-1, sigma2) and N(+1, sigma2).
inline Density1D make_bimodal(double sigma2) {
    detail::require(sigma2 > 0.0, "make_bimodal: variance must be positive");
    return Density1D({{-1.0, sigma2, 0.5}, {1.0, sigma2, 0.5}});
}

inline Density1D make_gaussian_1d(double mean, double variance) {
    detail::require(variance > 0.0, "make_gaussian_1d: variance must be positive");
    return Density1D({{mean, variance, 1.0}});
}

/// Uniform time grid t_0 .. t_K and the observation increments over it.
struct ObservationPath {
    double t0 = 0.0;
    double dt = 0.0;
    Matrix increments; // m x K

    Eigen::Index steps() const { return increments.cols(); }
    double horizon() const { return dt * static_cast<double>(steps()); }
    double time(Eigen::Index k) const { return t0 + dt * static_cast<double>(k); }
    Vector total() const { return increments.rowwise().sum(); }
};

/// Number of Euler steps covering [0, T]. T must be an integer multiple of
/// dt up to rounding.
inline Eigen::Index step_count(double dt, double horizon) {
    detail::require(dt > 0.0 && std::isfinite(dt), "time step must be positive");
    detail::require(horizon >= 0.0 && std::isfinite(horizon), "horizon must be nonnegative");
    const double ratio = horizon / dt;
    const double k = std::round(ratio);
    detail::require(std::abs(ratio - k) <= 1e-9 * std::max(1.0, ratio),
                    "horizon must be an integer multiple of the time step");
    return static_cast<Eigen::Index>(k);
}

struct TruthAndObservations {
    Matrix states; // d x (K+1)
    ObservationPath obs;
};

/// Euler-Maruyama state path with dZ_k = h(X_k) dt + obs_noise * dW_k.
inline TruthAndObservations simulate_truth_and_observations(const FilterModel& model, double dt, double horizon,
                                                            RngStream& rng) {
    detail::require(horizon >= dt, "simulate_truth_and_observations: horizon must be at least one step");
    const Eigen::Index K = step_count(dt, horizon);
    const double sdt = std::sqrt(dt);
    TruthAndObservations out;
    out.states.resize(model.state_dim, K + 1);
    out.obs.dt = dt;
    out.obs.increments.resize(model.obs_dim, K);
    Vector x = model.sample_prior(rng);
    out.states.col(0) = x;
    for (Eigen::Index k = 0; k < K; ++k) {
        const Vector dw = rng.normal_vector(model.obs_dim) * sdt;
        out.obs.increments.col(k) = model.observation(x) * dt + model.obs_noise * dw;
        const Vector db = rng.normal_vector(model.noise_dim) * sdt;
        x = x + model.drift(x) * dt + model.diffusion(x) * db;
        if (!x.allFinite())
            throw NumericError("simulate_truth_and_observations: non-finite state at step " + std::to_string(k + 1));
        out.states.col(k + 1) = x;
    }
    return out;
}

/// Explicit matrices of a linear-quadratic problem.
struct LQMatrices {
    Matrix A;
    Matrix B;
    Matrix C;
};

/// Finite-horizon LQ problem exposed through function oracles
/// f(x, a) = Ax + Ba and c(x) = Cx, with R and P_T known.
struct LQProblem {
    Eigen::Index state_dim = 0;
    Eigen::Index control_dim = 0;
    Eigen::Index cost_dim = 0;
    std::function<Vector(const Vector&, const Vector&)> dynamics;
    std::function<Vector(const Vector&)> cost;
    SymMatrix R;
    SymMatrix P_T;
    double horizon = 10.0;
    std::optional<LQMatrices> explicit_matrices;

    bool has_matrices() const { return explicit_matrices.has_value(); }

    /// The same problem with the explicit matrices withheld.
    LQProblem oracle_only() const {
        LQProblem copy = *this;
        copy.explicit_matrices.reset();
        return copy;
    }
};

inline LQProblem make_lq(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& R, const Matrix& P_T,
                         double horizon) {
    const Eigen::Index d = A.rows();
    detail::require(d >= 1 && A.cols() == d, "make_lq: A must be square");
    detail::require(B.rows() == d && B.cols() >= 1, "make_lq: B must have d rows");
    detail::require(C.cols() == d && C.rows() >= 1, "make_lq: C must have d columns");
    detail::require(R.rows() == B.cols() && R.cols() == B.cols(), "make_lq: R must be m x m");
    detail::require(P_T.rows() == d && P_T.cols() == d, "make_lq: P_T must be d x d");
    detail::require(horizon > 0.0, "make_lq: horizon must be positive");
    LQProblem lq;
    lq.state_dim = d;
    lq.control_dim = B.cols();
    lq.cost_dim = C.rows();
    lq.R = SymMatrix(R);
    lq.P_T = SymMatrix(P_T);
    detail::require(lq.R.is_positive_definite(), "make_lq: R must be positive definite");
    detail::require(lq.P_T.is_positive_definite(), "make_lq: P_T must be positive definite");
    lq.dynamics = [A, B](const Vector& x, const Vector& a) -> Vector { return A * x + B * a; };
    lq.cost = [C](const Vector& x) -> Vector { return C * x; };
    lq.horizon = horizon;
    lq.explicit_matrices = LQMatrices{A, B, C};
    return lq;
}

/// Controllable canonical form with last row of A drawn i.i.d. N(0,1),
/// B = e_d and C = R = P_T = I.
inline LQProblem make_lq_canonical(Eigen::Index d, RngStream& rng, double horizon = 10.0) {
    detail::require(d >= 1, "make_lq_canonical: d must be >= 1");
    Matrix A = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i + 1 < d; ++i) A(i, i + 1) = 1.0;
    for (Eigen::Index j = 0; j < d; ++j) A(d - 1, j) = rng.normal();
    Matrix B = Matrix::Zero(d, 1);
    B(d - 1, 0) = 1.0;
    return make_lq(A, B, Matrix::Identity(d, d), Matrix::Identity(1, 1), Matrix::Identity(d, d), horizon);
}

/// Largest violation of linearity of the dynamics oracle at random points.
inline double lq_linearity_defect(const LQProblem& lq, RngStream& rng, int points = 10) {
    double worst = 0.0;
    const Vector z = Vector::Zero(lq.control_dim);
    for (int k = 0; k < points; ++k) {
        const Vector x1 = rng.normal_vector(lq.state_dim), x2 = rng.normal_vector(lq.state_dim);
        const Vector a1 = rng.normal_vector(lq.control_dim), a2 = rng.normal_vector(lq.control_dim);
        const double s = rng.normal();
        const Vector lhs = lq.dynamics(x1 + s * x2, a1 + s * a2);
        const Vector rhs = lq.dynamics(x1, a1) + s * lq.dynamics(x2, a2);
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
        worst = std::max(worst, (lq.dynamics(x1, z) + lq.dynamics(Vector::Zero(lq.state_dim), a1) - lq.dynamics(x1, a1))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    return worst;
}

/// A, B and C recovered by probing the oracles at unit vectors.
inline LQMatrices probe_lq_matrices(const LQProblem& lq) {
    const Eigen::Index d = lq.state_dim, m = lq.control_dim;
    const Vector zx = Vector::Zero(d), za = Vector::Zero(m);
    const Vector f00 = lq.dynamics(zx, za);
    LQMatrices out{Matrix(d, d), Matrix(d, m), Matrix(lq.cost_dim, d)};
    for (Eigen::Index j = 0; j < d; ++j) {
        const Vector e = Vector::Unit(d, j);
        out.A.col(j) = lq.dynamics(e, za) - f00;
        out.C.col(j) = lq.cost(e) - lq.cost(zx);
    }
    for (Eigen::Index j = 0; j < m; ++j) out.B.col(j) = lq.dynamics(zx, Vector::Unit(m, j)) - f00;
    return out;
}

/// Explicit matrices when present, otherwise probed from the oracles.
inline LQMatrices lq_matrices(const LQProblem& lq) {
    return lq.explicit_matrices ? *lq.explicit_matrices : probe_lq_matrices(lq);
}

} // namespace cips
