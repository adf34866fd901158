#pragma once

// Simulation-based LQR: a backward-in-time ensemble whose covariance tracks
// the inverse of the Riccati solution, and the feedback gains read off it.

#include "cips/core/ensemble.hpp"
#include "cips/kalman.hpp"
#include "cips/models.hpp"

#include <string>
#include <vector>

namespace cips {

/// Backward ensemble Y^i at time t with its mean and (N-1)-normalised
/// covariance.
struct DualEnsembleState {
    Matrix particles; // d x N
    double time = 0.0;
    Vector mean;
    SymMatrix cov;

    static DualEnsembleState from_particles(Matrix y, double t) {
        if (!y.allFinite())
            throw NumericError("dual EnKF: non-finite particle at t=" + std::to_string(t) +
                               " (reduce dt or the horizon)");
        auto mom = empirical_moments(y);
        return {std::move(y), t, std::move(mom.mean), std::move(mom.cov)};
    }

    Eigen::Index size() const { return particles.cols(); }
    Eigen::Index dim() const { return particles.rows(); }
};

namespace detail {

/// Matrix-vector access to (A, B, C) either through explicit matrices or
/// through the f and c oracles.
class LQAccess {
public:
    explicit LQAccess(const LQProblem& lq) : lq_(lq) {
        if (lq.explicit_matrices) {
            mats_ = *lq.explicit_matrices;
        } else {
            const Eigen::Index d = lq.state_dim, m = lq.control_dim;
            const Vector zx = Vector::Zero(d), za = Vector::Zero(m);
            f00_ = lq.dynamics(zx, za);
            mats_.B.resize(d, m);
            for (Eigen::Index j = 0; j < m; ++j) mats_.B.col(j) = lq.dynamics(zx, Vector::Unit(m, j)) - f00_;
            const Vector c0 = lq.cost(zx);
            mats_.C.resize(lq.cost_dim, d);
            for (Eigen::Index j = 0; j < d; ++j) mats_.C.col(j) = lq.cost(Vector::Unit(d, j)) - c0;
        }
    }

    bool explicit_mode() const { return lq_.explicit_matrices.has_value(); }
    const Matrix& B() const { return mats_.B; }
    const Matrix& C() const { return mats_.C; }

    /// A y for every column of y.
    Matrix drift(const Matrix& y) const {
        if (explicit_mode()) return mats_.A * y;
        Matrix out(y.rows(), y.cols());
        const Vector za = Vector::Zero(lq_.control_dim);
        for (Eigen::Index i = 0; i < y.cols(); ++i) out.col(i) = lq_.dynamics(y.col(i), za) - f00_;
        return out;
    }

private:
    const LQProblem& lq_;
    LQMatrices mats_;
    Vector f00_;
};

} // namespace detail

/// Terminal ensemble Y^i_T ~ N(0, P_T^{-1}).
inline DualEnsembleState dual_enkf_init(const LQProblem& lq, Eigen::Index n, RngStream& rng) {
    const Eigen::Index d = lq.state_dim;
    detail::require(n >= d + 1, "dual_enkf_init: need N >= d + 1 particles for an invertible covariance");
    const Matrix S_T = spd_inverse_with_jitter(lq.P_T.mat(), "dual_enkf_init");
    return DualEnsembleState::from_particles(
        sample_gaussian_columns(rng, Vector::Zero(d), SymMatrix::symmetrize(S_T), n), lq.horizon);
}

/// One reverse-time Euler step from t to t - dt:
///   Y^i <- Y^i - [A Y^i + 1/2 S C^T (C Y^i + C n)] dt - B xi^i,  xi^i ~ N(0, R^{-1} dt).
inline DualEnsembleState dual_enkf_backward_step(const DualEnsembleState& st, double dt, const LQProblem& lq,
                                                 RngStream& rng) {
    detail::require(dt > 0.0, "dual_enkf_backward_step: dt must be positive");
    detail::require(st.dim() == lq.state_dim, "dual_enkf_backward_step: dimension mismatch");
    const detail::LQAccess ops(lq);
    const Matrix& C = ops.C();
    const Matrix noise_factor = covariance_factor(SymMatrix::symmetrize(lq.R.mat().inverse()));

    const Matrix cy = C * (st.particles.colwise() + st.mean);
    const Matrix coupling = 0.5 * st.cov.mat() * (C.transpose() * cy);
    const Matrix xi = noise_factor * rng.normal_matrix(lq.control_dim, st.size()) * std::sqrt(dt);
    Matrix next = st.particles - (ops.drift(st.particles) + coupling) * dt - ops.B() * xi;
    return DualEnsembleState::from_particles(std::move(next), st.time - dt);
}

/// K = -(1/(N-1)) sum_i R^{-1} (B^T X^i) (X^i)^T with X^i = S^{-1} (Y^i - n).
inline Matrix extract_gain(const DualEnsembleState& st, const LQProblem& lq) {
    const detail::LQAccess ops(lq);
    const Matrix S_inv = spd_inverse_with_jitter(st.cov.mat(), "extract_gain");
    const Matrix X = S_inv * (st.particles.colwise() - st.mean);
    const Matrix BtX = ops.B().transpose() * X;
    const Matrix R_inv_BtX = lq.R.mat().llt().solve(BtX);
    return -(R_inv_BtX * X.transpose()) / static_cast<double>(st.size() - 1);
}

/// Minimiser of H(x, a) = 1/2 |c(x)|^2 + 1/2 a^T R a + x^T P f(x, a) with
/// P = S^{-1}, recovered from m + 1 Hamiltonian evaluations.
inline Vector hamiltonian_policy(const DualEnsembleState& st, const Vector& x, const LQProblem& lq) {
    detail::require(x.size() == lq.state_dim, "hamiltonian_policy: state has wrong dimension");
    const Matrix P = spd_inverse_with_jitter(st.cov.mat(), "hamiltonian_policy");
    const Eigen::Index m = lq.control_dim;
    const Matrix& R = lq.R.mat();
    const Vector cx = lq.cost(x);
    auto hamiltonian = [&](const Vector& a) {
        return 0.5 * cx.squaredNorm() + 0.5 * a.dot(R * a) + x.dot(P * lq.dynamics(x, a));
    };
    const double h0 = hamiltonian(Vector::Zero(m));
    Vector g(m);
    for (Eigen::Index j = 0; j < m; ++j) g(j) = hamiltonian(Vector::Unit(m, j)) - h0 - 0.5 * R(j, j);
    return -R.llt().solve(g);
}

struct GainPath {
    std::vector<double> times;
    std::vector<Matrix> gains;
};

struct DualRun {
    GainPath gains;
    RiccatiPath S;

    /// P^N_t = (S^N_t)^{-1} on the same grid.
    RiccatiPath P() const {
        RiccatiPath p;
        p.times = S.times;
        for (const auto& s : S.values) p.values.push_back(SymMatrix::symmetrize(spd_inverse_with_jitter(s.mat(), "DualRun::P")));
        return p;
    }
};

/// Single backward sweep from T to 0; paths are stored on the ascending grid.
inline DualRun run_dual_enkf(const LQProblem& lq, Eigen::Index n, double dt, RngStream& rng) {
    const Eigen::Index K = step_count(dt, lq.horizon);
    std::vector<DualEnsembleState> rev;
    rev.reserve(static_cast<std::size_t>(K + 1));
    DualEnsembleState st = dual_enkf_init(lq, n, rng);
    DualRun run;
    run.gains.times.resize(static_cast<std::size_t>(K + 1));
    run.gains.gains.resize(static_cast<std::size_t>(K + 1));
    run.S.times.resize(static_cast<std::size_t>(K + 1));
    run.S.values.resize(static_cast<std::size_t>(K + 1));
    for (Eigen::Index k = K;; --k) {
        const auto idx = static_cast<std::size_t>(k);
        run.S.times[idx] = dt * static_cast<double>(k);
        run.gains.times[idx] = run.S.times[idx];
        run.S.values[idx] = st.cov;
        run.gains.gains[idx] = extract_gain(st, lq);
        if (k == 0) break;
        st = dual_enkf_backward_step(st, dt, lq, rng);
    }
    return run;
}

/// (1/T) int ||P_t - Q_t||_F^2 / ||P_t||_F^2 dt by trapezoid on the shared grid.
inline double relative_mse(const RiccatiPath& reference, const RiccatiPath& approx) {
    detail::require(reference.values.size() == approx.values.size() && reference.values.size() >= 2,
                    "relative_mse: paths must share a grid with at least two points");
    const std::size_t K = reference.values.size();
    std::vector<double> e(K);
    for (std::size_t k = 0; k < K; ++k)
        e[k] = (reference.values[k].mat() - approx.values[k].mat()).squaredNorm() / reference.values[k].mat().squaredNorm();
    double integral = 0.0;
    for (std::size_t k = 1; k < K; ++k) integral += 0.5 * (e[k] + e[k - 1]) * (reference.times[k] - reference.times[k - 1]);
    return integral / (reference.times.back() - reference.times.front());
}

} // namespace cips
