#pragma once

// Exact finite-dimensional references: Kalman-Bucy filter and the
// control / dual Riccati equations.

#include "cips/core/numerics.hpp"
#include "cips/models.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cips {

struct GaussianBelief {
    Vector mean;
    SymMatrix cov;
};

struct BeliefPath {
    std::vector<double> times;
    std::vector<GaussianBelief> beliefs;
};

/// Ricc(S) = A S + S A^T + Sigma_B - S H^T H S.
inline Matrix filter_riccati_rhs(const Matrix& A, const Matrix& H, const Matrix& sigma_b_cov, const Matrix& S) {
    return A * S + S * A.transpose() + sigma_b_cov - S * H.transpose() * H * S;
}

/// Euler discretisation of the Kalman-Bucy filter on the observation grid.
/// Non-unit observation noise is handled by rescaling H and dZ.
inline BeliefPath kalman_bucy_run(const FilterModel& model, const ObservationPath& obs, const GaussianBelief& belief0) {
    if (!model.linear) throw ConfigError("kalman_bucy_run: model has no linear descriptor");
    const auto& lin = *model.linear;
    detail::require(belief0.mean.size() == model.state_dim && belief0.cov.dim() == model.state_dim,
                    "kalman_bucy_run: initial belief has wrong dimension");
    detail::require(obs.increments.rows() == model.obs_dim, "kalman_bucy_run: observation dimension mismatch");
    const Matrix H = lin.H / model.obs_noise;
    const Matrix sb = lin.process_cov().mat();
    const double dt = obs.dt;

    BeliefPath path;
    path.times.reserve(obs.steps() + 1);
    path.beliefs.reserve(obs.steps() + 1);
    Vector m = belief0.mean;
    Matrix S = belief0.cov.mat();
    path.times.push_back(obs.t0);
    path.beliefs.push_back(belief0);
    for (Eigen::Index k = 0; k < obs.steps(); ++k) {
        const Vector dz = obs.increments.col(k) / model.obs_noise;
        const Matrix K = S * H.transpose();
        const Vector m_next = m + lin.A * m * dt + K * (dz - H * m * dt);
        Matrix S_next = S + filter_riccati_rhs(lin.A, H, sb, S) * dt;
        S_next = 0.5 * (S_next + S_next.transpose());
        m = m_next;
        S = S_next;
        SymMatrix Ss = SymMatrix::symmetrize(S);
        if (!S.allFinite() || !Ss.is_positive_definite())
            throw NumericError("kalman_bucy_run: covariance lost positive definiteness at step " +
                               std::to_string(k + 1));
        path.times.push_back(obs.time(k + 1));
        path.beliefs.push_back({m, std::move(Ss)});
    }
    return path;
}

/// Matrix-valued solution on the grid t_k = k dt, k = 0..K (ascending).
struct RiccatiPath {
    std::vector<double> times;
    std::vector<SymMatrix> values;

    const SymMatrix& at_start() const { return values.front(); }
    const SymMatrix& at_end() const { return values.back(); }
};

namespace detail {

template <class Rhs>
Matrix rk4_step(const Rhs& rhs, const Matrix& P, double h) {
    const Matrix k1 = rhs(P);
    const Matrix k2 = rhs(P + 0.5 * h * k1);
    const Matrix k3 = rhs(P + 0.5 * h * k2);
    const Matrix k4 = rhs(P + h * k3);
    Matrix next = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return 0.5 * (next + next.transpose());
}

/// Integrates dP/dtau = rhs(P) in reverse time tau = T - t from the
/// terminal value and stores the path on the ascending grid.
template <class Rhs>
RiccatiPath integrate_backward(const Rhs& rhs, const Matrix& terminal, double horizon, double dt, const char* what) {
    const Eigen::Index K = step_count(dt, horizon);
    std::vector<Matrix> rev;
    rev.reserve(K + 1);
    rev.push_back(0.5 * (terminal + terminal.transpose()));
    for (Eigen::Index k = 0; k < K; ++k) {
        rev.push_back(rk4_step(rhs, rev.back(), dt));
        if (!rev.back().allFinite())
            throw NumericError(std::string(what) + ": non-finite solution at reverse step " + std::to_string(k + 1));
    }
    RiccatiPath path;
    path.times.resize(K + 1);
    path.values.reserve(K + 1);
    for (Eigen::Index k = 0; k <= K; ++k) {
        path.times[k] = dt * static_cast<double>(k);
        path.values.push_back(SymMatrix::symmetrize(rev[K - k]));
    }
    return path;
}

} // namespace detail

/// -dP/dt = A^T P + P A + C^T C - P B R^{-1} B^T P evaluated at P.
inline Matrix control_riccati_rhs(const LQMatrices& mats, const Matrix& R_inv, const Matrix& P) {
    return mats.A.transpose() * P + P * mats.A + mats.C.transpose() * mats.C -
           P * mats.B * R_inv * mats.B.transpose() * P;
}

/// RK4 integration of the control DRE backward from P_T.
inline RiccatiPath solve_dre_backward(const LQProblem& lq, double dt) {
    const LQMatrices mats = lq_matrices(lq);
    const Matrix R_inv = lq.R.mat().inverse();
    auto rhs = [&](const Matrix& P) { return control_riccati_rhs(mats, R_inv, P); };
    return detail::integrate_backward(rhs, lq.P_T.mat(), lq.horizon, dt, "solve_dre_backward");
}

/// dS/dt = A S + S A^T - B R^{-1} B^T + S C^T C S, integrated backward from
/// S_T = P_T^{-1}. Its solution is the inverse of the control DRE solution.
inline RiccatiPath solve_dual_dre(const LQProblem& lq, double dt) {
    const LQMatrices mats = lq_matrices(lq);
    const Matrix R_inv = lq.R.mat().inverse();
    const Matrix BRB = mats.B * R_inv * mats.B.transpose();
    const Matrix CtC = mats.C.transpose() * mats.C;
    auto rhs = [&](const Matrix& S) -> Matrix {
        return -(mats.A * S + S * mats.A.transpose() - BRB + S * CtC * S);
    };
    const Matrix S_T = spd_inverse_with_jitter(lq.P_T.mat(), "solve_dual_dre");
    return detail::integrate_backward(rhs, S_T, lq.horizon, dt, "solve_dual_dre");
}

struct AreOptions {
    double tol = 1e-10;
    double dt = 0.005;
    double max_horizon = 1e3;
};

/// Stationary solution of the control DRE obtained by integrating backward
/// from P_T until ||dP/dt||_F < tol * max(||P||_F, ||P_T||_F).
inline SymMatrix solve_are(const LQProblem& lq, const AreOptions& opt = {}) {
    const LQMatrices mats = lq_matrices(lq);
    const Matrix R_inv = lq.R.mat().inverse();
    auto rhs = [&](const Matrix& P) { return control_riccati_rhs(mats, R_inv, P); };
    const double scale_T = lq.P_T.mat().norm();
    Matrix P = lq.P_T.mat();
    const auto max_steps = static_cast<long>(std::ceil(opt.max_horizon / opt.dt));
    for (long k = 0; k < max_steps; ++k) {
        const Matrix dP = rhs(P);
        if (dP.norm() < opt.tol * std::max(P.norm(), scale_T)) return SymMatrix::symmetrize(P);
        P = detail::rk4_step(rhs, P, opt.dt);
        if (!P.allFinite()) throw NumericError("solve_are: Riccati integration diverged");
    }
    throw NumericError("solve_are: no convergence within the maximum horizon (check stabilizability)");
}

/// Frobenius norm of the ARE residual at P.
inline double are_residual(const LQProblem& lq, const SymMatrix& P) {
    const LQMatrices mats = lq_matrices(lq);
    return control_riccati_rhs(mats, lq.R.mat().inverse(), P.mat()).norm();
}

/// Optimal feedback gain K = -R^{-1} B^T P.
inline Matrix lqr_gain(const LQProblem& lq, const SymMatrix& P) {
    const LQMatrices mats = lq_matrices(lq);
    return -lq.R.mat().llt().solve(mats.B.transpose() * P.mat());
}

/// Largest real part of the eigenvalues of A + B K.
inline double closed_loop_abscissa(const LQProblem& lq, const Matrix& K) {
    const LQMatrices mats = lq_matrices(lq);
    Eigen::EigenSolver<Matrix> es(mats.A + mats.B * K, false);
    return es.eigenvalues().real().maxCoeff();
}

} // namespace cips
