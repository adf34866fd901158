#include "cips/fpf.hpp"
#include "cips/kalman.hpp"
#include "cips/linear_ensemble.hpp"
#include "cips/sir.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace cips;
using Catch::Approx;

namespace {

Matrix row(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return m;
}

GaussianBelief prior_of(const FilterModel& m) { return {m.linear->m0, m.linear->sigma0}; }

} // namespace

TEST_CASE("FPF with constant gain is the square-root EnKF up to the covariance normalisation", "[fpf]") {
    const auto model = make_static_param(2, 1.0, 0.7);
    RngStream rng(1);
    const Ensemble ens(rng.normal_matrix(2, 25), 0.0);
    Vector dz(2);
    dz << 0.05, -0.02;
    RngStream r1(2), r2(2);
    GainApproximator gain(ConstantGainMethod{});
    const Matrix a = fpf_step(ens, dz, 0.01, model, gain, r1).particles() - ens.particles();
    const Matrix b = linear_enkf_step(ens, dz, 0.01, model, LinearVariant::sqrt, r2).particles() - ens.particles();
    CHECK((a - b * (24.0 / 25.0)).norm() < 1e-12 * b.norm());
}

TEST_CASE("FPF: zero innovation leaves the particle at the mean in place", "[fpf]") {
    const auto model = make_static_param(1, 1.0, 1.0);
    const Ensemble ens(row({-1.0, 0.0, 1.0}), 0.0);
    RngStream rng(3);
    GainApproximator gain(ConstantGainMethod{});
    const Ensemble next = fpf_step(ens, Vector::Zero(1), 0.1, model, gain, rng);
    CHECK(next.particles()(0, 1) == 0.0);
    CHECK(next.particles()(0, 0) != -1.0);
    CHECK(next.time() == Approx(0.1));
}

TEST_CASE("FPF estimates", "[fpf]") {
    const Ensemble ens(row({-1.0, 0.0, 1.0}), 0.0);
    CHECK(fpf_estimate(ens, [](const Vector&) { return 1.0; }) == 1.0);
    CHECK(fpf_estimate(ens, [](const Vector& x) { return x(0) * x(0); }) == Approx(2.0 / 3.0));
}

TEST_CASE("FPF on the static benchmark reaches the posterior mean", "[fpf]") {
    const auto model = make_static_param(1, 1.0, 1.0);
    RngStream rng(4);
    const auto truth = simulate_truth_and_observations(model, 0.01, 1.0, rng);
    const Eigen::Index n = 10000;
    const auto tr = run_fpf(model, truth.obs, n, ConstantGainMethod{}, rng);
    const double exact = 0.5 * truth.obs.total()(0);
    CHECK(std::abs(tr.final.particles().row(0).mean() - exact) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(tr.times.size() == 101);
}

TEST_CASE("FPF run with no observations returns the prior ensemble", "[fpf]") {
    const auto model = make_linear2d_benchmark();
    RngStream a(5), b(5);
    const ObservationPath obs{0.0, 0.1, Matrix::Zero(1, 0)};
    const auto tr = run_fpf(model, obs, 50, ConstantGainMethod{}, a);
    CHECK(tr.final.particles() == model.sample_prior_columns(b, 50));
    CHECK(tr.moments.size() == 1);
}

TEST_CASE("FPF is deterministic given the seed", "[fpf]") {
    const auto model = make_linear2d_benchmark();
    RngStream t(6);
    const auto truth = simulate_truth_and_observations(model, 0.05, 1.0, t);
    RngStream a(7), b(7);
    const auto x = run_fpf(model, truth.obs, 100, ConstantGainMethod{}, a);
    const auto y = run_fpf(model, truth.obs, 100, ConstantGainMethod{}, b);
    CHECK(x.final.particles() == y.final.particles());
}

TEST_CASE("FPF with the coordinate Galerkin basis matches the constant gain", "[fpf]") {
    const auto model = make_linear2d_benchmark();
    RngStream t(8);
    const auto truth = simulate_truth_and_observations(model, 0.05, 1.0, t);
    RngStream a(9), b(9);
    const auto x = run_fpf(model, truth.obs, 200, ConstantGainMethod{}, a);
    const auto y = run_fpf(model, truth.obs, 200, GalerkinGainMethod{coordinate_basis(2)}, b);
    CHECK((x.final.particles() - y.final.particles()).norm() < 1e-9 * x.final.particles().norm());
}

TEST_CASE("FPF on the 2-D linear system tracks the Kalman-Bucy filter", "[fpf]") {
    const auto model = make_linear2d_benchmark();
    RngStream t(10);
    const auto truth = simulate_truth_and_observations(model, 0.01, 1.0, t);
    const auto kb = kalman_bucy_run(model, truth.obs, prior_of(model));
    const Eigen::Index n = 100000;
    RngStream rng(11);
    const auto tr = run_fpf(model, truth.obs, n, ConstantGainMethod{}, rng);
    const auto& ref = kb.beliefs.back();
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(std::abs(tr.moments.back().mean(i) - ref.mean(i)) < 3.0 * std::sqrt(ref.cov(i, i) / n));
}

TEST_CASE("FPF with diffusion-map gain keeps an uninformative bimodal posterior bimodal", "[fpf]") {
    const double sigma_w = 5.0;
    const auto rho = make_bimodal(0.2);
    const auto model = with_prior(make_static_param(1, 1.0, sigma_w),
                                  [rho](RngStream& r) -> Vector { return Vector::Constant(1, rho.sample(r)); });
    RngStream t(12);
    const auto truth = simulate_truth_and_observations(model, 0.05, 1.0, t);
    DiffusionMapGainMethod dm;
    dm.options.eps = 0.1;
    RngStream rng(13);
    const auto tr = run_fpf(model, truth.obs, 400, dm, rng);
    const double z = truth.obs.total()(0);
    const auto grid = oracle::linspace(-4, 4, 8001);
    const auto post = oracle::grid_posterior(
        grid, [&](double x) { return rho.pdf(x); },
        [&](double x) { return std::exp(-(z - x) * (z - x) / (2 * sigma_w * sigma_w)); });
    double neg_mass = 0, near_zero = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < 0) neg_mass += post[i] * (grid[1] - grid[0]);
        if (std::abs(grid[i]) < 0.25) near_zero += post[i] * (grid[1] - grid[0]);
    }
    const auto& x = tr.final.particles();
    const double neg_frac = (x.array() < 0).cast<double>().mean();
    const double zero_frac = (x.array().abs() < 0.25).cast<double>().mean();
    CHECK(neg_frac == Approx(neg_mass).margin(0.08));
    CHECK(neg_frac > 0.25);
    CHECK(neg_frac < 0.75);
    CHECK(zero_frac < near_zero + 0.05);
}

// ---------------------------------------------------------------------------

TEST_CASE("effective sample size", "[sir]") {
    CHECK(ess(WeightedEnsemble::uniform(Matrix::Zero(1, 8), 0.0)) == Approx(8.0));
    Vector w(3);
    w << 0.0, 1.0, 0.0;
    CHECK(ess(WeightedEnsemble(Matrix::Zero(1, 3), w, 0.0)) == Approx(1.0));
    Vector w2(2);
    w2 << 0.75, 0.25;
    CHECK(ess(WeightedEnsemble(Matrix::Zero(1, 2), w2, 0.0)) == Approx(1.6));
    Vector bad(2);
    bad << 0.7, 0.2;
    CHECK_THROWS_AS(WeightedEnsemble(Matrix::Zero(1, 2), bad, 0.0), ConfigError);
}

TEST_CASE("static importance-sampling estimator", "[sir]") {
    const auto f = [](const Vector& x) { return x(0); };
    CHECK(static_is_estimate(row({2.5}), Vector::Constant(1, -3.0), 1.0, f) == 2.5);
    CHECK(static_is_estimate(row({-1.0, 3.0}), Vector::Constant(1, 1.0), 0.3, f) == Approx(1.0));
    // Far-away observation: log-sum-exp keeps the weights finite.
    CHECK(static_is_estimate(row({0.0, 1.0}), Vector::Constant(1, 60.0), 0.1, f) == Approx(1.0));
    CHECK_THROWS_AS(static_is_estimate(row({0.0, 1.0}), Vector::Constant(1, INFINITY), 1.0, f), NumericError);
    CHECK_THROWS_AS(static_is_estimate(row({0.0}), Vector::Constant(1, 0.0), 0.0, f), ConfigError);
}

TEST_CASE("modified weights are unbiased", "[sir]") {
    RngStream rng(14);
    const int reps = 10000;
    std::vector<double> sums;
    for (int r = 0; r < reps; ++r) {
        const Vector x = rng.normal_vector(2);
        const Vector z = x + rng.normal_vector(2);
        sums.push_back(static_modified_weights(rng.normal_matrix(2, 20), z, 1.0, 1.0).sum());
    }
    CHECK(std::abs(oracle::mean(sums) - 1.0) < 3.0 * oracle::sample_sd(sums) / std::sqrt(reps));
}

TEST_CASE("modified estimator matches the unnormalised sum", "[sir]") {
    RngStream rng(15);
    const Matrix s = rng.normal_matrix(3, 50);
    const Vector z = rng.normal_vector(3);
    const auto f = [](const Vector& x) { return x.sum(); };
    const Vector w = static_modified_weights(s, z, 1.0, 1.0);
    double expected = 0;
    for (int i = 0; i < 50; ++i) expected += w(i) * s.col(i).sum();
    CHECK(static_is_modified(s, z, 1.0, 1.0, f) == Approx(expected).epsilon(1e-14));
    // Exact log-evidence: log N(z; 0, 2 I).
    CHECK(static_log_evidence(z, 1.0, 1.0) ==
          Approx(-1.5 * std::log(2.0) - z.squaredNorm() / 4.0).epsilon(1e-14));
}

TEST_CASE("bootstrap step with a blind sensor leaves the weights alone", "[sir]") {
    const auto model = make_linear_gaussian(Matrix::Constant(1, 1, -0.3), Matrix::Zero(1, 1), Matrix::Identity(1, 1),
                                            Vector::Zero(1), Matrix::Identity(1, 1));
    Vector w(3);
    w << 0.2, 0.3, 0.5;
    const WeightedEnsemble we(row({-1, 0, 1}), w, 0.0);
    RngStream rng(16);
    const auto next = bootstrap_pf_step(we, Vector::Constant(1, 0.3), 0.1, model, rng, 0.0);
    CHECK((next.weights() - w).norm() < 1e-15);
}

TEST_CASE("degenerate resampling copies the dominant particle", "[sir]") {
    const auto model = make_static_param(1, 1.0, 1.0);
    Vector w(2);
    w << 1.0, 0.0;
    const WeightedEnsemble we(row({4.0, -2.0}), w, 0.0);
    RngStream rng(17);
    const auto next = bootstrap_pf_step(we, Vector::Zero(1), 0.01, model, rng, 0.9);
    CHECK(next.particles()(0, 0) == 4.0);
    CHECK(next.particles()(0, 1) == 4.0);
    CHECK(next.weights()(0) == 0.5);
}

TEST_CASE("systematic resampling preserves the weighted mean in expectation", "[sir]") {
    RngStream rng(18);
    const Matrix x = rng.normal_matrix(1, 100);
    Vector w = (x.row(0).array() * 1.5).exp().transpose();
    w /= w.sum();
    const double target = x.row(0).dot(w);
    std::vector<double> means;
    for (int r = 0; r < 10000; ++r) {
        const auto idx = systematic_resample(w, rng);
        double m = 0;
        for (auto i : idx) m += x(0, i);
        means.push_back(m / 100.0);
    }
    CHECK(std::abs(oracle::mean(means) - target) < 3.0 * oracle::sample_sd(means) / 100.0);
}

TEST_CASE("bootstrap filter tracks the Kalman-Bucy filter in 1-D", "[sir]") {
    const auto model = make_linear_gaussian(Matrix::Constant(1, 1, -0.5), Matrix::Identity(1, 1),
                                            Matrix::Constant(1, 1, 0.5), Vector::Constant(1, 1.0), Matrix::Identity(1, 1));
    RngStream t(19);
    const auto truth = simulate_truth_and_observations(model, 0.01, 1.0, t);
    const auto kb = kalman_bucy_run(model, truth.obs, prior_of(model));
    RngStream rng(20);
    const Eigen::Index n = 10000;
    const auto tr = run_bootstrap_pf(model, truth.obs, n, rng);
    CHECK(std::abs(tr.moments.back().mean(0) - kb.beliefs.back().mean(0)) <
          3.0 * std::sqrt(kb.beliefs.back().cov(0, 0) / n) * 2.0);
}

TEST_CASE("importance weights collapse as the dimension grows", "[sir]") {
    std::vector<double> max_w;
    for (int d = 1; d <= 10; ++d) {
        RngStream rng(100 + d);
        double s = 0;
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            const Vector x = rng.normal_vector(d);
            const Vector z = x + rng.normal_vector(d);
            const Vector lw = -(rng.normal_matrix(d, 1000).colwise() - z).colwise().squaredNorm().transpose() / 2.0;
            const Vector w = (lw.array() - lw.maxCoeff()).exp();
            s += w.maxCoeff() / w.sum();
        }
        max_w.push_back(s / reps);
    }
    for (std::size_t i = 1; i < max_w.size(); ++i) CHECK(max_w[i] > max_w[i - 1]);
}

// ---------------------------------------------------------------------------

TEST_CASE("linear variants satisfy the consistency equation", "[linear]") {
    RngStream rng(21);
    for (int r = 0; r < 10; ++r) {
        const Matrix A = rng.normal_matrix(3, 3), H = rng.normal_matrix(2, 3), sb = rng.normal_matrix(3, 3);
        const Matrix g = rng.normal_matrix(3, 3);
        const Matrix S = g * g.transpose() + 0.1 * Matrix::Identity(3, 3);
        for (auto v : {LinearVariant::sqrt, LinearVariant::perturbed, LinearVariant::deterministic})
            CHECK(consistency_residual(v, A, H, sb, S) <= 1e-8 * std::max(1.0, S.norm() * S.norm()));
    }
}

TEST_CASE("square-root step on the static model is the scalar EnKF update", "[linear]") {
    const double sw = 0.5;
    const auto model = make_static_param(1, 1.0, sw);
    const Ensemble ens(row({-0.4, 0.1, 0.9, 1.3}), 0.0);
    const double dz = 0.07, dt = 0.02;
    RngStream rng(22);
    const auto next = linear_enkf_step(ens, Vector::Constant(1, dz), dt, model, LinearVariant::sqrt, rng);
    const auto mom = empirical_moments(ens);
    for (Eigen::Index i = 0; i < 4; ++i) {
        const double x = ens.particles()(0, i);
        const double expected = x + mom.cov(0, 0) / (sw * sw) * (dz - (x + mom.mean(0)) / 2.0 * dt);
        CHECK(next.particles()(0, i) == Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("blind sensor: variants reduce to uncontrolled propagation", "[linear]") {
    Matrix A(2, 2);
    A << -0.3, 1.0, -1.0, -0.2;
    const auto model = make_linear_gaussian(A, Matrix::Zero(1, 2), 0.4 * Matrix::Identity(2, 2), Vector::Zero(2),
                                            Matrix::Identity(2, 2));
    RngStream src(23);
    const Ensemble ens(src.normal_matrix(2, 500), 0.0);
    const double dt = 1e-3;
    RngStream a(24), b(24);
    const auto next = linear_enkf_step(ens, Vector::Zero(1), dt, model, LinearVariant::sqrt, a);
    const Matrix expected = ens.particles() + A * ens.particles() * dt + 0.4 * b.normal_matrix(2, 500) * std::sqrt(dt);
    CHECK((next.particles() - expected).norm() < 1e-12);

    RngStream c(25);
    const auto det = linear_enkf_step(ens, Vector::Zero(1), dt, model, LinearVariant::deterministic, c);
    const Matrix S0 = empirical_moments(ens).cov.mat();
    const Matrix lyap = S0 + (A * S0 + S0 * A.transpose() + 0.16 * Matrix::Identity(2, 2)) * dt;
    CHECK((empirical_moments(det).cov.mat() - lyap).norm() < 10 * dt * dt);
}

TEST_CASE("deterministic variant follows the Riccati equation", "[linear]") {
    const auto model = make_linear2d_benchmark();
    RngStream t(26);
    const auto truth = simulate_truth_and_observations(model, 0.005, 1.0, t);
    RngStream rng(27);
    const auto tr = run_linear_enkf(model, truth.obs, 400, LinearVariant::deterministic, rng);
    const auto kb = kalman_bucy_run(model, truth.obs, {tr.moments.front().mean, tr.moments.front().cov});
    const Matrix diff = tr.moments.back().cov.mat() - kb.beliefs.back().cov.mat();
    CHECK(diff.norm() < 0.02 * kb.beliefs.back().cov.mat().norm());
    CHECK((tr.moments.back().mean - kb.beliefs.back().mean).norm() < 0.02);
}

TEST_CASE("linear variants agree with each other", "[linear]") {
    const auto model = make_linear2d_benchmark();
    RngStream t(28);
    const auto truth = simulate_truth_and_observations(model, 0.01, 1.0, t);
    const auto kb = kalman_bucy_run(model, truth.obs, prior_of(model));
    const Eigen::Index n = 4000;
    std::vector<Moments> finals;
    for (auto v : {LinearVariant::sqrt, LinearVariant::perturbed, LinearVariant::deterministic}) {
        RngStream rng(29);
        finals.push_back(run_linear_enkf(model, truth.obs, n, v, rng).moments.back());
    }
    const Matrix& S = kb.beliefs.back().cov.mat();
    for (const auto& m : finals) {
        for (Eigen::Index i = 0; i < 2; ++i) {
            CHECK(std::abs(m.mean(i) - kb.beliefs.back().mean(i)) < 4.0 * std::sqrt(S(i, i) / n));
            CHECK(std::abs(m.cov(i, i) - S(i, i)) < 4.0 * S(i, i) * std::sqrt(2.0 / n));
        }
    }
}

TEST_CASE("deterministic variant fails on a collapsed ensemble", "[linear]") {
    const auto model = make_linear2d_benchmark();
    const Ensemble ens(Matrix::Constant(2, 5, 0.3), 0.0);
    RngStream rng(30);
    CHECK_THROWS_AS(linear_enkf_step(ens, Vector::Zero(1), 0.01, model, LinearVariant::deterministic, rng),
                    NumericError);
    auto nonlinear = with_prior(model, [](RngStream& r) -> Vector { return r.normal_vector(2); });
    CHECK_THROWS_AS(linear_enkf_step(Ensemble(Matrix::Identity(2, 3), 0.0), Vector::Zero(1), 0.01, nonlinear,
                                     LinearVariant::sqrt, rng),
                    ConfigError);
    CHECK(parse_linear_variant("det") == LinearVariant::deterministic);
    CHECK_THROWS_AS(parse_linear_variant("foo"), ConfigError);
}
