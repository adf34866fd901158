#pragma once

// Particle approximations of the gain function K = grad(phi), where phi
// solves the probability-weighted Poisson equation
//     -(1/rho) div(rho grad phi) = h - hbar,
// together with exact one-dimensional references used to score them.

#include "cips/core/numerics.hpp"
#include "cips/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace cips {

/// Per-particle d x m gain matrices, or one shared matrix.
class GainField {
public:
    static GainField constant(Matrix k, Eigen::Index n) {
        GainField g;
        g.constant_ = true;
        g.shared_ = std::move(k);
        g.n_ = n;
        return g;
    }

    static GainField varying(std::vector<Matrix> k) {
        GainField g;
        g.constant_ = false;
        g.n_ = static_cast<Eigen::Index>(k.size());
        g.per_particle_ = std::move(k);
        return g;
    }

    bool is_constant() const { return constant_; }
    Eigen::Index size() const { return n_; }
    const Matrix& at(Eigen::Index i) const { return constant_ ? shared_ : per_particle_[static_cast<std::size_t>(i)]; }

    bool all_finite() const {
        if (constant_) return shared_.allFinite();
        return std::all_of(per_particle_.begin(), per_particle_.end(), [](const Matrix& m) { return m.allFinite(); });
    }

    /// First column of every gain as an N-vector (scalar-observation view).
    Vector first_column_entry(Eigen::Index row) const {
        Vector v(n_);
        for (Eigen::Index i = 0; i < n_; ++i) v(i) = at(i)(row, 0);
        return v;
    }

private:
    bool constant_ = true;
    Eigen::Index n_ = 0;
    Matrix shared_;
    std::vector<Matrix> per_particle_;
};

namespace detail {

inline void check_gain_inputs(const Matrix& x, const Matrix& h, const char* what) {
    require(x.cols() >= 2, std::string(what) + ": need at least 2 particles");
    require(h.cols() == x.cols(), std::string(what) + ": h values must have one column per particle");
    require(h.rows() >= 1, std::string(what) + ": observation dimension must be >= 1");
}

/// h values centred by their particle average, as an N x m matrix.
inline Matrix centred_h(const Matrix& h) {
    Vector hbar = Vector::Zero(h.rows());
    for (Eigen::Index i = 0; i < h.cols(); ++i) hbar += h.col(i);
    hbar /= static_cast<double>(h.cols());
    return (h.colwise() - hbar).transpose();
}

} // namespace detail

/// K = (1/N) sum_i X^i (h(X^i) - h^(N))^T, a single d x m matrix.
inline GainField constant_gain(const Matrix& particles, const Matrix& h_values) {
    detail::check_gain_inputs(particles, h_values, "constant_gain");
    const Matrix hc = detail::centred_h(h_values);
    Matrix k = particles * hc / static_cast<double>(particles.cols());
    return GainField::constant(std::move(k), particles.cols());
}

/// Scalar basis function with its gradient.
struct BasisFunction {
    std::string name;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
};

struct BasisSet {
    std::vector<BasisFunction> functions;

    Eigen::Index size() const { return static_cast<Eigen::Index>(functions.size()); }

    /// Largest relative mismatch between analytic gradients and central
    /// differences at `points` random states.
    double gradient_check(Eigen::Index d, RngStream& rng, int points = 5) const {
        double worst = 0.0;
        const double h = 1e-5;
        for (int p = 0; p < points; ++p) {
            const Vector x = rng.normal_vector(d);
            for (const auto& f : functions) {
                const Vector g = f.gradient(x);
                for (Eigen::Index j = 0; j < d; ++j) {
                    Vector xp = x, xm = x;
                    xp(j) += h;
                    xm(j) -= h;
                    const double fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
                    worst = std::max(worst, std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))));
                }
            }
        }
        return worst;
    }
};

/// The coordinate functions x_1, ..., x_d.
inline BasisSet coordinate_basis(Eigen::Index d) {
    BasisSet b;
    for (Eigen::Index k = 0; k < d; ++k) {
        b.functions.push_back({"x" + std::to_string(k + 1), [k](const Vector& x) { return x(k); },
                               [k, d](const Vector&) -> Vector { return Vector::Unit(d, k); }});
    }
    return b;
}

/// Monomials x_c, x_c^2, ..., x_c^degree in one coordinate c of R^d.
inline BasisSet monomial_basis(Eigen::Index d, int degree, Eigen::Index coord = 0) {
    detail::require(degree >= 1, "monomial_basis: degree must be >= 1");
    BasisSet b;
    for (int p = 1; p <= degree; ++p) {
        b.functions.push_back({"x^" + std::to_string(p), [p, coord](const Vector& x) { return std::pow(x(coord), p); },
                               [p, coord, d](const Vector& x) -> Vector {
                                   Vector g = Vector::Zero(d);
                                   g(coord) = p * std::pow(x(coord), p - 1);
                                   return g;
                               }});
    }
    return b;
}

/// Gaussian bumps exp(-(x_c - centre)^2 / (2 width^2)) plus the linear
/// function x_c.
inline BasisSet gaussian_bump_basis(Eigen::Index d, const std::vector<double>& centres, double width,
                                    Eigen::Index coord = 0) {
    detail::require(width > 0.0, "gaussian_bump_basis: width must be positive");
    BasisSet b = monomial_basis(d, 1, coord);
    for (double c : centres) {
        b.functions.push_back(
            {"bump(" + std::to_string(c) + ")",
             [c, width, coord](const Vector& x) { return std::exp(-(x(coord) - c) * (x(coord) - c) / (2 * width * width)); },
             [c, width, coord, d](const Vector& x) -> Vector {
                 Vector g = Vector::Zero(d);
                 const double u = x(coord) - c;
                 g(coord) = -u / (width * width) * std::exp(-u * u / (2 * width * width));
                 return g;
             }});
    }
    return b;
}

/// Linear function plus sin/cos harmonics of x_c up to `harmonics`.
inline BasisSet fourier_basis(Eigen::Index d, int harmonics, double period, Eigen::Index coord = 0) {
    detail::require(harmonics >= 1 && period > 0.0, "fourier_basis: need harmonics >= 1 and positive period");
    BasisSet b = monomial_basis(d, 1, coord);
    for (int k = 1; k <= harmonics; ++k) {
        const double w = 2.0 * std::numbers::pi * k / period;
        b.functions.push_back({"sin" + std::to_string(k), [w, coord](const Vector& x) { return std::sin(w * x(coord)); },
                               [w, coord, d](const Vector& x) -> Vector {
                                   Vector g = Vector::Zero(d);
                                   g(coord) = w * std::cos(w * x(coord));
                                   return g;
                               }});
        b.functions.push_back({"cos" + std::to_string(k), [w, coord](const Vector& x) { return std::cos(w * x(coord)); },
                               [w, coord, d](const Vector& x) -> Vector {
                                   Vector g = Vector::Zero(d);
                                   g(coord) = -w * std::sin(w * x(coord));
                                   return g;
                               }});
    }
    return b;
}

namespace detail {

struct BasisEvaluation {
    Matrix psi;                 // N x M values
    std::vector<Matrix> grads;  // per particle: d x M gradients
};

inline BasisEvaluation evaluate_basis(const Matrix& x, const BasisSet& basis) {
    const Eigen::Index N = x.cols(), M = basis.size(), d = x.rows();
    BasisEvaluation ev{Matrix(N, M), std::vector<Matrix>(static_cast<std::size_t>(N), Matrix(d, M))};
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector xi = x.col(i);
        for (Eigen::Index l = 0; l < M; ++l) {
            const auto& f = basis.functions[static_cast<std::size_t>(l)];
            ev.psi(i, l) = f.value(xi);
            ev.grads[static_cast<std::size_t>(i)].col(l) = f.gradient(xi);
        }
    }
    return ev;
}

inline GainField assemble_basis_gain(const BasisEvaluation& ev, const Matrix& kappa) {
    std::vector<Matrix> k;
    k.reserve(ev.grads.size());
    for (const auto& g : ev.grads) k.push_back(g * kappa);
    return GainField::varying(std::move(k));
}

} // namespace detail

/// Coefficients kappa (M x m) of the Galerkin approximation on
/// span{psi_1..psi_M}: A kappa = b with
/// A_kl = (1/N) sum grad psi_l . grad psi_k and b_k = (1/N) sum (h - h^(N)) psi_k.
///
/// A ridge 1e-8 * trace(A) / M is added only when A is numerically singular.
inline Matrix galerkin_coefficients(const Matrix& particles, const Matrix& h_values, const BasisSet& basis) {
    detail::check_gain_inputs(particles, h_values, "galerkin_gain");
    detail::require(basis.size() >= 1, "galerkin_gain: basis must contain at least one function");
    const Eigen::Index N = particles.cols(), M = basis.size();
    const auto ev = detail::evaluate_basis(particles, basis);
    const Matrix hc = detail::centred_h(h_values);

    Matrix A = Matrix::Zero(M, M);
    for (const auto& g : ev.grads) A += g.transpose() * g;
    A /= static_cast<double>(N);
    const Matrix b = ev.psi.transpose() * hc / static_cast<double>(N);

    Eigen::LLT<Matrix> llt(A);
    Matrix kappa;
    if (llt.info() == Eigen::Success && llt.rcond() > 1e-13) {
        kappa = llt.solve(b);
    } else {
        const double tr = A.trace();
        if (!(tr > 0.0)) throw NumericError("galerkin_gain: basis gradients vanish on every particle");
        Matrix reg = A;
        reg.diagonal().array() += 1e-8 * tr / static_cast<double>(M);
        Eigen::LDLT<Matrix> ldlt(reg);
        if (ldlt.info() != Eigen::Success) throw NumericError("galerkin_gain: Galerkin matrix is singular");
        kappa = ldlt.solve(b);
    }
    if (!kappa.allFinite()) throw NumericError("galerkin_gain: non-finite coefficients");
    return kappa;
}

/// K^i = sum_l kappa_l grad psi_l(X^i) with the Galerkin coefficients.
inline GainField galerkin_gain(const Matrix& particles, const Matrix& h_values, const BasisSet& basis) {
    const Matrix kappa = galerkin_coefficients(particles, h_values, basis);
    return detail::assemble_basis_gain(detail::evaluate_basis(particles, basis), kappa);
}

/// Minimiser theta (M x m) of the empirical variational objective
///     J(theta) = (1/N) sum_i 1/2 |grad f_theta(X^i)|^2 - f_theta(X^i)(h(X^i) - h^(N))
/// over f_theta = sum_l theta_l psi_l. The quadratic is minimised through a
/// QR factorisation of the stacked gradient matrix rather than by forming
/// the Gram matrix.
inline Matrix variational_coefficients(const Matrix& particles, const Matrix& h_values, const BasisSet& basis) {
    detail::check_gain_inputs(particles, h_values, "variational_gain_linear");
    detail::require(basis.size() >= 1, "variational_gain_linear: basis must contain at least one function");
    const Eigen::Index N = particles.cols(), M = basis.size(), d = particles.rows();
    const auto ev = detail::evaluate_basis(particles, basis);
    const Matrix hc = detail::centred_h(h_values);

    // J(theta) = 1/2 |G theta|^2 - theta^T b with G the (N d) x M stack of
    // gradients scaled by 1/sqrt(N).
    Matrix G(N * d, M);
    const double s = 1.0 / std::sqrt(static_cast<double>(N));
    for (Eigen::Index i = 0; i < N; ++i) G.block(i * d, 0, d, M) = s * ev.grads[static_cast<std::size_t>(i)];
    const Matrix b = ev.psi.transpose() * hc / static_cast<double>(N);

    Eigen::ColPivHouseholderQR<Matrix> qr(G);
    if (qr.rank() < M) return galerkin_coefficients(particles, h_values, basis);
    // G^T G theta = b  <=>  R^T R P^T theta = P^T b with G P = Q R.
    const Matrix R = qr.matrixR().topLeftCorner(M, M).template triangularView<Eigen::Upper>();
    const Matrix pb = qr.colsPermutation().transpose() * b;
    const Matrix y = R.transpose().triangularView<Eigen::Lower>().solve(pb);
    Matrix theta = qr.colsPermutation() * Matrix(R.triangularView<Eigen::Upper>().solve(y));
    if (!theta.allFinite()) throw NumericError("variational_gain_linear: non-finite coefficients");
    return theta;
}

inline GainField variational_gain_linear(const Matrix& particles, const Matrix& h_values, const BasisSet& basis) {
    const Matrix theta = variational_coefficients(particles, h_values, basis);
    return detail::assemble_basis_gain(detail::evaluate_basis(particles, basis), theta);
}

/// Empirical variational objective J^(N) of the basis expansion with
/// coefficients theta (M x 1), scalar observation.
inline double empirical_variational_objective(const Matrix& particles, const Vector& h_values, const BasisSet& basis,
                                              const Vector& theta) {
    const auto ev = detail::evaluate_basis(particles, basis);
    const double hbar = h_values.mean();
    double j = 0.0;
    for (Eigen::Index i = 0; i < particles.cols(); ++i) {
        const Vector g = ev.grads[static_cast<std::size_t>(i)] * theta;
        j += 0.5 * g.squaredNorm() - ev.psi.row(i).dot(theta) * (h_values(i) - hbar);
    }
    return j / static_cast<double>(particles.cols());
}

/// Kernel matrices of the diffusion-map approximation.
struct DiffusionKernel {
    Matrix g;  // exp(-|Xi - Xj|^2 / (4 eps))
    Matrix k;  // symmetric normalisation
    Matrix T;  // row-stochastic Markov matrix
    Vector pi; // stationary weights
};

/// Output state of the diffusion-map gain: kernel, solution Phi (N x m)
/// and convergence record.
struct DiffusionMapState {
    double eps = 0.0;
    DiffusionKernel kernel;
    Matrix phi;
    Vector h_hat;
    int sweeps = 0;
    bool converged = false;
};

struct DiffusionMapOptions {
    double eps = 0.1;
    /// Maximum number of fixed-point sweeps (L).
    int max_sweeps = 10000;
    /// Stop when ||Phi_new - Phi||_inf < tol * max(1, ||Phi||_inf). With
    /// tol <= 0 exactly max_sweeps sweeps are performed.
    double tol = 1e-9;
};

/// Median pairwise squared distance / (4 log N).
inline double auto_bandwidth(const Matrix& particles) {
    const Eigen::Index N = particles.cols();
    detail::require(N >= 2, "auto_bandwidth: need at least 2 particles");
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(N * (N - 1) / 2));
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j) d2.push_back((particles.col(i) - particles.col(j)).squaredNorm());
    auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
    std::nth_element(d2.begin(), mid, d2.end());
    const double med = *mid;
    const double eps = med / (4.0 * std::log(static_cast<double>(std::max<Eigen::Index>(N, 3))));
    return eps > 0.0 ? eps : 1.0;
}

inline DiffusionKernel diffusion_kernel(const Matrix& x, double eps) {
    detail::require(eps > 0.0 && std::isfinite(eps), "diffusion_map_gain: bandwidth eps must be positive");
    const Eigen::Index N = x.cols();
    DiffusionKernel ker;
    const Vector sq = x.colwise().squaredNorm().transpose();
    Matrix d2 = -2.0 * (x.transpose() * x);
    d2.colwise() += sq;
    d2.rowwise() += sq.transpose();
    ker.g.resize(N, N);
    for (Eigen::Index j = 0; j < N; ++j) {
        for (Eigen::Index i = 0; i < N; ++i) {
            const double dij = i == j ? 0.0 : std::max(0.0, i < j ? d2(i, j) : d2(j, i));
            ker.g(i, j) = std::exp(-dij / (4.0 * eps));
        }
    }
    const Vector rs = ker.g.rowwise().sum();
    for (Eigen::Index i = 0; i < N; ++i) {
        if (!(rs(i) - 1.0 > 0.0)) {
            throw NumericError("diffusion_map_gain: kernel row " + std::to_string(i) +
                               " has no off-diagonal mass (bandwidth too small); try eps = " +
                               std::to_string(auto_bandwidth(x)));
        }
    }
    const Vector inv_sqrt = rs.cwiseSqrt().cwiseInverse();
    ker.k = inv_sqrt.asDiagonal() * ker.g * inv_sqrt.asDiagonal();
    const Vector dsum = ker.k.rowwise().sum();
    ker.T = dsum.cwiseInverse().asDiagonal() * ker.k;
    ker.pi = dsum / dsum.sum();
    return ker;
}

/// Diffusion-map gain approximation. Phi is warm-started from phi_prev
/// when its shape matches (N x m), otherwise from zero.
inline std::pair<GainField, DiffusionMapState> diffusion_map_gain(const Matrix& particles, const Matrix& h_values,
                                                                  const DiffusionMapOptions& opt,
                                                                  const Matrix& phi_prev = Matrix()) {
    detail::check_gain_inputs(particles, h_values, "diffusion_map_gain");
    detail::require(opt.eps > 0.0, "diffusion_map_gain: bandwidth eps must be positive");
    detail::require(opt.max_sweeps >= 1, "diffusion_map_gain: need at least one sweep");
    const Eigen::Index N = particles.cols(), m = h_values.rows(), d = particles.rows();
    const double eps = opt.eps;

    DiffusionMapState st;
    st.eps = eps;
    st.kernel = diffusion_kernel(particles, eps);
    const Matrix& T = st.kernel.T;
    const Matrix hN = h_values.transpose(); // N x m
    st.h_hat = hN.transpose() * st.kernel.pi;
    const Matrix forcing = eps * (hN.rowwise() - st.h_hat.transpose());

    Matrix phi = (phi_prev.rows() == N && phi_prev.cols() == m) ? phi_prev : Matrix::Zero(N, m);
    for (int l = 0; l < opt.max_sweeps; ++l) {
        Matrix next = T * phi + forcing;
        const double change = (next - phi).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
        phi = std::move(next);
        st.sweeps = l + 1;
        if (opt.tol > 0.0 && change < opt.tol * scale) {
            st.converged = true;
            break;
        }
    }
    if (!phi.allFinite()) throw NumericError("diffusion_map_gain: fixed-point iteration diverged");

    // K^i = sum_j s_ij X^j, s_ij = T_ij (r_j - (T r)_i) / (2 eps).
    const Matrix r = phi + eps * hN;
    const Matrix Tr = T * r;                                 // N x m
    const Matrix XT = particles * T.transpose();             // d x N, column i = sum_j T_ij X^j
    std::vector<Matrix> gains(static_cast<std::size_t>(N), Matrix(d, m));
    for (Eigen::Index c = 0; c < m; ++c) {
        const Matrix XrT = (particles * r.col(c).asDiagonal()) * T.transpose(); // sum_j T_ij r_j X^j
        for (Eigen::Index i = 0; i < N; ++i)
            gains[static_cast<std::size_t>(i)].col(c) = (XrT.col(i) - Tr(i, c) * XT.col(i)) / (2.0 * eps);
    }
    st.phi = std::move(phi);
    GainField field = GainField::varying(std::move(gains));
    if (!field.all_finite()) throw NumericError("diffusion_map_gain: non-finite gain");
    return {std::move(field), std::move(st)};
}

// ---------------------------------------------------------------------------
// Exact one-dimensional references.

struct QuadratureGrid {
    std::vector<double> x;
    double dx = 0.0;
};

inline QuadratureGrid make_grid(const Density1D& rho, std::size_t n = 200001) {
    const auto [lo, hi] = rho.support(8.0);
    QuadratureGrid g;
    g.dx = (hi - lo) / static_cast<double>(n - 1);
    g.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.x[i] = lo + g.dx * static_cast<double>(i);
    return g;
}

/// hbar = int h rho on the grid (trapezoid, normalised by the discrete mass).
inline double grid_mean(const Density1D& rho, const std::function<double(double)>& h, const QuadratureGrid& g) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double w = (i == 0 || i + 1 == g.x.size()) ? 0.5 : 1.0;
        const double p = rho.pdf(g.x[i]);
        num += w * h(g.x[i]) * p;
        den += w * p;
    }
    return num / den;
}

/// Exact gain K(x) = (1/rho(x)) int_{-inf}^x (hbar - h(y)) rho(y) dy, the
/// decaying solution of -(rho phi')' = (h - hbar) rho. Points left of the
/// density mean integrate from the left tail, the others from the right
/// tail, each by trapezoid on a fine uniform grid.
inline std::vector<double> exact_gain_1d(const Density1D& rho, const std::function<double(double)>& h,
                                         const std::vector<double>& x_points, std::size_t grid_points = 200001) {
    const QuadratureGrid g = make_grid(rho, grid_points);
    const double hbar = grid_mean(rho, h, g);
    const std::size_t n = g.x.size();
    std::vector<double> f(n), left(n, 0.0), right(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) f[i] = (hbar - h(g.x[i])) * rho.pdf(g.x[i]);
    for (std::size_t i = 1; i < n; ++i) left[i] = left[i - 1] + 0.5 * g.dx * (f[i] + f[i - 1]);
    for (std::size_t i = n - 1; i-- > 0;) right[i] = right[i + 1] + 0.5 * g.dx * (f[i] + f[i + 1]);

    const double centre = rho.mean();
    const double lo = g.x.front(), hi = g.x.back();
    std::vector<double> out;
    out.reserve(x_points.size());
    for (double x : x_points) {
        const double p = rho.pdf(x);
        if (!(p >= 1e-300)) throw NumericError("exact_gain_1d: density below 1e-300 at query point");
        const double fx = (hbar - h(x)) * p;
        double integral;
        if (x <= lo) {
            integral = 0.0;
        } else if (x >= hi) {
            integral = 0.0;
        } else {
            const auto k = static_cast<std::size_t>(std::floor((x - lo) / g.dx));
            const std::size_t k0 = std::min(k, n - 2);
            if (x <= centre) {
                integral = left[k0] + 0.5 * (x - g.x[k0]) * (f[k0] + fx);
            } else {
                integral = -(right[k0 + 1] + 0.5 * (g.x[k0 + 1] - x) * (f[k0 + 1] + fx));
            }
        }
        out.push_back(integral / p);
    }
    return out;
}

/// Population variational objective J(f) = int 1/2 f'^2 rho - f (h - hbar) rho
/// by trapezoid quadrature.
inline double variational_objective_1d(const Density1D& rho, const std::function<double(double)>& h,
                                       const std::function<double(double)>& f,
                                       const std::function<double(double)>& fprime, std::size_t grid_points = 20001) {
    const QuadratureGrid g = make_grid(rho, grid_points);
    const double hbar = grid_mean(rho, h, g);
    double j = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double w = (i == 0 || i + 1 == g.x.size()) ? 0.5 : 1.0;
        const double x = g.x[i];
        const double fp = fprime(x);
        j += w * (0.5 * fp * fp - f(x) * (h(x) - hbar)) * rho.pdf(x);
    }
    return j * g.dx;
}

/// Weighted L2(rho) squared distance between two functions of x.
inline double l2_rho_squared_1d(const Density1D& rho, const std::function<double(double)>& a,
                                const std::function<double(double)>& b, std::size_t grid_points = 20001) {
    const QuadratureGrid g = make_grid(rho, grid_points);
    double s = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double w = (i == 0 || i + 1 == g.x.size()) ? 0.5 : 1.0;
        const double diff = a(g.x[i]) - b(g.x[i]);
        s += w * diff * diff * rho.pdf(g.x[i]);
    }
    return s * g.dx;
}

// ---------------------------------------------------------------------------
// Pluggable gain approximation used by the particle filter.

struct ConstantGainMethod {};
struct GalerkinGainMethod {
    BasisSet basis;
};
struct DiffusionMapGainMethod {
    DiffusionMapOptions options;
    /// Re-pick eps with `auto_bandwidth` at every call.
    bool auto_eps = false;
};

using GainMethod = std::variant<ConstantGainMethod, GalerkinGainMethod, DiffusionMapGainMethod>;

/// Stateful wrapper around a gain method; carries the diffusion-map solution
/// from one call to the next as its warm start.
class GainApproximator {
public:
    explicit GainApproximator(GainMethod method = ConstantGainMethod{}) : method_(std::move(method)) {}

    GainField operator()(const Matrix& particles, const Matrix& h_values) {
        return std::visit(
            [&](auto& m) -> GainField {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, ConstantGainMethod>) {
                    return constant_gain(particles, h_values);
                } else if constexpr (std::is_same_v<M, GalerkinGainMethod>) {
                    return galerkin_gain(particles, h_values, m.basis);
                } else {
                    DiffusionMapOptions opt = m.options;
                    if (m.auto_eps) opt.eps = auto_bandwidth(particles);
                    auto [field, st] = diffusion_map_gain(particles, h_values, opt, phi_prev_);
                    phi_prev_ = std::move(st.phi);
                    last_sweeps_ = st.sweeps;
                    return std::move(field);
                }
            },
            method_);
    }

    const GainMethod& method() const { return method_; }
    int last_sweeps() const { return last_sweeps_; }

private:
    GainMethod method_;
    Matrix phi_prev_;
    int last_sweeps_ = 0;
};

} // namespace cips
