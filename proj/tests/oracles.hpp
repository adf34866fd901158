#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
inline double ks_critical_1pct(std::size_t n, std::size_t m) {
    return 1.628 * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

/// Posterior density of a scalar on a uniform grid: prior(x) * likelihood(x),
/// normalised by Riemann sum.
inline std::vector<double> grid_posterior(const std::vector<double>& grid, const std::function<double(double)>& prior,
                                          const std::function<double(double)>& likelihood) {
    std::vector<double> p(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) p[i] = prior(grid[i]) * likelihood(grid[i]);
    const double dx = grid[1] - grid[0];
    const double z = std::accumulate(p.begin(), p.end(), 0.0) * dx;
    for (auto& v : p) v /= z;
    return p;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

inline double gaussian_pdf(double x, double m, double v) {
    return std::exp(-(x - m) * (x - m) / (2 * v)) / std::sqrt(2 * M_PI * v);
}

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

inline double sample_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

/// Independent reference: finite-volume solve of -(rho phi')' = (h - hbar) rho
/// with zero-flux ends, phi pinned at the left node. Returns the gain phi'
/// at the query points by interpolating the cell-face differences.
inline std::vector<double> poisson_fd_gain_1d(const std::function<double(double)>& pdf, double lo, double hi,
                                              const std::function<double(double)>& h,
                                              const std::vector<double>& x_points, std::size_t n = 40001) {
    const auto grid = linspace(lo, hi, n);
    const double dx = grid[1] - grid[0];
    std::vector<double> p(n), face(n - 1);
    for (std::size_t i = 0; i < n; ++i) p[i] = pdf(grid[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) face[i] = pdf(grid[i] + 0.5 * dx);
    // Cell volumes: half cells at the ends.
    std::vector<double> vol(n, dx);
    vol.front() = vol.back() = 0.5 * dx;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += vol[i] * h(grid[i]) * p[i];
        den += vol[i] * p[i];
    }
    const double hbar = num / den;

    // Tridiagonal system  -(face_i (phi_{i+1}-phi_i) - face_{i-1}(phi_i - phi_{i-1}))/dx = vol_i (h_i - hbar) p_i.
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            lower[i] = -face[i - 1] / dx;
            diag[i] += face[i - 1] / dx;
        }
        if (i + 1 < n) {
            upper[i] = -face[i] / dx;
            diag[i] += face[i] / dx;
        }
        rhs[i] = vol[i] * (h(grid[i]) - hbar) * p[i];
    }
    // Pin phi_0 = 0 (the operator annihilates constants).
    diag[0] = 1.0;
    upper[0] = 0.0;
    rhs[0] = 0.0;
    // Thomas algorithm.
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> phi(n);
    phi[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) phi[i] = (rhs[i] - upper[i] * phi[i + 1]) / diag[i];

    std::vector<double> out;
    out.reserve(x_points.size());
    for (double x : x_points) {
        // Face derivatives live at x_i + dx/2; interpolate linearly between them.
        const double s = (x - grid.front()) / dx - 0.5;
        auto k = static_cast<long>(std::floor(s));
        k = std::clamp<long>(k, 0, static_cast<long>(n) - 3);
        const auto ku = static_cast<std::size_t>(k);
        const double t = s - static_cast<double>(k);
        const double d0 = (phi[ku + 1] - phi[ku]) / dx;
        const double d1 = (phi[ku + 2] - phi[ku + 1]) / dx;
        out.push_back((1.0 - t) * d0 + t * d1);
    }
    return out;
}

} // namespace oracle
