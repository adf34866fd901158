#pragma once

// Experiment harness: run configuration, CSV result tables and the three
// benchmark sweeps (static MSE grid, gain bias/variance, dual EnKF).

#include "cips/cips.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace cips {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
    std::string experiment;
    std::vector<std::string> methods;
    std::vector<long> n_list;
    std::vector<long> d_list;
    std::vector<double> eps_list;
    double dt = 0.02;
    double horizon = 1.0;
    long reps = 1000;
    std::uint64_t seed = 0;
    int jobs = 1;
    double sigma0 = 1.0;
    double sigma_w = 1.0;
    double sigma2 = 0.2;
    std::string out;

    /// Fills empty grids with the experiment defaults.
    void apply_defaults() {
        if (experiment == "mse-levelsets") {
            if (methods.empty()) methods = {"pf", "pf-modified", "fpf"};
            if (n_list.empty()) n_list = {250, 500, 1000, 2000, 4000};
            if (d_list.empty()) d_list = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        } else if (experiment == "bias-variance") {
            if (n_list.empty()) n_list = {100, 200, 500, 1000};
            if (d_list.empty()) d_list = {1};
            if (eps_list.empty()) eps_list = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
        } else if (experiment == "dual-enkf") {
            if (n_list.empty()) n_list = {250, 500, 1000, 2000};
            if (d_list.empty()) d_list = {2, 10};
        }
    }

    void validate() const {
        const bool known = experiment == "mse-levelsets" || experiment == "bias-variance" || experiment == "dual-enkf";
        detail::require(known, "unknown experiment '" + experiment + "' (mse-levelsets, bias-variance, dual-enkf)");
        detail::require(dt > 0.0 && horizon > 0.0, "dt and T must be positive");
        detail::require(reps >= 1, "reps must be >= 1");
        detail::require(jobs >= 1, "jobs must be >= 1");
        detail::require(sigma0 > 0.0 && sigma_w > 0.0 && sigma2 > 0.0, "sigma0, sigma_w and sigma2 must be positive");
        detail::require(!n_list.empty() && !d_list.empty(), "N list and d list must be non-empty");
        for (long n : n_list) detail::require(n >= 2, "every N must be >= 2");
        for (long d : d_list) detail::require(d >= 1, "every d must be >= 1");
        for (double e : eps_list) detail::require(e > 0.0, "every eps must be positive");
        for (const auto& m : methods)
            detail::require(m == "pf" || m == "pf-modified" || m == "fpf", "unknown method '" + m + "'");
        if (experiment == "bias-variance") detail::require(!eps_list.empty(), "eps list must be non-empty");
        if (experiment == "mse-levelsets") detail::require(!methods.empty(), "method list must be non-empty");
    }

    /// Canonical text of every field that affects results (jobs and out excluded).
    std::string canonical() const {
        std::ostringstream s;
        s.precision(17);
        s << "experiment=" << experiment << ";methods=";
        for (const auto& m : methods) s << m << ',';
        s << ";n=";
        for (long n : n_list) s << n << ',';
        s << ";d=";
        for (long d : d_list) s << d << ',';
        s << ";eps=";
        for (double e : eps_list) s << e << ',';
        s << ";dt=" << dt << ";T=" << horizon << ";reps=" << reps << ";seed=" << seed << ";sigma0=" << sigma0
          << ";sigma_w=" << sigma_w << ";sigma2=" << sigma2;
        return s.str();
    }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class ResultTable {
public:
    using Cell = std::variant<std::int64_t, double, std::string>;

    ResultTable(std::string schema, std::vector<std::string> columns)
        : schema_(std::move(schema)), columns_(std::move(columns)) {}

    void add_row(std::vector<Cell> row) {
        if (row.size() != columns_.size()) throw std::logic_error("ResultTable: row width does not match schema");
        for (const auto& c : row)
            if (const auto* d = std::get_if<double>(&c); d && !std::isfinite(*d))
                throw NumericError("ResultTable: non-finite value in " + schema_);
        rows_.push_back(std::move(row));
    }

    const std::string& schema() const { return schema_; }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }

    double number(std::size_t row, const std::string& column) const {
        const auto it = std::find(columns_.begin(), columns_.end(), column);
        if (it == columns_.end()) throw std::out_of_range("ResultTable: no column " + column);
        const Cell& c = rows_.at(row)[static_cast<std::size_t>(it - columns_.begin())];
        if (const auto* d = std::get_if<double>(&c)) return *d;
        if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
        throw std::invalid_argument("ResultTable: column " + column + " is not numeric");
    }

    void write_csv(std::ostream& os, const std::string& metadata) const {
        os << "# " << metadata << '\n';
        for (std::size_t j = 0; j < columns_.size(); ++j) os << (j ? "," : "") << columns_[j];
        os << '\n';
        for (const auto& row : rows_) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) os << ',';
                std::visit(
                    [&](const auto& v) {
                        using V = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<V, double>) os << format_double(v);
                        else os << v;
                    },
                    row[j]);
            }
            os << '\n';
        }
    }

private:
    std::string schema_;
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

inline std::string metadata_line(const RunConfig& cfg, const std::string& schema) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a(cfg.canonical()));
    return "cips " + std::string(kVersion) + " schema=" + schema + " seed=" + std::to_string(cfg.seed) +
           " config_hash=" + hash;
}

/// fn(rep) for rep = 0..reps-1 on `jobs` threads; results are returned in
/// replicate order so the output does not depend on scheduling.
template <class F>
auto run_replicates(long reps, int jobs, F fn) -> std::vector<decltype(fn(0L))> {
    std::vector<decltype(fn(0L))> out(static_cast<std::size_t>(reps));
    if (jobs <= 1 || reps <= 1) {
        for (long r = 0; r < reps; ++r) out[static_cast<std::size_t>(r)] = fn(r);
        return out;
    }
    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    const int workers = static_cast<int>(std::min<long>(jobs, reps));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (long r = next++; r < reps; r = next++) {
                try {
                    out[static_cast<std::size_t>(r)] = fn(r);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

/// Stream for replicate `rep` of grid cell `cell`.
inline RngStream replicate_stream(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) {
    return RngStream(seed).substream(cell * 1000003ULL + rep + 1);
}

struct MeanAndError {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanAndError mean_and_stderr(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(s / (n - 1.0)) : 0.0;
    return {m, sd / std::sqrt(n)};
}

// ---------------------------------------------------------------------------
// Static benchmark: X ~ N(0, sigma0^2 I_d), Z1 = X + sigma_w W, f(x) = 1^T x / sqrt(d).

struct StaticBenchmark {
    Eigen::Index d;
    double sigma0;
    double sigma_w;

    double posterior_coefficient() const { return sigma0 * sigma0 / (sigma0 * sigma0 + sigma_w * sigma_w); }
    double f(const Vector& x) const { return x.sum() / std::sqrt(static_cast<double>(d)); }
    double exact(const Vector& z) const { return posterior_coefficient() * f(z); }

    /// MSE of the modified estimator from its closed form (sigma0 = sigma_w).
    static double modified_pf_theory(Eigen::Index d, double n, double sigma2 = 1.0) {
        return sigma2 / n * (3.0 * std::pow(2.0, static_cast<double>(d)) - 0.5);
    }
    static double fpf_bound(Eigen::Index d, double n, double sigma2 = 1.0) {
        const double dd = static_cast<double>(d);
        return sigma2 / n * (3.0 * dd * dd + 2.0 * dd);
    }
};

/// Squared error of one replicate of `method` on the static benchmark.
inline double static_squared_error(const std::string& method, const StaticBenchmark& b, Eigen::Index n, double dt,
                                   RngStream& rng) {
    const auto fn = [&](const Vector& x) { return b.f(x); };
    if (method == "fpf") {
        const FilterModel model = make_static_param(b.d, b.sigma0, b.sigma_w);
        const auto truth = simulate_truth_and_observations(model, dt, 1.0, rng);
        GainApproximator gain(ConstantGainMethod{});
        Ensemble ens(model.sample_prior_columns(rng, n), 0.0);
        for (Eigen::Index k = 0; k < truth.obs.steps(); ++k)
            ens = fpf_step(ens, truth.obs.increments.col(k), dt, model, gain, rng);
        const double e = fpf_estimate(ens, fn) - b.exact(truth.obs.total());
        return e * e;
    }
    const Vector x = b.sigma0 * rng.normal_vector(b.d);
    const Vector z = x + b.sigma_w * rng.normal_vector(b.d);
    const Matrix samples = b.sigma0 * rng.normal_matrix(b.d, n);
    double est;
    if (method == "pf") est = static_is_estimate(samples, z, b.sigma_w, fn);
    else if (method == "pf-modified") est = static_is_modified(samples, z, b.sigma0, b.sigma_w, fn);
    else throw ConfigError("unknown static method '" + method + "'");
    const double e = est - b.exact(z);
    return e * e;
}

/// Columns (method, d, N, mse, stderr): M-replicate MSE of each estimator
/// of E[f(X) | Z1] against the exact posterior mean.
inline ResultTable bench_mse_levelsets(const RunConfig& cfg) {
    cfg.validate();
    ResultTable table("mse-levelsets/1", {"method", "d", "N", "mse", "stderr"});
    std::uint64_t cell = 0;
    for (const auto& method : cfg.methods) {
        for (long d : cfg.d_list) {
            for (long n : cfg.n_list) {
                const StaticBenchmark b{d, cfg.sigma0, cfg.sigma_w};
                const std::uint64_t this_cell = cell++;
                const auto errs = run_replicates(cfg.reps, cfg.jobs, [&](long r) {
                    RngStream rng = replicate_stream(cfg.seed, this_cell, static_cast<std::uint64_t>(r));
                    return static_squared_error(method, b, n, cfg.dt, rng);
                });
                const auto me = mean_and_stderr(errs);
                table.add_row({method, std::int64_t{d}, std::int64_t{n}, me.mean, me.stderr_});
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Gain bias/variance: first coordinate bimodal, remaining coordinates N(0,1).

inline Matrix sample_product_density(const Density1D& first, Eigen::Index d, Eigen::Index n, RngStream& rng) {
    Matrix x(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(0, i) = first.sample(rng);
        for (Eigen::Index j = 1; j < d; ++j) x(j, i) = rng.normal();
    }
    return x;
}

/// (1/N) sum_i (K^i_1 - K(X^i_1))^2 for one diffusion-map gain on the
/// product-density benchmark with h(x) = x_1.
inline double diffusion_map_gain_mse(const Density1D& rho, Eigen::Index d, Eigen::Index n, double eps, RngStream& rng) {
    const Matrix x = sample_product_density(rho, d, n, rng);
    const Matrix h = x.row(0);
    DiffusionMapOptions opt;
    opt.eps = eps;
    const auto [field, st] = diffusion_map_gain(x, h, opt);
    std::vector<double> pts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i)] = x(0, i);
    const auto exact = exact_gain_1d(rho, [](double y) { return y; }, pts);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double e = field.at(i)(0, 0) - exact[static_cast<std::size_t>(i)];
        s += e * e;
    }
    return s / static_cast<double>(n);
}

/// Columns (eps, N, d, mse, stderr).
inline ResultTable bench_bias_variance(const RunConfig& cfg) {
    cfg.validate();
    const Density1D rho = make_bimodal(cfg.sigma2);
    ResultTable table("bias-variance/1", {"eps", "N", "d", "mse", "stderr"});
    std::uint64_t cell = 0;
    for (double eps : cfg.eps_list) {
        for (long n : cfg.n_list) {
            for (long d : cfg.d_list) {
                const std::uint64_t this_cell = cell++;
                const auto errs = run_replicates(cfg.reps, cfg.jobs, [&](long r) {
                    RngStream rng = replicate_stream(cfg.seed, this_cell, static_cast<std::uint64_t>(r));
                    return diffusion_map_gain_mse(rho, d, n, eps, rng);
                });
                const auto me = mean_and_stderr(errs);
                table.add_row({eps, std::int64_t{n}, std::int64_t{d}, me.mean, me.stderr_});
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Dual EnKF on canonical-form systems.

/// The canonical d-dimensional system used for seed `seed`.
inline LQProblem benchmark_lq_system(std::uint64_t seed, Eigen::Index d, double horizon) {
    RngStream rng = RngStream(seed).substream(0xC0DE0000ULL + static_cast<std::uint64_t>(d));
    return make_lq_canonical(d, rng, horizon);
}

struct DualReplicate {
    double rel_mse = 0.0;
    double spec_abscissa = 0.0;
};

inline DualReplicate dual_enkf_replicate(const LQProblem& lq, const RiccatiPath& reference, Eigen::Index n, double dt,
                                         RngStream& rng) {
    const DualRun run = run_dual_enkf(lq, n, dt, rng);
    return {relative_mse(reference, run.P()), closed_loop_abscissa(lq, run.gains.gains.front())};
}

/// Columns (d, N, rep, rel_mse, spec_abscissa).
inline ResultTable bench_dual_enkf(const RunConfig& cfg) {
    cfg.validate();
    ResultTable table("dual-enkf/1", {"d", "N", "rep", "rel_mse", "spec_abscissa"});
    std::uint64_t cell = 0;
    for (long d : cfg.d_list) {
        const LQProblem lq = benchmark_lq_system(cfg.seed, d, cfg.horizon);
        const RiccatiPath reference = solve_dre_backward(lq, cfg.dt);
        for (long n : cfg.n_list) {
            const std::uint64_t this_cell = cell++;
            const auto reps = run_replicates(cfg.reps, cfg.jobs, [&](long r) {
                RngStream rng = replicate_stream(cfg.seed, this_cell, static_cast<std::uint64_t>(r));
                return dual_enkf_replicate(lq, reference, n, cfg.dt, rng);
            });
            for (long r = 0; r < cfg.reps; ++r) {
                const auto& rep = reps[static_cast<std::size_t>(r)];
                table.add_row({std::int64_t{d}, std::int64_t{n}, std::int64_t{r}, rep.rel_mse, rep.spec_abscissa});
            }
        }
    }
    return table;
}

inline ResultTable run_experiment(const RunConfig& cfg) {
    if (cfg.experiment == "mse-levelsets") return bench_mse_levelsets(cfg);
    if (cfg.experiment == "bias-variance") return bench_bias_variance(cfg);
    if (cfg.experiment == "dual-enkf") return bench_dual_enkf(cfg);
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

} // namespace cips
