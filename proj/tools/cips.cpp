// cips: command-line front end for filters, gain studies, the dual-EnKF LQR
// solver, static Gaussian updates and the benchmark sweeps.

#include "cips/bench.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace {

using namespace cips;

/// Writes to --out when given, otherwise stdout. Files are opened in binary
/// mode so line endings stay LF.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw ConfigError("cannot open output file '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::vector<double> parse_numbers(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": cannot parse '" + tok + "' as a number");
        }
    }
    return out;
}

Matrix parse_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols, const char* what) {
    const auto v = parse_numbers(text, what);
    detail::require(static_cast<Eigen::Index>(v.size()) == rows * cols,
                    std::string(what) + ": expected " + std::to_string(rows * cols) + " values (row-major)");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
    return m;
}

std::string moments_header(Eigen::Index d) {
    std::string h = "t";
    for (Eigen::Index i = 0; i < d; ++i) h += ",mean_" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) h += ",cov_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
    return h;
}

void write_moments_row(std::ostream& os, double t, const Vector& mean, const Matrix& cov) {
    os << format_double(t);
    for (Eigen::Index i = 0; i < mean.size(); ++i) os << ',' << format_double(mean(i));
    for (Eigen::Index i = 0; i < mean.size(); ++i)
        for (Eigen::Index j = i; j < mean.size(); ++j) os << ',' << format_double(cov(i, j));
    os << '\n';
}

// ---------------------------------------------------------------------------

struct FilterArgs {
    std::string model = "linear2d";
    std::string method = "fpf-const";
    long n = 1000;
    long d = 1;
    double dt = 0.01;
    double horizon = 1.0;
    double sigma_w = 1.0;
    double sigma0 = 1.0;
    double eps = 0.0;
    int degree = 3;
    std::uint64_t seed = 0;
    std::string out;
};

FilterModel build_filter_model(const FilterArgs& a) {
    if (a.model == "linear2d") return make_linear2d_benchmark(a.sigma_w);
    if (a.model == "static") return make_static_param(a.d, a.sigma0, a.sigma_w);
    if (a.model == "bimodal") {
        const Density1D rho = make_bimodal(0.2);
        return with_prior(make_static_param(1, 1.0, a.sigma_w),
                          [rho](RngStream& rng) -> Vector { return Vector::Constant(1, rho.sample(rng)); });
    }
    throw ConfigError("unknown model '" + a.model + "' (linear2d, static, bimodal)");
}

int run_filter(const FilterArgs& a) {
    detail::require(a.n >= 2, "--n must be >= 2");
    const FilterModel model = build_filter_model(a);
    RngStream truth_rng = RngStream(a.seed).substream(0);
    RngStream filter_rng = RngStream(a.seed).substream(1);
    const auto truth = simulate_truth_and_observations(model, a.dt, a.horizon, truth_rng);

    std::vector<double> times;
    std::vector<Moments> moments;
    if (a.method == "kalman") {
        if (!model.linear) throw ConfigError("method kalman needs a linear Gaussian model");
        const auto path = kalman_bucy_run(model, truth.obs, {model.linear->m0, model.linear->sigma0});
        times = path.times;
        for (const auto& b : path.beliefs) moments.push_back({b.mean, b.cov});
    } else if (a.method == "sir") {
        const auto tr = run_bootstrap_pf(model, truth.obs, a.n, filter_rng);
        times = tr.times;
        moments = tr.moments;
    } else if (a.method.rfind("enkf-", 0) == 0) {
        const auto tr = run_linear_enkf(model, truth.obs, a.n, parse_linear_variant(a.method.substr(5)), filter_rng);
        times = tr.times;
        moments = tr.moments;
    } else {
        GainMethod gm;
        if (a.method == "fpf-const") {
            gm = ConstantGainMethod{};
        } else if (a.method == "fpf-galerkin") {
            BasisSet basis = coordinate_basis(model.state_dim);
            if (model.state_dim == 1) basis = monomial_basis(1, a.degree);
            gm = GalerkinGainMethod{basis};
        } else if (a.method == "fpf-dm") {
            DiffusionMapGainMethod dm;
            dm.auto_eps = a.eps <= 0.0;
            dm.options.eps = a.eps > 0.0 ? a.eps : 1.0;
            gm = dm;
        } else {
            throw ConfigError("unknown method '" + a.method +
                              "' (fpf-const, fpf-galerkin, fpf-dm, sir, enkf-sqrt, enkf-perturbed, enkf-det, kalman)");
        }
        const auto tr = run_fpf(model, truth.obs, a.n, gm, filter_rng);
        times = tr.times;
        moments = tr.moments;
    }

    Output out(a.out);
    auto& os = out.stream();
    os << "# cips " << kVersion << " schema=filter/1 seed=" << a.seed << " model=" << a.model
       << " method=" << a.method << " N=" << a.n << '\n';
    os << moments_header(model.state_dim) << '\n';
    for (std::size_t k = 0; k < times.size(); ++k) write_moments_row(os, times[k], moments[k].mean, moments[k].cov.mat());
    return 0;
}

// ---------------------------------------------------------------------------

struct GainStudyArgs {
    std::string density = "bimodal";
    double sigma2 = 0.2;
    std::string h = "x";
    std::vector<std::string> eps = {"0.1"};
    std::vector<long> n = {200};
    long reps = 10;
    std::uint64_t seed = 0;
    std::string out;
};

int run_gain_study(const GainStudyArgs& a) {
    detail::require(a.reps >= 1, "--reps must be >= 1");
    const Density1D rho = a.density == "bimodal"    ? make_bimodal(a.sigma2)
                          : a.density == "gaussian" ? make_gaussian_1d(0.0, a.sigma2)
                                                    : throw ConfigError("unknown density '" + a.density + "' (bimodal, gaussian)");
    std::function<double(double)> h;
    if (a.h == "x") h = [](double x) { return x; };
    else if (a.h == "x3") h = [](double x) { return x * x * x; };
    else if (a.h == "sin") h = [](double x) { return std::sin(x); };
    else throw ConfigError("unknown observation function '" + a.h + "' (x, x3, sin)");

    Output out(a.out);
    auto& os = out.stream();
    os << "# cips " << kVersion << " schema=gain-study/1 seed=" << a.seed << " density=" << a.density
       << " sigma2=" << format_double(a.sigma2) << " h=" << a.h << '\n';
    os << "eps,N,rep,mse\n";
    std::uint64_t cell = 0;
    for (const auto& eps_text : a.eps) {
        const bool automatic = eps_text == "auto";
        const double eps_value = automatic ? 0.0 : parse_numbers(eps_text, "--eps").at(0);
        detail::require(automatic || eps_value > 0.0, "--eps values must be positive or 'auto'");
        for (long n : a.n) {
            detail::require(n >= 2, "--n values must be >= 2");
            const std::uint64_t this_cell = cell++;
            for (long r = 0; r < a.reps; ++r) {
                RngStream rng = replicate_stream(a.seed, this_cell, static_cast<std::uint64_t>(r));
                Matrix x(1, n);
                for (long i = 0; i < n; ++i) x(0, i) = rho.sample(rng);
                Matrix hv(1, n);
                std::vector<double> pts(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) {
                    hv(0, i) = h(x(0, i));
                    pts[static_cast<std::size_t>(i)] = x(0, i);
                }
                DiffusionMapOptions opt;
                opt.eps = automatic ? auto_bandwidth(x) : eps_value;
                const auto [field, st] = diffusion_map_gain(x, hv, opt);
                const auto exact = exact_gain_1d(rho, h, pts);
                double mse = 0.0;
                for (long i = 0; i < n; ++i) {
                    const double e = field.at(i)(0, 0) - exact[static_cast<std::size_t>(i)];
                    mse += e * e;
                }
                os << format_double(opt.eps) << ',' << n << ',' << r << ',' << format_double(mse / static_cast<double>(n))
                   << '\n';
            }
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct LqrArgs {
    long d = 2;
    long n = 1000;
    double dt = 0.02;
    double horizon = 10.0;
    std::string system = "canonical";
    std::uint64_t seed = 0;
    bool oracle_only = false;
    std::string out;
    std::string s_out;
};

int run_lqr(const LqrArgs& a) {
    detail::require(a.d >= 1, "--d must be >= 1");
    LQProblem lq;
    if (a.system == "canonical") {
        lq = benchmark_lq_system(a.seed, a.d, a.horizon);
    } else if (a.system == "scalar") {
        detail::require(a.d == 1, "--system scalar requires --d 1");
        const Matrix one = Matrix::Identity(1, 1);
        lq = make_lq(Matrix::Zero(1, 1), one, one, one, one, a.horizon);
    } else {
        throw ConfigError("unknown system '" + a.system + "' (canonical, scalar)");
    }
    if (a.oracle_only) lq = lq.oracle_only();
    RngStream rng = RngStream(a.seed).substream(1);
    const DualRun run = run_dual_enkf(lq, a.n, a.dt, rng);
    const auto meta = [&](const char* schema) {
        return std::string("# cips ") + kVersion + " schema=" + schema + " seed=" + std::to_string(a.seed) +
               " system=" + a.system + " d=" + std::to_string(a.d) + " N=" + std::to_string(a.n) +
               " dt=" + format_double(a.dt) + " T=" + format_double(a.horizon) + (a.oracle_only ? " oracle-only" : "");
    };
    {
        Output out(a.out);
        auto& os = out.stream();
        os << meta("lqr-gain/1") << '\n';
        os << "t";
        for (Eigen::Index i = 0; i < lq.control_dim; ++i)
            for (Eigen::Index j = 0; j < lq.state_dim; ++j) os << ",K_" << i + 1 << "_" << j + 1;
        os << '\n';
        for (std::size_t k = 0; k < run.gains.times.size(); ++k) {
            os << format_double(run.gains.times[k]);
            const Matrix& K = run.gains.gains[k];
            for (Eigen::Index i = 0; i < K.rows(); ++i)
                for (Eigen::Index j = 0; j < K.cols(); ++j) os << ',' << format_double(K(i, j));
            os << '\n';
        }
    }
    if (!a.s_out.empty()) {
        Output out(a.s_out);
        auto& os = out.stream();
        os << meta("lqr-s/1") << '\n';
        os << "t";
        for (Eigen::Index i = 0; i < lq.state_dim; ++i)
            for (Eigen::Index j = i; j < lq.state_dim; ++j) os << ",S_" << i + 1 << "_" << j + 1;
        os << '\n';
        for (std::size_t k = 0; k < run.S.times.size(); ++k) {
            os << format_double(run.S.times[k]);
            const Matrix& S = run.S.values[k].mat();
            for (Eigen::Index i = 0; i < S.rows(); ++i)
                for (Eigen::Index j = i; j < S.cols(); ++j) os << ',' << format_double(S(i, j));
            os << '\n';
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct StaticArgs {
    std::string mean_x, mean_y, cov_x, cov_xy, cov_y, y;
    long samples = 0;
    std::string map = "ot";
    std::uint64_t seed = 0;
    std::string out;
};

int run_static(const StaticArgs& a) {
    const auto mx = parse_numbers(a.mean_x, "--mean-x");
    const auto my = parse_numbers(a.mean_y, "--mean-y");
    const auto d = static_cast<Eigen::Index>(mx.size()), m = static_cast<Eigen::Index>(my.size());
    const JointGaussian jg(Eigen::Map<const Vector>(mx.data(), d), Eigen::Map<const Vector>(my.data(), m),
                           parse_matrix(a.cov_x, d, d, "--cov-x"), parse_matrix(a.cov_xy, d, m, "--cov-xy"),
                           parse_matrix(a.cov_y, m, m, "--cov-y"));
    const Vector y = parse_matrix(a.y, m, 1, "--y");
    const GaussianBelief post = blue_update(jg, y);
    std::cout << "# cips " << kVersion << " schema=static-update/1\nquantity,i,j,value\n";
    for (Eigen::Index i = 0; i < d; ++i) std::cout << "mean," << i + 1 << ",," << format_double(post.mean(i)) << '\n';
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            std::cout << "cov," << i + 1 << ',' << j + 1 << ',' << format_double(post.cov(i, j)) << '\n';
    if (a.map == "ot") {
        const Matrix A = ot_transport_matrix(jg);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                std::cout << "ot_matrix," << i + 1 << ',' << j + 1 << ',' << format_double(A(i, j)) << '\n';
    } else if (a.map != "perturbed") {
        throw ConfigError("unknown map '" + a.map + "' (ot, perturbed)");
    }
    if (a.samples > 0) {
        RngStream rng(a.seed);
        const Matrix s = a.map == "ot" ? ot_map_samples(jg, y, a.samples, rng) : perturbed_enkf_samples(jg, y, a.samples, rng);
        Output out(a.out);
        auto& os = out.stream();
        os << "# cips " << kVersion << " schema=static-samples/1 seed=" << a.seed << " map=" << a.map << '\n';
        for (Eigen::Index i = 0; i < d; ++i) os << (i ? "," : "") << "x_" << i + 1;
        os << '\n';
        for (Eigen::Index k = 0; k < s.cols(); ++k) {
            for (Eigen::Index i = 0; i < d; ++i) os << (i ? "," : "") << format_double(s(i, k));
            os << '\n';
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

int run_bench(RunConfig cfg) {
    cfg.apply_defaults();
    cfg.validate();
    const ResultTable table = run_experiment(cfg);
    Output out(cfg.out);
    table.write_csv(out.stream(), metadata_line(cfg, table.schema()));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Controlled interacting particle systems: filters, gain approximation and LQR"};
    app.require_subcommand(1);
    // Options for a subcommand live under its [section]; command-line flags win.
    app.set_config("--config", "", "TOML configuration file");
    app.fallthrough();

    FilterArgs fa;
    auto* filter = app.add_subcommand("filter", "Run a filter on a simulated observation path");
    filter->add_option("--model", fa.model, "linear2d | static | bimodal")->capture_default_str();
    filter->add_option("--method", fa.method,
                       "fpf-const | fpf-galerkin | fpf-dm | sir | enkf-sqrt | enkf-perturbed | enkf-det | kalman")
        ->capture_default_str();
    filter->add_option("--n", fa.n, "Number of particles")->capture_default_str();
    filter->add_option("--d", fa.d, "State dimension (static model)")->capture_default_str();
    filter->add_option("--dt", fa.dt, "Time step")->capture_default_str();
    filter->add_option("--T", fa.horizon, "Horizon")->capture_default_str();
    filter->add_option("--sigma-w", fa.sigma_w, "Observation noise")->capture_default_str();
    filter->add_option("--sigma0", fa.sigma0, "Prior standard deviation (static model)")->capture_default_str();
    filter->add_option("--eps", fa.eps, "Diffusion-map bandwidth (0 = auto)")->capture_default_str();
    filter->add_option("--degree", fa.degree, "Galerkin polynomial degree (1-D models)")->capture_default_str();
    filter->add_option("--seed", fa.seed, "Random seed")->capture_default_str();
    filter->add_option("--out", fa.out, "Output CSV (default stdout)");

    GainStudyArgs ga;
    auto* gain = app.add_subcommand("gain-study", "Diffusion-map gain error against the exact 1-D gain");
    gain->add_option("--density", ga.density, "bimodal | gaussian")->capture_default_str();
    gain->add_option("--sigma2", ga.sigma2, "Component variance")->capture_default_str();
    gain->add_option("--obs-fn", ga.h, "Observation function: x | x3 | sin")->capture_default_str();
    gain->add_option("--eps", ga.eps, "Bandwidths (comma separated, or auto)")->delimiter(',')->required();
    gain->add_option("--n", ga.n, "Particle counts (comma separated)")->delimiter(',')->required();
    gain->add_option("--reps", ga.reps, "Replicates per cell")->capture_default_str();
    gain->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
    gain->add_option("--out", ga.out, "Output CSV (default stdout)");

    LqrArgs la;
    auto* lqr = app.add_subcommand("lqr-solve", "Dual EnKF gain path for a finite-horizon LQR problem");
    lqr->add_option("--d", la.d, "State dimension")->required();
    lqr->add_option("--n", la.n, "Number of particles")->required();
    lqr->add_option("--dt", la.dt, "Time step")->capture_default_str();
    lqr->add_option("--T", la.horizon, "Horizon")->capture_default_str();
    lqr->add_option("--system", la.system, "canonical | scalar")->capture_default_str();
    lqr->add_option("--seed", la.seed, "Random seed (also selects the canonical system)")->capture_default_str();
    lqr->add_flag("--oracle-only", la.oracle_only, "Withhold (A, B, C) and use simulator probes");
    lqr->add_option("--out", la.out, "Gain CSV (default stdout)");
    lqr->add_option("--s-out", la.s_out, "S path CSV");

    StaticArgs sa;
    auto* stat = app.add_subcommand("static-update", "Gaussian conditioning and transport maps");
    stat->add_option("--mean-x", sa.mean_x, "E[X], comma separated")->required();
    stat->add_option("--mean-y", sa.mean_y, "E[Y], comma separated")->required();
    stat->add_option("--cov-x", sa.cov_x, "Sigma_X, row-major")->required();
    stat->add_option("--cov-xy", sa.cov_xy, "Sigma_XY, row-major")->required();
    stat->add_option("--cov-y", sa.cov_y, "Sigma_Y, row-major")->required();
    stat->add_option("--y", sa.y, "Observed value")->required();
    stat->add_option("--samples", sa.samples, "Number of transported samples to write")->capture_default_str();
    stat->add_option("--map", sa.map, "ot | perturbed")->capture_default_str();
    stat->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    stat->add_option("--out", sa.out, "Sample CSV (default stdout)");

    RunConfig rc;
    auto* bench = app.add_subcommand("bench", "Benchmark sweeps writing CSV tables");
    bench->add_option("--experiment", rc.experiment, "mse-levelsets | bias-variance | dual-enkf")->required();
    bench->add_option("--methods", rc.methods, "pf, pf-modified, fpf")->delimiter(',');
    bench->add_option("--n-list", rc.n_list, "Particle counts")->delimiter(',');
    bench->add_option("--d-list", rc.d_list, "Dimensions")->delimiter(',');
    bench->add_option("--eps-list", rc.eps_list, "Bandwidths")->delimiter(',');
    bench->add_option("--dt", rc.dt, "Time step")->capture_default_str();
    bench->add_option("--T", rc.horizon, "Horizon")->capture_default_str();
    bench->add_option("--reps", rc.reps, "Replicates per cell")->capture_default_str();
    bench->add_option("--sigma0", rc.sigma0, "Prior standard deviation")->capture_default_str();
    bench->add_option("--sigma-w", rc.sigma_w, "Observation noise")->capture_default_str();
    bench->add_option("--sigma2", rc.sigma2, "Bimodal component variance")->capture_default_str();
    bench->add_option("--seed", rc.seed, "Random seed")->capture_default_str();
    bench->add_option("--jobs", rc.jobs, "Worker threads")->capture_default_str();
    bench->add_option("--out", rc.out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*filter) return run_filter(fa);
        if (*gain) return run_gain_study(ga);
        if (*lqr) return run_lqr(la);
        if (*stat) return run_static(sa);
        if (*bench) {
            if (bench->count("--experiment") && rc.experiment == "dual-enkf" && !bench->count("--T")) rc.horizon = 10.0;
            return run_bench(rc);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
