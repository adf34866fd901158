#include "cips/bench.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace cips;
using Catch::Approx;

TEST_CASE("FNV-1a reference values", "[bench]") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("doubles round-trip through the CSV format", "[bench]") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(2.0) == "2");
    for (double v : {1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.7604693356})
        CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("result table writes LF-terminated CSV with a metadata line", "[bench]") {
    ResultTable t("demo/1", {"method", "N", "mse"});
    t.add_row({std::string("fpf"), std::int64_t{100}, 0.25});
    t.add_row({std::string("pf"), std::int64_t{200}, 1.0 / 3.0});
    CHECK_THROWS_AS(t.add_row({std::string("x"), std::int64_t{1}}), std::logic_error);
    CHECK_THROWS_AS(t.add_row({std::string("x"), std::int64_t{1}, NAN}), NumericError);
    std::ostringstream os;
    t.write_csv(os, "cips 0.1.0 schema=demo/1");
    CHECK(os.str() == "# cips 0.1.0 schema=demo/1\nmethod,N,mse\nfpf,100,0.25\npf,200,0.33333333333333331\n");
    CHECK(t.number(1, "N") == 200.0);
    CHECK_THROWS(t.number(0, "method"));
}

TEST_CASE("metadata line identifies the configuration", "[bench]") {
    RunConfig a;
    a.experiment = "mse-levelsets";
    a.seed = 7;
    a.apply_defaults();
    RunConfig b = a;
    b.jobs = 8;
    b.out = "elsewhere.csv";
    CHECK(metadata_line(a, "s/1") == metadata_line(b, "s/1"));
    CHECK(metadata_line(a, "s/1").rfind("cips 0.1.0 schema=s/1 seed=7 config_hash=", 0) == 0);
    b.reps = 3;
    CHECK(metadata_line(a, "s/1") != metadata_line(b, "s/1"));
}

TEST_CASE("run configuration validation", "[bench]") {
    RunConfig c;
    c.experiment = "nope";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.experiment = "mse-levelsets";
    c.apply_defaults();
    CHECK_NOTHROW(c.validate());
    c.methods = {"fpf", "magic"};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.methods = {"fpf"};
    c.n_list = {1};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.n_list = {10};
    c.dt = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("replicates are independent of the thread count", "[bench]") {
    const auto draw = [](long r) { return replicate_stream(5, 2, static_cast<std::uint64_t>(r)).normal(); };
    const auto serial = run_replicates(64, 1, draw);
    const auto parallel = run_replicates(64, 4, draw);
    CHECK(serial == parallel);
    CHECK(serial[0] != serial[1]);
    CHECK_THROWS_AS(run_replicates(8, 3, [](long r) -> double {
                        if (r == 5) throw NumericError("boom");
                        return 0.0;
                    }),
                    NumericError);
}

TEST_CASE("mean and standard error", "[bench]") {
    const auto me = mean_and_stderr({1.0, 2.0, 3.0, 4.0});
    CHECK(me.mean == 2.5);
    CHECK(me.stderr_ == Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(mean_and_stderr({3.0}).stderr_ == 0.0);
}

TEST_CASE("static benchmark closed forms", "[bench]") {
    CHECK(StaticBenchmark::modified_pf_theory(1, 1000.0) == Approx(5.5e-3));
    CHECK(StaticBenchmark::fpf_bound(2, 100.0) == Approx(0.16));
    // Independent quadrature at d = 1: N * MSE = E[W^2 f^2] - E[E[f | Z]^2], W = p(z | x) / p(z).
    const auto npdf = [](double x, double var) { return std::exp(-x * x / (2 * var)) / std::sqrt(2 * M_PI * var); };
    double second = 0;
    const double h = 0.02;
    for (double z = -16; z <= 16; z += h)
        for (double x = -16; x <= 16; x += h) {
            const double w = npdf(z - x, 1.0) / npdf(z, 2.0);
            second += w * w * x * x * npdf(x, 1.0) * npdf(z, 2.0) * h * h;
        }
    CHECK(second - 0.5 == Approx(StaticBenchmark::modified_pf_theory(1, 1.0)).epsilon(1e-6));
    const StaticBenchmark b{4, 1.0, 1.0};
    CHECK(b.exact(Vector::Constant(4, 1.0)) == Approx(1.0));
}

TEST_CASE("bench tables are reproducible", "[bench]") {
    RunConfig c;
    c.experiment = "mse-levelsets";
    c.methods = {"pf", "pf-modified", "fpf"};
    c.n_list = {20};
    c.d_list = {1, 2};
    c.reps = 6;
    c.dt = 0.1;
    c.seed = 11;
    std::ostringstream a, b;
    run_experiment(c).write_csv(a, metadata_line(c, "mse-levelsets/1"));
    c.jobs = 3;
    run_experiment(c).write_csv(b, metadata_line(c, "mse-levelsets/1"));
    CHECK(a.str() == b.str());

    RunConfig dual;
    dual.experiment = "dual-enkf";
    dual.n_list = {20};
    dual.d_list = {2};
    dual.reps = 2;
    dual.horizon = 0.5;
    dual.dt = 0.05;
    const auto t = run_experiment(dual);
    REQUIRE(t.rows().size() == 2);
    CHECK(t.number(1, "rep") == 1.0);
    CHECK(t.number(0, "rel_mse") >= 0.0);

    RunConfig bv;
    bv.experiment = "bias-variance";
    bv.n_list = {30};
    bv.d_list = {1};
    bv.eps_list = {0.2};
    bv.reps = 2;
    CHECK(run_experiment(bv).number(0, "mse") >= 0.0);
}
