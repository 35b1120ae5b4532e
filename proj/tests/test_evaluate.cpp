#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "thr/config.hpp"
#include "thr/csv.hpp"
#include "thr/evaluate.hpp"
#include "thr/runner.hpp"
#include "support/oracles.hpp"

using namespace thr;

namespace {

std::vector<VectorXd> as_vecs(std::initializer_list<double> xs) {
    std::vector<VectorXd> out;
    for (double x : xs) out.push_back(VectorXd::Constant(1, x));
    return out;
}

HierarchySeries simulated_series(double phi, int n_top, const std::vector<int>& ks,
                                 std::uint64_t seed, double sigma2 = 1.0) {
    ArmaModel gen;
    gen.phi = VectorXd::Constant(1, phi);
    gen.sigma2 = sigma2;
    const TemporalHierarchy hier(ks);
    return build_hierarchy_series(simulate(gen, static_cast<long>(n_top) * hier.m(), -1, seed),
                                  hier);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("rmse_rel and rmae_rel") {
    const auto actual = as_vecs({1, 2, 3});
    const auto base = as_vecs({2, 3, 4});

    CHECK(rmse_rel(base, base, actual) == 0.0);
    CHECK(rmae_rel(base, base, actual) == 0.0);
    CHECK(rmse_rel(actual, base, actual) == -1.0);
    CHECK(rmae_rel(actual, base, actual) == -1.0);

    const auto doubled = as_vecs({3, 4, 5}); // errors 2x the base errors pointwise
    CHECK(rmse_rel(doubled, base, actual) == Catch::Approx(3.0).margin(1e-12));
    CHECK(rmae_rel(doubled, base, actual) == Catch::Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(rmse_rel(base, actual, actual), ZeroBaseError);
}

TEST_CASE("mcb_test: strict dominance and ties") {
    SECTION("two methods, one always better") {
        MatrixXd e(5, 2);
        e << 1, 2, 0.5, 1, 3, 4, 2, 5, 0.1, 0.2;
        const MCBResult r = mcb_test(e, 0.05);
        CHECK(r.mean_ranks(0) == 1.0);
        CHECK(r.mean_ranks(1) == 2.0);
        CHECK(r.best_index == 0);
        CHECK(r.indistinguishable[0]);
    }
    SECTION("identical errors share the average rank") {
        MatrixXd e = MatrixXd::Constant(4, 3, 1.5);
        const MCBResult r = mcb_test(e, 0.05);
        for (int j = 0; j < 3; ++j) CHECK(r.mean_ranks(j) == 2.0); // (3+1)/2
        for (int j = 0; j < 3; ++j) CHECK(r.indistinguishable[j]);
    }
    SECTION("3 methods x 10 series against the brute-force rank oracle") {
        RngStream rng(2211);
        MatrixXd e(10, 3);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 3; ++j)
                e(i, j) = std::floor(rng.uniform01() * 5.0); // coarse grid forces ties
        const MCBResult r = mcb_test(e, 0.05);
        VectorXd expected = VectorXd::Zero(3);
        for (int i = 0; i < 10; ++i) {
            const auto ranks = oracles::row_ranks({e(i, 0), e(i, 1), e(i, 2)});
            for (int j = 0; j < 3; ++j) expected(j) += ranks[static_cast<std::size_t>(j)];
        }
        expected /= 10.0;
        CHECK((r.mean_ranks - expected).lpNorm<Eigen::Infinity>() < 1e-12);
        // half-width formula: crit(0.05,3) * sqrt(3*4/(12*10))
        CHECK(r.half_width == Catch::Approx(2.343 * std::sqrt(0.1)).margin(1e-9));
    }
    SECTION("input validation") {
        CHECK_THROWS_AS(mcb_test(MatrixXd::Zero(1, 3), 0.05), InsufficientData);
        CHECK_THROWS_AS(mcb_test(MatrixXd::Zero(5, 1), 0.05), InsufficientData);
        CHECK_THROWS_AS(mcb_test(MatrixXd::Zero(5, 3), 0.2), std::invalid_argument);
    }
}

TEST_CASE("percentile_summary and trimmed_mean") {
    const auto c = percentile_summary(std::vector<double>(7, 3.25));
    for (const auto& [p, v] : c) CHECK(v == 3.25);

    const auto m = percentile_summary({-1.0, 0.0, 1.0});
    for (const auto& [p, v] : m)
        if (p == 50) CHECK(v == 0.0);

    std::vector<double> ten;
    for (int i = 1; i <= 10; ++i) ten.push_back(i);
    CHECK(trimmed_mean(ten, 0.10) == Catch::Approx(5.5).margin(1e-12));
    CHECK(trimmed_mean({4.0}, 0.10) == 4.0);
    CHECK_THROWS_AS(percentile_summary({}), std::invalid_argument);
}

TEST_CASE("protocol: bottom-up keeps the bottom level untouched") {
    const HierarchySeries hs = simulated_series(0.7, 60, {4, 1}, 42);
    const EvalReport rep = run_protocol(hs, {ArmaSpec{1, 0, 1}, ArmaSpec{1, 0, 0}},
                                        Method::bottom_up(), 1, 0.75);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[1].level == "2");
    CHECK(rep.rows[1].test_rmse == 0.0); // exact, not approximate
    CHECK(rep.rows[1].train_rmse == 0.0);
}

TEST_CASE("protocol: full covariance beats bottom-up in-sample (median over 50 reps)") {
    std::vector<double> diff;
    int usable = 0;
    for (int seed = 0; seed < 50; ++seed) {
        const HierarchySeries hs = simulated_series(0.7, 40, {4, 1}, 10000 + seed);
        const ProtocolContext ctx =
            prepare_protocol(hs, {ArmaSpec{1, 0, 1}, ArmaSpec{1, 0, 0}}, 1, 0.75);
        CovSpec fs;
        fs.kind = CovSpec::Kind::FullSample;
        const EvalReport full = evaluate_method(ctx, Method::mint(fs, "full"));
        const EvalReport bu = evaluate_method(ctx, Method::bottom_up());
        if (!full.available) continue;
        ++usable;
        diff.push_back(full.rows.back().train_rmse - bu.rows.back().train_rmse);
    }
    REQUIRE(usable >= 45);
    CHECK(median_of(diff) <= 0.0);
}

TEST_CASE("protocol: deep hierarchy with simple models makes FullSample unavailable") {
    const HierarchySeries hs = simulated_series(0.5, 20, {12, 4, 1}, 77);
    const std::vector<ArmaSpec> specs = {ArmaSpec{1, 0, 2}, ArmaSpec{1, 0, 1},
                                         ArmaSpec{1, 0, 0}};
    const ProtocolContext ctx = prepare_protocol(hs, specs, 1, 0.75);

    CovSpec fs;
    fs.kind = CovSpec::Kind::FullSample;
    const EvalReport full = evaluate_method(ctx, Method::mint(fs, "full"));
    CHECK_FALSE(full.available);
    for (const auto& row : full.rows) CHECK(std::isnan(row.test_rmse));

    const EvalReport ols = evaluate_method(ctx, Method::mint(CovSpec{}, "ols"));
    CHECK(ols.available);
    CHECK(std::isfinite(ols.rows.back().test_rmse));

    CovSpec sp;
    sp.kind = CovSpec::Kind::Spectral;
    sp.nu = 0.5;
    sp.n_eig = 2;
    const EvalReport spectral = evaluate_method(ctx, Method::mint(sp, "spectral"));
    CHECK(spectral.available);
    CHECK(std::isfinite(spectral.rows.back().test_rmse));
}

TEST_CASE("protocol: spectral with cross-validated hyperparameters runs") {
    const HierarchySeries hs = simulated_series(0.6, 60, {4, 1}, 33);
    const ProtocolContext ctx =
        prepare_protocol(hs, {ArmaSpec{1, 0, 1}, ArmaSpec{1, 0, 0}}, 1, 0.75);
    CovSpec sp;
    sp.kind = CovSpec::Kind::Spectral; // nu and n_eig unresolved -> CV
    const EvalReport rep = evaluate_method(ctx, Method::mint(sp, "spectral"));
    CHECK(rep.available);
    CHECK(std::isfinite(rep.rows.back().train_rmse));
}

TEST_CASE("protocol: overall equals summed numerators over summed denominators") {
    const HierarchySeries hs = simulated_series(0.5, 50, {4, 2, 1}, 91);
    const std::vector<ArmaSpec> specs = {ArmaSpec{1, 0, 2}, ArmaSpec{1, 0, 1},
                                         ArmaSpec{1, 0, 0}};
    const EvalReport rep =
        run_protocol(hs, specs, Method::mint(CovSpec{}, "ols"), 1, 0.75);
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l + 1 < rep.rows.size(); ++l) {
        num += rep.rows[l].test_recon_mse;
        den += rep.rows[l].test_base_mse;
    }
    CHECK(rep.rows.back().test_rmse == Catch::Approx(num / den - 1.0).margin(1e-14));
}

TEST_CASE("run_simulate is deterministic and independent of the worker count") {
    json j = {
        {"seed", 991},
        {"n_top", {20}},
        {"phi", {0.5, -0.3}},
        {"sigma2", {1.0}},
        {"ks", {{4, 1}}},
        {"h", {1}},
        {"mode", "fixed"},
        {"replications", 4},
        {"train_frac", 0.75},
        {"methods", {"bottom_up", "ols", "full"}},
    };
    const ScenarioConfig cfg = ScenarioConfig::parse(j);
    const SimulateOutput a = run_simulate(cfg, 1, false, true);
    const SimulateOutput b = run_simulate(cfg, 8, false, true);
    CHECK(to_string(a.summary) == to_string(b.summary));
    CHECK(to_string(a.per_rep) == to_string(b.per_rep));
    const SimulateOutput c = run_simulate(cfg, 1, false, true);
    CHECK(to_string(a.summary) == to_string(c.summary));

    // every emitted table parses back with its shape intact
    for (const CsvTable* t : {&a.summary, &a.per_rep, &a.buckets}) {
        std::istringstream in(to_string(*t));
        const CsvTable back = parse_csv(in);
        CHECK(back.header == t->header);
        CHECK(back.rows.size() == t->rows.size());
    }
    const CsvTable wide = pivot_wide(a.summary);
    CHECK(wide.rows.size() * 4 == a.summary.rows.size());

    // percentile report: 19 percentiles + trimmed mean per (level, method, stat)
    const CsvTable pct = percentile_report(a.per_rep);
    CHECK(pct.rows.size() == 3 * 3 * 4 * 20);
    const std::size_t c_q = static_cast<std::size_t>(pct.column("quantity"));
    CHECK(pct.rows[0][c_q] == "p5");
    CHECK(pct.rows[19][c_q] == "trimmed_mean_10");
}

TEST_CASE("scenario config: unknown keys and invalid values are hard errors") {
    json good = {
        {"seed", 1},  {"n_top", {20}},        {"phi", {0.5}},
        {"sigma2", {1.0}}, {"ks", {{4, 1}}},  {"h", {1}},
        {"mode", "fixed"}, {"replications", 2}, {"train_frac", 0.75},
        {"methods", {"bottom_up"}},
    };
    CHECK_NOTHROW(ScenarioConfig::parse(good));

    json bad = good;
    bad["typo_key"] = 1;
    CHECK_THROWS_AS(ScenarioConfig::parse(bad), ConfigError);

    json bad2 = good;
    bad2["train_frac"] = 1.5;
    CHECK_THROWS_AS(ScenarioConfig::parse(bad2), ConfigError);

    json bad3 = good;
    bad3["ks"] = {{4, 3, 1}};
    CHECK_THROWS_AS(ScenarioConfig::parse(bad3), std::invalid_argument);

    json bad4 = good;
    bad4["methods"] = {"unknown_method"};
    CHECK_THROWS_AS(ScenarioConfig::parse(bad4), ConfigError);

    json bad5 = good;
    bad5["arma"] = {{"p", 1}, {"q", 0}, {"n_draws", 2}, {"series_per_draw", 2}};
    CHECK_THROWS_AS(ScenarioConfig::parse(bad5), ConfigError); // phi and arma together

    json obj_methods = good;
    obj_methods["methods"] = {"bottom_up", json{{"spectral", {{"nu", 0.5}, {"n_eig", 2}}}},
                              json{{"shrinkage", {{"lambda", 0.4}}}}};
    const ScenarioConfig c = ScenarioConfig::parse(obj_methods);
    REQUIRE(c.methods.size() == 3);
    CHECK(c.methods[1].cov.nu == 0.5);
    CHECK(c.methods[2].cov.lambda == 0.4);

    // stock aggregation is rejected at parse time
    json stock = good;
    stock["aggregation"] = "stock";
    CHECK_THROWS_AS(ScenarioConfig::parse(stock), ConfigError);
}

TEST_CASE("config hash: stable, seed-sensitive") {
    json a = {{"x", 1}};
    json b = {{"x", 2}};
    CHECK(config_hash(a) == config_hash(a));
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("csv: doubles round-trip bit-exactly") {
    RngStream rng(313);
    CsvTable t;
    t.header = {"a", "b"};
    std::vector<double> values;
    for (int i = 0; i < 200; ++i) {
        const double v = std::exp(20.0 * (rng.uniform01() - 0.5)) * rng.gaussian();
        values.push_back(v);
        t.rows.push_back({format_double(v), std::to_string(i)});
    }
    t.rows.push_back({"NA", "200"});

    const std::string path = temp_path("thr_csv_roundtrip.csv");
    write_csv(path, t);
    const CsvTable back = read_csv(path);
    REQUIRE(back.rows.size() == t.rows.size());
    for (int i = 0; i < 200; ++i) {
        const double v = parse_double(back.rows[static_cast<std::size_t>(i)][0], i + 2, 1);
        CHECK(v == values[static_cast<std::size_t>(i)]);
    }
    CHECK(std::isnan(parse_double(back.rows[200][0], 202, 1)));
    std::remove(path.c_str());
}

TEST_CASE("csv: parse errors carry line and column") {
    std::istringstream bad("a,b\n1,2\n3\n");
    CHECK_THROWS_AS(parse_csv(bad), ParseError);
    try {
        std::istringstream again("a,b\n1,2\n3\n");
        parse_csv(again);
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
    CHECK_THROWS_AS(parse_double("abc", 4, 2), ParseError);
}

TEST_CASE("run_mcb round-trips through files") {
    CsvTable in;
    in.header = {"series", "method", "value"};
    const std::vector<std::string> methods = {"m1", "m2", "m3"};
    RngStream rng(414);
    MatrixXd e(10, 3);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 3; ++j) {
            e(i, j) = std::floor(rng.uniform01() * 4.0);
            in.rows.push_back({"s" + std::to_string(i), methods[static_cast<std::size_t>(j)],
                               format_double(e(i, j))});
        }
    const CsvTable out = run_mcb(in, 0.05);
    REQUIRE(out.rows.size() == 3);
    const MCBResult direct = mcb_test(e, 0.05, methods);
    const std::size_t c_m = static_cast<std::size_t>(out.column("method"));
    const std::size_t c_r = static_cast<std::size_t>(out.column("mean_rank"));
    for (int j = 0; j < 3; ++j) {
        CHECK(out.rows[static_cast<std::size_t>(j)][c_m] ==
              methods[static_cast<std::size_t>(j)]);
        CHECK(parse_double(out.rows[static_cast<std::size_t>(j)][c_r], 2, 2) ==
              direct.mean_ranks(j));
    }

    CsvTable incomplete = in;
    incomplete.rows.pop_back();
    CHECK_THROWS_AS(run_mcb(incomplete, 0.05), InsufficientData);
}

TEST_CASE("run_dataset on a synthetic series") {
    // write a small CSV with an AR(1) bottom series
    ArmaModel gen;
    gen.phi = VectorXd::Constant(1, 0.6);
    const VectorXd y = simulate(gen, 30 * 4, -1, 515);
    const std::string path = temp_path("thr_dataset_fixture.csv");
    {
        CsvTable t;
        t.header = {"date", "value"};
        for (long i = 0; i < y.size(); ++i)
            t.rows.push_back({std::to_string(i), format_double(y(i))});
        write_csv(path, t);
    }
    json j = {
        {"input", path},
        {"value_column", "value"},
        {"ks", {4, 1}},
        {"train_frac", 0.8},
        {"demean", true},
        {"mode", "fixed"},
        {"bottom_order", {1, 0, 0}},
        {"methods", {"bottom_up", "ols", "full"}},
    };
    const DatasetSpec spec = DatasetSpec::parse(j);
    const CsvTable out = run_dataset(spec);
    REQUIRE(out.rows.size() == 9); // 3 methods x (2 levels + overall)
    const int c_level = out.column("level");
    const int c_method = out.column("method");
    const int c_test_rmse = out.column("test_rmse");
    bool saw_bu_bottom = false;
    for (const auto& row : out.rows) {
        if (row[static_cast<std::size_t>(c_method)] == "bottom_up" &&
            row[static_cast<std::size_t>(c_level)] == "2") {
            CHECK(parse_double(row[static_cast<std::size_t>(c_test_rmse)], 2, 1) == 0.0);
            saw_bu_bottom = true;
        }
    }
    CHECK(saw_bu_bottom);
    std::remove(path.c_str());
}

TEST_CASE("run_dataset rejects malformed input") {
    const std::string path = temp_path("thr_dataset_bad.csv");
    {
        std::ofstream f(path);
        f << "date,value\n1,2.5\n2,oops\n3,4.0\n";
    }
    json j = {
        {"input", path},        {"value_column", "value"}, {"ks", {2, 1}},
        {"train_frac", 0.8},    {"mode", "fixed"},         {"bottom_order", {0, 0, 0}},
        {"methods", {"bottom_up"}},
    };
    const DatasetSpec spec = DatasetSpec::parse(j);
    try {
        run_dataset(spec);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 3); // the offending line
    }
    std::remove(path.c_str());
}

TEST_CASE("verify_theorem outputs") {
    SECTION("theoretical mode emits the exact bottom-up pattern") {
        const CsvTable t = verify_theorem_theoretical(0.8, 1.0, 4);
        REQUIRE(t.rows.size() == 25);
        const std::size_t c_row = static_cast<std::size_t>(t.column("row"));
        const std::size_t c_col = static_cast<std::size_t>(t.column("col"));
        const std::size_t c_val = static_cast<std::size_t>(t.column("value"));
        for (const auto& row : t.rows) {
            const int i = std::stoi(row[c_row]), j = std::stoi(row[c_col]);
            const double v = parse_double(row[c_val], 2, 5);
            const double expected = (j == 1) ? 0.0 : ((i == 1 || i == j) ? 1.0 : 0.0);
            CHECK(std::abs(v - expected) < 1e-8);
        }
        CHECK(t.rows[0][static_cast<std::size_t>(t.column("row_label"))] == "1-1");
        CHECK(t.rows[6][static_cast<std::size_t>(t.column("col_label"))] == "2-1");
    }
    SECTION("sample mode with one replication reports no standard errors") {
        const CsvTable t = verify_theorem_sample(0.8, 1.0, {4, 1}, 1, 60, 5, 1);
        REQUIRE(t.rows.size() == 25);
        CHECK(t.rows[0][static_cast<std::size_t>(t.column("stderr"))] == "NA");
        CHECK(t.rows[0][static_cast<std::size_t>(t.column("n_reps_used"))] == "1");
    }
}

TEST_CASE("aggtheory_report") {
    const AggtheoryReport r = aggtheory_report(1, 0, 0, 4);
    CHECK(r.text.find("ARIMA(1,0,<=1)") != std::string::npos);
    CHECK_FALSE(r.w1.has_value());

    const AggtheoryReport r2 = aggtheory_report(1, 1, 2, 4);
    CHECK(r2.text.find("ARIMA(1,1,<=2)") != std::string::npos);

    const AggtheoryReport r3 = aggtheory_report(1, 0, 0, 4, 0.8, 1.0);
    REQUIRE(r3.w1.has_value());
    CHECK(r3.w1->rows.size() == 25);
    CHECK(r3.text.find("beta = 0.4096") != std::string::npos);

    CHECK_THROWS_AS(aggtheory_report(2, 0, 0, 4, 0.5, 1.0), UnsupportedModel);
}
