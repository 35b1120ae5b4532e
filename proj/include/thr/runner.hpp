#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "thr/aggtheory.hpp"
#include "thr/arma.hpp"
#include "thr/config.hpp"
#include "thr/csv.hpp"
#include "thr/evaluate.hpp"

namespace thr {

/// Run fn(0..n_tasks-1) across a worker pool. Work items only write to
/// their own result slot, so output is independent of the worker count.
inline void run_parallel(std::size_t n_tasks, int jobs,
                         const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), n_tasks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_tasks) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace detail {

/// One point of the scenario grid.
struct ScenarioCell {
    int index = 0;
    int n_top = 0;
    double phi = std::numeric_limits<double>::quiet_NaN(); // ar1 mode
    int draw_index = -1;                                   // arma mode
    ArmaModel generator;
    int gen_p = 1, gen_q = 0;
    double sigma2 = 1.0;
    std::vector<int> ks;
    int h = 1;
};

inline std::vector<ScenarioCell> expand_grid(const ScenarioConfig& cfg) {
    std::vector<ScenarioCell> cells;
    const int n_models = cfg.arma ? cfg.arma->n_draws : static_cast<int>(cfg.phi.size());
    for (int n_top : cfg.n_top) {
        for (int mi = 0; mi < n_models; ++mi) {
            for (double s2 : cfg.sigma2) {
                for (const auto& ks : cfg.ks_sets) {
                    for (int h : cfg.horizons) {
                        ScenarioCell c;
                        c.index = static_cast<int>(cells.size());
                        c.n_top = n_top;
                        c.sigma2 = s2;
                        c.ks = ks;
                        c.h = h;
                        if (cfg.arma) {
                            c.draw_index = mi;
                            RngStream rng = RngStream::derive(
                                cfg.seed, {0x0Du /*draws*/, static_cast<std::uint64_t>(mi)});
                            c.generator = draw_stationary(cfg.arma->p, cfg.arma->q, rng);
                            c.generator.sigma2 = s2;
                            c.gen_p = cfg.arma->p;
                            c.gen_q = cfg.arma->q;
                        } else {
                            c.phi = cfg.phi[static_cast<std::size_t>(mi)];
                            c.generator.phi = VectorXd::Constant(1, c.phi);
                            c.generator.theta = VectorXd();
                            c.generator.sigma2 = s2;
                            c.gen_p = 1;
                            c.gen_q = 0;
                        }
                        cells.push_back(std::move(c));
                    }
                }
            }
        }
    }
    return cells;
}

inline std::vector<ArmaSpec> fixed_level_specs(const std::vector<int>& ks, int p, int d, int q) {
    std::vector<ArmaSpec> specs;
    specs.reserve(ks.size());
    for (int k : ks) specs.push_back(ArmaSpec{p, d, aggregated_order(p, d, q, k)});
    return specs;
}

struct RepOutcome {
    std::vector<EvalReport> reports; // one per method, config order
    bool failed = false;
    std::string error;
};

inline RepOutcome run_replication(const ScenarioConfig& cfg, const ScenarioCell& cell, int rep,
                                  bool allow_pinv) {
    RepOutcome out;
    try {
        RngStream rng = RngStream::derive(cfg.seed, {static_cast<std::uint64_t>(cell.index),
                                                     static_cast<std::uint64_t>(rep)});
        const TemporalHierarchy hier(cell.ks);
        const VectorXd bottom =
            simulate(cell.generator, static_cast<long>(cell.n_top) * hier.m(), rng);
        const HierarchySeries hs = build_hierarchy_series(bottom, hier);

        std::vector<ArmaSpec> specs;
        if (cfg.auto_select) {
            const int I_train = static_cast<int>(std::floor(cfg.train_frac * hs.n_periods));
            for (int l = 0; l < hier.n_levels(); ++l) {
                const int M = hier.level_size(l);
                specs.push_back(select_order(hs.levels[static_cast<std::size_t>(l)].head(
                                                 static_cast<long>(I_train) * M),
                                             cfg.auto_max_p, cfg.auto_max_q, 0)
                                    .spec);
            }
        } else {
            specs = fixed_level_specs(cell.ks, cell.gen_p, 0, cell.gen_q);
        }

        const ProtocolContext ctx =
            prepare_protocol(hs, specs, cell.h, cfg.train_frac, allow_pinv);
        for (const Method& m : cfg.methods) {
            Method resolved = m;
            if (m.kind == Method::Kind::Mint && m.cov.kind == CovSpec::Kind::TheoreticalAr1) {
                resolved.cov.phi = cell.phi;
                resolved.cov.sigma2 = cell.sigma2;
            }
            out.reports.push_back(evaluate_method(ctx, resolved));
        }
    } catch (const Error& e) {
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

inline std::string ks_label(const std::vector<int>& ks) {
    std::string s;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(ks[i]);
    }
    return s;
}

struct Accumulator {
    double sum = 0.0, sumsq = 0.0;
    int n = 0;
    void add(double v) {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    double mean() const { return n ? sum / n : std::numeric_limits<double>::quiet_NaN(); }
    double stderr_mean() const {
        if (n < 2) return std::numeric_limits<double>::quiet_NaN();
        const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1));
        return std::sqrt(var / n);
    }
};

inline constexpr std::array<const char*, 4> kStatNames = {"train_rmse", "test_rmse",
                                                          "train_rmae", "test_rmae"};

inline double stat_value(const LevelRow& row, int stat) {
    switch (stat) {
        case 0: return row.train_rmse;
        case 1: return row.test_rmse;
        case 2: return row.train_rmae;
        default: return row.test_rmae;
    }
}

// labels stay comma-free so the CSV needs no quoting
inline std::string phi_bucket(double phi) {
    if (phi <= -0.5) return "[-0.9..-0.5]";
    if (phi <= 0.5) return "(-0.5..0.5]";
    return "(0.5..0.9]";
}

} // namespace detail

struct SimulateOutput {
    CsvTable summary;
    CsvTable per_rep;
    CsvTable buckets;
};

/// Percentile table of per-replication statistics pooled over all grid
/// cells, per (level, method, stat): percentiles 5..95 plus the 10%
/// trimmed mean. Input is the per_rep table of run_simulate.
inline CsvTable percentile_report(const CsvTable& per_rep) {
    const int c_level = per_rep.column("level"), c_method = per_rep.column("method"),
              c_stat = per_rep.column("stat"), c_value = per_rep.column("value"),
              c_avail = per_rep.column("available"), c_seed = per_rep.column("seed"),
              c_hash = per_rep.column("config_hash");
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> pools;
    std::vector<std::tuple<std::string, std::string, std::string>> order;
    std::string seed = "NA", hash = "NA";
    for (std::size_t r = 0; r < per_rep.rows.size(); ++r) {
        const auto& row = per_rep.rows[r];
        if (row[static_cast<std::size_t>(c_avail)] != "1") continue;
        seed = row[static_cast<std::size_t>(c_seed)];
        hash = row[static_cast<std::size_t>(c_hash)];
        const auto key = std::make_tuple(row[static_cast<std::size_t>(c_level)],
                                         row[static_cast<std::size_t>(c_method)],
                                         row[static_cast<std::size_t>(c_stat)]);
        if (!pools.count(key)) order.push_back(key);
        pools[key].push_back(parse_double(row[static_cast<std::size_t>(c_value)],
                                          static_cast<int>(r) + 2, c_value + 1));
    }
    CsvTable t;
    t.header = {"seed", "config_hash", "level", "method", "stat", "quantity", "value"};
    for (const auto& key : order) {
        const auto& [level, method, stat] = key;
        for (const auto& [p, v] : percentile_summary(pools[key]))
            t.rows.push_back({seed, hash, level, method, stat, "p" + std::to_string(p),
                              format_double(v)});
        t.rows.push_back({seed, hash, level, method, stat, "trimmed_mean_10",
                          format_double(trimmed_mean(pools[key], 0.10))});
    }
    return t;
}

/// Expand the scenario grid, run all replications (optionally across a
/// worker pool), and aggregate. Output is byte-identical for any job
/// count: every replication derives its RNG stream from
/// (seed, cell index, replication index) alone.
inline SimulateOutput run_simulate(const ScenarioConfig& cfg, int jobs, bool allow_pinv = false,
                                   bool want_buckets = false) {
    for (const Method& m : cfg.methods)
        if (m.kind == Method::Kind::Mint && m.cov.kind == CovSpec::Kind::TheoreticalAr1)
            for (const auto& ks : cfg.ks_sets)
                if (ks.size() != 2)
                    throw ConfigError("theoretical_ar1 requires two-level hierarchies");
    if (want_buckets && cfg.arma)
        throw ConfigError("phi buckets require an explicit phi grid");

    const std::vector<detail::ScenarioCell> cells = detail::expand_grid(cfg);
    const int reps = cfg.arma ? cfg.arma->series_per_draw : cfg.replications;
    const std::size_t n_tasks = cells.size() * static_cast<std::size_t>(reps);

    std::vector<detail::RepOutcome> outcomes(n_tasks);
    run_parallel(n_tasks, jobs, [&](std::size_t t) {
        const std::size_t ci = t / static_cast<std::size_t>(reps);
        const int rep = static_cast<int>(t % static_cast<std::size_t>(reps));
        outcomes[t] = detail::run_replication(cfg, cells[ci], rep, allow_pinv);
    });

    const std::vector<std::string> scenario_header = {
        "seed", "config_hash", "cell", "n_top", "model", "phi",  "p",
        "q",    "draw",        "sigma2", "ks",  "h",     "mode"};
    const std::string seed_s = std::to_string(cfg.seed);
    const std::string mode_s = cfg.auto_select ? "auto" : "fixed";

    auto scenario_cells = [&](const detail::ScenarioCell& c) {
        std::vector<std::string> v;
        v.push_back(seed_s);
        v.push_back(cfg.hash);
        v.push_back(std::to_string(c.index));
        v.push_back(std::to_string(c.n_top));
        v.push_back(cfg.arma ? "arma" : "ar1");
        v.push_back(cfg.arma ? "NA" : format_double(c.phi));
        v.push_back(std::to_string(c.gen_p));
        v.push_back(std::to_string(c.gen_q));
        v.push_back(cfg.arma ? std::to_string(c.draw_index) : "NA");
        v.push_back(format_double(c.sigma2));
        v.push_back(detail::ks_label(c.ks));
        v.push_back(std::to_string(c.h));
        v.push_back(mode_s);
        return v;
    };

    SimulateOutput out;
    out.summary.header = scenario_header;
    for (const char* extra : {"level", "method", "stat", "value", "stderr", "n_reps",
                              "n_available"})
        out.summary.header.push_back(extra);
    out.per_rep.header = scenario_header;
    for (const char* extra : {"rep", "level", "method", "stat", "value", "available"})
        out.per_rep.header.push_back(extra);

    // bucket accumulators: key = (n_top, sigma2, ks, h, bucket, level, method, stat)
    struct BucketKey {
        int n_top;
        double sigma2;
        std::string ks, bucket, level;
        int method, stat, h;
        bool operator<(const BucketKey& o) const {
            return std::tie(n_top, sigma2, ks, h, bucket, level, method, stat) <
                   std::tie(o.n_top, o.sigma2, o.ks, o.h, o.bucket, o.level, o.method, o.stat);
        }
    };
    std::map<BucketKey, detail::Accumulator> bucket_acc;

    for (const auto& cell : cells) {
        const std::vector<std::string> scen = scenario_cells(cell);
        const int L = static_cast<int>(cell.ks.size());
        std::vector<std::string> level_names;
        for (int l = 1; l <= L; ++l) level_names.push_back(std::to_string(l));
        level_names.push_back("overall");

        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            for (std::size_t li = 0; li < level_names.size(); ++li) {
                for (int stat = 0; stat < 4; ++stat) {
                    detail::Accumulator acc;
                    for (int rep = 0; rep < reps; ++rep) {
                        const detail::RepOutcome& rc =
                            outcomes[static_cast<std::size_t>(cell.index) *
                                         static_cast<std::size_t>(reps) +
                                     static_cast<std::size_t>(rep)];
                        std::string value = "NA";
                        bool avail = false;
                        if (!rc.failed && rc.reports[mi].available) {
                            const double v = detail::stat_value(rc.reports[mi].rows[li], stat);
                            value = format_double(v);
                            avail = true;
                            acc.add(v);
                            if (want_buckets)
                                bucket_acc[BucketKey{cell.n_top, cell.sigma2,
                                                     detail::ks_label(cell.ks),
                                                     detail::phi_bucket(cell.phi),
                                                     level_names[li], static_cast<int>(mi),
                                                     stat, cell.h}]
                                    .add(v);
                        }
                        std::vector<std::string> row = scen;
                        row.push_back(std::to_string(rep));
                        row.push_back(level_names[li]);
                        row.push_back(cfg.methods[mi].name);
                        row.push_back(detail::kStatNames[static_cast<std::size_t>(stat)]);
                        row.push_back(value);
                        row.push_back(avail ? "1" : "0");
                        out.per_rep.rows.push_back(std::move(row));
                    }
                    std::vector<std::string> row = scen;
                    row.push_back(level_names[li]);
                    row.push_back(cfg.methods[mi].name);
                    row.push_back(detail::kStatNames[static_cast<std::size_t>(stat)]);
                    row.push_back(acc.n ? format_double(acc.mean()) : "NA");
                    row.push_back(acc.n >= 2 ? format_double(acc.stderr_mean()) : "NA");
                    row.push_back(std::to_string(reps));
                    row.push_back(std::to_string(acc.n));
                    out.summary.rows.push_back(std::move(row));
                }
            }
        }
    }

    if (want_buckets) {
        out.buckets.header = {"seed",  "config_hash", "n_top", "sigma2", "ks",
                              "h",     "mode",        "bucket", "level",  "method",
                              "stat",  "value",       "stderr", "n_obs"};
        for (const auto& [key, acc] : bucket_acc) {
            std::vector<std::string> row;
            row.push_back(seed_s);
            row.push_back(cfg.hash);
            row.push_back(std::to_string(key.n_top));
            row.push_back(format_double(key.sigma2));
            row.push_back(key.ks);
            row.push_back(std::to_string(key.h));
            row.push_back(mode_s);
            row.push_back(key.bucket);
            row.push_back(key.level);
            row.push_back(cfg.methods[static_cast<std::size_t>(key.method)].name);
            row.push_back(detail::kStatNames[static_cast<std::size_t>(key.stat)]);
            row.push_back(acc.n ? format_double(acc.mean()) : "NA");
            row.push_back(acc.n >= 2 ? format_double(acc.stderr_mean()) : "NA");
            row.push_back(std::to_string(acc.n));
            out.buckets.rows.push_back(std::move(row));
        }
    }
    return out;
}

/// Wide pivot of the summary table: one row per (scenario, level, method),
/// one value/stderr column pair per statistic.
inline CsvTable pivot_wide(const CsvTable& summary) {
    const int c_stat = summary.column("stat");
    const int c_value = summary.column("value");
    const int c_stderr = summary.column("stderr");

    CsvTable t;
    std::vector<int> key_cols;
    for (std::size_t c = 0; c < summary.header.size(); ++c) {
        if (static_cast<int>(c) == c_stat || static_cast<int>(c) == c_value ||
            static_cast<int>(c) == c_stderr)
            continue;
        key_cols.push_back(static_cast<int>(c));
        t.header.push_back(summary.header[c]);
    }
    for (const char* s : detail::kStatNames) {
        t.header.push_back(s);
        t.header.push_back(std::string(s) + "_se");
    }

    std::map<std::vector<std::string>, std::map<std::string, std::pair<std::string, std::string>>>
        grouped;
    std::vector<std::vector<std::string>> order;
    for (const auto& row : summary.rows) {
        std::vector<std::string> key;
        for (int c : key_cols) key.push_back(row[static_cast<std::size_t>(c)]);
        if (!grouped.count(key)) order.push_back(key);
        grouped[key][row[static_cast<std::size_t>(c_stat)]] = {
            row[static_cast<std::size_t>(c_value)], row[static_cast<std::size_t>(c_stderr)]};
    }
    for (const auto& key : order) {
        std::vector<std::string> row = key;
        for (const char* s : detail::kStatNames) {
            const auto it = grouped[key].find(s);
            row.push_back(it == grouped[key].end() ? "NA" : it->second.first);
            row.push_back(it == grouped[key].end() ? "NA" : it->second.second);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Axis label in level-step form: "1-1" is the top node,
/// "l-z" the z-th step of level l.
inline std::string node_label(const TemporalHierarchy& hier, int stacked_index) {
    int pos = 0;
    for (int l = 0; l < hier.n_levels(); ++l) {
        const int M = hier.level_size(l);
        if (stacked_index < pos + M)
            return std::to_string(l + 1) + "-" + std::to_string(stacked_index - pos + 1);
        pos += M;
    }
    throw IndexOutOfRange("stacked index out of range");
}

/// Theoretical SG for the two-level {k,1} hierarchy (closed-form W1).
inline CsvTable verify_theorem_theoretical(double phi, double sigma2, int k) {
    const TheoremCheck chk = optimal_G_theoretical(phi, sigma2, k);
    const TemporalHierarchy hier({k, 1});
    const std::string hash = config_hash(
        json{{"cmd", "verify-theorem"}, {"mode", "theoretical"}, {"phi", phi},
             {"sigma2", sigma2}, {"k", k}});
    CsvTable t;
    t.header = {"seed", "config_hash", "row", "col", "row_label", "col_label", "value"};
    for (int i = 0; i < chk.SG.rows(); ++i)
        for (int j = 0; j < chk.SG.cols(); ++j)
            t.rows.push_back({"NA", hash, std::to_string(i + 1), std::to_string(j + 1),
                              node_label(hier, i), node_label(hier, j),
                              format_double(chk.SG(i, j))});
    return t;
}

/// Sample-based SG: simulate AR(1) series, fit fixed-order models per
/// level, estimate the full covariance from rolling residuals and average
/// the resulting transformation matrix over replications.
inline CsvTable verify_theorem_sample(double phi, double sigma2, const std::vector<int>& ks,
                                      int n_reps, int n_top, std::uint64_t seed, int jobs) {
    const TemporalHierarchy hier(ks);
    const int n = hier.stacked_size();
    std::vector<std::optional<MatrixXd>> sgs(static_cast<std::size_t>(n_reps));

    run_parallel(static_cast<std::size_t>(n_reps), jobs, [&](std::size_t r) {
        try {
            RngStream rng = RngStream::derive(seed, {0x56u /*verify*/, r});
            ArmaModel gen;
            gen.phi = VectorXd::Constant(1, phi);
            gen.sigma2 = sigma2;
            const VectorXd bottom = simulate(gen, static_cast<long>(n_top) * hier.m(), rng);
            const HierarchySeries hs = build_hierarchy_series(bottom, hier);
            const std::vector<ArmaSpec> specs = detail::fixed_level_specs(ks, 1, 0, 0);

            std::vector<FitResult> fits;
            int o_min = 1;
            for (int l = 0; l < hier.n_levels(); ++l) {
                const ArmaSpec& s = specs[static_cast<std::size_t>(l)];
                const int M = hier.level_size(l);
                fits.push_back(fit(hs.levels[static_cast<std::size_t>(l)], s));
                o_min = std::max(o_min, (s.p + s.d + s.q + 1 + M - 1) / M);
            }
            const int h = 1;
            std::vector<VectorXd> residuals;
            for (int i = o_min + h; i <= hs.n_periods; ++i) {
                const VectorXd base = detail::stacked_base_forecast(hs, fits, i, h);
                residuals.push_back(stack_period(hs, i) - base);
            }
            MatrixXd R(static_cast<long>(residuals.size()), n);
            for (std::size_t i = 0; i < residuals.size(); ++i)
                R.row(static_cast<long>(i)) = residuals[i].transpose();
            CovSpec spec;
            spec.kind = CovSpec::Kind::FullSample;
            const WMatrix W = estimate_W(R, spec, build_summing_matrix(hier));
            const ReconMapping m = mint_G(build_summing_matrix(hier), W);
            sgs[r] = m.SG;
        } catch (const Error&) {
            sgs[r] = std::nullopt; // replication dropped, reported via n_used
        }
    });

    MatrixXd sum = MatrixXd::Zero(n, n), sumsq = MatrixXd::Zero(n, n);
    int used = 0;
    for (const auto& sg : sgs) {
        if (!sg) continue;
        sum += *sg;
        sumsq += sg->cwiseProduct(*sg);
        ++used;
    }
    if (used == 0) throw SingularCovariance("no replication produced an estimable SG");

    const std::string hash = config_hash(
        json{{"cmd", "verify-theorem"}, {"mode", "sample"}, {"phi", phi}, {"sigma2", sigma2},
             {"ks", ks}, {"n_reps", n_reps}, {"n_top", n_top}, {"seed", seed}});
    CsvTable t;
    t.header = {"seed",      "config_hash", "row",  "col",   "row_label",
                "col_label", "mean",        "stderr", "n_reps_used"};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double mean = sum(i, j) / used;
            std::string se = "NA";
            if (used >= 2) {
                const double var =
                    std::max(0.0, (sumsq(i, j) - sum(i, j) * sum(i, j) / used) / (used - 1));
                se = format_double(std::sqrt(var / used));
            }
            t.rows.push_back({std::to_string(seed), hash, std::to_string(i + 1),
                              std::to_string(j + 1), node_label(hier, i), node_label(hier, j),
                              format_double(mean), se, std::to_string(used)});
        }
    }
    return t;
}

/// Ingest a bottom-level series from CSV and run the split protocol for
/// every configured method. Output mirrors the real-data result tables.
inline CsvTable run_dataset(const DatasetSpec& spec, bool allow_pinv = false) {
    const CsvTable input = read_csv(spec.input);
    const int col = input.column(spec.value_column);
    VectorXd bottom(static_cast<long>(input.rows.size()));
    for (std::size_t i = 0; i < input.rows.size(); ++i)
        bottom(static_cast<long>(i)) = parse_double(input.rows[i][static_cast<std::size_t>(col)],
                                                    static_cast<int>(i) + 2, col + 1);
    for (long i = 0; i < bottom.size(); ++i)
        if (std::isnan(bottom(i)))
            throw ParseError("missing value in series", static_cast<int>(i) + 2, col + 1);

    const TemporalHierarchy hier(spec.ks);
    if (bottom.size() < hier.m())
        throw FrequencyMismatch("series shorter than one top-level period of " +
                                std::to_string(hier.m()));
    if (spec.demean) bottom.array() -= bottom.mean();

    const HierarchySeries hs = build_hierarchy_series(bottom, hier);
    std::vector<ArmaSpec> level_specs;
    if (spec.auto_select) {
        const int I_train = static_cast<int>(std::floor(spec.train_frac * hs.n_periods));
        for (int l = 0; l < hier.n_levels(); ++l) {
            const int M = hier.level_size(l);
            level_specs.push_back(select_order(hs.levels[static_cast<std::size_t>(l)].head(
                                                   static_cast<long>(I_train) * M),
                                               spec.auto_max_p, spec.auto_max_q, spec.auto_d)
                                      .spec);
        }
    } else {
        level_specs = detail::fixed_level_specs(spec.ks, spec.bottom_order[0],
                                                spec.bottom_order[1], spec.bottom_order[2]);
    }

    const ProtocolContext ctx =
        prepare_protocol(hs, level_specs, spec.h, spec.train_frac, allow_pinv);

    CsvTable t;
    t.header = {"seed",          "config_hash",    "level",          "factor",
                "method",        "p",              "d",              "q",
                "train_base_mse", "test_base_mse", "train_recon_mse", "test_recon_mse",
                "train_rmse",    "test_rmse",      "train_rmae",     "test_rmae",
                "available"};
    for (const Method& m : spec.methods) {
        const EvalReport rep = evaluate_method(ctx, m);
        for (std::size_t li = 0; li < rep.rows.size(); ++li) {
            const LevelRow& row = rep.rows[li];
            const bool is_overall = row.level == "overall";
            const int l = is_overall ? -1 : static_cast<int>(li);
            std::vector<std::string> cells;
            cells.push_back(std::to_string(spec.seed));
            cells.push_back(spec.hash);
            cells.push_back(row.level);
            cells.push_back(is_overall ? "NA" : std::to_string(hier.ks()[static_cast<std::size_t>(l)]));
            cells.push_back(m.name);
            if (is_overall) {
                cells.push_back("NA");
                cells.push_back("NA");
                cells.push_back("NA");
            } else {
                const ArmaSpec& s = level_specs[static_cast<std::size_t>(l)];
                cells.push_back(std::to_string(s.p));
                cells.push_back(std::to_string(s.d));
                cells.push_back(std::to_string(s.q));
            }
            cells.push_back(format_double(row.train_base_mse));
            cells.push_back(format_double(row.test_base_mse));
            cells.push_back(format_double(row.train_recon_mse));
            cells.push_back(format_double(row.test_recon_mse));
            cells.push_back(format_double(row.train_rmse));
            cells.push_back(format_double(row.test_rmse));
            cells.push_back(format_double(row.train_rmae));
            cells.push_back(format_double(row.test_rmae));
            cells.push_back(rep.available ? "1" : "0");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

/// MCB ranking from a long-format CSV with columns series, method, value.
inline CsvTable run_mcb(const CsvTable& input, double alpha) {
    const int c_series = input.column("series");
    const int c_method = input.column("method");
    const int c_value = input.column("value");

    std::vector<std::string> series_ids, method_ids;
    std::map<std::pair<std::string, std::string>, double> values;
    for (std::size_t r = 0; r < input.rows.size(); ++r) {
        const auto& row = input.rows[r];
        const std::string& s = row[static_cast<std::size_t>(c_series)];
        const std::string& m = row[static_cast<std::size_t>(c_method)];
        if (std::find(series_ids.begin(), series_ids.end(), s) == series_ids.end())
            series_ids.push_back(s);
        if (std::find(method_ids.begin(), method_ids.end(), m) == method_ids.end())
            method_ids.push_back(m);
        values[{s, m}] = parse_double(row[static_cast<std::size_t>(c_value)],
                                      static_cast<int>(r) + 2, c_value + 1);
    }
    MatrixXd errors(static_cast<long>(series_ids.size()), static_cast<long>(method_ids.size()));
    for (std::size_t i = 0; i < series_ids.size(); ++i) {
        for (std::size_t j = 0; j < method_ids.size(); ++j) {
            const auto it = values.find({series_ids[i], method_ids[j]});
            if (it == values.end() || std::isnan(it->second))
                throw InsufficientData("missing error for series '" + series_ids[i] +
                                       "', method '" + method_ids[j] + "'");
            errors(static_cast<long>(i), static_cast<long>(j)) = it->second;
        }
    }
    const MCBResult res = mcb_test(errors, alpha, method_ids);
    const std::string hash =
        config_hash(json{{"cmd", "mcb"}, {"alpha", alpha}, {"input", to_string(input)}});

    CsvTable t;
    t.header = {"seed",       "config_hash", "method", "mean_rank",
                "lower",      "upper",       "half_width", "alpha",
                "n_series",   "best",        "indistinguishable_from_best"};
    for (std::size_t j = 0; j < method_ids.size(); ++j) {
        t.rows.push_back({"NA", hash, res.methods[j],
                          format_double(res.mean_ranks(static_cast<long>(j))),
                          format_double(res.lower(static_cast<long>(j))),
                          format_double(res.upper(static_cast<long>(j))),
                          format_double(res.half_width), format_double(res.alpha),
                          std::to_string(res.n_series),
                          (static_cast<int>(j) == res.best_index) ? "1" : "0",
                          res.indistinguishable[j] ? "1" : "0"});
    }
    return t;
}

struct AggtheoryReport {
    std::string text;
    std::optional<CsvTable> w1; ///< present when exact AR(1) parameters apply
};

/// Order bound for any (p,d,q,k); exact aggregate parameters and the W1
/// blocks when the source model is AR(1).
inline AggtheoryReport aggtheory_report(int p, int d, int q, int k,
                                        std::optional<double> phi = {},
                                        std::optional<double> sigma2 = {}) {
    const int r = aggregated_order(p, d, q, k);
    AggtheoryReport out;
    out.text = "ARIMA(" + std::to_string(p) + "," + std::to_string(d) + "," +
               std::to_string(q) + ") aggregated by k=" + std::to_string(k) + " -> ARIMA(" +
               std::to_string(p) + "," + std::to_string(d) + ",<=" + std::to_string(r) + ")\n";
    if (!phi && !sigma2) return out;
    if (!(phi && sigma2)) throw ConfigError("phi and sigma2 must be given together");
    if (p != 1 || d != 0 || q != 0)
        throw UnsupportedModel("exact aggregate parameters are available only for (1,0,0)");
    if (k < 2) throw UnsupportedModel("exact aggregate parameters require k >= 2");
    const AggregatedAr1 agg = aggregate_ar1(*phi, *sigma2, k);
    out.text += "beta = " + format_double(agg.beta) + "\n";
    out.text += "eta = " + format_double(agg.eta) + "\n";
    out.text += "sigma_star2 = " + format_double(agg.sigma_star2) + "\n";
    const MatrixXd W = theoretical_W1(*phi, *sigma2, k);
    const std::string hash = config_hash(json{
        {"cmd", "aggtheory"}, {"p", p}, {"d", d}, {"q", q}, {"k", k}, {"phi", *phi},
        {"sigma2", *sigma2}});
    CsvTable t;
    t.header = {"seed", "config_hash", "row", "col", "value"};
    for (int i = 0; i < W.rows(); ++i)
        for (int j = 0; j < W.cols(); ++j)
            t.rows.push_back({"NA", hash, std::to_string(i + 1), std::to_string(j + 1),
                              format_double(W(i, j))});
    out.w1 = t;
    return out;
}

} // namespace thr
