#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thr/arma.hpp"
#include "thr/errors.hpp"
#include "thr/hierarchy.hpp"
#include "thr/reconcile.hpp"

namespace thr {

/// Relative mean squared error: sum ||recon - actual||^2 over periods,
/// divided by the same for the base forecasts, minus one. Negative means
/// reconciliation improved on the base forecasts.
inline double rmse_rel(const std::vector<VectorXd>& recon, const std::vector<VectorXd>& base,
                       const std::vector<VectorXd>& actual) {
    if (recon.size() != base.size() || base.size() != actual.size())
        throw DimensionMismatch("forecast lists must be aligned");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        num += (recon[i] - actual[i]).squaredNorm();
        den += (base[i] - actual[i]).squaredNorm();
    }
    if (den == 0.0) throw ZeroBaseError("base forecasts have zero squared error");
    return num / den - 1.0;
}

/// Relative mean absolute error, the L1 counterpart of rmse_rel.
inline double rmae_rel(const std::vector<VectorXd>& recon, const std::vector<VectorXd>& base,
                       const std::vector<VectorXd>& actual) {
    if (recon.size() != base.size() || base.size() != actual.size())
        throw DimensionMismatch("forecast lists must be aligned");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        num += (recon[i] - actual[i]).lpNorm<1>();
        den += (base[i] - actual[i]).lpNorm<1>();
    }
    if (den == 0.0) throw ZeroBaseError("base forecasts have zero absolute error");
    return num / den - 1.0;
}

/// A reconciliation method to evaluate: either plain bottom-up or MinT
/// with one of the covariance estimators.
struct Method {
    enum class Kind { BottomUp, Mint };
    Kind kind = Kind::BottomUp;
    CovSpec cov;
    std::string name = "bottom_up";

    static Method bottom_up() { return {}; }
    static Method mint(const CovSpec& spec, std::string label = {}) {
        Method m;
        m.kind = Kind::Mint;
        m.cov = spec;
        m.name = label.empty() ? spec.label() : std::move(label);
        return m;
    }
};

/// Per-level error summary. Level labels run "1" (top) .. "p" (bottom),
/// plus "overall"; overall relative errors divide summed per-level mean
/// errors, never average the per-level ratios.
struct LevelRow {
    std::string level;
    double train_base_mse = 0, train_recon_mse = 0, test_base_mse = 0, test_recon_mse = 0;
    double train_base_mae = 0, train_recon_mae = 0, test_base_mae = 0, test_recon_mae = 0;
    double train_rmse = 0, test_rmse = 0, train_rmae = 0, test_rmae = 0;
};

struct EvalReport {
    std::string method;
    bool available = true;
    std::vector<LevelRow> rows;
};

/// Everything the protocol derives once per series: fitted models, base
/// forecasts, actuals, and the training residual matrix. Methods are then
/// evaluated against this shared state.
struct ProtocolContext {
    TemporalHierarchy hier;
    MatrixXd S;
    std::vector<FitResult> fits;
    int I = 0, I_train = 0, h = 1, o_min = 1;
    std::vector<int> train_targets, test_targets; // 1-based period indices
    std::vector<VectorXd> train_base, train_actual, test_base, test_actual;
    MatrixXd train_residuals; // one row per training target
    bool allow_pinv = false;
};

namespace detail {

inline VectorXd stacked_base_forecast(const HierarchySeries& hs,
                                      const std::vector<FitResult>& fits, int target, int h) {
    const TemporalHierarchy& hier = hs.hier;
    VectorXd out(hier.stacked_size());
    int pos = 0;
    for (int l = 0; l < hier.n_levels(); ++l) {
        const int M = hier.level_size(l);
        const long origin_len = static_cast<long>(target - h) * M;
        const VectorXd fc = forecast(fits[static_cast<std::size_t>(l)].model,
                                     hs.levels[static_cast<std::size_t>(l)].head(origin_len),
                                     h * M);
        out.segment(pos, M) = fc.segment(static_cast<long>(h - 1) * M, M);
        pos += M;
    }
    return out;
}

} // namespace detail

/// Fit per-level models on the first floor(train_frac * I) periods and
/// precompute base forecasts: rolling origins inside the training window,
/// then cumulative forecasts through the test window (parameters frozen,
/// conditioning on all actual data up to each origin).
inline ProtocolContext prepare_protocol(const HierarchySeries& hs,
                                        const std::vector<ArmaSpec>& specs, int h,
                                        double train_frac, bool allow_pinv = false) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("train_frac must lie in (0,1)");
    if (h < 1) throw std::invalid_argument("horizon must be >= 1");
    const TemporalHierarchy& hier = hs.hier;
    if (specs.size() != static_cast<std::size_t>(hier.n_levels()))
        throw DimensionMismatch("one ARMA spec per hierarchy level required");

    ProtocolContext ctx{hier, build_summing_matrix(hier)};
    ctx.h = h;
    ctx.I = hs.n_periods;
    ctx.I_train = static_cast<int>(std::floor(train_frac * hs.n_periods));
    ctx.allow_pinv = allow_pinv;

    int o_min = 1;
    for (int l = 0; l < hier.n_levels(); ++l) {
        const ArmaSpec& s = specs[static_cast<std::size_t>(l)];
        const int M = hier.level_size(l);
        const int need = s.p + s.d + s.q + 1;
        o_min = std::max(o_min, (need + M - 1) / M);
    }
    ctx.o_min = o_min;
    if (ctx.I_train < o_min + h)
        throw InsufficientData("not enough training periods for the requested models");

    for (int l = 0; l < hier.n_levels(); ++l) {
        const int M = hier.level_size(l);
        ctx.fits.push_back(fit(hs.levels[static_cast<std::size_t>(l)].head(
                                   static_cast<long>(ctx.I_train) * M),
                               specs[static_cast<std::size_t>(l)]));
    }

    for (int i = o_min + h; i <= ctx.I_train; ++i) ctx.train_targets.push_back(i);
    for (int i = std::max(ctx.I_train + 1, o_min + h); i <= ctx.I; ++i)
        ctx.test_targets.push_back(i);

    const int n = hier.stacked_size();
    ctx.train_residuals.resize(static_cast<long>(ctx.train_targets.size()), n);
    for (std::size_t j = 0; j < ctx.train_targets.size(); ++j) {
        const int i = ctx.train_targets[j];
        VectorXd base = detail::stacked_base_forecast(hs, ctx.fits, i, h);
        VectorXd actual = stack_period(hs, i);
        ctx.train_residuals.row(static_cast<long>(j)) = (actual - base).transpose();
        ctx.train_base.push_back(std::move(base));
        ctx.train_actual.push_back(std::move(actual));
    }
    for (int i : ctx.test_targets) {
        ctx.test_base.push_back(detail::stacked_base_forecast(hs, ctx.fits, i, h));
        ctx.test_actual.push_back(stack_period(hs, i));
    }
    return ctx;
}

namespace detail {

struct SplitStats {
    std::vector<double> base_sse, recon_sse, base_sae, recon_sae;
    std::vector<long> n_obs;
};

inline SplitStats accumulate_split(const ProtocolContext& ctx, const ReconMapping& mapping,
                                   const std::vector<VectorXd>& base,
                                   const std::vector<VectorXd>& actual) {
    const int L = ctx.hier.n_levels();
    SplitStats st;
    st.base_sse.assign(L, 0.0);
    st.recon_sse.assign(L, 0.0);
    st.base_sae.assign(L, 0.0);
    st.recon_sae.assign(L, 0.0);
    st.n_obs.assign(L, 0);
    for (std::size_t t = 0; t < base.size(); ++t) {
        const VectorXd recon = mapping.SG * base[t];
        int pos = 0;
        for (int l = 0; l < L; ++l) {
            const int M = ctx.hier.level_size(l);
            const auto eb = base[t].segment(pos, M) - actual[t].segment(pos, M);
            const auto er = recon.segment(pos, M) - actual[t].segment(pos, M);
            st.base_sse[l] += eb.squaredNorm();
            st.recon_sse[l] += er.squaredNorm();
            st.base_sae[l] += eb.template lpNorm<1>();
            st.recon_sae[l] += er.template lpNorm<1>();
            st.n_obs[l] += M;
            pos += M;
        }
    }
    return st;
}

/// Rolling-origin cross-validation of the spectral hyperparameters inside
/// the training window. Ties break toward the earlier grid entry.
inline CovSpec resolve_spectral_cv(const ProtocolContext& ctx, const CovSpec& spec) {
    if (spec.nu && spec.n_eig) return spec;
    const int n = static_cast<int>(ctx.S.rows());
    std::vector<double> nu_grid =
        spec.nu ? std::vector<double>{*spec.nu} : std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<int> eig_grid;
    if (spec.n_eig) {
        eig_grid.push_back(*spec.n_eig);
    } else {
        for (int e = 1; e <= std::min(n, 6); ++e) eig_grid.push_back(e);
    }

    const long nt = static_cast<long>(ctx.train_targets.size());
    long v_count = std::max<long>(3, nt / 3);
    if (nt - v_count < 2) v_count = nt - 2;
    if (v_count < 1)
        throw InsufficientResiduals("too few training periods for spectral cross-validation");
    const long v_start = nt - v_count;

    CovSpec best = spec;
    double best_score = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double nu : nu_grid) {
        for (int ne : eig_grid) {
            double score = 0.0;
            bool ok = true;
            std::vector<double> level_sse(static_cast<std::size_t>(ctx.hier.n_levels()), 0.0);
            for (long v = v_start; v < nt && ok; ++v) {
                try {
                    const WMatrix W = spectral_precision(ctx.train_residuals.topRows(v), nu, ne);
                    const ReconMapping m = mint_G(ctx.S, W, ctx.allow_pinv);
                    const VectorXd recon = m.SG * ctx.train_base[static_cast<std::size_t>(v)];
                    int pos = 0;
                    for (int l = 0; l < ctx.hier.n_levels(); ++l) {
                        const int M = ctx.hier.level_size(l);
                        level_sse[static_cast<std::size_t>(l)] +=
                            (recon.segment(pos, M) -
                             ctx.train_actual[static_cast<std::size_t>(v)].segment(pos, M))
                                .squaredNorm();
                        pos += M;
                    }
                } catch (const Error&) {
                    ok = false;
                }
            }
            if (!ok) continue;
            for (int l = 0; l < ctx.hier.n_levels(); ++l)
                score += level_sse[static_cast<std::size_t>(l)] /
                         static_cast<double>(ctx.hier.level_size(l));
            if (score < best_score) {
                best_score = score;
                best.nu = nu;
                best.n_eig = ne;
                found = true;
            }
        }
    }
    if (!found)
        throw SingularCovariance("no spectral hyperparameter candidate was estimable");
    return best;
}

} // namespace detail

/// Evaluate one method against the prepared context. A SingularCovariance
/// from the covariance estimate or the MinT solve yields an unavailable
/// report (the explicit "-" marker); all other errors propagate.
inline EvalReport evaluate_method(const ProtocolContext& ctx, const Method& method) {
    EvalReport rep;
    rep.method = method.name;

    ReconMapping mapping;
    try {
        if (method.kind == Method::Kind::BottomUp) {
            mapping = bottom_up_G(ctx.S);
        } else {
            CovSpec spec = method.cov;
            if (spec.kind == CovSpec::Kind::Spectral)
                spec = detail::resolve_spectral_cv(ctx, spec);
            const WMatrix W = estimate_W(ctx.train_residuals, spec, ctx.S);
            mapping = mint_G(ctx.S, W, ctx.allow_pinv);
        }
    } catch (const SingularCovariance&) {
        rep.available = false;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (int l = 0; l <= ctx.hier.n_levels(); ++l) {
            LevelRow row;
            row.level = (l < ctx.hier.n_levels()) ? std::to_string(l + 1) : "overall";
            row.train_base_mse = row.train_recon_mse = row.test_base_mse = row.test_recon_mse =
                nan;
            row.train_base_mae = row.train_recon_mae = row.test_base_mae = row.test_recon_mae =
                nan;
            row.train_rmse = row.test_rmse = row.train_rmae = row.test_rmae = nan;
            rep.rows.push_back(row);
        }
        return rep;
    }

    const detail::SplitStats tr =
        detail::accumulate_split(ctx, mapping, ctx.train_base, ctx.train_actual);
    const detail::SplitStats te =
        detail::accumulate_split(ctx, mapping, ctx.test_base, ctx.test_actual);

    const int L = ctx.hier.n_levels();
    double tr_base_sum = 0, tr_recon_sum = 0, te_base_sum = 0, te_recon_sum = 0;
    double tr_base_sum_mae = 0, tr_recon_sum_mae = 0, te_base_sum_mae = 0, te_recon_sum_mae = 0;
    for (int l = 0; l < L; ++l) {
        LevelRow row;
        row.level = std::to_string(l + 1);
        const double tn = static_cast<double>(tr.n_obs[l]);
        const double sn = static_cast<double>(te.n_obs[l]);
        if (tr.base_sse[l] == 0.0 || te.base_sse[l] == 0.0 || tr.base_sae[l] == 0.0 ||
            te.base_sae[l] == 0.0)
            throw ZeroBaseError("base forecasts have zero error at level " + row.level);
        row.train_base_mse = tr.base_sse[l] / tn;
        row.train_recon_mse = tr.recon_sse[l] / tn;
        row.test_base_mse = te.base_sse[l] / sn;
        row.test_recon_mse = te.recon_sse[l] / sn;
        row.train_base_mae = tr.base_sae[l] / tn;
        row.train_recon_mae = tr.recon_sae[l] / tn;
        row.test_base_mae = te.base_sae[l] / sn;
        row.test_recon_mae = te.recon_sae[l] / sn;
        row.train_rmse = tr.recon_sse[l] / tr.base_sse[l] - 1.0;
        row.test_rmse = te.recon_sse[l] / te.base_sse[l] - 1.0;
        row.train_rmae = tr.recon_sae[l] / tr.base_sae[l] - 1.0;
        row.test_rmae = te.recon_sae[l] / te.base_sae[l] - 1.0;
        tr_base_sum += row.train_base_mse;
        tr_recon_sum += row.train_recon_mse;
        te_base_sum += row.test_base_mse;
        te_recon_sum += row.test_recon_mse;
        tr_base_sum_mae += row.train_base_mae;
        tr_recon_sum_mae += row.train_recon_mae;
        te_base_sum_mae += row.test_base_mae;
        te_recon_sum_mae += row.test_recon_mae;
        rep.rows.push_back(row);
    }
    LevelRow overall;
    overall.level = "overall";
    overall.train_base_mse = tr_base_sum;
    overall.train_recon_mse = tr_recon_sum;
    overall.test_base_mse = te_base_sum;
    overall.test_recon_mse = te_recon_sum;
    overall.train_base_mae = tr_base_sum_mae;
    overall.train_recon_mae = tr_recon_sum_mae;
    overall.test_base_mae = te_base_sum_mae;
    overall.test_recon_mae = te_recon_sum_mae;
    overall.train_rmse = tr_recon_sum / tr_base_sum - 1.0;
    overall.test_rmse = te_recon_sum / te_base_sum - 1.0;
    overall.train_rmae = tr_recon_sum_mae / tr_base_sum_mae - 1.0;
    overall.test_rmae = te_recon_sum_mae / te_base_sum_mae - 1.0;
    rep.rows.push_back(overall);
    return rep;
}

/// One-call variant: fit, forecast and evaluate a single method.
inline EvalReport run_protocol(const HierarchySeries& hs, const std::vector<ArmaSpec>& specs,
                               const Method& method, int h, double train_frac,
                               bool allow_pinv = false) {
    return evaluate_method(prepare_protocol(hs, specs, h, train_frac, allow_pinv), method);
}

// ---------------------------------------------------------------------------
// MCB ranking test
// ---------------------------------------------------------------------------

struct MCBResult {
    std::vector<std::string> methods;
    VectorXd mean_ranks;
    VectorXd lower, upper;
    double half_width = 0.0; ///< critical distance added/subtracted per interval
    double alpha = 0.05;
    int n_series = 0;
    int best_index = 0;
    std::vector<bool> indistinguishable; ///< interval overlaps the best method's
};

namespace detail {

/// Nemenyi-style constants: studentized-range quantile / sqrt(2), for
/// 2..10 methods at alpha = 0.01, 0.05, 0.10.
inline double mcb_critical_value(double alpha, int n_methods) {
    static constexpr std::array<double, 9> q01 = {2.576, 2.913, 3.113, 3.255, 3.364,
                                                  3.452, 3.526, 3.590, 3.646};
    static constexpr std::array<double, 9> q05 = {1.960, 2.343, 2.569, 2.728, 2.850,
                                                  2.949, 3.031, 3.102, 3.164};
    static constexpr std::array<double, 9> q10 = {1.645, 2.052, 2.291, 2.459, 2.589,
                                                  2.693, 2.780, 2.855, 2.920};
    if (n_methods < 2 || n_methods > 10)
        throw std::invalid_argument("critical values tabulated for 2..10 methods");
    const std::size_t idx = static_cast<std::size_t>(n_methods - 2);
    if (std::abs(alpha - 0.01) < 1e-12) return q01[idx];
    if (std::abs(alpha - 0.05) < 1e-12) return q05[idx];
    if (std::abs(alpha - 0.10) < 1e-12) return q10[idx];
    throw std::invalid_argument("alpha must be one of 0.01, 0.05, 0.10");
}

} // namespace detail

/// Multiple-comparison-with-the-best over per-series per-method errors.
/// Smaller error is better; ranks average over ties.
inline MCBResult mcb_test(const MatrixXd& errors, double alpha,
                          std::vector<std::string> names = {}) {
    const long N = errors.rows(), m = errors.cols();
    if (N < 2 || m < 2) throw InsufficientData("need at least 2 series and 2 methods");
    if (names.empty())
        for (long j = 0; j < m; ++j) names.push_back("method" + std::to_string(j + 1));
    if (names.size() != static_cast<std::size_t>(m))
        throw DimensionMismatch("one name per method required");

    MCBResult res;
    res.methods = std::move(names);
    res.alpha = alpha;
    res.n_series = static_cast<int>(N);
    res.mean_ranks = VectorXd::Zero(m);

    std::vector<long> order(static_cast<std::size_t>(m));
    for (long i = 0; i < N; ++i) {
        for (long j = 0; j < m; ++j) order[static_cast<std::size_t>(j)] = j;
        std::sort(order.begin(), order.end(),
                  [&](long a, long b) { return errors(i, a) < errors(i, b); });
        long pos = 0;
        while (pos < m) {
            long end = pos;
            while (end + 1 < m &&
                   errors(i, order[static_cast<std::size_t>(end + 1)]) ==
                       errors(i, order[static_cast<std::size_t>(pos)]))
                ++end;
            const double avg_rank = 0.5 * static_cast<double>(pos + end) + 1.0;
            for (long r = pos; r <= end; ++r)
                res.mean_ranks(order[static_cast<std::size_t>(r)]) += avg_rank;
            pos = end + 1;
        }
    }
    res.mean_ranks /= static_cast<double>(N);

    const double crit = detail::mcb_critical_value(alpha, static_cast<int>(m));
    res.half_width = crit * std::sqrt(static_cast<double>(m) * (m + 1) /
                                      (12.0 * static_cast<double>(N)));
    res.lower = res.mean_ranks.array() - res.half_width;
    res.upper = res.mean_ranks.array() + res.half_width;

    res.best_index = 0;
    for (long j = 1; j < m; ++j)
        if (res.mean_ranks(j) < res.mean_ranks(res.best_index)) res.best_index = static_cast<int>(j);
    for (long j = 0; j < m; ++j)
        res.indistinguishable.push_back(res.lower(j) <= res.upper(res.best_index) + 1e-15);
    return res;
}

// ---------------------------------------------------------------------------
// distribution summaries
// ---------------------------------------------------------------------------

/// Percentiles {5,10,...,95} with linear interpolation between order stats.
inline std::vector<std::pair<int, double>> percentile_summary(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("empty value list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::vector<std::pair<int, double>> out;
    for (int p = 5; p <= 95; p += 5) {
        const double pos = static_cast<double>(p) / 100.0 * static_cast<double>(n - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        const double v = (lo + 1 < n) ? values[lo] + frac * (values[lo + 1] - values[lo])
                                      : values[lo];
        out.emplace_back(p, v);
    }
    return out;
}

/// Symmetric trimmed mean: floor(frac*n) values dropped from each tail.
inline double trimmed_mean(std::vector<double> values, double frac = 0.10) {
    if (values.empty()) throw std::invalid_argument("empty value list");
    if (!(frac >= 0.0 && frac < 0.5)) throw std::invalid_argument("trim fraction in [0,0.5)");
    std::sort(values.begin(), values.end());
    const std::size_t g = static_cast<std::size_t>(std::floor(frac * static_cast<double>(values.size())));
    double sum = 0.0;
    for (std::size_t i = g; i < values.size() - g; ++i) sum += values[i];
    return sum / static_cast<double>(values.size() - 2 * g);
}

} // namespace thr
