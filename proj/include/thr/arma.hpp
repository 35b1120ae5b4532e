#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "thr/errors.hpp"
#include "thr/optim.hpp"
#include "thr/rng.hpp"

namespace thr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ArmaSpec {
    int p = 0;
    int d = 0;
    int q = 0;
};

/// ARIMA(p,d,q) with Gaussian innovations, written as
///   (1 - phi_1 L - ... - phi_p L^p) (1-L)^d (y_t - mu) = (1 + theta_1 L + ... + theta_q L^q) eps_t
/// The mean applies only when d = 0.
struct ArmaModel {
    VectorXd phi;
    VectorXd theta;
    int d = 0;
    double sigma2 = 1.0;
    double mu = 0.0;

    int p() const { return static_cast<int>(phi.size()); }
    int q() const { return static_cast<int>(theta.size()); }
};

struct FitResult {
    ArmaModel model;
    double loglik = 0.0;
    double aicc = 0.0;
    int n_used = 0;
    ArmaSpec spec;
};

namespace detail {

/// Largest eigenvalue modulus of the companion matrix with the given top row.
inline double companion_spectral_radius(const VectorXd& top_row) {
    const int n = static_cast<int>(top_row.size());
    if (n == 0) return 0.0;
    if (n == 1) return std::abs(top_row(0));
    MatrixXd C = MatrixXd::Zero(n, n);
    C.row(0) = top_row.transpose();
    for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
    return C.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace detail

namespace detail {

/// Complex reciprocal roots (companion eigenvalues) of 1 - sum c_i z^i.
inline Eigen::VectorXcd reciprocal_roots(const VectorXd& coeffs) {
    const int n = static_cast<int>(coeffs.size());
    if (n == 0) return Eigen::VectorXcd();
    MatrixXd C = MatrixXd::Zero(n, n);
    C.row(0) = coeffs.transpose();
    for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
    return C.eigenvalues();
}

} // namespace detail

/// AR polynomial 1 - sum phi_i z^i has all roots strictly outside the unit circle.
inline bool is_stationary(const VectorXd& phi) {
    return detail::companion_spectral_radius(phi) < 1.0;
}

/// MA polynomial 1 + sum theta_j z^j has all roots strictly outside the unit circle.
inline bool is_invertible(const VectorXd& theta) {
    return detail::companion_spectral_radius(-theta) < 1.0;
}

/// Durbin-Levinson: map partial autocorrelations (each in (-1,1)) to AR
/// coefficients. The image is exactly the stationary region.
inline VectorXd pacf_to_ar(const VectorXd& pacf) {
    const int p = static_cast<int>(pacf.size());
    for (int j = 0; j < p; ++j)
        if (!(std::abs(pacf(j)) < 1.0))
            throw InvalidPacf("partial autocorrelation magnitude must be < 1");
    VectorXd cur = VectorXd::Zero(p), prev = VectorXd::Zero(p);
    for (int j = 1; j <= p; ++j) {
        cur(j - 1) = pacf(j - 1);
        for (int i = 1; i < j; ++i)
            cur(i - 1) = prev(i - 1) - pacf(j - 1) * prev(j - i - 1);
        prev = cur;
    }
    return cur;
}

namespace detail {

inline VectorXd difference(const VectorXd& y) {
    VectorXd out(y.size() - 1);
    for (long t = 0; t + 1 < y.size(); ++t) out(t) = y(t + 1) - y(t);
    return out;
}

/// Conditional-sum-of-squares residuals on an already differenced,
/// demeaned series. Pre-sample observations and residuals are zero, so
/// every order uses the same effective sample and likelihoods stay
/// comparable across a selection grid.
inline VectorXd css_residuals(const VectorXd& w, const VectorXd& phi, const VectorXd& theta) {
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    const long n = w.size();
    VectorXd e = VectorXd::Zero(n);
    for (long t = 0; t < n; ++t) {
        double acc = w(t);
        for (int i = 0; i < p; ++i)
            if (t - 1 - i >= 0) acc -= phi(i) * w(t - 1 - i);
        for (int j = 0; j < q; ++j)
            if (t - 1 - j >= 0) acc -= theta(j) * e(t - 1 - j);
        e(t) = acc;
    }
    return e;
}

/// Map an unconstrained optimizer vector to stationary AR and invertible MA
/// coefficients through tanh-transformed partial correlations.
inline void unconstrained_to_coeffs(const VectorXd& x, int p, int q,
                                    VectorXd& phi, VectorXd& theta) {
    auto squash = [](double v) {
        double r = std::tanh(v);
        return std::clamp(r, -1.0 + 1e-8, 1.0 - 1e-8);
    };
    VectorXd rp(p), rq(q);
    for (int i = 0; i < p; ++i) rp(i) = squash(x(i));
    for (int j = 0; j < q; ++j) rq(j) = squash(x(p + j));
    phi = pacf_to_ar(rp);
    theta = -pacf_to_ar(rq); // negation maps the stationary region onto the invertible one
}

} // namespace detail

/// Simulate n observations from the model, discarding burn_in start-up
/// samples (default 10(p+q+1)+100). Deterministic given the stream state.
inline VectorXd simulate(const ArmaModel& model, long n, RngStream& rng, long burn_in = -1) {
    if (n < 1) throw std::invalid_argument("simulation length must be >= 1");
    if (!is_stationary(model.phi) || !is_invertible(model.theta))
        throw NonStationaryModel("model fails stationarity/invertibility root checks");
    const int p = model.p(), q = model.q();
    if (burn_in < 0) burn_in = 10 * (p + q + 1) + 100;
    const double sd = std::sqrt(model.sigma2);
    const long total = burn_in + n;
    VectorXd w(total), eps(total);
    for (long t = 0; t < total; ++t) {
        const double e = sd * rng.gaussian();
        eps(t) = e;
        double acc = e;
        for (int i = 0; i < p; ++i)
            if (t - 1 - i >= 0) acc += model.phi(i) * w(t - 1 - i);
        for (int j = 0; j < q; ++j)
            if (t - 1 - j >= 0) acc += model.theta(j) * eps(t - 1 - j);
        w(t) = acc;
    }
    VectorXd out = w.tail(n);
    for (int rep = 0; rep < model.d; ++rep) {
        double acc = 0.0;
        for (long t = 0; t < n; ++t) {
            acc += out(t);
            out(t) = acc;
        }
    }
    if (model.d == 0) out.array() += model.mu;
    return out;
}

inline VectorXd simulate(const ArmaModel& model, long n, long burn_in, std::uint64_t seed) {
    RngStream rng(seed);
    return simulate(model, n, rng, burn_in);
}

/// Conditional-mean forecast over h steps. Future innovations are zero;
/// differencing is inverted by cumulative summation from the history tail.
inline VectorXd forecast(const ArmaModel& model, const VectorXd& history, int h) {
    if (h < 1) throw std::invalid_argument("horizon must be >= 1");
    const int p = model.p(), q = model.q(), d = model.d;
    if (history.size() < p + d)
        throw InsufficientHistory("need at least p+d observations");

    // differencing tails, innermost last: tails[j] = last value after j differences
    std::vector<double> tails(static_cast<std::size_t>(d));
    VectorXd w = history;
    for (int j = 0; j < d; ++j) {
        tails[static_cast<std::size_t>(j)] = w(w.size() - 1);
        w = detail::difference(w);
    }
    if (d == 0) w.array() -= model.mu;

    const VectorXd e = detail::css_residuals(w, model.phi, model.theta);
    const long T = w.size();
    std::vector<double> wext(static_cast<std::size_t>(T) + h), eext(static_cast<std::size_t>(T) + h, 0.0);
    for (long t = 0; t < T; ++t) {
        wext[static_cast<std::size_t>(t)] = w(t);
        eext[static_cast<std::size_t>(t)] = e(t);
    }
    VectorXd out(h);
    for (int s = 0; s < h; ++s) {
        const long t = T + s;
        double acc = 0.0;
        for (int i = 0; i < p; ++i)
            if (t - 1 - i >= 0) acc += model.phi(i) * wext[static_cast<std::size_t>(t - 1 - i)];
        for (int j = 0; j < q; ++j)
            if (t - 1 - j >= 0) acc += model.theta(j) * eext[static_cast<std::size_t>(t - 1 - j)];
        wext[static_cast<std::size_t>(t)] = acc;
        double v = acc;
        for (int j = d - 1; j >= 0; --j) {
            v += tails[static_cast<std::size_t>(j)];
            tails[static_cast<std::size_t>(j)] = v;
        }
        out(s) = (d == 0) ? v + model.mu : v;
    }
    return out;
}

/// Rolling h-step prediction errors: entry for origin t is
/// y_{t+h} - forecast(model, y_{1..t}, h)_h, over all admissible origins.
inline VectorXd hstep_residuals(const ArmaModel& model, const VectorXd& y, int h) {
    if (h < 1) throw std::invalid_argument("horizon must be >= 1");
    const int p = model.p(), q = model.q(), d = model.d;
    const long T = y.size();
    const long t_min = p + d + q;
    if (T - h < t_min)
        throw InsufficientHistory("series too short for any rolling origin");

    VectorXd out(T - h - t_min + 1);
    if (d == 0) {
        // fast path: CSS residuals are a forward recursion, so prefix
        // residuals equal the corresponding slice of the full-series pass
        VectorXd w = y;
        w.array() -= model.mu;
        const VectorXd e = detail::css_residuals(w, model.phi, model.theta);
        std::vector<double> wloc, eloc;
        for (long t = t_min; t <= T - h; ++t) {
            wloc.assign(static_cast<std::size_t>(h), 0.0);
            eloc.assign(static_cast<std::size_t>(h), 0.0);
            for (int s = 0; s < h; ++s) {
                double acc = 0.0;
                for (int i = 0; i < p; ++i) {
                    const long idx = t + s - 1 - i;
                    if (idx < 0) continue;
                    acc += model.phi(i) * (idx < t ? w(idx) : wloc[static_cast<std::size_t>(idx - t)]);
                }
                for (int j = 0; j < q; ++j) {
                    const long idx = t + s - 1 - j;
                    if (idx < 0) continue;
                    acc += model.theta(j) * (idx < t ? e(idx) : eloc[static_cast<std::size_t>(idx - t)]);
                }
                wloc[static_cast<std::size_t>(s)] = acc;
            }
            out(t - t_min) = y(t + h - 1) - (wloc[static_cast<std::size_t>(h - 1)] + model.mu);
        }
    } else {
        for (long t = t_min; t <= T - h; ++t) {
            const VectorXd fc = forecast(model, y.head(t), h);
            out(t - t_min) = y(t + h - 1) - fc(h - 1);
        }
    }
    return out;
}

/// Maximize the Gaussian conditional-sum-of-squares likelihood at fixed
/// orders. Series are demeaned before fitting when d = 0; the mean is
/// re-added by forecast().
inline FitResult fit(const VectorXd& y, ArmaSpec spec) {
    const int p = spec.p, q = spec.q, d = spec.d;
    if (p < 0 || q < 0 || d < 0) throw std::invalid_argument("orders must be non-negative");
    if (y.size() <= p + q + d + 2)
        throw InsufficientData("series length must exceed p+q+d+2");

    VectorXd w = y;
    for (int j = 0; j < d; ++j) w = detail::difference(w);
    double mu = 0.0;
    if (d == 0) {
        mu = w.mean();
        w.array() -= mu;
    }
    const double scale = std::max(1.0, std::abs(mu));
    if (w.cwiseAbs().maxCoeff() <= 1e-12 * scale)
        throw DegenerateSeries("series is constant after differencing/demeaning");

    const long n_used = w.size();
    VectorXd phi = VectorXd::Zero(p), theta = VectorXd::Zero(q);
    double ss = 0.0;

    if (p + q == 0) {
        ss = w.squaredNorm();
    } else {
        auto objective = [&](const VectorXd& x) {
            VectorXd ph, th;
            detail::unconstrained_to_coeffs(x, p, q, ph, th);
            const VectorXd e = detail::css_residuals(w, ph, th);
            return 0.5 * std::log(std::max(e.squaredNorm(), 1e-300));
        };
        OptimOptions opts; // 500 iterations, grad 1e-8, rel obj 1e-10
        std::optional<OptimResult> best;
        for (const double start : {0.0, 0.2}) {
            const OptimResult r =
                minimize_bfgs(objective, VectorXd::Constant(p + q, start), opts);
            if (!r.converged) continue;
            if (!best || r.f < best->f) best = r;
        }
        if (!best)
            throw OptimizerFailure("CSS optimizer did not converge within iteration limit");
        detail::unconstrained_to_coeffs(best->x, p, q, phi, theta);
        ss = std::exp(2.0 * best->f);
    }

    FitResult fr;
    fr.spec = spec;
    fr.n_used = static_cast<int>(n_used);
    fr.model.phi = phi;
    fr.model.theta = theta;
    fr.model.d = d;
    fr.model.mu = mu;
    fr.model.sigma2 = ss / static_cast<double>(n_used);
    if (fr.model.sigma2 <= 0.0)
        throw DegenerateSeries("zero innovation variance");
    fr.loglik = -0.5 * static_cast<double>(n_used) *
                (std::log(2.0 * M_PI) + std::log(fr.model.sigma2) + 1.0);
    const int kappa = p + q + 1 + (d == 0 ? 1 : 0);
    const double denom = static_cast<double>(n_used) - kappa - 1;
    fr.aicc = (denom > 0)
                  ? -2.0 * fr.loglik + 2.0 * kappa * static_cast<double>(n_used) / denom
                  : std::numeric_limits<double>::infinity();
    return fr;
}

namespace detail {

/// Identification guard for order selection. A fitted candidate whose AR
/// and MA polynomials nearly share a root is observationally equivalent to
/// a reduced model (common-factor redundancy) and its likelihood gain is a
/// boundary artifact; the grid contains the reduced model anyway. Fits
/// with roots essentially on the unit circle are rejected for the same
/// reason.
inline bool redundant_candidate(const ArmaModel& m) {
    const double radius = std::max(companion_spectral_radius(m.phi),
                                   companion_spectral_radius(-m.theta));
    if (radius > 0.999) return true;
    if (m.p() == 0 || m.q() == 0) return false;
    const Eigen::VectorXcd ar = reciprocal_roots(m.phi);
    const Eigen::VectorXcd ma = reciprocal_roots(-m.theta);
    for (long i = 0; i < ar.size(); ++i)
        for (long j = 0; j < ma.size(); ++j)
            if (std::abs(ar(i) - ma(j)) < 0.05) return true;
    return false;
}

} // namespace detail

/// Exhaustive AICc grid search over (p,q) <= (max_p,max_q) at fixed d.
/// Ties break toward smaller p+q, then smaller p. Candidates failing the
/// common-factor identification guard are skipped.
inline FitResult select_order(const VectorXd& y, int max_p, int max_q, int d) {
    if (max_p < 0 || max_q < 0) throw std::invalid_argument("grid bounds must be >= 0");
    std::optional<FitResult> best;
    bool any_attempted = false;
    for (int p = 0; p <= max_p; ++p) {
        for (int q = 0; q <= max_q; ++q) {
            any_attempted = true;
            FitResult cand;
            try {
                cand = fit(y, ArmaSpec{p, d, q});
            } catch (const OptimizerFailure&) {
                continue;
            } catch (const InsufficientData&) {
                continue;
            }
            if (detail::redundant_candidate(cand.model)) continue;
            if (!best) {
                best = cand;
                continue;
            }
            const auto key = [](const FitResult& f) {
                return std::make_tuple(f.aicc, f.spec.p + f.spec.q, f.spec.p);
            };
            if (key(cand) < key(*best)) best = cand;
        }
    }
    if (!best) {
        if (!any_attempted) throw std::invalid_argument("empty order grid");
        throw AllFitsFailed("no candidate order converged");
    }
    return *best;
}

/// Draw a random stationary & invertible ARMA(p,q) by sampling partial
/// correlations uniformly on (-1,1) and mapping them through the
/// Durbin-Levinson recursion. sigma2 = 1, mu = 0.
inline ArmaModel draw_stationary(int p, int q, RngStream& rng) {
    if (p < 0 || q < 0) throw std::invalid_argument("orders must be non-negative");
    VectorXd rp(p), rq(q);
    for (int i = 0; i < p; ++i) rp(i) = rng.uniform_open(-1.0, 1.0);
    for (int j = 0; j < q; ++j) rq(j) = rng.uniform_open(-1.0, 1.0);
    ArmaModel m;
    m.phi = pacf_to_ar(rp);
    m.theta = -pacf_to_ar(rq);
    m.d = 0;
    m.sigma2 = 1.0;
    m.mu = 0.0;
    return m;
}

} // namespace thr
