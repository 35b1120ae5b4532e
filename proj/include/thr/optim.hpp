#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

namespace thr {

struct OptimOptions {
    int max_iter = 500;
    double grad_tol = 1e-8;
    double rel_obj_tol = 1e-10;
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x;
    for (int i = 0; i < n; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
        const double xi = x(i);
        xp(i) = xi + h;
        const double fp = f(xp);
        xp(i) = xi - h;
        const double fm = f(xp);
        xp(i) = xi;
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace detail

/// BFGS with numeric central-difference gradients and Armijo backtracking.
/// Convergence: gradient inf-norm below grad_tol, or relative objective
/// decrease below rel_obj_tol.
inline OptimResult minimize_bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0,
                                 const OptimOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    OptimResult res;
    res.x = x0;
    res.f = f(x0);
    if (n == 0) {
        res.converged = true;
        return res;
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = detail::numeric_gradient(f, res.x);

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        res.iterations = iter;
        if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            res.converged = true;
            return res;
        }
        Eigen::VectorXd dir = -(H * g);
        double slope = g.dot(dir);
        if (!(slope < 0.0)) { // reset on a non-descent direction
            H.setIdentity();
            dir = -g;
            slope = g.dot(dir);
            if (!(slope < 0.0)) {
                res.converged = true; // gradient numerically zero
                return res;
            }
        }

        // Armijo backtracking
        double step = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool ok = false;
        for (int ls = 0; ls < 50; ++ls) {
            x_new = res.x + step * dir;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) {
            // no usable step along the search direction; treat the current
            // point as a (possibly flat) optimum
            res.converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * opts.grad_tol;
            return res;
        }

        const Eigen::VectorXd g_new = detail::numeric_gradient(f, x_new);
        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Eigen::VectorXd Hy = H * y;
            const double yHy = y.dot(Hy);
            H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
            H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
        }

        const double f_old = res.f;
        res.x = x_new;
        res.f = f_new;
        g = g_new;

        if (std::abs(f_old - f_new) <= opts.rel_obj_tol * (std::abs(f_old) + 1e-12)) {
            res.converged = true;
            return res;
        }
    }
    return res; // not converged
}

} // namespace thr
