#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "thr/errors.hpp"
#include "thr/hierarchy.hpp"

namespace thr {

/// Upper bound for the MA order of a k-aggregated ARIMA(p,d,q):
/// r <= floor((p(k-1) + (d+1)(k-1) + q) / k). The AR and integration
/// orders carry over unchanged. Polynomial cancellation can make the
/// true order smaller, so this is a bound, never an attained value.
inline int aggregated_order(int p, int d, int q, int k) {
    if (k < 1) throw std::invalid_argument("aggregation factor must be >= 1");
    if (p < 0 || d < 0 || q < 0) throw std::invalid_argument("orders must be non-negative");
    return (p * (k - 1) + (d + 1) * (k - 1) + q) / k;
}

struct Gamma01 {
    double gamma0 = 0.0;
    double gamma1 = 0.0;
};

/// Variance and lag-1 autocovariance of the aggregation filter applied to
/// AR(1) innovations: the moving-average representation of the k-aggregate
/// has filter coefficients c_m = sum_{i=max(0,m-k+1)}^{min(k-1,m)} phi^i,
/// m = 0..2k-2, and gamma0 = sigma^2 sum c_m^2, gamma1 = sigma^2 sum c_m c_{m+k}.
/// Written as nested geometric sums over the two halves of the filter.
inline Gamma01 gamma01(double phi, double sigma2, int k) {
    if (!(std::abs(phi) < 1.0)) throw NonStationary("|phi| must be < 1");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (k < 2) throw std::invalid_argument("aggregation factor must be >= 2");

    // c_m for m <= k-1 is sum_{i=0}^{m} phi^i; for m >= k-1 it is
    // sum_{i=m-k+1}^{k-1} phi^i. The middle coefficient (m = k-1) belongs
    // to both halves and is counted once.
    double g0 = 0.0;
    double head = 0.0; // sum_{i=0}^{j} phi^i
    double pj = 1.0;
    for (int j = 0; j < k; ++j) {
        head += pj;
        pj *= phi;
        g0 += head * head;
    }
    for (int j = 1; j < k; ++j) {
        double tail = 0.0; // sum_{i=j}^{k-1} phi^i
        double pi = std::pow(phi, j);
        for (int i = j; i < k; ++i) {
            tail += pi;
            pi *= phi;
        }
        g0 += tail * tail;
    }

    double g1 = 0.0;
    for (int j = 1; j < k; ++j) {
        double tail = 0.0;
        double pi = std::pow(phi, j);
        for (int i = j; i < k; ++i) {
            tail += pi;
            pi *= phi;
        }
        double head_j = 0.0;
        double pl = 1.0;
        for (int l = 0; l < j; ++l) {
            head_j += pl;
            pl *= phi;
        }
        g1 += tail * head_j;
    }
    return {sigma2 * g0, sigma2 * g1};
}

struct AggregatedAr1 {
    double beta = 0.0;        ///< aggregate AR coefficient, phi^k exactly
    double eta = 0.0;         ///< aggregate MA coefficient, invertible root
    double sigma_star2 = 0.0; ///< aggregate innovation variance
    int k = 1;
    double source_phi = 0.0;
    double source_sigma2 = 1.0;
};

/// Closed-form ARMA(1,1) parameters of the k-aggregated AR(1):
/// beta = phi^k; eta solves eta = (1+eta^2) rho_1 with |eta| <= 1;
/// sigma*^2 = gamma(0)/(1+eta^2).
inline AggregatedAr1 aggregate_ar1(double phi, double sigma2, int k) {
    const Gamma01 g = gamma01(phi, sigma2, k);
    const double rho1 = g.gamma1 / g.gamma0;
    if (std::abs(rho1) > 0.5 + 1e-12)
        throw NoInvertibleRoot("lag-1 autocorrelation above 0.5; inconsistent input");
    double eta = 0.0;
    if (rho1 != 0.0) {
        const double disc = std::max(0.0, 1.0 - 4.0 * rho1 * rho1);
        eta = (1.0 - std::sqrt(disc)) / (2.0 * rho1);
    }
    AggregatedAr1 out;
    out.beta = std::pow(phi, k);
    out.eta = eta;
    out.sigma_star2 = g.gamma0 / (1.0 + eta * eta);
    out.k = k;
    out.source_phi = phi;
    out.source_sigma2 = sigma2;
    return out;
}

/// Lower-triangular k x k matrix with entries phi^(i-j) for i >= j.
inline MatrixXd phi_matrix(double phi, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    MatrixXd P = MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        double v = 1.0;
        for (int j = i; j >= 0; --j) {
            P(i, j) = v;
            v *= phi;
        }
    }
    return P;
}

/// Theoretical covariance of the stacked 1-step forecast errors in the
/// two-level {k,1} hierarchy over an AR(1) bottom process:
///   top-left   sigma*^2
///   cross      sigma^2 1' Phi Phi'
///   bottom     sigma^2 Phi Phi'
/// Positive definite for phi != 0; at phi = 0 the top error equals the sum
/// of the bottom errors exactly, so the matrix is singular (PSD, rank k).
inline MatrixXd theoretical_W1(double phi, double sigma2, int k) {
    if (!(std::abs(phi) < 1.0)) throw NonStationary("|phi| must be < 1");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (k < 2) throw std::invalid_argument("aggregation factor must be >= 2");
    const AggregatedAr1 agg = aggregate_ar1(phi, sigma2, k);
    const MatrixXd P = phi_matrix(phi, k);
    const MatrixXd B = sigma2 * (P * P.transpose());
    MatrixXd W(k + 1, k + 1);
    W(0, 0) = agg.sigma_star2;
    const VectorXd cross = B * VectorXd::Ones(k);
    W.block(0, 1, 1, k) = cross.transpose();
    W.block(1, 0, k, 1) = cross;
    W.block(1, 1, k, k) = B;
    return W;
}

struct TheoremCheck {
    MatrixXd G;  ///< k x (k+1) mapping matrix
    MatrixXd SG; ///< (k+1) x (k+1) transformation matrix
};

/// Minimum-trace mapping computed from the theoretical W1 for the {k,1}
/// hierarchy: G = (S'W1^-1 S)^-1 S'W1^-1. For phi != 0 this is an honest
/// linear solve; at phi = 0 W1 is singular along the constraint direction
/// (1, -1') and the minimizer set is a whole affine family, whose unique
/// limit from phi -> 0 is the bottom-up mapping, which is returned.
inline TheoremCheck optimal_G_theoretical(double phi, double sigma2, int k) {
    if (!(std::abs(phi) < 1.0)) throw NonStationary("|phi| must be < 1");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (k < 2) throw std::invalid_argument("aggregation factor must be >= 2");

    MatrixXd S(k + 1, k);
    S.row(0) = Eigen::RowVectorXd::Ones(k);
    S.block(1, 0, k, k) = MatrixXd::Identity(k, k);

    TheoremCheck out;
    const MatrixXd W = theoretical_W1(phi, sigma2, k);
    // Schur complement of the bottom block; zero exactly when the top error
    // is a deterministic sum of the bottom errors (phi = 0).
    const MatrixXd B = W.block(1, 1, k, k);
    const VectorXd c = W.block(1, 0, k, 1);
    const double schur = W(0, 0) - c.dot(B.llt().solve(c));
    if (schur <= 1e-12 * W(0, 0)) {
        out.G = MatrixXd::Zero(k, k + 1);
        out.G.block(0, 1, k, k) = MatrixXd::Identity(k, k);
    } else {
        Eigen::LLT<MatrixXd> llt(W);
        if (llt.info() != Eigen::Success)
            throw SingularCovariance("theoretical W1 not positive definite");
        const MatrixXd X = llt.solve(S);             // W^-1 S
        const MatrixXd A = S.transpose() * X;        // S' W^-1 S
        out.G = A.llt().solve(X.transpose());        // (S'W^-1 S)^-1 S'W^-1
    }
    out.SG = S * out.G;
    return out;
}

} // namespace thr
