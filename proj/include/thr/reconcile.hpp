#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>

#include "thr/aggtheory.hpp"
#include "thr/errors.hpp"
#include "thr/hierarchy.hpp"

namespace thr {

/// Which estimator of the base-forecast-error covariance W to use.
struct CovSpec {
    enum class Kind {
        Identity,          ///< OLS: W = I
        VarianceScaling,   ///< diag of sample variances
        StructuralScaling, ///< diag(S 1)
        FullSample,        ///< mean outer product of residual rows
        Shrinkage,         ///< lambda diag(W) + (1-lambda) W
        Spectral,          ///< eigen-filtered precision matrix
        TheoreticalAr1,    ///< closed-form W1 of the aggregated AR(1)
    };

    Kind kind = Kind::Identity;
    std::optional<double> lambda; ///< Shrinkage; nullopt = analytic (auto)
    std::optional<double> nu;     ///< Spectral; nullopt = cross-validated
    std::optional<int> n_eig;     ///< Spectral; nullopt = cross-validated
    double phi = 0.0;             ///< TheoreticalAr1
    double sigma2 = 1.0;          ///< TheoreticalAr1

    std::string label() const {
        switch (kind) {
            case Kind::Identity: return "ols";
            case Kind::VarianceScaling: return "variance";
            case Kind::StructuralScaling: return "structural";
            case Kind::FullSample: return "full";
            case Kind::Shrinkage: return "shrinkage";
            case Kind::Spectral: return "spectral";
            case Kind::TheoreticalAr1: return "theoretical_ar1";
        }
        return "?";
    }
};

/// A symmetric covariance matrix (or, for the spectral estimator, its
/// inverse) together with how it was produced.
struct WMatrix {
    MatrixXd W;
    bool inverse_form = false;
    CovSpec spec;
    int n_samples = 0;
    bool singular_flag = false; ///< set when the estimate cannot be full rank
};

/// Mapping matrix G (n_b x n) and the induced projection SG.
struct ReconMapping {
    MatrixXd G;
    MatrixXd SG;
    std::string method;
    bool projection = true; ///< SGS = S holds (false only for top-down)
};

namespace detail {

inline void check_projection(const MatrixXd& S, const ReconMapping& m) {
    const double err = (S * m.G * S - S).lpNorm<Eigen::Infinity>();
    if (err > 1e-8)
        throw SingularCovariance("reconciliation mapping failed SGS=S check (err=" +
                                 std::to_string(err) + ")");
}

inline MatrixXd symmetric_pinv(const MatrixXd& W) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
    const VectorXd ev = es.eigenvalues();
    const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    VectorXd inv = VectorXd::Zero(ev.size());
    for (long i = 0; i < ev.size(); ++i)
        if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Bottom-up mapping G = (0 | I).
inline ReconMapping bottom_up_G(const MatrixXd& S) {
    const long n = S.rows(), nb = S.cols();
    ReconMapping m;
    m.G = MatrixXd::Zero(nb, n);
    m.G.block(0, n - nb, nb, nb) = MatrixXd::Identity(nb, nb);
    m.SG = S * m.G;
    m.method = "bottom_up";
    return m;
}

/// Top-down mapping from a user-supplied proportion vector (must sum to 1).
/// Coherent by construction but not a projection: SGS = S does not hold.
inline ReconMapping top_down_G(const MatrixXd& S, const VectorXd& proportions) {
    if (proportions.size() != S.cols())
        throw DimensionMismatch("proportion vector length must equal bottom size");
    if (std::abs(proportions.sum() - 1.0) > 1e-10)
        throw std::invalid_argument("proportions must sum to 1");
    ReconMapping m;
    m.G = MatrixXd::Zero(S.cols(), S.rows());
    m.G.col(0) = proportions;
    m.SG = S * m.G;
    m.method = "top_down";
    m.projection = false;
    return m;
}

/// Minimum-trace mapping G = (S'W^-1 S)^-1 S'W^-1.
///
/// The default solve is a Cholesky factorization; a singular W raises
/// SingularCovariance unless allow_pinv is set, in which case a symmetric
/// eigenvalue pseudo-inverse is substituted. For the theoretical AR(1)
/// covariance the phi = 0 boundary is singular along the coherence
/// direction; there the minimizer family's unique phi -> 0 limit is the
/// bottom-up mapping, which is what gets returned.
inline ReconMapping mint_G(const MatrixXd& S, const WMatrix& W, bool allow_pinv = false) {
    const long n = S.rows(), nb = S.cols();
    if (W.W.rows() != n || W.W.cols() != n)
        throw DimensionMismatch("covariance size does not match summing matrix");

    ReconMapping m;
    m.method = "mint_" + W.spec.label();

    if (W.inverse_form) {
        const MatrixXd X = W.W * S; // W^-1 S
        const MatrixXd A = S.transpose() * X;
        Eigen::LLT<MatrixXd> llt(A);
        if (llt.info() != Eigen::Success)
            throw SingularCovariance("S'W^-1 S not positive definite");
        m.G = llt.solve(X.transpose());
        m.SG = S * m.G;
        detail::check_projection(S, m);
        return m;
    }

    if (W.spec.kind == CovSpec::Kind::TheoreticalAr1 && n == nb + 1) {
        const MatrixXd B = W.W.block(1, 1, nb, nb);
        const VectorXd c = W.W.block(1, 0, nb, 1);
        const double schur = W.W(0, 0) - c.dot(B.llt().solve(c));
        if (schur <= 1e-12 * W.W(0, 0)) {
            m = bottom_up_G(S);
            m.method = "mint_" + W.spec.label();
            return m;
        }
    }

    bool use_pinv = false;
    Eigen::LLT<MatrixXd> llt;
    if (W.singular_flag) {
        use_pinv = true;
    } else {
        llt.compute(W.W);
        use_pinv = (llt.info() != Eigen::Success);
    }
    MatrixXd X;
    if (!use_pinv) {
        X = llt.solve(S);
    } else if (allow_pinv) {
        X = detail::symmetric_pinv(W.W) * S;
    } else {
        throw SingularCovariance("covariance matrix is singular (" + W.spec.label() + ")");
    }
    const MatrixXd A = S.transpose() * X;
    Eigen::LLT<MatrixXd> lltA(A);
    if (lltA.info() != Eigen::Success)
        throw SingularCovariance("S'W^-1 S not positive definite");
    m.G = lltA.solve(X.transpose());
    m.SG = S * m.G;
    detail::check_projection(S, m);
    return m;
}

/// Spectral-scaling precision estimator: shrink the residual
/// cross-correlation spectrum, keep the leading n_eig eigenvectors, pool
/// the remainder into a scalar, and sandwich with variance scaling.
/// Returned in inverse form.
inline WMatrix spectral_precision(const MatrixXd& residuals, double nu, int n_eig) {
    const long rows = residuals.rows(), n = residuals.cols();
    if (rows < 2) throw InsufficientResiduals("need at least 2 residual rows");
    if (!(nu >= 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in [0,1]");
    if (n_eig < 1 || n_eig > n) throw std::invalid_argument("n_eig must lie in [1, n]");

    const MatrixXd cov = residuals.transpose() * residuals / static_cast<double>(rows);
    VectorXd dvar = cov.diagonal();
    for (long i = 0; i < n; ++i)
        if (!(dvar(i) > 0.0))
            throw DegenerateVariance("zero residual variance in series " + std::to_string(i));
    const VectorXd dinv_sqrt = dvar.cwiseSqrt().cwiseInverse();
    const MatrixXd R = dinv_sqrt.asDiagonal() * cov * dinv_sqrt.asDiagonal();

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(R);
    if (es.info() != Eigen::Success)
        throw SingularCovariance("eigendecomposition of correlation matrix failed");
    // Eigen sorts ascending; flip to descending.
    VectorXd lam(n);
    MatrixXd V(n, n);
    for (long i = 0; i < n; ++i) {
        lam(i) = es.eigenvalues()(n - 1 - i);
        V.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    const VectorXd shrunk = (1.0 - nu) * lam.array() + nu;
    const double c = (n_eig < n) ? shrunk.tail(n - n_eig).mean() : 0.0;

    const MatrixXd V1 = V.leftCols(n_eig);
    const VectorXd a = shrunk.head(n_eig).array() - c;
    const MatrixXd M = V1 * a.asDiagonal() * V1.transpose() + c * MatrixXd::Identity(n, n);
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw SingularCovariance("filtered correlation matrix is singular");
    const MatrixXd Q = llt.solve(MatrixXd::Identity(n, n));

    WMatrix out;
    out.W = dinv_sqrt.asDiagonal() * Q * dinv_sqrt.asDiagonal();
    out.W = 0.5 * (out.W + out.W.transpose()).eval();
    out.inverse_form = true;
    out.spec.kind = CovSpec::Kind::Spectral;
    out.spec.nu = nu;
    out.spec.n_eig = n_eig;
    out.n_samples = static_cast<int>(rows);
    return out;
}

namespace detail {

/// Analytic shrinkage intensity toward the diagonal target, computed on
/// the correlation scale (Ledoit-Wolf style plug-in estimate).
inline double analytic_shrinkage_lambda(const MatrixXd& residuals) {
    const long rows = residuals.rows(), n = residuals.cols();
    const MatrixXd cov = residuals.transpose() * residuals / static_cast<double>(rows);
    const VectorXd sd = cov.diagonal().cwiseSqrt();
    for (long i = 0; i < n; ++i)
        if (!(sd(i) > 0.0)) return 1.0;
    MatrixXd xs = residuals;
    for (long j = 0; j < n; ++j) xs.col(j) /= sd(j);
    const MatrixXd corm = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();

    const MatrixXd xs2 = xs.cwiseProduct(xs);
    const MatrixXd cross2 = xs.transpose() * xs;
    const MatrixXd var_r =
        (xs2.transpose() * xs2 - cross2.cwiseProduct(cross2) / static_cast<double>(rows)) /
        (static_cast<double>(rows) * (static_cast<double>(rows) - 1.0));

    double num = 0.0, den = 0.0;
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            if (i == j) continue;
            num += var_r(i, j);
            den += corm(i, j) * corm(i, j);
        }
    }
    if (den <= 1e-300) return 1.0;
    return std::clamp(num / den, 0.0, 1.0);
}

} // namespace detail

/// Estimate W from stacked per-period base-forecast-error rows.
/// The spectral variant requires resolved hyperparameters here;
/// cross-validation of (nu, n_eig) happens in the evaluation protocol.
inline WMatrix estimate_W(const MatrixXd& residuals, const CovSpec& spec, const MatrixXd& S) {
    const long n = S.rows();
    const long rows = residuals.rows();
    const bool needs_data = spec.kind != CovSpec::Kind::Identity &&
                            spec.kind != CovSpec::Kind::StructuralScaling &&
                            spec.kind != CovSpec::Kind::TheoreticalAr1;
    if (needs_data) {
        if (rows < 1) throw InsufficientResiduals("no residual rows");
        if (residuals.cols() != n)
            throw DimensionMismatch("residual columns must match hierarchy size");
    }

    WMatrix out;
    out.spec = spec;
    out.n_samples = static_cast<int>(rows);

    switch (spec.kind) {
        case CovSpec::Kind::Identity:
            out.W = MatrixXd::Identity(n, n);
            break;
        case CovSpec::Kind::VarianceScaling: {
            const VectorXd v = residuals.cwiseProduct(residuals).colwise().mean().transpose();
            out.W = v.asDiagonal();
            break;
        }
        case CovSpec::Kind::StructuralScaling: {
            const VectorXd s1 = S * VectorXd::Ones(S.cols());
            out.W = s1.asDiagonal();
            break;
        }
        case CovSpec::Kind::FullSample: {
            out.W = residuals.transpose() * residuals / static_cast<double>(rows);
            out.singular_flag = rows < n;
            break;
        }
        case CovSpec::Kind::Shrinkage: {
            const MatrixXd full =
                residuals.transpose() * residuals / static_cast<double>(rows);
            double lambda = spec.lambda ? *spec.lambda
                                        : detail::analytic_shrinkage_lambda(residuals);
            if (spec.lambda && !(*spec.lambda > 0.0 && *spec.lambda < 1.0))
                throw std::invalid_argument("fixed shrinkage lambda must lie in (0,1)");
            out.W = lambda * MatrixXd(full.diagonal().asDiagonal()) + (1.0 - lambda) * full;
            out.spec.lambda = lambda;
            break;
        }
        case CovSpec::Kind::Spectral: {
            if (!spec.nu || !spec.n_eig)
                throw ConfigError("spectral hyperparameters must be resolved before estimate_W");
            return spectral_precision(residuals, *spec.nu, *spec.n_eig);
        }
        case CovSpec::Kind::TheoreticalAr1: {
            out.W = theoretical_W1(spec.phi, spec.sigma2, static_cast<int>(S.cols()));
            break;
        }
    }
    if (!out.inverse_form) out.W = 0.5 * (out.W + out.W.transpose()).eval();
    return out;
}

/// Apply a mapping to a stacked base-forecast vector: returns S G base.
inline VectorXd reconcile(const VectorXd& base, const ReconMapping& mapping, const MatrixXd& S) {
    if (base.size() != S.rows() || mapping.SG.cols() != S.rows())
        throw DimensionMismatch("base forecast length must match hierarchy size");
    return mapping.SG * base;
}

} // namespace thr
