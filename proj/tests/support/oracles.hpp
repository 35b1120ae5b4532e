#pragma once

// Independent oracles used by the tests. These deliberately avoid the
// library's own closed forms: the aggregation covariances come from an
// explicit filter-matrix convolution, ranks from a naive quadratic pass,
// and SPD matrices from first principles.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "thr/rng.hpp"

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Variance / lag-1 autocovariance of the k-aggregated AR(1) innovation
/// filter, by explicit convolution: weights (1, phi, ..., phi^{k-1}) times
/// the banded 0/1 matrix A with row i carrying ones in columns i..i+k-1,
/// applied over a window of 2k-1 innovations.
inline std::pair<double, double> gamma01_bruteforce(double phi, double sigma2, int k) {
    VectorXd a(k);
    for (int i = 0; i < k; ++i) a(i) = std::pow(phi, i);
    MatrixXd A = MatrixXd::Zero(k, 2 * k - 1);
    for (int i = 0; i < k; ++i)
        for (int j = i; j < i + k; ++j) A(i, j) = 1.0;
    const VectorXd c = A.transpose() * a; // combined filter, length 2k-1
    double g0 = 0.0, g1 = 0.0;
    for (int m = 0; m < 2 * k - 1; ++m) g0 += c(m) * c(m);
    for (int m = 0; m + k < 2 * k - 1; ++m) g1 += c(m) * c(m + k);
    return {sigma2 * g0, sigma2 * g1};
}

/// AR(2) stationarity triangle: phi2 in (-1,1), phi1+phi2 < 1, phi2-phi1 < 1.
inline bool ar2_stationary(double phi1, double phi2) {
    return std::abs(phi2) < 1.0 && phi1 + phi2 < 1.0 && phi2 - phi1 < 1.0;
}

/// Average ranks per column of one row of errors (smaller = rank 1),
/// computed by counting rather than sorting.
inline std::vector<double> row_ranks(const std::vector<double>& errors) {
    const std::size_t m = errors.size();
    std::vector<double> ranks(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        int less = 0, equal = 0;
        for (std::size_t l = 0; l < m; ++l) {
            if (errors[l] < errors[j]) ++less;
            if (errors[l] == errors[j]) ++equal;
        }
        ranks[j] = less + 0.5 * (equal - 1) + 1.0;
    }
    return ranks;
}

/// Random symmetric positive-definite matrix: B B' + delta I.
inline MatrixXd random_spd(int n, thr::RngStream& rng, double delta = 0.1) {
    MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = rng.gaussian();
    return B * B.transpose() + delta * MatrixXd::Identity(n, n);
}

/// Random hierarchy: the top factor plus a random subset of its proper
/// divisors, descending, always ending at 1.
inline std::vector<int> random_hierarchy(thr::RngStream& rng, int max_m = 24) {
    const int m = 2 + static_cast<int>(rng.uniform01() * (max_m - 1));
    std::vector<int> ks{m};
    for (int d = m - 1; d > 1; --d)
        if (m % d == 0 && rng.uniform01() < 0.5) ks.push_back(d);
    ks.push_back(1);
    return ks;
}

} // namespace oracles
