#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "thr/errors.hpp"

namespace thr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A temporal hierarchy: the set of aggregation factors {k_p, ..., 1} in
/// strictly descending order, ending at 1. Every factor must divide the
/// top factor m = k_p. Level k holds M_k = m/k values per top-level period.
class TemporalHierarchy {
public:
    explicit TemporalHierarchy(std::vector<int> ks) : ks_(std::move(ks)) {
        if (ks_.empty())
            throw std::invalid_argument("hierarchy needs at least one factor");
        if (ks_.back() != 1)
            throw std::invalid_argument("hierarchy factors must end with 1");
        for (std::size_t i = 0; i < ks_.size(); ++i) {
            if (ks_[i] < 1)
                throw std::invalid_argument("hierarchy factors must be positive");
            if (i > 0 && ks_[i] >= ks_[i - 1])
                throw std::invalid_argument("hierarchy factors must be strictly descending");
            if (ks_.front() % ks_[i] != 0)
                throw std::invalid_argument("every factor must divide the top factor");
        }
    }

    const std::vector<int>& ks() const { return ks_; }
    int m() const { return ks_.front(); }
    int n_levels() const { return static_cast<int>(ks_.size()); }
    /// M_k: values per top-level period at level index l (0 = top).
    int level_size(int l) const { return m() / ks_[static_cast<std::size_t>(l)]; }
    /// n = sum_k M_k, the stacked dimension.
    int stacked_size() const {
        int n = 0;
        for (int k : ks_) n += m() / k;
        return n;
    }
    int bottom_size() const { return m(); }

    /// "12-4-1" style label, used in CSV output.
    std::string label() const {
        std::string s;
        for (std::size_t i = 0; i < ks_.size(); ++i) {
            if (i) s += '-';
            s += std::to_string(ks_[i]);
        }
        return s;
    }

private:
    std::vector<int> ks_;
};

/// Per-level aligned series covering exactly n_periods complete top-level
/// periods. levels[l] has length level_size(l) * n_periods; level 0 is the
/// top of the hierarchy, the last level is the bottom series itself.
struct HierarchySeries {
    TemporalHierarchy hier;
    std::vector<VectorXd> levels;
    int n_periods = 0;
};

/// Summing matrix S (n x n_b). Row blocks ordered by descending k; the
/// block for level k has M_k rows, row z carrying ones in columns
/// (z-1)k+1 .. zk. The bottom block is the identity.
inline MatrixXd build_summing_matrix(const TemporalHierarchy& hier) {
    const int n = hier.stacked_size();
    const int nb = hier.bottom_size();
    MatrixXd S = MatrixXd::Zero(n, nb);
    int row = 0;
    for (int k : hier.ks()) {
        const int rows_k = hier.m() / k;
        for (int z = 0; z < rows_k; ++z) {
            for (int c = z * k; c < (z + 1) * k; ++c) S(row, c) = 1.0;
            ++row;
        }
    }
    return S;
}

/// Non-overlapping k-aggregation anchored at the 1-based start t_star.
/// Output j holds the sum of inputs t_star+(j-1)k .. t_star+jk-1; any
/// trailing remainder shorter than k is dropped.
inline VectorXd aggregate(const VectorXd& bottom, int k, int t_star = 1) {
    if (k < 1) throw std::invalid_argument("aggregation factor must be >= 1");
    if (t_star < 1) throw std::invalid_argument("t_star is 1-based");
    const long usable = bottom.size() - (t_star - 1);
    const long out_len = usable / k;
    if (out_len < 1)
        throw EmptyAggregate("fewer than " + std::to_string(k) + " usable observations");
    VectorXd out(out_len);
    for (long j = 0; j < out_len; ++j)
        out(j) = bottom.segment(t_star - 1 + j * k, k).sum();
    return out;
}

/// Build all levels from a bottom series: I = floor(T/m) complete periods,
/// trailing partial period dropped, every level aggregated from the start.
inline HierarchySeries build_hierarchy_series(const VectorXd& bottom,
                                              const TemporalHierarchy& hier) {
    const int m = hier.m();
    const long I = bottom.size() / m;
    if (I < 1) throw EmptyAggregate("series shorter than one top-level period");
    const VectorXd trimmed = bottom.head(I * m);
    HierarchySeries hs{hier, {}, static_cast<int>(I)};
    hs.levels.reserve(hier.ks().size());
    for (int k : hier.ks()) hs.levels.push_back(aggregate(trimmed, k));
    return hs;
}

/// Stack the hierarchy vector for top-level period i (1-based):
/// (y_i^[m], y_i^[k2]', ..., y_i^[1]')', matching the summing-matrix rows.
inline VectorXd stack_period(const HierarchySeries& hs, int i) {
    if (i < 1 || i > hs.n_periods)
        throw IndexOutOfRange("period index " + std::to_string(i) + " outside 1.." +
                              std::to_string(hs.n_periods));
    VectorXd v(hs.hier.stacked_size());
    int pos = 0;
    for (int l = 0; l < hs.hier.n_levels(); ++l) {
        const int M = hs.hier.level_size(l);
        v.segment(pos, M) = hs.levels[static_cast<std::size_t>(l)].segment(
            static_cast<long>(M) * (i - 1), M);
        pos += M;
    }
    return v;
}

/// True iff ||v - S v_bottom||_inf <= tol, v_bottom being the last n_b entries.
inline bool check_coherence(const VectorXd& v, const MatrixXd& S, double tol) {
    if (v.size() != S.rows())
        throw DimensionMismatch("vector length " + std::to_string(v.size()) +
                                " does not match summing matrix rows " +
                                std::to_string(S.rows()));
    const VectorXd bottom = v.tail(S.cols());
    return (v - S * bottom).lpNorm<Eigen::Infinity>() <= tol;
}

} // namespace thr
