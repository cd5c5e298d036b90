#pragma once

// Greedy Kullback-Leibler mixture reduction by moment-preserving pairwise merges.
//
// Every merge works on square-root factors: the merged factor is the R factor
// of the stacked matrix
//
//     [ sqrt(a)  R_i              ]
//     [ sqrt(b)  R_j              ]      a = w_i / (w_i + w_j), b = 1 - a
//     [ sqrt(ab) (mu_i - mu_j)^T  ]
//
// and the discrimination bound only needs the diagonals of the three factors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"

namespace gmmf {

/// Components lighter than this are dropped before a reduction starts.
inline constexpr double kPruneWeight = 1e-300;

struct ReductionConfig {
    std::size_t min_components = 1;
    std::size_t max_components = 100;
    double threshold = 0.01;

    void validate() const {
        if (min_components < 1) throw ArgumentError("ReductionConfig: min_components must be >= 1");
        if (max_components < min_components) {
            throw ArgumentError("ReductionConfig: max_components must be >= min_components");
        }
        if (!(threshold > 0.0) || !std::isfinite(threshold)) {
            throw ArgumentError("ReductionConfig: threshold must be positive and finite");
        }
    }

    friend bool operator==(const ReductionConfig&, const ReductionConfig&) = default;
};

/// Moment-preserving merge of two components.
inline GaussianComponent merge_pair(const GaussianComponent& ci, const GaussianComponent& cj) {
    if (ci.dim() != cj.dim()) throw ArgumentError("merge_pair: components differ in dimension");
    const double w = ci.weight + cj.weight;
    if (!(w > 0.0)) throw DegenerateWeightsError("merge_pair: combined weight is zero");
    const double a = ci.weight / w;
    const double b = cj.weight / w;
    const Eigen::Index n = ci.dim();

    Matrix stacked(2 * n + 1, n);
    stacked.topRows(n) = std::sqrt(a) * ci.cov_sqrt.matrix();
    stacked.middleRows(n, n) = std::sqrt(b) * cj.cov_sqrt.matrix();
    stacked.bottomRows(1) = std::sqrt(a * b) * (ci.mean - cj.mean).transpose();

    return GaussianComponent(w, a * ci.mean + b * cj.mean, qr_r_factor(stacked));
}

/// Upper bound on the discrimination caused by merging ci and cj.
///
/// Returns 0.5 * [w_ij log|P_ij| - w_i log|P_i| - w_j log|P_j|] from the factor
/// diagonals.  Nonnegative up to roundoff.
inline double kl_bound(const GaussianComponent& ci, const GaussianComponent& cj) {
    const GaussianComponent merged = merge_pair(ci, cj);
    return merged.weight * half_logdet_from_factor(merged.cov_sqrt) -
           ci.weight * half_logdet_from_factor(ci.cov_sqrt) - cj.weight * half_logdet_from_factor(cj.cov_sqrt);
}

/// Symmetric table of pairwise bounds over an active index set.
///
/// Each active row i keeps the minimum of B(i, j) over active j > i, so the
/// global argmin is a linear scan over rows.  Ties resolve to the smallest i,
/// then the smallest j.  Negative (roundoff) bounds are clamped to zero.
class BoundTable {
public:
    BoundTable() = default;

    explicit BoundTable(const std::vector<GaussianComponent>& comps)
        : n_(comps.size()), b_(n_ * n_, 0.0), active_(n_, true), row_min_(n_, kInf), row_arg_(n_, kNone) {
        half_logdet_.reserve(n_);
        for (const auto& c : comps) half_logdet_.push_back(half_logdet_from_factor(c.cov_sqrt));
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j < n_; ++j) set(i, j, compute(comps, i, j));
        }
        for (std::size_t i = 0; i < n_; ++i) rescan_row(i);
    }

    [[nodiscard]] std::size_t capacity() const noexcept { return n_; }
    [[nodiscard]] bool active(std::size_t i) const { return active_[i]; }

    [[nodiscard]] std::size_t active_count() const {
        return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
    }

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return b_[i * n_ + j]; }

    struct Argmin {
        std::size_t i = kNone;
        std::size_t j = kNone;
        double value = std::numeric_limits<double>::infinity();
    };

    /// Smallest bound over active pairs i < j; value is +inf with fewer than two active entries.
    [[nodiscard]] Argmin argmin() const {
        Argmin best;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!active_[i] || row_arg_[i] == kNone) continue;
            if (row_min_[i] < best.value) best = {i, row_arg_[i], row_min_[i]};
        }
        return best;
    }

    /// Replaces entry i by the merged component (already written into comps),
    /// deactivates j and refreshes the affected row and column.
    void merged(const std::vector<GaussianComponent>& comps, std::size_t i, std::size_t j) {
        active_[j] = false;
        row_min_[j] = kInf;
        row_arg_[j] = kNone;
        half_logdet_[i] = half_logdet_from_factor(comps[i].cov_sqrt);
        for (std::size_t r = 0; r < n_; ++r) {
            if (r == i || !active_[r]) continue;
            set(r, i, compute(comps, std::min(r, i), std::max(r, i)));
        }
        rescan_row(i);
        for (std::size_t r = 0; r < i; ++r) {
            if (!active_[r]) continue;
            if (row_arg_[r] == i || row_arg_[r] == j) {
                rescan_row(r);
            } else {
                const double v = (*this)(r, i);
                if (v < row_min_[r] || (v == row_min_[r] && i < row_arg_[r])) {
                    row_min_[r] = v;
                    row_arg_[r] = i;
                }
            }
        }
        // Rows between i and j (or beyond) whose minimum sat in column j.
        for (std::size_t r = i + 1; r < n_; ++r) {
            if (active_[r] && row_arg_[r] == j) rescan_row(r);
        }
    }

private:
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    double compute(const std::vector<GaussianComponent>& comps, std::size_t i, std::size_t j) const {
        const GaussianComponent m = merge_pair(comps[i], comps[j]);
        const double b = m.weight * half_logdet_from_factor(m.cov_sqrt) - comps[i].weight * half_logdet_[i] -
                         comps[j].weight * half_logdet_[j];
        return std::max(b, 0.0);
    }

    void set(std::size_t i, std::size_t j, double v) {
        b_[i * n_ + j] = v;
        b_[j * n_ + i] = v;
    }

    void rescan_row(std::size_t i) {
        row_min_[i] = kInf;
        row_arg_[i] = kNone;
        for (std::size_t j = i + 1; j < n_; ++j) {
            if (!active_[j]) continue;
            const double v = (*this)(i, j);
            if (row_arg_[i] == kNone || v < row_min_[i]) {
                row_min_[i] = v;
                row_arg_[i] = j;
            }
        }
    }

    std::size_t n_ = 0;
    std::vector<double> b_;
    std::vector<bool> active_;
    std::vector<double> half_logdet_;
    std::vector<double> row_min_;
    std::vector<std::size_t> row_arg_;
};

struct ReductionResult {
    GaussianMixture mixture;
    std::size_t merges = 0;
    std::size_t pruned = 0;
    /// Smallest remaining bound; +inf when nothing was left to compare.
    double final_min_bound = std::numeric_limits<double>::infinity();
};

/// Reduces a mixture by repeated minimum-bound merges.
///
/// Merging continues while the count exceeds max_components, or while it
/// exceeds min_components and the smallest bound is below the threshold.
inline ReductionResult reduce_detailed(const GaussianMixture& m, const ReductionConfig& cfg) {
    cfg.validate();
    std::vector<GaussianComponent> comps;
    comps.reserve(m.size());
    for (const auto& c : m) {
        if (c.weight >= kPruneWeight) comps.push_back(c);
    }
    ReductionResult result;
    result.pruned = m.size() - comps.size();
    if (comps.empty()) throw DegenerateWeightsError("reduce: every component has negligible weight");

    std::size_t k = comps.size();
    if (k <= cfg.min_components) {
        result.mixture = normalize_weights(GaussianMixture(std::move(comps)));
        return result;
    }
    BoundTable table(comps);
    auto best = table.argmin();
    while (k > cfg.max_components || (k > cfg.min_components && best.value < cfg.threshold)) {
        comps[best.i] = merge_pair(comps[best.i], comps[best.j]);
        table.merged(comps, best.i, best.j);
        --k;
        ++result.merges;
        best = table.argmin();
    }
    result.final_min_bound = best.value;

    std::vector<GaussianComponent> survivors;
    survivors.reserve(k);
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (table.active(i)) survivors.push_back(std::move(comps[i]));
    }
    result.mixture = normalize_weights(GaussianMixture(std::move(survivors)));
    return result;
}

inline GaussianMixture reduce(const GaussianMixture& m, const ReductionConfig& cfg) {
    return reduce_detailed(m, cfg).mixture;
}

}  // namespace gmmf
