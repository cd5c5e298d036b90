#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/linalg.hpp"

namespace gmmf {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2*pi)

/// One weighted Gaussian, covariance held as an upper-triangular square root.
struct GaussianComponent {
    double weight = 0.0;
    Vector mean;
    UpperTriangular cov_sqrt;

    GaussianComponent() = default;
    GaussianComponent(double w, Vector mu, UpperTriangular sqrt_cov)
        : weight(w), mean(std::move(mu)), cov_sqrt(std::move(sqrt_cov)) {
        if (!(std::isfinite(weight) && weight >= 0.0)) {
            throw ArgumentError("GaussianComponent: weight must be finite and nonnegative");
        }
        if (mean.size() != cov_sqrt.dim()) {
            throw ArgumentError("GaussianComponent: mean has dimension " + std::to_string(mean.size()) +
                                " but cov_sqrt has dimension " + std::to_string(cov_sqrt.dim()));
        }
        if (!mean.allFinite()) throw ArgumentError("GaussianComponent: nonfinite mean");
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return mean.size(); }
    [[nodiscard]] Matrix covariance() const { return cov_sqrt.covariance(); }

    friend bool operator==(const GaussianComponent& a, const GaussianComponent& b) {
        return a.weight == b.weight && a.mean.size() == b.mean.size() && a.mean == b.mean &&
               a.cov_sqrt == b.cov_sqrt;
    }
};

/// Ordered, nonempty list of components sharing one dimension.
class GaussianMixture {
public:
    using const_iterator = std::vector<GaussianComponent>::const_iterator;

    GaussianMixture() = default;

    explicit GaussianMixture(std::vector<GaussianComponent> components)
        : components_(std::move(components)) {
        if (components_.empty()) throw ArgumentError("GaussianMixture: at least one component is required");
        const auto n = components_.front().dim();
        for (std::size_t i = 0; i < components_.size(); ++i) {
            if (components_[i].dim() != n) {
                throw ArgumentError("GaussianMixture: component " + std::to_string(i) + " has dimension " +
                                    std::to_string(components_[i].dim()) + ", expected " + std::to_string(n));
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
    [[nodiscard]] bool empty() const noexcept { return components_.empty(); }
    [[nodiscard]] Eigen::Index dim() const { return components_.empty() ? 0 : components_.front().dim(); }
    [[nodiscard]] const GaussianComponent& operator[](std::size_t i) const { return components_[i]; }
    [[nodiscard]] const std::vector<GaussianComponent>& components() const noexcept { return components_; }
    [[nodiscard]] const_iterator begin() const noexcept { return components_.begin(); }
    [[nodiscard]] const_iterator end() const noexcept { return components_.end(); }

    [[nodiscard]] double weight_sum() const {
        double s = 0.0;
        for (const auto& c : components_) s += c.weight;
        return s;
    }

    [[nodiscard]] std::vector<double> weights() const {
        std::vector<double> w;
        w.reserve(components_.size());
        for (const auto& c : components_) w.push_back(c.weight);
        return w;
    }

    friend bool operator==(const GaussianMixture& a, const GaussianMixture& b) {
        return a.components_ == b.components_;
    }

private:
    std::vector<GaussianComponent> components_;
};

/// Normalized weights together with the log of the raw-weight sum.
struct NormalizedWeights {
    std::vector<double> weights;
    double log_sum = 0.0;
};

/// Normalizes weights supplied as logarithms.
///
/// Works in linear space while the raw sum stays in the normal floating range
/// and falls back to log-sum-exp when it underflows.
inline NormalizedWeights normalize_log_weights(std::span<const double> log_weights) {
    if (log_weights.empty()) throw DegenerateWeightsError("normalize_log_weights: no weights");
    NormalizedWeights out;
    out.weights.resize(log_weights.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
        if (std::isnan(log_weights[i]) || log_weights[i] == std::numeric_limits<double>::infinity()) {
            throw DegenerateWeightsError("normalize_log_weights: invalid log weight at index " + std::to_string(i));
        }
        out.weights[i] = std::exp(log_weights[i]);
        sum += out.weights[i];
    }
    if (std::isfinite(sum) && sum >= std::numeric_limits<double>::min()) {
        for (auto& w : out.weights) w /= sum;
        out.log_sum = std::log(sum);
        return out;
    }
    const double top = *std::max_element(log_weights.begin(), log_weights.end());
    if (top == -std::numeric_limits<double>::infinity()) {
        throw DegenerateWeightsError("normalize_log_weights: every weight is exactly zero");
    }
    double shifted = 0.0;
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
        out.weights[i] = std::exp(log_weights[i] - top);
        shifted += out.weights[i];
    }
    for (auto& w : out.weights) w /= shifted;
    out.log_sum = top + std::log(shifted);
    return out;
}

inline GaussianMixture normalize_weights(const GaussianMixture& m) {
    const double sum = m.weight_sum();
    if (!(std::isfinite(sum) && sum > 0.0)) {
        throw DegenerateWeightsError("normalize_weights: weight sum is " + std::to_string(sum));
    }
    std::vector<GaussianComponent> out;
    out.reserve(m.size());
    for (const auto& c : m) out.emplace_back(c.weight / sum, c.mean, c.cov_sqrt);
    return GaussianMixture(std::move(out));
}

/// log N(x; mean, R^T R) evaluated through the factor.
inline double log_gaussian_density(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mean,
                                   const UpperTriangular& cov_sqrt) {
    const Vector z = solve_upper_transposed(cov_sqrt, x - mean);
    return -0.5 * z.squaredNorm() - half_logdet_from_factor(cov_sqrt) -
           0.5 * static_cast<double>(x.size()) * kLogTwoPi;
}

inline double log_pdf(const GaussianMixture& m, const Eigen::Ref<const Vector>& x) {
    if (x.size() != m.dim()) {
        throw ArgumentError("evaluate_pdf: point has dimension " + std::to_string(x.size()) + ", mixture has " +
                            std::to_string(m.dim()));
    }
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(m.size());
    for (const auto& c : m) {
        const double t = c.weight > 0.0 ? std::log(c.weight) + log_gaussian_density(x, c.mean, c.cov_sqrt)
                                        : -std::numeric_limits<double>::infinity();
        terms.push_back(t);
        top = std::max(top, t);
    }
    if (top == -std::numeric_limits<double>::infinity()) return top;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

/// Mixture density sum_i w_i N(x; mu_i, R_i^T R_i).
inline double evaluate_pdf(const GaussianMixture& m, const Eigen::Ref<const Vector>& x) {
    return std::exp(log_pdf(m, x));
}

struct Moments {
    Vector mean;
    Matrix covariance;
};

/// Mean and covariance of the whole mixture.  Weights are divided by their
/// sum, so unnormalized sub-mixtures are accepted.
inline Moments mixture_moments(const GaussianMixture& m) {
    const double total = m.weight_sum();
    if (!(total > 0.0)) throw DegenerateWeightsError("mixture_moments: weight sum is not positive");
    Moments out{Vector::Zero(m.dim()), Matrix::Zero(m.dim(), m.dim())};
    for (const auto& c : m) out.mean += (c.weight / total) * c.mean;
    for (const auto& c : m) {
        const Vector d = c.mean - out.mean;
        out.covariance += (c.weight / total) * (c.covariance() + d * d.transpose());
    }
    out.covariance = symmetrize(out.covariance);
    return out;
}

/// Draws n samples: a component index by weight, then mean + R^T z.
template <class Rng>
std::vector<Vector> sample(const GaussianMixture& m, Rng& rng, std::size_t n) {
    std::vector<Vector> out;
    if (n == 0) return out;
    out.reserve(n);
    const auto w = m.weights();
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& c = m[pick(rng)];
        Vector z(c.dim());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        out.push_back(c.mean + c.cov_sqrt.matrix().transpose() * z);
    }
    return out;
}

/// Single-component mixture from a mean and a full covariance.
inline GaussianMixture gaussian(const Vector& mean, const Matrix& cov) {
    return GaussianMixture({GaussianComponent(1.0, mean, UpperTriangular::from_covariance(cov))});
}

}  // namespace gmmf
