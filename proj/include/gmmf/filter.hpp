#pragma once

// Square-root Gaussian-mixture filter.
//
// Measurement update, per predicted component l and measurement component k,
// triangularizes the pre-array
//
//     [ R_k^{1/2}            0          ]        [ S    K' ]
//     [ P_l^{1/2} C_k^T      P_l^{1/2}  ]   ->   [ 0    F  ]
//
// giving the innovation factor S, the filtered factor F and the gain term K'
// (filtered mean = mean + K'^T S^{-T} e).  The time update triangularizes
// [P^{1/2} A^T; Q^{1/2}].  Both mixtures are reduced after every update.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"
#include "gmmf/model.hpp"
#include "gmmf/reduction.hpp"

namespace gmmf {

struct FilterConfig {
    ReductionConfig filtering{1, 100, 0.01};
    ReductionConfig prediction{1, 100, 0.01};
    /// Splitting applied before every update whose model is nonlinear.
    std::optional<SplitConfig> split;

    void validate() const {
        filtering.validate();
        prediction.validate();
        if (split) split->validate();
    }

    friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

/// One filter step t: predicted density p(x_t | Y_{t-1}) and filtered p(x_t | Y_t).
///
/// Counts: `*_pre` is what the update produced, `*_post` what survived
/// reduction and `*_used` what was passed to the next update (after
/// splitting, if any).  For the prior at t = 1 all three predicted counts are
/// the prior size.
struct FilterStep {
    int t = 0;
    GaussianMixture predicted;
    GaussianMixture filtered;
    std::size_t predicted_pre = 0;
    std::size_t predicted_post = 0;
    std::size_t predicted_used = 0;
    std::size_t filtered_pre = 0;
    std::size_t filtered_post = 0;
    std::size_t filtered_used = 0;
    Moments predicted_moments;
    Moments filtered_moments;
    /// log p(y_t | Y_{t-1}): log of the raw-weight sum.
    double log_likelihood = 0.0;
    double seconds = 0.0;
};

struct FilterTrace {
    std::vector<FilterStep> steps;
    /// p(x_{N+1} | Y_N) after the final time update and reduction.
    GaussianMixture final_prediction;
};

struct MeasurementUpdateResult {
    GaussianMixture mixture;
    double log_likelihood = 0.0;
};

/// Measurement update with components supplied per predicted component.
///
/// `components_for(c)` returns the affine measurement components to use for
/// predicted component c (fixed for linear models, linearized about c.mean
/// otherwise).  Output component s = N_y * l + k (0-based).
template <class Provider>
MeasurementUpdateResult measurement_update_with(const GaussianMixture& pred, const Vector& y, Provider&& components_for) {
    const Eigen::Index n = pred.dim();
    std::vector<GaussianComponent> out;
    std::vector<double> log_raw;
    out.reserve(pred.size());
    log_raw.reserve(pred.size());
    for (const auto& c : pred) {
        const std::vector<AffineGaussian> meas = components_for(c);
        for (const auto& m : meas) {
            const Eigen::Index p = m.matrix.rows();
            if (y.size() != p || m.matrix.cols() != n || m.noise_sqrt.dim() != p) {
                throw ArgumentError("measurement_update: dimension mismatch between measurement and model");
            }
            Matrix pre = Matrix::Zero(p + n, p + n);
            pre.topLeftCorner(p, p) = m.noise_sqrt.matrix();
            pre.bottomLeftCorner(n, p) = c.cov_sqrt.matrix() * m.matrix.transpose();
            pre.bottomRightCorner(n, n) = c.cov_sqrt.matrix();
            const UpperTriangular post = qr_r_factor(pre);
            const UpperTriangular innovation_sqrt(post.matrix().topLeftCorner(p, p));
            const Vector innovation = y - m.matrix * c.mean - m.offset;
            Vector whitened;
            double half_logdet = 0.0;
            try {
                whitened = solve_upper_transposed(innovation_sqrt, innovation);
                half_logdet = half_logdet_from_factor(innovation_sqrt);
            } catch (const SingularFactorError& e) {
                throw SingularFactorError(std::string("measurement_update: singular innovation factor (") + e.what() + ")");
            }
            Vector mean = c.mean + post.matrix().topRightCorner(p, n).transpose() * whitened;
            const double lw = (c.weight > 0.0 && m.weight > 0.0)
                                  ? std::log(c.weight) + std::log(m.weight) - 0.5 * whitened.squaredNorm() -
                                        half_logdet - 0.5 * static_cast<double>(p) * kLogTwoPi
                                  : -std::numeric_limits<double>::infinity();
            log_raw.push_back(lw);
            out.emplace_back(0.0, std::move(mean), UpperTriangular(post.matrix().bottomRightCorner(n, n)));
        }
    }
    NormalizedWeights nw;
    try {
        nw = normalize_log_weights(log_raw);
    } catch (const DegenerateWeightsError&) {
        throw ModelMismatchError("measurement_update: every component assigns zero density to the measurement");
    }
    for (std::size_t s = 0; s < out.size(); ++s) out[s].weight = nw.weights[s];
    return {GaussianMixture(std::move(out)), nw.log_sum};
}

/// Measurement update for a fixed list of linear measurement components.
inline MeasurementUpdateResult measurement_update(const GaussianMixture& pred, const Vector& y,
                                                  std::span<const MeasurementComponent> meas, int t) {
    std::vector<AffineGaussian> evaluated;
    evaluated.reserve(meas.size());
    for (const auto& m : meas) evaluated.push_back({m.weight, m.observation, m.offset(t), m.noise_sqrt});
    return measurement_update_with(pred, y, [&](const GaussianComponent&) { return evaluated; });
}

/// Time update with process components supplied per filtered component.
/// Output component l = N_x * s + j (0-based).
template <class Provider>
GaussianMixture time_update_with(const GaussianMixture& filt, Provider&& components_for) {
    const Eigen::Index n = filt.dim();
    std::vector<GaussianComponent> out;
    out.reserve(filt.size());
    for (const auto& c : filt) {
        const std::vector<AffineGaussian> proc = components_for(c);
        for (const auto& a : proc) {
            if (a.matrix.rows() != n || a.matrix.cols() != n || a.noise_sqrt.dim() != n) {
                throw ArgumentError("time_update: dimension mismatch between mixture and process model");
            }
            Matrix stacked(2 * n, n);
            stacked.topRows(n) = c.cov_sqrt.matrix() * a.matrix.transpose();
            stacked.bottomRows(n) = a.noise_sqrt.matrix();
            out.emplace_back(c.weight * a.weight, a.matrix * c.mean + a.offset, qr_r_factor(stacked));
        }
    }
    return GaussianMixture(std::move(out));
}

inline GaussianMixture time_update(const GaussianMixture& filt, std::span<const ProcessComponent> proc, int t) {
    std::vector<AffineGaussian> evaluated;
    evaluated.reserve(proc.size());
    for (const auto& p : proc) evaluated.push_back({p.weight, p.transition, p.offset(t), p.noise_sqrt});
    return time_update_with(filt, [&](const GaussianComponent&) { return evaluated; });
}

namespace detail {

/// Step-t component providers; linear models evaluate their offsets once.
class StepComponents {
public:
    StepComponents(const StateSpaceModel& model, int t) : model_(model), t_(t) {
        const Vector origin = Vector::Zero(model.state_dim());
        if (model.linear_process()) fixed_process_ = model.process_at(origin, t);
        if (model.linear_measurement()) fixed_measurement_ = model.measurement_at(origin, t);
    }

    [[nodiscard]] std::vector<AffineGaussian> process(const GaussianComponent& c) const {
        return fixed_process_ ? *fixed_process_ : model_.process_at(c.mean, t_);
    }
    [[nodiscard]] std::vector<AffineGaussian> measurement(const GaussianComponent& c) const {
        return fixed_measurement_ ? *fixed_measurement_ : model_.measurement_at(c.mean, t_);
    }

private:
    const StateSpaceModel& model_;
    int t_;
    std::optional<std::vector<AffineGaussian>> fixed_process_;
    std::optional<std::vector<AffineGaussian>> fixed_measurement_;
};

}  // namespace detail

/// Runs the reduced Gaussian-mixture filter over y_1..y_N.
///
/// `first_step` is the time index of the first measurement; offsets and
/// nonlinear maps are evaluated at first_step, first_step + 1, ...
inline FilterTrace run_filter(const StateSpaceModel& model, std::span<const Vector> measurements,
                              const FilterConfig& cfg, int first_step = 1) {
    cfg.validate();
    model.validate();
    if (measurements.empty()) throw ArgumentError("run_filter: no measurements");

    FilterTrace trace;
    trace.steps.reserve(measurements.size());
    GaussianMixture predicted = model.prior;
    std::size_t predicted_pre = predicted.size();
    std::size_t predicted_post = predicted.size();

    for (std::size_t k = 0; k < measurements.size(); ++k) {
        const int t = first_step + static_cast<int>(k);
        const auto started = std::chrono::steady_clock::now();
        FilterStep step;
        step.t = t;
        try {
            const detail::StepComponents comps(model, t);
            const bool split_pred = cfg.split && !model.linear_measurement();
            const GaussianMixture used = split_pred ? split_mixture(predicted, *cfg.split) : predicted;
            step.predicted_pre = predicted_pre;
            step.predicted_post = predicted_post;
            step.predicted_used = used.size();

            auto updated = measurement_update_with(used, measurements[k],
                                                   [&](const GaussianComponent& c) { return comps.measurement(c); });
            step.log_likelihood = updated.log_likelihood;
            step.filtered_pre = updated.mixture.size();
            GaussianMixture filtered = reduce(updated.mixture, cfg.filtering);
            step.filtered_post = filtered.size();
            step.filtered = filtered;
            if (cfg.split && !model.linear_process()) filtered = split_mixture(filtered, *cfg.split);
            step.filtered_used = filtered.size();

            GaussianMixture next =
                time_update_with(filtered, [&](const GaussianComponent& c) { return comps.process(c); });
            predicted_pre = next.size();
            next = reduce(next, cfg.prediction);
            predicted_post = next.size();

            step.predicted = std::move(predicted);
            step.predicted_moments = mixture_moments(step.predicted);
            step.filtered_moments = mixture_moments(step.filtered);
            predicted = std::move(next);
        } catch (const StepError&) {
            throw;
        } catch (const Error& e) {
            throw StepError(t, e.what());
        }
        step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        trace.steps.push_back(std::move(step));
    }
    trace.final_prediction = std::move(predicted);
    return trace;
}

}  // namespace gmmf
