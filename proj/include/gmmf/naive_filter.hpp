#pragma once

// Covariance-form twin of run_filter.  Propagates full covariance matrices with
// the textbook gain equations and reduces with full-matrix determinants.  It
// exists to cross-check the square-root implementation and shares no
// factorization code with it beyond the model description.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "gmmf/errors.hpp"
#include "gmmf/filter.hpp"
#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"
#include "gmmf/model.hpp"
#include "gmmf/reduction.hpp"

namespace gmmf::naive {

struct Component {
    double weight = 0.0;
    Vector mean;
    Matrix cov;
};

using Mixture = std::vector<Component>;

inline Mixture from_mixture(const GaussianMixture& m) {
    Mixture out;
    out.reserve(m.size());
    for (const auto& c : m) out.push_back({c.weight, c.mean, c.covariance()});
    return out;
}

/// Converts back to square-root form for storage in a FilterTrace.
inline GaussianMixture to_mixture(const Mixture& m) {
    std::vector<GaussianComponent> out;
    out.reserve(m.size());
    for (const auto& c : m) out.emplace_back(c.weight, c.mean, UpperTriangular::from_covariance(c.cov));
    return GaussianMixture(std::move(out));
}

inline void require_positive_definite(const Matrix& p, const char* where) {
    Eigen::LLT<Matrix> llt(p);
    if (llt.info() != Eigen::Success) {
        throw CovarianceBreakdownError(std::string(where) + ": covariance lost positive definiteness");
    }
}

inline double log_det(const Matrix& p) {
    const double d = Eigen::PartialPivLU<Matrix>(p).determinant();
    if (!(d > 0.0)) throw CovarianceBreakdownError("naive: nonpositive determinant");
    return std::log(d);
}

inline Component merge(const Component& a, const Component& b) {
    const double w = a.weight + b.weight;
    if (!(w > 0.0)) throw DegenerateWeightsError("naive merge: combined weight is zero");
    const double wa = a.weight / w;
    const double wb = b.weight / w;
    const Vector d = a.mean - b.mean;
    Matrix p = wa * a.cov + wb * b.cov + wa * wb * d * d.transpose();
    return {w, wa * a.mean + wb * b.mean, symmetrize(p)};
}

inline double bound(const Component& a, const Component& b) {
    const Component m = merge(a, b);
    return 0.5 * (m.weight * log_det(m.cov) - a.weight * log_det(a.cov) - b.weight * log_det(b.cov));
}

/// Same greedy rule as gmmf::reduce, with a full rescan for every merge.
inline Mixture reduce(Mixture m, const ReductionConfig& cfg) {
    cfg.validate();
    Mixture comps;
    for (auto& c : m) {
        if (c.weight >= kPruneWeight) comps.push_back(std::move(c));
    }
    if (comps.empty()) throw DegenerateWeightsError("naive reduce: no components left");
    const std::size_t n = comps.size();
    std::vector<bool> alive(n, true);
    Matrix table = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) table(i, j) = std::max(0.0, bound(comps[i], comps[j]));

    std::size_t k = n;
    while (true) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (alive[j] && table(i, j) < best) {
                    best = table(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!(k > cfg.max_components || (k > cfg.min_components && best < cfg.threshold))) break;
        comps[bi] = merge(comps[bi], comps[bj]);
        alive[bj] = false;
        --k;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == bi || !alive[r]) continue;
            const double v = std::max(0.0, bound(comps[std::min(r, bi)], comps[std::max(r, bi)]));
            table(std::min(r, bi), std::max(r, bi)) = v;
        }
    }
    Mixture out;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (alive[i]) {
            out.push_back(comps[i]);
            total += comps[i].weight;
        }
    }
    for (auto& c : out) c.weight /= total;
    return out;
}

struct UpdateResult {
    Mixture mixture;
    double log_likelihood = 0.0;
};

template <class Provider>
UpdateResult measurement_update(const Mixture& pred, const Vector& y, Provider&& components_for) {
    Mixture out;
    std::vector<double> log_raw;
    for (const auto& c : pred) {
        GaussianComponent probe(c.weight, c.mean, UpperTriangular::identity(c.mean.size()));
        for (const auto& m : components_for(probe)) {
            const Eigen::Index p = m.matrix.rows();
            const Matrix r = m.noise_sqrt.covariance();
            const Matrix sigma = symmetrize(m.matrix * c.cov * m.matrix.transpose() + r);
            require_positive_definite(sigma, "naive measurement update (innovation)");
            const Matrix sigma_inv = sigma.inverse();
            const Matrix gain = c.cov * m.matrix.transpose() * sigma_inv;
            const Vector e = y - m.matrix * c.mean - m.offset;
            Matrix cov = symmetrize(c.cov - gain * sigma * gain.transpose());
            const double lw = (c.weight > 0.0 && m.weight > 0.0)
                                  ? std::log(c.weight) + std::log(m.weight) - 0.5 * e.dot(sigma_inv * e) -
                                        0.5 * log_det(sigma) - 0.5 * static_cast<double>(p) * kLogTwoPi
                                  : -std::numeric_limits<double>::infinity();
            log_raw.push_back(lw);
            out.push_back({0.0, c.mean + gain * e, std::move(cov)});
        }
    }
    double top = -std::numeric_limits<double>::infinity();
    for (double v : log_raw) top = std::max(top, v);
    if (top == -std::numeric_limits<double>::infinity()) {
        throw ModelMismatchError("naive measurement update: zero likelihood for every component");
    }
    double s = 0.0;
    for (double v : log_raw) s += std::exp(v - top);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].weight = std::exp(log_raw[i] - top) / s;
    return {std::move(out), top + std::log(s)};
}

template <class Provider>
Mixture time_update(const Mixture& filt, Provider&& components_for) {
    Mixture out;
    for (const auto& c : filt) {
        GaussianComponent probe(c.weight, c.mean, UpperTriangular::identity(c.mean.size()));
        for (const auto& a : components_for(probe)) {
            Matrix cov = symmetrize(a.matrix * c.cov * a.matrix.transpose() + a.noise_sqrt.covariance());
            out.push_back({c.weight * a.weight, a.matrix * c.mean + a.offset, std::move(cov)});
        }
    }
    return out;
}

inline Moments moments(const Mixture& m) {
    const Eigen::Index n = m.front().mean.size();
    Moments out{Vector::Zero(n), Matrix::Zero(n, n)};
    double total = 0.0;
    for (const auto& c : m) total += c.weight;
    for (const auto& c : m) out.mean += (c.weight / total) * c.mean;
    for (const auto& c : m) {
        const Vector d = c.mean - out.mean;
        out.covariance += (c.weight / total) * (c.cov + d * d.transpose());
    }
    out.covariance = symmetrize(out.covariance);
    return out;
}

}  // namespace gmmf::naive

namespace gmmf {

/// Covariance-form filter with the same step structure and trace as run_filter.
/// Splitting is not supported.
inline FilterTrace run_filter_naive(const StateSpaceModel& model, std::span<const Vector> measurements,
                                    const FilterConfig& cfg, int first_step = 1) {
    cfg.validate();
    model.validate();
    if (cfg.split) throw ArgumentError("run_filter_naive: component splitting is not supported");
    if (measurements.empty()) throw ArgumentError("run_filter_naive: no measurements");

    FilterTrace trace;
    naive::Mixture predicted = naive::from_mixture(model.prior);
    std::size_t predicted_pre = predicted.size();
    std::size_t predicted_post = predicted.size();
    for (std::size_t k = 0; k < measurements.size(); ++k) {
        const int t = first_step + static_cast<int>(k);
        const auto started = std::chrono::steady_clock::now();
        FilterStep step;
        step.t = t;
        try {
            for (const auto& c : predicted) naive::require_positive_definite(c.cov, "naive predicted mixture");
            auto meas = [&](const GaussianComponent& c) { return model.measurement_at(c.mean, t); };
            auto proc = [&](const GaussianComponent& c) { return model.process_at(c.mean, t); };
            step.predicted_pre = predicted_pre;
            step.predicted_post = predicted_post;
            step.predicted_used = predicted.size();
            auto updated = naive::measurement_update(predicted, measurements[k], meas);
            step.log_likelihood = updated.log_likelihood;
            step.filtered_pre = updated.mixture.size();
            naive::Mixture filtered = naive::reduce(std::move(updated.mixture), cfg.filtering);
            step.filtered_post = step.filtered_used = filtered.size();
            naive::Mixture next = naive::time_update(filtered, proc);
            predicted_pre = next.size();
            next = naive::reduce(std::move(next), cfg.prediction);
            predicted_post = next.size();

            step.predicted_moments = naive::moments(predicted);
            step.filtered_moments = naive::moments(filtered);
            step.predicted = naive::to_mixture(predicted);
            step.filtered = naive::to_mixture(filtered);
            predicted = std::move(next);
        } catch (const StepError&) {
            throw;
        } catch (const Error& e) {
            throw StepError(t, e.what());
        }
        step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        trace.steps.push_back(std::move(step));
    }
    trace.final_prediction = naive::to_mixture(predicted);
    return trace;
}

}  // namespace gmmf
