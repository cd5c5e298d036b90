#pragma once

// Bootstrap particle filter: transition-prior proposal, weighting by the full
// measurement likelihood, systematic resampling when ESS drops below n/2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/mixture.hpp"
#include "gmmf/model.hpp"

namespace gmmf {

struct ParticleCloud {
    std::vector<Vector> particles;
    std::vector<double> weights;
    double ess = 0.0;
};

inline double effective_sample_size(std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v * v;
    return s > 0.0 ? 1.0 / s : 0.0;
}

inline Vector weighted_mean(const ParticleCloud& cloud) {
    Vector m = Vector::Zero(cloud.particles.front().size());
    for (std::size_t i = 0; i < cloud.particles.size(); ++i) m += cloud.weights[i] * cloud.particles[i];
    return m;
}

/// Indices selected by systematic resampling of normalized weights.
template <class R>
std::vector<std::size_t> systematic_resample(std::span<const double> weights, R& rng) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> idx(n);
    if (n == 0) return idx;
    std::uniform_real_distribution<double> uniform(0.0, 1.0 / static_cast<double>(n));
    const double u0 = uniform(rng);
    double cumulative = weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
        while (u > cumulative && j + 1 < n) cumulative += weights[++j];
        idx[i] = j;
    }
    return idx;
}

struct ParticleStep {
    int t = 0;
    Vector predicted_mean;
    Vector filtered_mean;
    double ess = 0.0;
    bool resampled = false;
    double log_likelihood = 0.0;
};

struct ParticleFilterOptions {
    std::size_t particles = 10000;
    /// Steps whose predicted and filtered clouds are kept in the trace.
    std::vector<int> keep_clouds;
};

struct ParticleTrace {
    std::vector<ParticleStep> steps;
    std::map<int, ParticleCloud> predicted_clouds;
    std::map<int, ParticleCloud> filtered_clouds;
};

template <class R>
ParticleTrace particle_filter(const StateSpaceModel& model, std::span<const Vector> measurements,
                              const ParticleFilterOptions& opt, R& rng, int first_step = 1) {
    if (opt.particles < 2) throw ArgumentError("particle_filter: need at least two particles");
    const std::size_t n = opt.particles;
    ParticleTrace trace;
    ParticleCloud cloud;
    cloud.particles = sample(model.prior, rng, n);
    cloud.weights.assign(n, 1.0 / static_cast<double>(n));
    std::vector<double> logw(n);

    for (std::size_t k = 0; k < measurements.size(); ++k) {
        const int t = first_step + static_cast<int>(k);
        const auto keep = std::find(opt.keep_clouds.begin(), opt.keep_clouds.end(), t) != opt.keep_clouds.end();
        ParticleStep step;
        step.t = t;
        cloud.ess = effective_sample_size(cloud.weights);
        step.predicted_mean = weighted_mean(cloud);
        if (keep) trace.predicted_clouds[t] = cloud;

        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double ll = measurement_log_likelihood(model, cloud.particles[i], measurements[k], t);
            logw[i] = cloud.weights[i] > 0.0 ? std::log(cloud.weights[i]) + ll : -std::numeric_limits<double>::infinity();
            top = std::max(top, logw[i]);
        }
        if (!(top > -std::numeric_limits<double>::infinity())) {
            throw ParticleDegeneracyError(t, "particle_filter: every particle has zero weight");
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cloud.weights[i] = std::exp(logw[i] - top);
            total += cloud.weights[i];
        }
        for (auto& w : cloud.weights) w /= total;
        step.log_likelihood = top + std::log(total);
        cloud.ess = effective_sample_size(cloud.weights);
        step.ess = cloud.ess;
        step.filtered_mean = weighted_mean(cloud);
        if (keep) trace.filtered_clouds[t] = cloud;

        if (cloud.ess < 0.5 * static_cast<double>(n)) {
            const auto idx = systematic_resample(std::span<const double>(cloud.weights), rng);
            std::vector<Vector> resampled;
            resampled.reserve(n);
            for (std::size_t i : idx) resampled.push_back(cloud.particles[i]);
            cloud.particles = std::move(resampled);
            cloud.weights.assign(n, 1.0 / static_cast<double>(n));
            step.resampled = true;
        }
        for (auto& p : cloud.particles) p = sample_transition(model, p, t, rng);
        trace.steps.push_back(std::move(step));
    }
    return trace;
}

}  // namespace gmmf
