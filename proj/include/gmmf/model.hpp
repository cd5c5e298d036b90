#pragma once

// Gaussian-mixture state-space models
//
//   x_1     ~ sum_i alpha_i N(mu_i, P_i)
//   x_{t+1} ~ sum_j beta_j  N(A_j x_t + u_j(t), Q_j)
//   y_t     ~ sum_k gamma_k N(C_k x_t + v_k(t), R_k)
//
// plus nonlinear transitions/observations with additive Gaussian noise that
// the filter handles through per-component first-order linearization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"

namespace gmmf {

using Rng = std::mt19937_64;

/// Step-indexed additive offset u(t) or v(t).
///
/// Pure function of t.  The scalar kinds write into a single entry
/// (`component`) of an otherwise zero vector of length `dim`.
struct OffsetSignal {
    enum class Kind { none, constant, sin, cos, noise, table };

    Kind kind = Kind::none;
    Eigen::Index dim = 0;
    Eigen::Index component = 0;
    Vector value;                  // constant
    double amplitude = 0.0;        // sin, cos, noise (standard deviation)
    double rate = 0.0;             // sin, cos: radians per step
    double phase = 0.0;            // sin, cos
    std::uint64_t seed = 0;        // noise
    std::vector<double> table;     // table: value at step t is table[t-1]

    static OffsetSignal none(Eigen::Index dim) {
        OffsetSignal s;
        s.dim = dim;
        return s;
    }

    static OffsetSignal constant(Vector v) {
        OffsetSignal s;
        s.kind = Kind::constant;
        s.dim = v.size();
        s.value = std::move(v);
        return s;
    }

    static OffsetSignal sinusoid(Kind k, Eigen::Index dim, Eigen::Index component, double amplitude, double rate,
                                 double phase = 0.0) {
        OffsetSignal s;
        s.kind = k;
        s.dim = dim;
        s.component = component;
        s.amplitude = amplitude;
        s.rate = rate;
        s.phase = phase;
        return s;
    }

    /// Known pseudo-random input: amplitude * z_t with z_t standard normal, a
    /// pure function of (seed, t).
    static OffsetSignal noise(Eigen::Index dim, Eigen::Index component, double stddev, std::uint64_t seed) {
        OffsetSignal s;
        s.kind = Kind::noise;
        s.dim = dim;
        s.component = component;
        s.amplitude = stddev;
        s.seed = seed;
        return s;
    }

    /// Tabulated values; step t reads entry t-1, clamped to the table.
    static OffsetSignal tabulated(Eigen::Index dim, Eigen::Index component, std::vector<double> values) {
        OffsetSignal s;
        s.kind = Kind::table;
        s.dim = dim;
        s.component = component;
        s.table = std::move(values);
        return s;
    }

    void validate(Eigen::Index expected_dim, const std::string& where) const {
        if (dim != expected_dim) {
            throw ArgumentError(where + ": offset has dimension " + std::to_string(dim) + ", expected " +
                                std::to_string(expected_dim));
        }
        if (kind == Kind::constant && value.size() != dim) throw ArgumentError(where + ": constant offset size");
        if (kind != Kind::none && kind != Kind::constant && (component < 0 || component >= dim)) {
            throw ArgumentError(where + ": offset component out of range");
        }
        if (kind == Kind::table && table.empty()) throw ArgumentError(where + ": empty offset table");
    }

    [[nodiscard]] Vector operator()(int t) const {
        if (kind == Kind::constant) return value;
        Vector out = Vector::Zero(dim);
        switch (kind) {
        case Kind::none:
        case Kind::constant:
            break;
        case Kind::sin:
            out(component) = amplitude * std::sin(rate * t + phase);
            break;
        case Kind::cos:
            out(component) = amplitude * std::cos(rate * t + phase);
            break;
        case Kind::noise: {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(t)};
            Rng rng(seq);
            std::normal_distribution<double> normal(0.0, 1.0);
            out(component) = amplitude * normal(rng);
            break;
        }
        case Kind::table: {
            const auto idx = static_cast<std::size_t>(std::max(t, 1) - 1);
            out(component) = table[std::min(idx, table.size() - 1)];
            break;
        }
        }
        return out;
    }

    friend bool operator==(const OffsetSignal& a, const OffsetSignal& b) {
        return a.kind == b.kind && a.dim == b.dim && a.component == b.component &&
               a.value.size() == b.value.size() && a.value == b.value && a.amplitude == b.amplitude &&
               a.rate == b.rate && a.phase == b.phase && a.seed == b.seed && a.table == b.table;
    }
};

/// x_{t+1} = A x_t + u(t) + w, w ~ N(0, Q); chosen with probability `weight`.
struct ProcessComponent {
    double weight = 1.0;
    Matrix transition;
    OffsetSignal offset;
    UpperTriangular noise_sqrt;

    friend bool operator==(const ProcessComponent& a, const ProcessComponent& b) {
        return a.weight == b.weight && a.transition == b.transition && a.offset == b.offset &&
               a.noise_sqrt == b.noise_sqrt;
    }
};

/// y_t = C x_t + v(t) + e, e ~ N(0, R); chosen with probability `weight`.
struct MeasurementComponent {
    double weight = 1.0;
    Matrix observation;
    OffsetSignal offset;
    UpperTriangular noise_sqrt;

    friend bool operator==(const MeasurementComponent& a, const MeasurementComponent& b) {
        return a.weight == b.weight && a.observation == b.observation && a.offset == b.offset &&
               a.noise_sqrt == b.noise_sqrt;
    }
};

/// A process or measurement component with its offset evaluated at one step.
struct AffineGaussian {
    double weight = 1.0;
    Matrix matrix;
    Vector offset;
    UpperTriangular noise_sqrt;
};

using VectorFunction = std::function<Vector(const Vector&, int)>;
using JacobianFunction = std::function<Matrix(const Vector&, int)>;

/// Named nonlinear map with its jacobian and additive noise factor.
///
/// `name` and `params` identify a builtin so models can be serialized.
struct NonlinearMap {
    std::string name;
    std::map<std::string, double> params;
    VectorFunction function;
    JacobianFunction jacobian;
    UpperTriangular noise_sqrt;

    friend bool operator==(const NonlinearMap& a, const NonlinearMap& b) {
        return a.name == b.name && a.params == b.params && a.noise_sqrt == b.noise_sqrt;
    }
};

/// Nonlinear transition x_{t+1} = f(x_t, t) + w and observation y_t = h(x_t, t) + e.
struct NonlinearModel {
    NonlinearMap transition;
    NonlinearMap observation;
};

/// First-order expansion about x: A = df/dx(x), u = f(x) - A x.
struct Linearization {
    Matrix matrix;
    Vector offset;
};

namespace detail {

inline Linearization linearize(const NonlinearMap& map, const Vector& x, int t, const char* what) {
    if (!x.allFinite()) throw LinearizationError(std::string(what) + ": nonfinite expansion point");
    Linearization out;
    out.matrix = map.jacobian(x, t);
    const Vector fx = map.function(x, t);
    if (!out.matrix.allFinite() || !fx.allFinite()) {
        throw LinearizationError(std::string(what) + ": nonfinite value or jacobian from '" + map.name + "'");
    }
    if (out.matrix.rows() != fx.size() || out.matrix.cols() != x.size()) {
        throw LinearizationError(std::string(what) + ": jacobian has wrong shape");
    }
    out.offset = fx - out.matrix * x;
    return out;
}

}  // namespace detail

inline Linearization linearize_process(const NonlinearMap& transition, const Vector& x, int t) {
    return detail::linearize(transition, x, t, "linearize_process");
}

inline Linearization linearize_process(const NonlinearModel& nm, const Vector& x, int t) {
    return linearize_process(nm.transition, x, t);
}

inline Linearization linearize_measurement(const NonlinearMap& observation, const Vector& x, int t) {
    return detail::linearize(observation, x, t, "linearize_measurement");
}

inline Linearization linearize_measurement(const NonlinearModel& nm, const Vector& x, int t) {
    return linearize_measurement(nm.observation, x, t);
}

using ProcessModel = std::variant<std::vector<ProcessComponent>, NonlinearMap>;
using MeasurementModel = std::variant<std::vector<MeasurementComponent>, NonlinearMap>;

/// Prior mixture plus process and measurement models, each either a Gaussian
/// mixture of affine components or a single nonlinear map.
struct StateSpaceModel {
    GaussianMixture prior;
    ProcessModel process;
    MeasurementModel measurement;

    [[nodiscard]] Eigen::Index state_dim() const { return prior.dim(); }

    [[nodiscard]] Eigen::Index measurement_dim() const {
        if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&measurement)) {
            return lin->empty() ? 0 : lin->front().observation.rows();
        }
        return std::get<NonlinearMap>(measurement).noise_sqrt.dim();
    }

    [[nodiscard]] bool linear_process() const { return std::holds_alternative<std::vector<ProcessComponent>>(process); }
    [[nodiscard]] bool linear_measurement() const {
        return std::holds_alternative<std::vector<MeasurementComponent>>(measurement);
    }

    [[nodiscard]] std::size_t process_count() const {
        return linear_process() ? std::get<std::vector<ProcessComponent>>(process).size() : 1;
    }
    [[nodiscard]] std::size_t measurement_count() const {
        return linear_measurement() ? std::get<std::vector<MeasurementComponent>>(measurement).size() : 1;
    }

    /// Process components at step t, linearized about `mean` when nonlinear.
    [[nodiscard]] std::vector<AffineGaussian> process_at(const Vector& mean, int t) const {
        std::vector<AffineGaussian> out;
        if (const auto* lin = std::get_if<std::vector<ProcessComponent>>(&process)) {
            out.reserve(lin->size());
            for (const auto& c : *lin) out.push_back({c.weight, c.transition, c.offset(t), c.noise_sqrt});
        } else {
            const auto& f = std::get<NonlinearMap>(process);
            auto lz = linearize_process(f, mean, t);
            out.push_back({1.0, std::move(lz.matrix), std::move(lz.offset), f.noise_sqrt});
        }
        return out;
    }

    /// Measurement components at step t, linearized about `mean` when nonlinear.
    [[nodiscard]] std::vector<AffineGaussian> measurement_at(const Vector& mean, int t) const {
        std::vector<AffineGaussian> out;
        if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&measurement)) {
            out.reserve(lin->size());
            for (const auto& c : *lin) out.push_back({c.weight, c.observation, c.offset(t), c.noise_sqrt});
        } else {
            const auto& h = std::get<NonlinearMap>(measurement);
            auto lz = linearize_measurement(h, mean, t);
            out.push_back({1.0, std::move(lz.matrix), std::move(lz.offset), h.noise_sqrt});
        }
        return out;
    }

    friend bool operator==(const StateSpaceModel&, const StateSpaceModel&) = default;

    void validate() const {
        const auto n = state_dim();
        if (n < 1) throw ArgumentError("model: state dimension must be >= 1");
        if (std::abs(prior.weight_sum() - 1.0) > 1e-12) throw ArgumentError("model: prior weights must sum to 1");
        if (const auto* lin = std::get_if<std::vector<ProcessComponent>>(&process)) {
            if (lin->empty()) throw ArgumentError("model: empty process mixture");
            double s = 0.0;
            for (std::size_t j = 0; j < lin->size(); ++j) {
                const auto& c = (*lin)[j];
                const std::string where = "process component " + std::to_string(j);
                if (!(c.weight >= 0.0)) throw ArgumentError(where + ": negative weight");
                if (c.transition.rows() != n || c.transition.cols() != n) {
                    throw ArgumentError(where + ": transition matrix must be " + std::to_string(n) + "x" +
                                        std::to_string(n));
                }
                if (c.noise_sqrt.dim() != n) throw ArgumentError(where + ": noise factor dimension");
                c.offset.validate(n, where);
                s += c.weight;
            }
            if (std::abs(s - 1.0) > 1e-12) throw ArgumentError("model: process weights must sum to 1");
        } else if (std::get<NonlinearMap>(process).noise_sqrt.dim() != n) {
            throw ArgumentError("model: nonlinear process noise dimension");
        }
        const auto p = measurement_dim();
        if (p < 1) throw ArgumentError("model: measurement dimension must be >= 1");
        if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&measurement)) {
            double s = 0.0;
            for (std::size_t k = 0; k < lin->size(); ++k) {
                const auto& c = (*lin)[k];
                const std::string where = "measurement component " + std::to_string(k);
                if (!(c.weight >= 0.0)) throw ArgumentError(where + ": negative weight");
                if (c.observation.rows() != p || c.observation.cols() != n) {
                    throw ArgumentError(where + ": observation matrix must be " + std::to_string(p) + "x" +
                                        std::to_string(n));
                }
                if (c.noise_sqrt.dim() != p) throw ArgumentError(where + ": noise factor dimension");
                c.offset.validate(p, where);
                s += c.weight;
            }
            if (std::abs(s - 1.0) > 1e-12) throw ArgumentError("model: measurement weights must sum to 1");
        }
    }
};

/// Draws x_{t+1} given x_t.  `chosen` receives the process component index.
template <class R>
Vector sample_transition(const StateSpaceModel& model, const Vector& x, int t, R& rng, std::size_t* chosen = nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw_noise = [&](const UpperTriangular& f) {
        Vector z(f.dim());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        return Vector(f.matrix().transpose() * z);
    };
    if (const auto* lin = std::get_if<std::vector<ProcessComponent>>(&model.process)) {
        std::size_t j = 0;
        if (lin->size() > 1) {
            std::vector<double> w;
            for (const auto& c : *lin) w.push_back(c.weight);
            std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
            j = pick(rng);
        }
        if (chosen) *chosen = j;
        const auto& c = (*lin)[j];
        return c.transition * x + c.offset(t) + draw_noise(c.noise_sqrt);
    }
    if (chosen) *chosen = 0;
    const auto& f = std::get<NonlinearMap>(model.process);
    return f.function(x, t) + draw_noise(f.noise_sqrt);
}

/// Draws y_t given x_t.  `chosen` receives the measurement component index.
template <class R>
Vector sample_measurement(const StateSpaceModel& model, const Vector& x, int t, R& rng,
                          std::size_t* chosen = nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw_noise = [&](const UpperTriangular& f) {
        Vector z(f.dim());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        return Vector(f.matrix().transpose() * z);
    };
    if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&model.measurement)) {
        std::size_t k = 0;
        if (lin->size() > 1) {
            std::vector<double> w;
            for (const auto& c : *lin) w.push_back(c.weight);
            std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
            k = pick(rng);
        }
        if (chosen) *chosen = k;
        const auto& c = (*lin)[k];
        return c.observation * x + c.offset(t) + draw_noise(c.noise_sqrt);
    }
    if (chosen) *chosen = 0;
    const auto& h = std::get<NonlinearMap>(model.measurement);
    return h.function(x, t) + draw_noise(h.noise_sqrt);
}

/// log p(y_t | x_t) under the full measurement mixture.
inline double measurement_log_likelihood(const StateSpaceModel& model, const Vector& x, const Vector& y, int t) {
    if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&model.measurement)) {
        double top = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        terms.reserve(lin->size());
        for (const auto& c : *lin) {
            const double v = c.weight > 0.0 ? std::log(c.weight) + log_gaussian_density(y, c.observation * x + c.offset(t),
                                                                                         c.noise_sqrt)
                                            : -std::numeric_limits<double>::infinity();
            terms.push_back(v);
            top = std::max(top, v);
        }
        if (top == -std::numeric_limits<double>::infinity()) return top;
        double s = 0.0;
        for (double v : terms) s += std::exp(v - top);
        return top + std::log(s);
    }
    const auto& h = std::get<NonlinearMap>(model.measurement);
    return log_gaussian_density(y, h.function(x, t), h.noise_sqrt);
}

struct Trajectory {
    std::vector<Vector> states;
    std::vector<Vector> measurements;
    std::vector<std::size_t> process_choice;
    std::vector<std::size_t> measurement_choice;
};

/// Simulates x_1..x_N and y_1..y_N, with x_1 drawn from the prior.
template <class R>
Trajectory simulate(const StateSpaceModel& model, std::size_t steps, R& rng) {
    if (steps < 1) throw ArgumentError("simulate: need at least one step");
    Trajectory out;
    out.states.reserve(steps);
    out.measurements.reserve(steps);
    Vector x = sample(model.prior, rng, 1).front();
    for (std::size_t k = 1; k <= steps; ++k) {
        const int t = static_cast<int>(k);
        std::size_t mk = 0;
        out.states.push_back(x);
        out.measurements.push_back(sample_measurement(model, x, t, rng, &mk));
        out.measurement_choice.push_back(mk);
        if (k == steps) break;
        std::size_t pj = 0;
        x = sample_transition(model, x, t, rng, &pj);
        out.process_choice.push_back(pj);
    }
    return out;
}

// --- splitting -------------------------------------------------------------

struct SplitConfig {
    std::size_t count = 3;
    double spread = 0.5;

    void validate() const {
        if (count < 1) throw ArgumentError("SplitConfig: count must be >= 1");
        if (!(spread > 0.0 && spread <= 1.0)) throw ArgumentError("SplitConfig: spread must lie in (0, 1]");
    }

    friend bool operator==(const SplitConfig&, const SplitConfig&) = default;
};

/// Inverse of the standard normal CDF.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must lie in (0, 1)");
    // Bisection on erfc is plenty for the handful of calls made here.
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid; else hi = mid;
        if (hi - lo < 1e-15) break;
    }
    return 0.5 * (lo + hi);
}

/// Dominant eigen-direction of R^T R by power iteration, started from the
/// largest-norm row of R.
inline Vector principal_axis(const UpperTriangular& r) {
    const Matrix& m = r.matrix();
    const Eigen::Index n = m.rows();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        if (m.row(i).squaredNorm() > m.row(best).squaredNorm()) best = i;
    }
    Vector v = m.row(best).transpose();
    if (v.norm() == 0.0) {
        v = Vector::Zero(n);
        v(0) = 1.0;
    }
    v.normalize();
    for (int it = 0; it < 500; ++it) {
        Vector next = m.transpose() * (m * v);
        const double nn = next.norm();
        if (nn == 0.0) break;
        next /= nn;
        if (next.dot(v) < 0.0) next = -next;
        const double change = (next - v).norm();
        v = std::move(next);
        if (change < 1e-14) break;
    }
    return v;
}

/// Replaces one component by `count` narrower ones spread along its principal
/// axis.  Weights are equal and sum to the original weight; the combined mean
/// and covariance reproduce the original ones.
inline std::vector<GaussianComponent> split_component(const GaussianComponent& c, const SplitConfig& cfg) {
    cfg.validate();
    if (cfg.count == 1) return {c};
    const Vector axis = principal_axis(c.cov_sqrt);
    const double variance = (c.cov_sqrt.matrix() * axis).squaredNorm();
    if (!(variance > 0.0)) return {c};
    const double sigma = std::sqrt(variance);

    std::vector<double> z(cfg.count);
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < cfg.count; ++i) {
        z[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(cfg.count));
        mean_sq += z[i] * z[i];
    }
    mean_sq /= static_cast<double>(cfg.count);

    // Remove the spread of the means from the variance along the axis:
    // (I - k a a^T) P (I - k a a^T) = P - (1 - (1-k)^2) sigma^2 a a^T.
    const double removed = cfg.spread * cfg.spread * mean_sq;  // fraction of sigma^2
    const double kappa = 1.0 - std::sqrt(1.0 - removed);
    const Eigen::Index n = c.dim();
    const Matrix shrink = Matrix::Identity(n, n) - kappa * axis * axis.transpose();
    const UpperTriangular narrow = qr_r_factor(c.cov_sqrt.matrix() * shrink);

    std::vector<GaussianComponent> out;
    out.reserve(cfg.count);
    const double w = c.weight / static_cast<double>(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        out.emplace_back(w, c.mean + (cfg.spread * sigma * z[i]) * axis, narrow);
    }
    return out;
}

inline GaussianMixture split_mixture(const GaussianMixture& m, const SplitConfig& cfg) {
    std::vector<GaussianComponent> out;
    out.reserve(m.size() * cfg.count);
    for (const auto& c : m) {
        auto parts = split_component(c, cfg);
        for (auto& p : parts) out.push_back(std::move(p));
    }
    return GaussianMixture(std::move(out));
}

// --- builtin nonlinear maps --------------------------------------------------

/// Largest relative deviation between a jacobian and central finite
/// differences (step 1e-6 * (1 + |x_i|)), measured against max(1, |J|).
inline double jacobian_error(const NonlinearMap& map, const Vector& x, int t) {
    const Matrix j = map.jacobian(x, t);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x(i)));
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const Vector fd = (map.function(xp, t) - map.function(xm, t)) / (2.0 * h);
        for (Eigen::Index r = 0; r < fd.size(); ++r) {
            const double err = std::abs(fd(r) - j(r, i)) / std::max(1.0, std::abs(j(r, i)));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

namespace detail {

inline double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

}  // namespace detail

/// h(x) = scale * x^2 applied elementwise to a scalar state.
inline NonlinearMap quadratic_measurement(double scale, double noise_variance) {
    NonlinearMap m;
    m.name = "quadratic-measurement";
    m.params = {{"scale", scale}};
    m.function = [scale](const Vector& x, int) {
        Vector y(1);
        y(0) = scale * x(0) * x(0);
        return y;
    };
    m.jacobian = [scale](const Vector& x, int) {
        Matrix j(1, x.size());
        j.setZero();
        j(0, 0) = 2.0 * scale * x(0);
        return j;
    };
    m.noise_sqrt = UpperTriangular::diagonal(Vector::Constant(1, std::sqrt(noise_variance)));
    return m;
}

/// Univariate growth benchmark transition
///   standard: f(x, t) = a x + b x / (1 + x^2) + c cos(1.2 t)
///   printed:  f(x, t) = a x + b x + c cos(1.2 t)
inline NonlinearMap ucm_transition(double a, double b, double c, double noise_variance, bool printed_form = false) {
    NonlinearMap m;
    m.name = "ucm-benchmark";
    m.params = {{"a", a}, {"b", b}, {"c", c}, {"printed_form", printed_form ? 1.0 : 0.0}};
    if (printed_form) {
        m.function = [a, b, c](const Vector& x, int t) {
            Vector y(1);
            y(0) = a * x(0) + b * x(0) + c * std::cos(1.2 * t);
            return y;
        };
        m.jacobian = [a, b](const Vector&, int) { return Matrix::Constant(1, 1, a + b); };
    } else {
        m.function = [a, b, c](const Vector& x, int t) {
            Vector y(1);
            y(0) = a * x(0) + b * x(0) / (1.0 + x(0) * x(0)) + c * std::cos(1.2 * t);
            return y;
        };
        m.jacobian = [a, b](const Vector& x, int) {
            const double s = 1.0 + x(0) * x(0);
            return Matrix::Constant(1, 1, a + b * (1.0 - x(0) * x(0)) / (s * s));
        };
    }
    m.noise_sqrt = UpperTriangular::diagonal(Vector::Constant(1, std::sqrt(noise_variance)));
    return m;
}

/// Rebuilds a builtin map from its registered name and parameters.
inline NonlinearMap make_builtin_map(const std::string& name, const std::map<std::string, double>& params,
                                     const UpperTriangular& noise_sqrt) {
    NonlinearMap m;
    if (name == "quadratic-measurement") {
        m = quadratic_measurement(detail::param(params, "scale", 1.0), 1.0);
    } else if (name == "ucm-benchmark") {
        m = ucm_transition(detail::param(params, "a", 0.5), detail::param(params, "b", 25.0),
                           detail::param(params, "c", 8.0), 1.0, detail::param(params, "printed_form", 0.0) != 0.0);
    } else {
        throw ArgumentError("unknown nonlinear model '" + name + "' (known: quadratic-measurement, ucm-benchmark)");
    }
    for (const auto& [k, v] : params) {
        if (!m.params.contains(k)) throw ArgumentError("nonlinear model '" + name + "': unknown parameter '" + k + "'");
        m.params[k] = v;
    }
    m.noise_sqrt = noise_sqrt;
    return m;
}

}  // namespace gmmf
