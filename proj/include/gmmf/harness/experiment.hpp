#pragma once

// Experiment configurations, the builtin registry and the run driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmmf/errors.hpp"
#include "gmmf/filter.hpp"
#include "gmmf/harness/csv.hpp"
#include "gmmf/harness/json_io.hpp"
#include "gmmf/harness/metrics.hpp"
#include "gmmf/kalman.hpp"
#include "gmmf/kde.hpp"
#include "gmmf/model.hpp"
#include "gmmf/naive_filter.hpp"
#include "gmmf/particle_filter.hpp"

namespace gmmf::harness {

enum class Method { gmmf, kalman, smc, naive };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::gmmf: return "gmmf";
        case Method::kalman: return "kalman";
        case Method::smc: return "smc";
        case Method::naive: return "naive";
    }
    return "?";
}

inline Method method_from_name(const std::string& s, const std::string& where) {
    for (Method m : {Method::gmmf, Method::kalman, Method::smc, Method::naive}) {
        if (method_name(m) == s) return m;
    }
    throw ConfigError(where, "unknown method '" + s + "' (known: gmmf, kalman, smc, naive)");
}

/// "gmmf,kalman" -> methods; used by the --methods flag.
inline std::vector<Method> parse_method_list(const std::string& s, const std::string& where) {
    std::vector<Method> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(method_from_name(item, where));
    }
    return out;
}

namespace detail {

inline bool same(const Vector& a, const Vector& b) { return a.size() == b.size() && a == b; }
inline bool same(const std::optional<Vector>& a, const std::optional<Vector>& b) {
    return a.has_value() == b.has_value() && (!a || same(*a, *b));
}

}  // namespace detail

/// Single-component Kalman reference run alongside the mixture filter.
struct ReferenceKalman {
    std::size_t process_component = 0;
    std::size_t measurement_component = 0;
    Vector prior_mean;
    UpperTriangular prior_cov_sqrt;

    friend bool operator==(const ReferenceKalman& a, const ReferenceKalman& b) {
        return a.process_component == b.process_component && a.measurement_component == b.measurement_component &&
               detail::same(a.prior_mean, b.prior_mean) && a.prior_cov_sqrt == b.prior_cov_sqrt;
    }
};

/// Density export.  Without explicit bounds each axis spans the truth range
/// widened by `sigmas` times the largest predicted standard deviation seen at
/// the snapshots.
struct GridConfig {
    std::size_t points = 400;
    double sigmas = 3.0;
    std::vector<int> snapshots;
    std::optional<Vector> lo;
    std::optional<Vector> hi;

    friend bool operator==(const GridConfig& a, const GridConfig& b) {
        return a.points == b.points && a.sigmas == b.sigmas && a.snapshots == b.snapshots && detail::same(a.lo, b.lo) &&
               detail::same(a.hi, b.hi);
    }
};

struct ExperimentConfig {
    std::string name;
    StateSpaceModel model;
    /// Prior used to draw the true initial state; the filter prior otherwise.
    std::optional<GaussianMixture> truth_prior;
    /// 0 means "every row of measurements_file".
    std::size_t steps = 100;
    std::uint64_t seed = 1;
    FilterConfig filter;
    std::vector<Method> methods{Method::gmmf};
    std::optional<ReferenceKalman> kalman;
    std::size_t particles = 10000;
    GridConfig grid;
    std::string measurements_file;
    std::string output_dir;
    bool write_mixtures = false;

    [[nodiscard]] bool uses(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// --- builtins ----------------------------------------------------------------

namespace detail {

inline UpperTriangular sd_diag(Eigen::Index n, double sd) { return UpperTriangular::diagonal(Vector::Constant(n, sd)); }

inline GaussianMixture single_gaussian(const Vector& mean, const UpperTriangular& r) {
    return GaussianMixture({GaussianComponent(1.0, mean, r)});
}

}  // namespace detail

/// Constant-velocity model observed in position, filter started from a
/// coarse 5x5 grid of broad components.
inline ExperimentConfig builtin_linear_ssm() {
    ExperimentConfig c;
    c.name = "linear-ssm";
    std::vector<GaussianComponent> grid;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            Vector m(2);
            m << -10.0 + 5.0 * i, -10.0 + 5.0 * j;
            grid.emplace_back(1.0 / 25.0, m, detail::sd_diag(2, 20.0));
        }
    }
    Matrix a(2, 2);
    a << 1.0, 0.01, 0.0, 1.0;
    Matrix obs(1, 2);
    obs << 1.0, 0.0;
    c.model.prior = GaussianMixture(std::move(grid));
    c.model.process = std::vector<ProcessComponent>{{1.0, a, OffsetSignal::noise(2, 1, 0.2, 1), detail::sd_diag(2, 0.1)}};
    c.model.measurement =
        std::vector<MeasurementComponent>{{1.0, obs, OffsetSignal::none(1), detail::sd_diag(1, std::sqrt(0.1))}};
    c.truth_prior = detail::single_gaussian(Vector::Zero(2), UpperTriangular::identity(2));
    c.methods = {Method::gmmf, Method::kalman};
    c.kalman = ReferenceKalman{0, 0, Vector::Zero(2), UpperTriangular::identity(2)};
    c.grid.points = 100;
    c.grid.snapshots = {1, 5, 20, 100};
    c.output_dir = "out/linear-ssm";
    return c;
}

/// Two-mode process and two-mode measurement mixture.
inline ExperimentConfig builtin_gmm_switching() {
    ExperimentConfig c;
    c.name = "gmm-switching";
    c.steps = 200;
    Matrix a1(2, 2), a2(2, 2);
    a1 << 1.0, 0.1, 0.0, 1.0;
    a2 << 0.1, 0.01, 0.0, 0.1;
    Matrix obs(1, 2);
    obs << 1.0, 0.0;
    const auto u = OffsetSignal::sinusoid(OffsetSignal::Kind::sin, 2, 0, 1.0, 4.0 * std::numbers::pi / 200.0);
    c.model.prior = detail::single_gaussian(Vector::Zero(2), UpperTriangular::identity(2));
    c.model.process = std::vector<ProcessComponent>{{0.99, a1, u, detail::sd_diag(2, 0.1)},
                                                    {0.01, a2, u, detail::sd_diag(2, 0.003)}};
    const auto r = detail::sd_diag(1, std::sqrt(0.1));
    c.model.measurement = std::vector<MeasurementComponent>{
        {0.1, obs, OffsetSignal::constant(Vector::Constant(1, 12.5)), r},
        {0.9, obs, OffsetSignal::constant(Vector::Constant(1, -12.5)), r}};
    c.methods = {Method::gmmf, Method::kalman};
    c.kalman = ReferenceKalman{0, 1, Vector::Zero(2), UpperTriangular::identity(2)};
    c.output_dir = "out/gmm-switching";
    return c;
}

/// Random walk with a known cosine input observed through x^2.
inline ExperimentConfig builtin_bimodal() {
    ExperimentConfig c;
    c.name = "bimodal";
    std::vector<GaussianComponent> prior;
    for (int i = 0; i < 50; ++i) {
        prior.emplace_back(1.0 / 50.0, Vector::Constant(1, -10.0 + i * 20.0 / 49.0), detail::sd_diag(1, std::sqrt(0.1)));
    }
    c.model.prior = GaussianMixture(std::move(prior));
    c.model.process = std::vector<ProcessComponent>{
        {1.0, Matrix::Identity(1, 1), OffsetSignal::sinusoid(OffsetSignal::Kind::cos, 1, 0, 5.0, 0.1),
         detail::sd_diag(1, 0.1)}};
    c.model.measurement = quadratic_measurement(1.0, 25.0);
    c.filter.filtering = {1, 35, 0.01};
    c.filter.split = SplitConfig{3, 0.5};
    c.methods = {Method::gmmf, Method::smc};
    c.particles = 100000;
    c.grid.snapshots = {1, 30, 50, 60};
    c.output_dir = "out/bimodal";
    return c;
}

/// Univariate nonstationary growth benchmark.
inline ExperimentConfig builtin_nonlinear_benchmark() {
    ExperimentConfig c;
    c.name = "nonlinear-benchmark";
    c.model.prior = detail::single_gaussian(Vector::Zero(1), detail::sd_diag(1, std::sqrt(5.0)));
    c.model.process = ucm_transition(0.5, 25.0, 8.0, 1.0);
    c.model.measurement = quadratic_measurement(0.05, 1.0);
    c.filter.split = SplitConfig{3, 0.5};
    c.methods = {Method::gmmf, Method::smc};
    c.particles = 10000;
    c.grid.snapshots = {1, 5, 50, 80};
    c.output_dir = "out/nonlinear-benchmark";
    return c;
}

inline std::vector<std::string> builtin_names() {
    return {"linear-ssm", "gmm-switching", "bimodal", "nonlinear-benchmark"};
}

/// Unknown experiment name; the message lists the builtins.
class UnknownExperimentError : public ArgumentError {
public:
    explicit UnknownExperimentError(const std::string& name)
        : ArgumentError("unknown experiment '" + name + "' (known: " + known() + ")") {}

private:
    static std::string known() {
        std::string s;
        for (const auto& n : builtin_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }
};

inline ExperimentConfig builtin_experiment(const std::string& name) {
    if (name == "linear-ssm") return builtin_linear_ssm();
    if (name == "gmm-switching") return builtin_gmm_switching();
    if (name == "bimodal") return builtin_bimodal();
    if (name == "nonlinear-benchmark") return builtin_nonlinear_benchmark();
    throw UnknownExperimentError(name);
}

// --- validation --------------------------------------------------------------

inline void validate_experiment(const ExperimentConfig& c) {
    if (c.name.empty()) throw ConfigError("name", "must not be empty");
    try {
        c.model.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError("model", e.what());
    }
    const Eigen::Index n = c.model.state_dim();
    if (c.steps < 1 && c.measurements_file.empty()) throw ConfigError("steps", "must be >= 1");
    if (c.truth_prior && c.truth_prior->dim() != n) {
        throw ConfigError("truth_prior", "dimension " + std::to_string(c.truth_prior->dim()) +
                                             " differs from the state dimension " + std::to_string(n));
    }
    try {
        c.filter.filtering.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError("filter.filtering", e.what());
    }
    try {
        c.filter.prediction.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError("filter.prediction", e.what());
    }
    if (c.filter.split) {
        try {
            c.filter.split->validate();
        } catch (const ArgumentError& e) {
            throw ConfigError("filter.split", e.what());
        }
    }
    if (c.methods.empty()) throw ConfigError("methods", "at least one method is required");
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (c.methods[i] == c.methods[j]) throw ConfigError("methods", "'" + method_name(c.methods[i]) + "' listed twice");
        }
    }
    if (c.uses(Method::naive) && c.filter.split) {
        throw ConfigError("methods", "the naive reference filter does not support filter.split");
    }
    if (c.uses(Method::kalman)) {
        if (!c.model.linear_process() || !c.model.linear_measurement()) {
            throw ConfigError("methods", "kalman needs a linear model");
        }
        if (c.kalman) {
            if (c.kalman->process_component >= c.model.process_count()) {
                throw ConfigError("kalman.process_component", "out of range");
            }
            if (c.kalman->measurement_component >= c.model.measurement_count()) {
                throw ConfigError("kalman.measurement_component", "out of range");
            }
            if (c.kalman->prior_mean.size() != n || c.kalman->prior_cov_sqrt.dim() != n) {
                throw ConfigError("kalman.prior", "must have the state dimension " + std::to_string(n));
            }
        } else if (c.model.process_count() != 1 || c.model.measurement_count() != 1) {
            throw ConfigError("kalman", "required when the model has more than one component");
        }
    }
    if (c.uses(Method::smc) && c.particles < 2) throw ConfigError("particles", "must be >= 2");
    if (c.grid.points < 2) throw ConfigError("grid.points", "must be >= 2");
    if (!(c.grid.sigmas > 0.0) || !std::isfinite(c.grid.sigmas)) throw ConfigError("grid.sigmas", "must be positive");
    if (!c.grid.snapshots.empty() && n > 2) {
        throw ConfigError("grid.snapshots", "density grids need a 1-D or 2-D state");
    }
    for (int t : c.grid.snapshots) {
        if (t < 1 || (c.steps > 0 && static_cast<std::size_t>(t) > c.steps)) {
            throw ConfigError("grid.snapshots", "step " + std::to_string(t) + " outside 1.." + std::to_string(c.steps));
        }
    }
    if (c.grid.lo.has_value() != c.grid.hi.has_value()) throw ConfigError("grid", "give both lo and hi or neither");
    if (c.grid.lo) {
        if (c.grid.lo->size() != n || c.grid.hi->size() != n) {
            throw ConfigError("grid.lo", "bounds must have the state dimension " + std::to_string(n));
        }
        for (Eigen::Index d = 0; d < n; ++d) {
            if (!std::isfinite((*c.grid.lo)(d)) || !std::isfinite((*c.grid.hi)(d)) ||
                !((*c.grid.hi)(d) > (*c.grid.lo)(d))) {
                throw ConfigError("grid.hi", "bounds must be finite with hi > lo");
            }
        }
    }
}

// --- serialization -----------------------------------------------------------

inline Json to_json(const ReductionConfig& r) {
    return Json{{"min", r.min_components}, {"max", r.max_components}, {"threshold", r.threshold}};
}

inline Json to_json(const ExperimentConfig& c) {
    Json j;
    j["name"] = c.name;
    j["steps"] = c.steps;
    j["seed"] = c.seed;
    j["model"] = to_json(c.model);
    if (c.truth_prior) j["truth_prior"] = to_json(*c.truth_prior);
    j["filter"] = Json{{"filtering", to_json(c.filter.filtering)},
                       {"prediction", to_json(c.filter.prediction)},
                       {"split", c.filter.split ? Json{{"count", c.filter.split->count}, {"spread", c.filter.split->spread}}
                                                : Json()}};
    Json methods = Json::array();
    for (Method m : c.methods) methods.push_back(method_name(m));
    j["methods"] = methods;
    if (c.kalman) {
        j["kalman"] = Json{{"process_component", c.kalman->process_component},
                           {"measurement_component", c.kalman->measurement_component},
                           {"prior", Json{{"mean", to_json(c.kalman->prior_mean)},
                                          {"cov_sqrt", factor_to_json(c.kalman->prior_cov_sqrt)}}}};
    }
    j["particles"] = c.particles;
    Json grid{{"points", c.grid.points}, {"sigmas", c.grid.sigmas}, {"snapshots", c.grid.snapshots}};
    if (c.grid.lo) {
        grid["lo"] = to_json(*c.grid.lo);
        grid["hi"] = to_json(*c.grid.hi);
    }
    j["grid"] = grid;
    if (!c.measurements_file.empty()) j["measurements_file"] = c.measurements_file;
    j["output_dir"] = c.output_dir;
    j["write_mixtures"] = c.write_mixtures;
    return j;
}

namespace detail {

inline Json read_json_file(const std::string& path, const std::string& where) {
    std::ifstream in(path);
    if (!in) throw ConfigError(where, "cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(where, std::string("'") + path + "' is not valid JSON: " + e.what());
    }
}

inline std::string string_field(const Json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigError(where, "expected a string");
    return j.get<std::string>();
}

inline bool bool_field(const Json& j, const std::string& where) {
    if (!j.is_boolean()) throw ConfigError(where, "expected true or false");
    return j.get<bool>();
}

inline void reduction_from_json(const Json& j, ReductionConfig& r, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string w = where + "." + it.key();
        if (it.key() == "min") {
            r.min_components = count(it.value(), w);
        } else if (it.key() == "max") {
            r.max_components = count(it.value(), w);
        } else if (it.key() == "threshold") {
            r.threshold = number(it.value(), w);
        } else {
            throw ConfigError(w, "unknown key");
        }
    }
}

}  // namespace detail

/// Parses a configuration object.  Paths inside it resolve against `base_dir`.
/// A "base" key starts from a builtin, and the remaining keys override it.
inline ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    ExperimentConfig c;
    bool have_model = false;
    if (j.contains("base")) {
        const std::string base = detail::string_field(j.at("base"), "base");
        try {
            c = builtin_experiment(base);
        } catch (const UnknownExperimentError& e) {
            throw ConfigError("base", e.what());
        }
        have_model = true;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const Json& v = it.value();
        if (key == "base") continue;
        if (key == "name") {
            c.name = detail::string_field(v, key);
        } else if (key == "steps") {
            c.steps = detail::count(v, key);
        } else if (key == "seed") {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                throw ConfigError(key, "expected a nonnegative integer");
            }
            c.seed = v.get<std::uint64_t>();
        } else if (key == "model") {
            if (v.is_string()) {
                std::filesystem::path p = v.get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                c.model = model_from_json(detail::read_json_file(p.string(), key), key);
            } else {
                c.model = model_from_json(v, key);
            }
            have_model = true;
        } else if (key == "truth_prior") {
            if (v.is_null()) {
                c.truth_prior.reset();
            } else {
                c.truth_prior = mixture_from_json(v, key);
            }
        } else if (key == "filter") {
            if (!v.is_object()) throw ConfigError(key, "expected an object");
            for (auto f = v.begin(); f != v.end(); ++f) {
                const std::string w = "filter." + f.key();
                if (f.key() == "filtering") {
                    detail::reduction_from_json(f.value(), c.filter.filtering, w);
                } else if (f.key() == "prediction") {
                    detail::reduction_from_json(f.value(), c.filter.prediction, w);
                } else if (f.key() == "split") {
                    if (f.value().is_null() || (f.value().is_boolean() && !f.value().get<bool>())) {
                        c.filter.split.reset();
                    } else {
                        if (!f.value().is_object()) throw ConfigError(w, "expected an object or null");
                        SplitConfig s;
                        for (auto g = f.value().begin(); g != f.value().end(); ++g) {
                            if (g.key() == "count") {
                                s.count = detail::count(g.value(), w + ".count");
                            } else if (g.key() == "spread") {
                                s.spread = detail::number(g.value(), w + ".spread");
                            } else {
                                throw ConfigError(w + "." + g.key(), "unknown key");
                            }
                        }
                        c.filter.split = s;
                    }
                } else {
                    throw ConfigError(w, "unknown key");
                }
            }
        } else if (key == "methods") {
            c.methods.clear();
            if (v.is_string()) {
                c.methods = parse_method_list(v.get<std::string>(), key);
            } else {
                if (!v.is_array()) throw ConfigError(key, "expected an array of method names");
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const std::string w = "methods[" + std::to_string(i) + "]";
                    c.methods.push_back(method_from_name(detail::string_field(v[i], w), w));
                }
            }
        } else if (key == "kalman") {
            if (v.is_null()) {
                c.kalman.reset();
                continue;
            }
            ReferenceKalman k;
            if (v.contains("process_component")) {
                k.process_component = detail::count(v.at("process_component"), "kalman.process_component");
            }
            if (v.contains("measurement_component")) {
                k.measurement_component = detail::count(v.at("measurement_component"), "kalman.measurement_component");
            }
            const Json& prior = detail::require(v, "prior", "kalman");
            k.prior_mean = vector_from_json(detail::require(prior, "mean", "kalman.prior"), "kalman.prior.mean");
            k.prior_cov_sqrt = factor_from_json(prior, "", k.prior_mean.size(), "kalman.prior");
            for (auto f = v.begin(); f != v.end(); ++f) {
                if (f.key() != "process_component" && f.key() != "measurement_component" && f.key() != "prior") {
                    throw ConfigError("kalman." + f.key(), "unknown key");
                }
            }
            c.kalman = k;
        } else if (key == "particles") {
            c.particles = detail::count(v, key);
        } else if (key == "grid") {
            if (!v.is_object()) throw ConfigError(key, "expected an object");
            GridConfig g = c.grid;
            for (auto f = v.begin(); f != v.end(); ++f) {
                const std::string w = "grid." + f.key();
                if (f.key() == "points") {
                    g.points = detail::count(f.value(), w);
                } else if (f.key() == "sigmas") {
                    g.sigmas = detail::number(f.value(), w);
                } else if (f.key() == "snapshots") {
                    if (!f.value().is_array()) throw ConfigError(w, "expected an array of steps");
                    g.snapshots.clear();
                    for (std::size_t i = 0; i < f.value().size(); ++i) {
                        g.snapshots.push_back(
                            static_cast<int>(detail::count(f.value()[i], w + "[" + std::to_string(i) + "]")));
                    }
                } else if (f.key() == "lo") {
                    g.lo = vector_from_json(f.value(), w);
                } else if (f.key() == "hi") {
                    g.hi = vector_from_json(f.value(), w);
                } else {
                    throw ConfigError(w, "unknown key");
                }
            }
            c.grid = g;
        } else if (key == "measurements_file") {
            std::filesystem::path p = detail::string_field(v, key);
            if (!p.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
            c.measurements_file = p.string();
        } else if (key == "output_dir") {
            c.output_dir = detail::string_field(v, key);
        } else if (key == "write_mixtures") {
            c.write_mixtures = detail::bool_field(v, key);
        } else {
            throw ConfigError(key, "unknown key");
        }
    }
    if (!have_model) throw ConfigError("model", "missing (give a model or a builtin 'base')");
    validate_experiment(c);
    return c;
}

inline std::string emit_experiment(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir = {}) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
    return experiment_from_json(j, base_dir);
}

/// A config file path, or the name of a builtin.
inline ExperimentConfig load_experiment(const std::string& spec) {
    const std::filesystem::path p(spec);
    if (std::filesystem::is_regular_file(p)) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_experiment(ss.str(), p.parent_path());
    }
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), spec) != names.end()) return builtin_experiment(spec);
    throw UnknownExperimentError(spec);
}

// --- running -----------------------------------------------------------------

/// A method failed inside its recursion.
class MethodFailure : public Error {
public:
    MethodFailure(Method m, int step, const std::string& what)
        : Error(method_name(m) + " failed at " + what), method_(m), step_(step) {}
    [[nodiscard]] Method method() const noexcept { return method_; }
    [[nodiscard]] int step() const noexcept { return step_; }

private:
    Method method_;
    int step_;
};

/// Independent generator for stream `stream` of run seed `seed`.
inline Rng derived_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, 0x9e3779b9u};
    return Rng(seq);
}

struct ExperimentResult {
    TruthRows truth;
    bool has_states = false;
    std::vector<TraceRow> rows;
    std::vector<MethodMetrics> metrics;
    std::optional<FilterTrace> gmmf;
    std::optional<FilterTrace> naive;
    std::optional<KalmanResult> kalman;
    std::optional<ParticleTrace> smc;
    std::vector<std::string> files;
};

inline LinearGaussianModel reference_kalman_model(const ExperimentConfig& c) {
    if (c.kalman) {
        return single_component_model(c.model, c.kalman->process_component, c.kalman->measurement_component,
                                      c.kalman->prior_mean, c.kalman->prior_cov_sqrt);
    }
    const Moments mom = mixture_moments(c.model.prior);
    return single_component_model(c.model, 0, 0, mom.mean, UpperTriangular::from_covariance(mom.covariance));
}

namespace detail {

inline TruthRows load_measurements(const ExperimentConfig& c, bool& has_states) {
    TruthRows rows = read_truth(c.measurements_file);
    const std::size_t want = c.steps == 0 ? rows.t.size() : c.steps;
    if (rows.t.size() < want || want == 0) {
        throw ConfigError("measurements_file", "'" + c.measurements_file + "' has " + std::to_string(rows.t.size()) +
                                                   " rows, need " + std::to_string(want));
    }
    rows.t.resize(want);
    rows.states.resize(want);
    rows.measurements.resize(want);
    if (rows.measurements.front().size() != c.model.measurement_dim()) {
        throw ConfigError("measurements_file", "expected " + std::to_string(c.model.measurement_dim()) +
                                                   " y_* columns, found " +
                                                   std::to_string(rows.measurements.front().size()));
    }
    for (std::size_t k = 0; k < want; ++k) {
        if (rows.t[k] != static_cast<int>(k) + 1) {
            throw ConfigError("measurements_file", "row " + std::to_string(k + 1) + " has t = " +
                                                       std::to_string(rows.t[k]) + ", expected " + std::to_string(k + 1));
        }
    }
    has_states = rows.states.front().size() == c.model.state_dim();
    if (!has_states && rows.states.front().size() != 0) {
        throw ConfigError("measurements_file", "x_* columns do not match the state dimension");
    }
    return rows;
}

inline std::vector<TraceRow> rows_from_filter(const FilterTrace& tr, const std::string& method) {
    std::vector<TraceRow> out;
    for (const auto& s : tr.steps) {
        TraceRow r;
        r.t = s.t;
        r.method = method;
        r.predicted_pre = s.predicted_pre;
        r.predicted_post = s.predicted_post;
        r.predicted_used = s.predicted_used;
        r.filtered_pre = s.filtered_pre;
        r.filtered_post = s.filtered_post;
        r.filtered_used = s.filtered_used;
        r.predicted_mean = s.predicted_moments.mean;
        r.filtered_mean = s.filtered_moments.mean;
        r.log_likelihood = s.log_likelihood;
        out.push_back(std::move(r));
    }
    return out;
}

inline double elapsed(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

inline Vector weighted_variance(const ParticleCloud& c) {
    const Vector m = weighted_mean(c);
    Vector v = Vector::Zero(m.size());
    for (std::size_t i = 0; i < c.particles.size(); ++i) v += c.weights[i] * (c.particles[i] - m).cwiseAbs2();
    return v;
}

/// Grid shared by every snapshot of a run.
inline DensityGrid export_grid(const ExperimentConfig& c, const ExperimentResult& r) {
    const Eigen::Index n = c.model.state_dim();
    std::vector<std::size_t> counts(static_cast<std::size_t>(n), c.grid.points);
    if (c.grid.lo) return DensityGrid{*c.grid.lo, *c.grid.hi, counts};

    Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity());
    Vector hi = -lo;
    Vector sd = Vector::Zero(n);
    auto cover = [&](const Vector& x) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    };
    if (r.has_states) {
        for (const auto& x : r.truth.states) cover(x);
    }
    for (int t : c.grid.snapshots) {
        const auto k = static_cast<std::size_t>(t - 1);
        Vector var;
        Vector mean;
        if (r.gmmf) {
            mean = r.gmmf->steps[k].predicted_moments.mean;
            var = r.gmmf->steps[k].predicted_moments.covariance.diagonal();
        } else if (r.naive) {
            mean = r.naive->steps[k].predicted_moments.mean;
            var = r.naive->steps[k].predicted_moments.covariance.diagonal();
        } else if (r.kalman) {
            mean = r.kalman->predicted_means[k];
            var = r.kalman->predicted_covs[k].diagonal();
        } else if (r.smc) {
            mean = r.smc->steps[k].predicted_mean;
            var = weighted_variance(r.smc->predicted_clouds.at(t));
        }
        if (!r.has_states) cover(mean);
        sd = sd.cwiseMax(var.cwiseMax(0.0).cwiseSqrt());
    }
    for (Eigen::Index d = 0; d < n; ++d) {
        const double w = std::max(c.grid.sigmas * sd(d), 1e-6 * std::max(1.0, std::abs(lo(d))));
        lo(d) -= w;
        hi(d) += w;
    }
    return DensityGrid{lo, hi, counts};
}

inline void write_density(const std::string& path, const ExperimentConfig& c, const ExperimentResult& r,
                          const DensityGrid& grid, int t) {
    const auto k = static_cast<std::size_t>(t - 1);
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;
    const auto pts = grid.points();
    for (std::size_t d = 0; d < grid.dims(); ++d) {
        header.push_back("x_" + std::to_string(d));
        std::vector<double> col;
        for (const auto& p : pts) col.push_back(p(static_cast<Eigen::Index>(d)));
        columns.push_back(std::move(col));
    }
    auto add = [&](const std::string& name, std::vector<double> values) {
        header.push_back(name);
        columns.push_back(std::move(values));
    };
    std::optional<Vector> h_pred, h_filt;
    if (r.smc) {
        const auto& pc = r.smc->predicted_clouds.at(t);
        const auto& fc = r.smc->filtered_clouds.at(t);
        h_pred = silverman_bandwidth(pc, grid);
        h_filt = silverman_bandwidth(fc, grid);
    }
    for (Method m : c.methods) {
        const std::string name = method_name(m);
        if (m == Method::gmmf || m == Method::naive) {
            const FilterTrace& tr = m == Method::gmmf ? *r.gmmf : *r.naive;
            add(name + "_predicted", density_on_grid(tr.steps[k].predicted, grid));
            add(name + "_filtered", density_on_grid(tr.steps[k].filtered, grid));
            if (h_pred) {
                add(name + "_predicted_smoothed", density_on_grid(smooth_mixture(tr.steps[k].predicted, *h_pred), grid));
                add(name + "_filtered_smoothed", density_on_grid(smooth_mixture(tr.steps[k].filtered, *h_filt), grid));
            }
        } else if (m == Method::kalman) {
            add(name + "_predicted", density_on_grid(gaussian(r.kalman->predicted_means[k], r.kalman->predicted_covs[k]), grid));
            add(name + "_filtered", density_on_grid(gaussian(r.kalman->filtered_means[k], r.kalman->filtered_covs[k]), grid));
        } else {
            add(name + "_predicted", density_from_particles(r.smc->predicted_clouds.at(t), grid));
            add(name + "_filtered", density_from_particles(r.smc->filtered_clouds.at(t), grid));
        }
    }
    CsvWriter out(path);
    out.row(header);
    std::vector<std::string> cells(header.size());
    for (std::size_t g = 0; g < pts.size(); ++g) {
        for (std::size_t i = 0; i < columns.size(); ++i) cells[i] = format_double(columns[i][g]);
        out.row(cells);
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace detail

/// Simulates (or loads) data, runs every enabled method and computes metrics.
/// Files are written only when the config names an output directory.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    validate_experiment(c);
    ExperimentResult r;

    if (!c.measurements_file.empty()) {
        r.truth = detail::load_measurements(c, r.has_states);
    } else {
        StateSpaceModel truth_model = c.model;
        if (c.truth_prior) truth_model.prior = *c.truth_prior;
        Rng rng(c.seed);
        auto traj = simulate(truth_model, c.steps, rng);
        for (std::size_t k = 0; k < c.steps; ++k) r.truth.t.push_back(static_cast<int>(k) + 1);
        r.truth.states = std::move(traj.states);
        r.truth.measurements = std::move(traj.measurements);
        r.has_states = true;
    }
    const std::span<const Vector> ys(r.truth.measurements);

    std::map<Method, double> seconds;
    for (Method m : c.methods) {
        const auto started = std::chrono::steady_clock::now();
        try {
            if (m == Method::gmmf) {
                r.gmmf = run_filter(c.model, ys, c.filter);
                auto rows = detail::rows_from_filter(*r.gmmf, "gmmf");
                r.rows.insert(r.rows.end(), rows.begin(), rows.end());
            } else if (m == Method::naive) {
                r.naive = run_filter_naive(c.model, ys, c.filter);
                auto rows = detail::rows_from_filter(*r.naive, "naive");
                r.rows.insert(r.rows.end(), rows.begin(), rows.end());
            } else if (m == Method::kalman) {
                r.kalman = kalman_filter(reference_kalman_model(c), ys);
                for (std::size_t k = 0; k < ys.size(); ++k) {
                    TraceRow row;
                    row.t = r.truth.t[k];
                    row.method = "kalman";
                    row.predicted_pre = row.predicted_post = row.predicted_used = 1;
                    row.filtered_pre = row.filtered_post = row.filtered_used = 1;
                    row.predicted_mean = r.kalman->predicted_means[k];
                    row.filtered_mean = r.kalman->filtered_means[k];
                    row.log_likelihood = r.kalman->log_likelihoods[k];
                    r.rows.push_back(std::move(row));
                }
            } else {
                Rng rng = derived_rng(c.seed, 1);
                r.smc = particle_filter(c.model, ys, ParticleFilterOptions{c.particles, c.grid.snapshots}, rng);
                for (const auto& s : r.smc->steps) {
                    TraceRow row;
                    row.t = s.t;
                    row.method = "smc";
                    row.predicted_pre = row.predicted_post = row.predicted_used = c.particles;
                    row.filtered_pre = row.filtered_post = row.filtered_used = c.particles;
                    row.predicted_mean = s.predicted_mean;
                    row.filtered_mean = s.filtered_mean;
                    row.log_likelihood = s.log_likelihood;
                    r.rows.push_back(std::move(row));
                }
            }
        } catch (const StepError& e) {
            throw MethodFailure(m, e.step(), e.what());
        }
        seconds[m] = detail::elapsed(started);
    }

    r.metrics = compute_metrics(r.rows, r.has_states ? &r.truth : nullptr);
    for (auto& mm : r.metrics) mm.runtime_seconds = seconds.at(method_from_name(mm.method, "methods"));

    if (c.output_dir.empty()) return r;

    namespace fs = std::filesystem;
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + c.output_dir + "': " + ec.message());
    auto file = [&](const std::string& name) {
        r.files.push_back(name);
        return (dir / name).string();
    };

    detail::write_text(file("config.json"), emit_experiment(c));
    {
        TruthRows t = r.truth;
        if (!r.has_states) t.states.assign(t.t.size(), Vector());
        write_truth(file("truth.csv"), t);
    }
    write_traces(file("traces.csv"), r.rows);
    if (!c.grid.snapshots.empty()) {
        const DensityGrid grid = detail::export_grid(c, r);
        for (int t : c.grid.snapshots) {
            detail::write_density(file("density_t" + std::to_string(t) + ".csv"), c, r, grid, t);
        }
    }
    if (c.write_mixtures) {
        Json mj = Json::object();
        for (Method m : {Method::gmmf, Method::naive}) {
            const auto& tr = m == Method::gmmf ? r.gmmf : r.naive;
            if (!tr) continue;
            Json steps = Json::array();
            for (const auto& s : tr->steps) {
                steps.push_back(Json{{"t", s.t}, {"predicted", to_json(s.predicted)}, {"filtered", to_json(s.filtered)}});
            }
            mj[method_name(m)] = std::move(steps);
        }
        detail::write_text(file("mixtures.json"), mj.dump(1) + "\n");
    }
    Json metrics{{"experiment", c.name}, {"seed", c.seed}, {"steps", r.truth.t.size()}};
    Json per = Json::object();
    for (const auto& mm : r.metrics) per[mm.method] = to_json(mm);
    metrics["methods"] = per;
    r.files.push_back("metrics.json");
    metrics["files"] = r.files;
    detail::write_text((dir / "metrics.json").string(), metrics.dump(2) + "\n");
    return r;
}

}  // namespace gmmf::harness
