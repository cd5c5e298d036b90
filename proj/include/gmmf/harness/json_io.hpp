#pragma once

// JSON encoding of matrices, mixtures and state-space models.
//
// Matrices are arrays of rows; vectors are flat arrays.  A bare number is
// accepted for 1x1 matrices and length-1 vectors.  Factors are written as a
// flat row-major array of all n*n entries; reading also accepts nested rows
// or the packed upper triangle.  Covariances may be given
// either as "cov" (full, symmetric positive semidefinite) or "cov_sqrt"
// (upper-triangular factor R with P = R^T R); emitted files always use
// "cov_sqrt" so that a parse/emit/parse cycle is exact.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gmmf/errors.hpp"
#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"
#include "gmmf/model.hpp"

namespace gmmf::harness {

using Json = nlohmann::json;

/// Malformed configuration or data file; the message starts with the field path.
class ConfigError : public ArgumentError {
public:
    ConfigError(const std::string& field, const std::string& what) : ArgumentError(field + ": " + what) {}
};

namespace detail {

inline const Json& require(const Json& j, const std::string& key, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(where + "." + key, "missing");
    return *it;
}

inline double number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(where, "must be finite");
    return v;
}

inline std::size_t count(const Json& j, const std::string& where) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError(where, "expected a nonnegative integer");
    const auto v = j.get<long long>();
    if (v < 0) throw ConfigError(where, "expected a nonnegative integer");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

inline Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Json to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline Vector vector_from_json(const Json& j, const std::string& where) {
    if (j.is_number()) return Vector::Constant(1, detail::number(j, where));
    if (!j.is_array() || j.empty()) throw ConfigError(where, "expected a nonempty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = detail::number(j[i], where + "[" + std::to_string(i) + "]");
    }
    return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
    if (j.is_number()) return Matrix::Constant(1, 1, detail::number(j, where));
    if (!j.is_array() || j.empty()) throw ConfigError(where, "expected an array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].empty()) {
            throw ConfigError(where + "[" + std::to_string(i) + "]", "expected a nonempty row");
        }
        if (i == 0) cols = j[i].size();
        if (j[i].size() != cols) throw ConfigError(where + "[" + std::to_string(i) + "]", "ragged matrix");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < cols; ++k) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                detail::number(j[i][k], where + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
        }
    }
    return m;
}

/// Reads `<prefix>cov` or `<prefix>cov_sqrt` from an object.
inline UpperTriangular factor_from_json(const Json& obj, const std::string& prefix, Eigen::Index dim,
                                        const std::string& where) {
    const bool has_cov = obj.contains(prefix + "cov");
    const bool has_sqrt = obj.contains(prefix + "cov_sqrt");
    if (has_cov == has_sqrt) {
        throw ConfigError(where, "exactly one of '" + prefix + "cov' or '" + prefix + "cov_sqrt' is required");
    }
    const std::string key = has_cov ? prefix + "cov" : prefix + "cov_sqrt";
    const Json& raw = obj.at(key);
    Matrix m;
    if (raw.is_array() && !raw.empty() && raw[0].is_number()) {
        // flat row-major: all n*n entries, or the packed upper triangle
        const auto n = static_cast<std::size_t>(dim);
        const Vector flat = vector_from_json(raw, where + "." + key);
        m = Matrix::Zero(dim, dim);
        if (static_cast<std::size_t>(flat.size()) == n * n) {
            for (Eigen::Index r = 0; r < dim; ++r) {
                for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = flat(r * dim + c);
            }
        } else if (static_cast<std::size_t>(flat.size()) == n * (n + 1) / 2) {
            Eigen::Index k = 0;
            for (Eigen::Index r = 0; r < dim; ++r) {
                for (Eigen::Index c = r; c < dim; ++c) m(r, c) = flat(k++);
            }
            if (has_cov) m = m.selfadjointView<Eigen::Upper>();
        } else {
            throw ConfigError(where + "." + key, "flat array must have " + std::to_string(n * n) + " or " +
                                                     std::to_string(n * (n + 1) / 2) + " entries");
        }
    } else {
        m = matrix_from_json(raw, where + "." + key);
    }
    if (m.rows() != dim || m.cols() != dim) {
        throw ConfigError(where + "." + key, "expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
    }
    try {
        if (has_cov) {
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
                throw ConfigError(where + "." + key, "covariance must be symmetric");
            }
            return UpperTriangular::from_covariance(m);
        }
        for (Eigen::Index r = 1; r < dim; ++r) {
            for (Eigen::Index c = 0; c < r; ++c) {
                if (m(r, c) != 0.0) throw ConfigError(where + "." + key, "factor must be upper triangular");
            }
        }
        return UpperTriangular(m);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where + "." + key, e.what());
    }
}

/// Factor as a flat row-major array of all n*n entries.
inline Json factor_to_json(const UpperTriangular& r) {
    Json out = Json::array();
    const Matrix& m = r.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    }
    return out;
}

// --- mixtures ----------------------------------------------------------------

inline Json to_json(const GaussianComponent& c) {
    return Json{{"weight", c.weight}, {"mean", to_json(c.mean)}, {"cov_sqrt", factor_to_json(c.cov_sqrt)}};
}

inline Json to_json(const GaussianMixture& m) {
    Json comps = Json::array();
    for (const auto& c : m) comps.push_back(to_json(c));
    return Json{{"dim", m.dim()}, {"components", std::move(comps)}};
}

inline GaussianMixture mixture_from_json(const Json& j, const std::string& where = "mixture") {
    const Json& comps = detail::require(j, "components", where);
    if (!comps.is_array() || comps.empty()) throw ConfigError(where + ".components", "expected a nonempty array");
    Eigen::Index dim = -1;
    if (j.contains("dim")) dim = static_cast<Eigen::Index>(detail::count(j.at("dim"), where + ".dim"));
    std::vector<GaussianComponent> out;
    out.reserve(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::string w = where + ".components[" + std::to_string(i) + "]";
        const Json& c = comps[i];
        if (!c.is_object()) throw ConfigError(w, "expected an object (component " + std::to_string(i) + ")");
        const double weight = detail::number(detail::require(c, "weight", w), w + ".weight");
        if (weight < 0.0) throw ConfigError(w + ".weight", "must be nonnegative (component " + std::to_string(i) + ")");
        const Vector mean = vector_from_json(detail::require(c, "mean", w), w + ".mean");
        if (dim < 0) dim = mean.size();
        if (mean.size() != dim) {
            throw ConfigError(w + ".mean", "expected dimension " + std::to_string(dim) + " (component " +
                                               std::to_string(i) + ")");
        }
        out.emplace_back(weight, mean, factor_from_json(c, "", dim, w));
    }
    return GaussianMixture(std::move(out));
}

// --- offsets -----------------------------------------------------------------

inline Json to_json(const OffsetSignal& s) {
    using K = OffsetSignal::Kind;
    switch (s.kind) {
    case K::none:
        return Json{{"kind", "none"}};
    case K::constant:
        return Json{{"kind", "constant"}, {"value", to_json(s.value)}};
    case K::sin:
    case K::cos:
        return Json{{"kind", s.kind == K::sin ? "sin" : "cos"},
                    {"component", s.component},
                    {"amplitude", s.amplitude},
                    {"rate", s.rate},
                    {"phase", s.phase}};
    case K::noise:
        return Json{{"kind", "noise"}, {"component", s.component}, {"stddev", s.amplitude}, {"seed", s.seed}};
    case K::table:
        return Json{{"kind", "table"}, {"component", s.component}, {"values", s.table}};
    }
    return Json{{"kind", "none"}};
}

inline OffsetSignal offset_from_json(const Json& j, Eigen::Index dim, const std::string& where) {
    if (j.is_null()) return OffsetSignal::none(dim);
    if (j.is_array() || j.is_number()) {
        const Vector v = vector_from_json(j, where);
        if (v.size() != dim) throw ConfigError(where, "expected length " + std::to_string(dim));
        return OffsetSignal::constant(v);
    }
    const Json& kind_j = detail::require(j, "kind", where);
    if (!kind_j.is_string()) throw ConfigError(where + ".kind", "expected a string");
    const std::string kind = kind_j.get<std::string>();
    auto component = [&]() -> Eigen::Index {
        const std::size_t c = j.contains("component") ? detail::count(j.at("component"), where + ".component") : 0;
        if (static_cast<Eigen::Index>(c) >= dim) throw ConfigError(where + ".component", "out of range");
        return static_cast<Eigen::Index>(c);
    };
    auto opt = [&](const char* key, double fallback) {
        return j.contains(key) ? detail::number(j.at(key), where + "." + key) : fallback;
    };
    if (kind == "none") return OffsetSignal::none(dim);
    if (kind == "constant") {
        const Vector v = vector_from_json(detail::require(j, "value", where), where + ".value");
        if (v.size() != dim) throw ConfigError(where + ".value", "expected length " + std::to_string(dim));
        return OffsetSignal::constant(v);
    }
    if (kind == "sin" || kind == "cos") {
        return OffsetSignal::sinusoid(kind == "sin" ? OffsetSignal::Kind::sin : OffsetSignal::Kind::cos, dim,
                                      component(), opt("amplitude", 1.0), opt("rate", 1.0), opt("phase", 0.0));
    }
    if (kind == "noise") {
        const double sd = opt("stddev", 1.0);
        if (sd < 0.0) throw ConfigError(where + ".stddev", "must be nonnegative");
        const Json& seed = detail::require(j, "seed", where);
        if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
            throw ConfigError(where + ".seed", "expected an integer");
        }
        return OffsetSignal::noise(dim, component(), sd, seed.get<std::uint64_t>());
    }
    if (kind == "table") {
        const Json& vals = detail::require(j, "values", where);
        if (!vals.is_array() || vals.empty()) throw ConfigError(where + ".values", "expected a nonempty array");
        std::vector<double> t;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            t.push_back(detail::number(vals[i], where + ".values[" + std::to_string(i) + "]"));
        }
        return OffsetSignal::tabulated(dim, component(), std::move(t));
    }
    throw ConfigError(where + ".kind", "unknown offset kind '" + kind + "' (none, constant, sin, cos, noise, table)");
}

// --- models ------------------------------------------------------------------

inline Json to_json(const NonlinearMap& m) {
    Json params = Json::object();
    for (const auto& [k, v] : m.params) params[k] = v;
    return Json{{"name", m.name}, {"params", std::move(params)}, {"noise_cov_sqrt", factor_to_json(m.noise_sqrt)}};
}

inline NonlinearMap nonlinear_from_json(const Json& j, Eigen::Index noise_dim, const std::string& where) {
    const Json& name = detail::require(j, "name", where);
    if (!name.is_string()) throw ConfigError(where + ".name", "expected a string");
    std::map<std::string, double> params;
    if (j.contains("params")) {
        const Json& p = j.at("params");
        if (!p.is_object()) throw ConfigError(where + ".params", "expected an object");
        for (auto it = p.begin(); it != p.end(); ++it) {
            params[it.key()] = it.value().is_boolean() ? (it.value().get<bool>() ? 1.0 : 0.0)
                                                       : detail::number(it.value(), where + ".params." + it.key());
        }
    }
    const UpperTriangular noise = factor_from_json(j, "noise_", noise_dim, where);
    try {
        return make_builtin_map(name.get<std::string>(), params, noise);
    } catch (const ArgumentError& e) {
        throw ConfigError(where, e.what());
    }
}

inline Json to_json(const StateSpaceModel& m) {
    Json out{{"prior", to_json(m.prior)}};
    if (const auto* lin = std::get_if<std::vector<ProcessComponent>>(&m.process)) {
        Json comps = Json::array();
        for (const auto& c : *lin) {
            comps.push_back(Json{{"weight", c.weight},
                                 {"transition", to_json(c.transition)},
                                 {"offset", to_json(c.offset)},
                                 {"noise_cov_sqrt", factor_to_json(c.noise_sqrt)}});
        }
        out["process"] = Json{{"components", std::move(comps)}};
    } else {
        out["process"] = Json{{"nonlinear", to_json(std::get<NonlinearMap>(m.process))}};
    }
    if (const auto* lin = std::get_if<std::vector<MeasurementComponent>>(&m.measurement)) {
        Json comps = Json::array();
        for (const auto& c : *lin) {
            comps.push_back(Json{{"weight", c.weight},
                                 {"observation", to_json(c.observation)},
                                 {"offset", to_json(c.offset)},
                                 {"noise_cov_sqrt", factor_to_json(c.noise_sqrt)}});
        }
        out["measurement"] = Json{{"components", std::move(comps)}};
    } else {
        out["measurement"] = Json{{"nonlinear", to_json(std::get<NonlinearMap>(m.measurement))}};
    }
    return out;
}

inline StateSpaceModel model_from_json(const Json& j, const std::string& where = "model") {
    StateSpaceModel m;
    m.prior = mixture_from_json(detail::require(j, "prior", where), where + ".prior");
    const Eigen::Index n = m.prior.dim();

    const Json& proc = detail::require(j, "process", where);
    const std::string pw = where + ".process";
    if (proc.contains("nonlinear")) {
        m.process = nonlinear_from_json(proc.at("nonlinear"), n, pw + ".nonlinear");
    } else {
        const Json& comps = detail::require(proc, "components", pw);
        if (!comps.is_array() || comps.empty()) throw ConfigError(pw + ".components", "expected a nonempty array");
        std::vector<ProcessComponent> out;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const std::string w = pw + ".components[" + std::to_string(i) + "]";
            const Json& c = comps[i];
            ProcessComponent pc;
            pc.weight = c.contains("weight") ? detail::number(c.at("weight"), w + ".weight") : 1.0;
            pc.transition = matrix_from_json(detail::require(c, "transition", w), w + ".transition");
            if (pc.transition.rows() != n || pc.transition.cols() != n) {
                throw ConfigError(w + ".transition", "expected a " + std::to_string(n) + "x" + std::to_string(n) +
                                                          " matrix");
            }
            pc.offset = offset_from_json(c.contains("offset") ? c.at("offset") : Json(), n, w + ".offset");
            pc.noise_sqrt = factor_from_json(c, "noise_", n, w);
            out.push_back(std::move(pc));
        }
        m.process = std::move(out);
    }

    const Json& meas = detail::require(j, "measurement", where);
    const std::string mw = where + ".measurement";
    if (meas.contains("nonlinear")) {
        const Json& nl = meas.at("nonlinear");
        Eigen::Index p = 1;
        if (nl.is_object()) {
            const char* key = nl.contains("noise_cov") ? "noise_cov" : "noise_cov_sqrt";
            if (nl.contains(key)) {
                const Json& raw = nl.at(key);
                if (raw.is_array() && !raw.empty() && raw[0].is_number()) {
                    const auto len = static_cast<Eigen::Index>(raw.size());
                    while (p * p < len && p * (p + 1) / 2 < len) ++p;
                } else {
                    p = matrix_from_json(raw, mw + ".nonlinear." + key).rows();
                }
            }
        }
        m.measurement = nonlinear_from_json(nl, p, mw + ".nonlinear");
    } else {
        const Json& comps = detail::require(meas, "components", mw);
        if (!comps.is_array() || comps.empty()) throw ConfigError(mw + ".components", "expected a nonempty array");
        std::vector<MeasurementComponent> out;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const std::string w = mw + ".components[" + std::to_string(i) + "]";
            const Json& c = comps[i];
            MeasurementComponent mc;
            mc.weight = c.contains("weight") ? detail::number(c.at("weight"), w + ".weight") : 1.0;
            mc.observation = matrix_from_json(detail::require(c, "observation", w), w + ".observation");
            if (mc.observation.cols() != n) {
                throw ConfigError(w + ".observation", "expected " + std::to_string(n) + " columns");
            }
            const Eigen::Index p = mc.observation.rows();
            mc.offset = offset_from_json(c.contains("offset") ? c.at("offset") : Json(), p, w + ".offset");
            mc.noise_sqrt = factor_from_json(c, "noise_", p, w);
            out.push_back(std::move(mc));
        }
        m.measurement = std::move(out);
    }
    try {
        m.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ArgumentError& e) {
        throw ConfigError(where, e.what());
    }
    return m;
}

}  // namespace gmmf::harness
