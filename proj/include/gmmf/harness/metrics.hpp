#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmmf/errors.hpp"
#include "gmmf/harness/csv.hpp"
#include "gmmf/linalg.hpp"

namespace gmmf::harness {

/// One row of a trace file.
struct TraceRow {
    int t = 0;
    std::string method;
    std::size_t predicted_pre = 0;
    std::size_t predicted_post = 0;
    std::size_t predicted_used = 0;
    std::size_t filtered_pre = 0;
    std::size_t filtered_post = 0;
    std::size_t filtered_used = 0;
    Vector predicted_mean;
    Vector filtered_mean;
    double log_likelihood = 0.0;
};

/// Truth trajectory: states x_t and measurements y_t indexed by t.
struct TruthRows {
    std::vector<int> t;
    std::vector<Vector> states;
    std::vector<Vector> measurements;
};

inline std::vector<std::string> trace_header(Eigen::Index n) {
    std::vector<std::string> h{"t",           "method",        "predicted_pre", "predicted_post",
                               "predicted_used", "filtered_pre", "filtered_post", "filtered_used"};
    for (Eigen::Index i = 0; i < n; ++i) h.push_back("predicted_mean_" + std::to_string(i));
    for (Eigen::Index i = 0; i < n; ++i) h.push_back("filtered_mean_" + std::to_string(i));
    h.emplace_back("log_likelihood");
    return h;
}

inline std::vector<std::string> trace_cells(const TraceRow& r) {
    std::vector<std::string> c{std::to_string(r.t),
                               r.method,
                               std::to_string(r.predicted_pre),
                               std::to_string(r.predicted_post),
                               std::to_string(r.predicted_used),
                               std::to_string(r.filtered_pre),
                               std::to_string(r.filtered_post),
                               std::to_string(r.filtered_used)};
    for (Eigen::Index i = 0; i < r.predicted_mean.size(); ++i) c.push_back(format_double(r.predicted_mean(i)));
    for (Eigen::Index i = 0; i < r.filtered_mean.size(); ++i) c.push_back(format_double(r.filtered_mean(i)));
    c.push_back(format_double(r.log_likelihood));
    return c;
}

inline void write_traces(const std::string& path, const std::vector<TraceRow>& rows) {
    if (rows.empty()) throw ArgumentError("write_traces: nothing to write");
    CsvWriter out(path);
    out.row(trace_header(rows.front().predicted_mean.size()));
    for (const auto& r : rows) out.row(trace_cells(r));
}

inline void write_truth(const std::string& path, const TruthRows& truth) {
    CsvWriter out(path);
    std::vector<std::string> h{"t"};
    const Eigen::Index n = truth.states.empty() ? 0 : truth.states.front().size();
    const Eigen::Index p = truth.measurements.empty() ? 0 : truth.measurements.front().size();
    for (Eigen::Index i = 0; i < n; ++i) h.push_back("x_" + std::to_string(i));
    for (Eigen::Index i = 0; i < p; ++i) h.push_back("y_" + std::to_string(i));
    out.row(h);
    for (std::size_t k = 0; k < truth.t.size(); ++k) {
        std::vector<std::string> c{std::to_string(truth.t[k])};
        if (n) {
            for (Eigen::Index i = 0; i < n; ++i) c.push_back(format_double(truth.states[k](i)));
        }
        if (p) {
            for (Eigen::Index i = 0; i < p; ++i) c.push_back(format_double(truth.measurements[k](i)));
        }
        out.row(c);
    }
}

namespace detail {

inline Vector row_vector(const CsvTable& t, const std::vector<std::string>& row, const std::vector<std::size_t>& cols,
                         const std::string& where) {
    Vector v(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = parse_double(row[cols[i]], where + " column " + t.header[cols[i]]);
    }
    return v;
}

inline std::size_t row_count(const CsvTable& t, const std::vector<std::string>& row, const char* name,
                             const std::string& where) {
    const auto c = t.column(name);
    if (c < 0) return 0;
    const double v = parse_double(row[static_cast<std::size_t>(c)], where + " column " + name);
    if (v < 0.0 || v != std::floor(v)) throw ArgumentError(where + ": column " + name + " must be a count");
    return static_cast<std::size_t>(v);
}

inline int row_step(const CsvTable& t, const std::vector<std::string>& row, const std::string& where) {
    const auto c = t.column("t");
    if (c < 0) throw ArgumentError(where + ": missing column 't'");
    const double v = parse_double(row[static_cast<std::size_t>(c)], where + " column t");
    if (v != std::floor(v)) throw ArgumentError(where + ": column t must be an integer");
    return static_cast<int>(v);
}

}  // namespace detail

/// Reads a truth file.  Measurement columns (y_*) are optional.
inline TruthRows read_truth(const std::string& path) {
    const CsvTable t = read_csv(path);
    const auto xs = t.columns_with_prefix("x_");
    const auto ys = t.columns_with_prefix("y_");
    TruthRows out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path + " row " + std::to_string(r + 1);
        out.t.push_back(detail::row_step(t, t.rows[r], where));
        out.states.push_back(detail::row_vector(t, t.rows[r], xs, where));
        out.measurements.push_back(detail::row_vector(t, t.rows[r], ys, where));
    }
    return out;
}

inline std::vector<TraceRow> read_traces(const std::string& path) {
    const CsvTable t = read_csv(path);
    const auto pm = t.columns_with_prefix("predicted_mean_");
    const auto fm = t.columns_with_prefix("filtered_mean_");
    const auto method = t.column("method");
    if (method < 0) throw ArgumentError(path + ": missing column 'method'");
    if (pm.empty() && fm.empty()) throw ArgumentError(path + ": no predicted_mean_* or filtered_mean_* columns");
    const auto ll = t.column("log_likelihood");
    std::vector<TraceRow> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = path + " row " + std::to_string(r + 1);
        TraceRow tr;
        tr.t = detail::row_step(t, row, where);
        tr.method = row[static_cast<std::size_t>(method)];
        tr.predicted_pre = detail::row_count(t, row, "predicted_pre", where);
        tr.predicted_post = detail::row_count(t, row, "predicted_post", where);
        tr.predicted_used = detail::row_count(t, row, "predicted_used", where);
        tr.filtered_pre = detail::row_count(t, row, "filtered_pre", where);
        tr.filtered_post = detail::row_count(t, row, "filtered_post", where);
        tr.filtered_used = detail::row_count(t, row, "filtered_used", where);
        tr.predicted_mean = detail::row_vector(t, row, pm, where);
        tr.filtered_mean = detail::row_vector(t, row, fm, where);
        if (ll >= 0) tr.log_likelihood = parse_double(row[static_cast<std::size_t>(ll)], where + " column log_likelihood");
        out.push_back(std::move(tr));
    }
    return out;
}

struct CountStats {
    std::size_t min = 0;
    std::size_t max = 0;
    double mean = 0.0;
};

struct MethodMetrics {
    std::string method;
    std::size_t steps = 0;
    std::optional<double> rmse_predicted;
    std::optional<double> rmse_filtered;
    CountStats predicted_components;
    CountStats filtered_components;
    double log_likelihood = 0.0;
    std::optional<double> runtime_seconds;
};

namespace detail {

inline CountStats count_stats(const std::vector<std::size_t>& v) {
    CountStats s;
    if (v.empty()) return s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto x : v) sum += static_cast<double>(x);
    s.mean = sum / static_cast<double>(v.size());
    return s;
}

inline double rmse(const std::vector<Vector>& est, const std::vector<Vector>& truth, const std::string& what) {
    double s = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
        if (est[k].size() != truth[k].size()) {
            throw ArgumentError(what + ": state dimension " + std::to_string(est[k].size()) + " differs from truth " +
                                std::to_string(truth[k].size()));
        }
        s += (est[k] - truth[k]).squaredNorm();
    }
    return std::sqrt(s / static_cast<double>(est.size()));
}

}  // namespace detail

/// Per-method metrics.  Rows of each method must cover exactly the truth
/// steps (in order) when a truth trajectory is given.
inline std::vector<MethodMetrics> compute_metrics(const std::vector<TraceRow>& rows, const TruthRows* truth) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const TraceRow*>> by_method;
    for (const auto& r : rows) {
        if (!by_method.contains(r.method)) order.push_back(r.method);
        by_method[r.method].push_back(&r);
    }
    std::vector<MethodMetrics> out;
    for (const auto& name : order) {
        const auto& rs = by_method[name];
        MethodMetrics m;
        m.method = name;
        m.steps = rs.size();
        std::vector<std::size_t> pc, fc;
        std::vector<Vector> pm, fm;
        for (const auto* r : rs) {
            pc.push_back(r->predicted_post);
            fc.push_back(r->filtered_post);
            pm.push_back(r->predicted_mean);
            fm.push_back(r->filtered_mean);
            m.log_likelihood += r->log_likelihood;
        }
        m.predicted_components = detail::count_stats(pc);
        m.filtered_components = detail::count_stats(fc);
        if (truth && !truth->states.empty() && truth->states.front().size() > 0) {
            if (rs.size() != truth->t.size()) {
                throw ArgumentError("method '" + name + "' has " + std::to_string(rs.size()) + " steps but truth has " +
                                    std::to_string(truth->t.size()));
            }
            for (std::size_t k = 0; k < rs.size(); ++k) {
                if (rs[k]->t != truth->t[k]) {
                    throw ArgumentError("method '" + name + "' step " + std::to_string(rs[k]->t) +
                                        " does not align with truth step " + std::to_string(truth->t[k]));
                }
            }
            if (pm.front().size() > 0) m.rmse_predicted = detail::rmse(pm, truth->states, name);
            if (fm.front().size() > 0) m.rmse_filtered = detail::rmse(fm, truth->states, name);
        }
        out.push_back(std::move(m));
    }
    return out;
}

inline nlohmann::json to_json(const MethodMetrics& m) {
    auto counts = [](const CountStats& s) { return nlohmann::json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}}; };
    nlohmann::json j{{"steps", m.steps},
                     {"predicted_components", counts(m.predicted_components)},
                     {"filtered_components", counts(m.filtered_components)},
                     {"log_likelihood", m.log_likelihood}};
    j["rmse_predicted"] = m.rmse_predicted ? nlohmann::json(*m.rmse_predicted) : nlohmann::json();
    j["rmse_filtered"] = m.rmse_filtered ? nlohmann::json(*m.rmse_filtered) : nlohmann::json();
    if (m.runtime_seconds) j["runtime_seconds"] = *m.runtime_seconds;
    return j;
}

/// Fixed-width table for terminal output.
inline std::string metrics_table(const std::vector<MethodMetrics>& ms) {
    auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", *v);
        return std::string(buf);
    };
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %6s %14s %14s %10s %10s\n", "method", "steps", "rmse_pred", "rmse_filt",
                  "max_pred", "max_filt");
    out += line;
    for (const auto& m : ms) {
        std::snprintf(line, sizeof line, "%-10s %6zu %14s %14s %10zu %10zu\n", m.method.c_str(), m.steps,
                      fmt(m.rmse_predicted).c_str(), fmt(m.rmse_filtered).c_str(), m.predicted_components.max,
                      m.filtered_components.max);
        out += line;
    }
    return out;
}

}  // namespace gmmf::harness
