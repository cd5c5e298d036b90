// gmmf: run experiments, reduce mixtures, score traces.
//
// Exit codes: 0 success, 1 a filter or I/O failure, 2 bad usage, bad
// configuration, unknown experiment or unreadable input.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmmf/harness/experiment.hpp"
#include "gmmf/harness/json_io.hpp"
#include "gmmf/harness/metrics.hpp"
#include "gmmf/reduction.hpp"

namespace h = gmmf::harness;

namespace {

struct RunOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<std::string> out;
    std::optional<std::string> methods;
    std::optional<std::size_t> particles;
    std::optional<std::size_t> filter_min, filter_max, predict_min, predict_max;
    std::optional<double> filter_threshold, predict_threshold;
    std::optional<std::size_t> split_count;
    std::optional<double> split_spread;
    bool write_mixtures = false;
    bool print_config = false;
};

struct ReduceOptions {
    std::string input;
    std::string output;
    std::size_t min = 1;
    std::size_t max = 100;
    double threshold = 0.01;
};

struct MetricsOptions {
    std::string truth;
    std::vector<std::string> traces;
    std::string out;
};

int cmd_run(const RunOptions& o) {
    h::ExperimentConfig c = h::load_experiment(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.steps) {
        c.steps = *o.steps;
        std::erase_if(c.grid.snapshots, [&](int t) { return static_cast<std::size_t>(t) > c.steps; });
    }
    if (o.out) c.output_dir = *o.out;
    if (o.methods) c.methods = h::parse_method_list(*o.methods, "--methods");
    if (o.particles) c.particles = *o.particles;
    if (o.filter_min) c.filter.filtering.min_components = *o.filter_min;
    if (o.filter_max) c.filter.filtering.max_components = *o.filter_max;
    if (o.filter_threshold) c.filter.filtering.threshold = *o.filter_threshold;
    if (o.predict_min) c.filter.prediction.min_components = *o.predict_min;
    if (o.predict_max) c.filter.prediction.max_components = *o.predict_max;
    if (o.predict_threshold) c.filter.prediction.threshold = *o.predict_threshold;
    if (o.split_count) {
        if (*o.split_count == 0) {
            c.filter.split.reset();
        } else {
            if (!c.filter.split) c.filter.split = gmmf::SplitConfig{};
            c.filter.split->count = *o.split_count;
        }
    }
    if (o.split_spread) {
        if (!c.filter.split) c.filter.split = gmmf::SplitConfig{};
        c.filter.split->spread = *o.split_spread;
    }
    if (o.write_mixtures) c.write_mixtures = true;
    h::validate_experiment(c);
    if (o.print_config) {
        std::cout << h::emit_experiment(c);
        return 0;
    }
    if (c.output_dir.empty()) c.output_dir = "out/" + c.name;

    const auto result = h::run_experiment(c);
    std::cout << "experiment " << c.name << ": " << result.truth.t.size() << " steps, seed " << c.seed << "\n";
    std::cout << h::metrics_table(result.metrics);
    std::cout << "wrote " << result.files.size() << " files to " << c.output_dir << "\n";
    return 0;
}

int cmd_reduce(const ReduceOptions& o) {
    std::ifstream in(o.input);
    if (!in) throw gmmf::ArgumentError("cannot open '" + o.input + "'");
    h::Json j;
    try {
        j = h::Json::parse(in);
    } catch (const h::Json::parse_error& e) {
        throw gmmf::ArgumentError(o.input + ": not valid JSON: " + e.what());
    }
    const gmmf::GaussianMixture m = h::mixture_from_json(j, o.input);
    const gmmf::ReductionConfig cfg{o.min, o.max, o.threshold};
    try {
        cfg.validate();
    } catch (const gmmf::ArgumentError& e) {
        throw h::ConfigError("reduce", e.what());
    }
    const auto r = gmmf::reduce_detailed(m, cfg);
    std::ofstream out(o.output, std::ios::binary);
    if (!out) throw gmmf::Error("cannot write '" + o.output + "'");
    out << h::to_json(r.mixture).dump(2) << "\n";
    if (!out) throw gmmf::Error("write failed for '" + o.output + "'");
    std::cout << "components: " << m.size() << " -> " << r.mixture.size() << "\n";
    std::cout << "merges: " << r.merges << ", pruned: " << r.pruned << "\n";
    std::cout << "final min bound: " << h::format_double(r.final_min_bound) << "\n";
    return 0;
}

int cmd_metrics(const MetricsOptions& o) {
    const h::TruthRows truth = h::read_truth(o.truth);
    if (!truth.states.empty() && truth.states.front().size() == 0) {
        throw gmmf::ArgumentError(o.truth + ": no x_* columns");
    }
    std::vector<h::TraceRow> rows;
    for (const auto& path : o.traces) {
        auto part = h::read_traces(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto ms = h::compute_metrics(rows, &truth);
    h::Json j = h::Json::object();
    for (const auto& m : ms) j[m.method] = h::to_json(m);
    const h::Json report{{"truth", o.truth}, {"traces", o.traces}, {"methods", j}};
    std::cout << h::metrics_table(ms);
    if (o.out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw gmmf::Error("cannot write '" + o.out + "'");
        out << report.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Square-root Gaussian mixture filter experiments"};
    app.require_subcommand(1);

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment (builtin name or JSON config file)");
    run_cmd->add_option("config", run.config, "Config file or builtin name")->required();
    run_cmd->add_option("--seed", run.seed, "Random seed");
    run_cmd->add_option("--steps", run.steps, "Number of steps N");
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--methods", run.methods, "Comma list of gmmf,kalman,smc,naive");
    run_cmd->add_option("--particles", run.particles, "Particle count for smc");
    run_cmd->add_option("--filter-min", run.filter_min, "Minimum components after the measurement update");
    run_cmd->add_option("--filter-max", run.filter_max, "Maximum components after the measurement update");
    run_cmd->add_option("--filter-threshold", run.filter_threshold, "Merge threshold after the measurement update");
    run_cmd->add_option("--predict-min", run.predict_min, "Minimum components after the time update");
    run_cmd->add_option("--predict-max", run.predict_max, "Maximum components after the time update");
    run_cmd->add_option("--predict-threshold", run.predict_threshold, "Merge threshold after the time update");
    run_cmd->add_option("--split-count", run.split_count, "Components per split (0 disables splitting)");
    run_cmd->add_option("--split-spread", run.split_spread, "Split spread in (0, 1]");
    run_cmd->add_flag("--write-mixtures", run.write_mixtures, "Also write every mixture to mixtures.json");
    run_cmd->add_flag("--print-config", run.print_config, "Print the resolved config and exit");

    ReduceOptions red;
    auto* reduce_cmd = app.add_subcommand("reduce", "Reduce a JSON mixture");
    reduce_cmd->add_option("input", red.input, "Input mixture JSON")->required();
    reduce_cmd->add_option("output", red.output, "Output mixture JSON")->required();
    reduce_cmd->add_option("--min", red.min, "Minimum component count")->capture_default_str();
    reduce_cmd->add_option("--max", red.max, "Maximum component count")->capture_default_str();
    reduce_cmd->add_option("--threshold", red.threshold, "Merge threshold on the bound")->capture_default_str();

    MetricsOptions met;
    auto* metrics_cmd = app.add_subcommand("metrics", "RMSE and count statistics of trace files against a truth file");
    metrics_cmd->add_option("truth", met.truth, "truth.csv")->required();
    metrics_cmd->add_option("traces", met.traces, "One or more trace CSV files")->required();
    metrics_cmd->add_option("--out", met.out, "Write the JSON report here instead of stdout");

    auto* list_cmd = app.add_subcommand("list", "List builtin experiments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*reduce_cmd) return cmd_reduce(red);
        if (*metrics_cmd) return cmd_metrics(met);
        if (*list_cmd) {
            for (const auto& n : h::builtin_names()) std::cout << n << "\n";
            return 0;
        }
    } catch (const h::MethodFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const gmmf::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
