// Command-line front end: run, sweep, validate, synth-trace, solve.

#include "cafe/experiment.hpp"
#include "cafe/io_util.hpp"
#include "cafe/trace_io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kBoundFailure = 3;

/// Flags shared by run and sweep; each overrides the matching config value.
struct Overrides {
    std::string config;
    std::string preset;
    std::string out;
    std::string trace;
    std::optional<double> V, H_kg, q0, epsilon, alpha, lr;
    std::optional<std::size_t> T, n_centers, workers, local_epochs;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> policies;
    bool theorem2 = false;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
        app->add_option("--preset", preset, "base values when no config is given")
            ->check(CLI::IsMember({"desk", "full"}));
        app->add_option("-o,--out", out, "output directory");
        app->add_option("--trace", trace, "trace CSV instead of the synthetic profile");
        app->add_option("--V", V, "utility weight");
        app->add_option("--H-kg", H_kg, "total carbon budget, kg");
        app->add_option("--q0", q0, "initial queue length");
        app->add_option("--epsilon", epsilon, "probing fraction");
        app->add_option("--alpha", alpha, "Dirichlet concentration");
        app->add_option("--lr", lr, "local learning rate");
        app->add_option("--T", T, "number of slots");
        app->add_option("--centers", n_centers, "number of data centers");
        app->add_option("--epochs", local_epochs, "local epochs per slot");
        app->add_option("--workers", workers, "parallel run cells");
        app->add_option("--seeds", seeds, "seed list")->delimiter(',');
        app->add_option("--policies", policies, "policy labels")->delimiter(',');
        app->add_flag("--theorem2", theorem2, "compute the offline benchmark for CAFE runs");
    }

    cafe::ExperimentConfig build() const {
        std::string text;
        if (!config.empty()) {
            std::ifstream in(config, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        } else {
            text = fmt::format(R"({{"preset": "{}"}})", preset.empty() ? "desk" : preset);
        }
        auto cfg = cafe::parse_config(text);
        if (!out.empty()) cfg.output_dir = out;
        if (!trace.empty()) cfg.trace.path = trace;
        if (V) cfg.control.V = *V;
        if (H_kg) cfg.control.H = *H_kg;
        if (q0) cfg.control.q0 = *q0;
        if (epsilon) cfg.train.probe_fraction = *epsilon;
        if (alpha) cfg.task.dirichlet_alpha = *alpha;
        if (lr) cfg.train.learning_rate = *lr;
        if (T) cfg.control.T = *T;
        if (n_centers) cfg.n_centers = *n_centers;
        if (local_epochs) cfg.train.local_epochs = *local_epochs;
        if (workers) cfg.workers = *workers;
        if (!seeds.empty()) cfg.seeds = seeds;
        if (!policies.empty()) {
            cfg.policies.clear();
            for (const auto& p : policies) cfg.policies.push_back(cafe::parse_policy_label(p));
        }
        if (theorem2) cfg.theorem2 = true;
        cfg.validate();
        return cfg;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cafe::ConfigError(fmt::format("cannot read '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_summary(const cafe::MetricsTable& table) {
    std::cout << cafe::summary_csv(table.summary);
    for (const auto& e : table.errors) {
        std::cerr << fmt::format("error: {} seed {}: {}\n", e.policy, e.seed, e.message);
    }
    for (const auto& run : table.runs) {
        for (const auto& w : run.warnings) {
            std::cerr << fmt::format("warning: {} seed {}: {}\n", run.policy.label(), run.seed, w);
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Carbon-aware federated learning simulator"};
    app.require_subcommand(1);

    Overrides run_opts;
    auto* run = app.add_subcommand("run", "run every (policy, seed) cell of one experiment");
    run_opts.attach(run);

    Overrides sweep_opts;
    std::string grid_path;
    std::vector<double> grid_V, grid_q0, grid_H, grid_eps, grid_alpha;
    auto* sweep = app.add_subcommand("sweep", "grid over V, q0, H, epsilon and alpha");
    sweep_opts.attach(sweep);
    sweep->add_option("--grid", grid_path, "JSON grid (or the config's \"sweep\" object)")->check(CLI::ExistingFile);
    sweep->add_option("--grid-V", grid_V)->delimiter(',');
    sweep->add_option("--grid-q0", grid_q0)->delimiter(',');
    sweep->add_option("--grid-H-kg", grid_H)->delimiter(',');
    sweep->add_option("--grid-epsilon", grid_eps)->delimiter(',');
    sweep->add_option("--grid-alpha", grid_alpha)->delimiter(',');

    std::string validate_dir;
    auto* validate = app.add_subcommand("validate", "re-check the bounds from saved run artifacts");
    validate->add_option("dir", validate_dir, "output directory of a run")->required();

    std::size_t synth_n = 10, synth_T = 48;
    std::uint64_t synth_seed = 7;
    std::string synth_profile = "diurnal", synth_out;
    auto* synth = app.add_subcommand("synth-trace", "write a synthetic intensity trace");
    synth->add_option("--centers", synth_n)->check(CLI::PositiveNumber);
    synth->add_option("--slots", synth_T)->check(CLI::PositiveNumber);
    synth->add_option("--profile", synth_profile)->check(CLI::IsMember({"constant", "diurnal", "random_walk"}));
    synth->add_option("--seed", synth_seed);
    synth->add_option("-o,--out", synth_out, "CSV path; stdout when omitted");

    std::string solve_path;
    auto* solve = app.add_subcommand("solve", "solve one per-slot problem from a JSON request");
    solve->add_option("request", solve_path, "gradients + intensities JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            const auto cfg = run_opts.build();
            const auto table = cafe::run_and_write(cfg);
            print_summary(table);
            return table.errors.empty() ? kOk : kRuntimeError;
        }
        if (*sweep) {
            const auto cfg = sweep_opts.build();
            cafe::SweepSpec spec;
            if (!grid_path.empty()) {
                spec = cafe::parse_sweep(read_file(grid_path));
            } else if (!sweep_opts.config.empty()) {
                spec = cafe::parse_sweep(read_file(sweep_opts.config));
            }
            if (!grid_V.empty()) spec.V = grid_V;
            if (!grid_q0.empty()) spec.q0 = grid_q0;
            if (!grid_H.empty()) spec.H_kg = grid_H;
            if (!grid_eps.empty()) spec.epsilon = grid_eps;
            if (!grid_alpha.empty()) spec.alpha = grid_alpha;
            const auto cells = cafe::run_sweep(cfg, spec);
            bool failed = false;
            for (const auto& c : cells) failed = failed || !c.metrics.errors.empty() || c.metrics.summary.empty();
            std::cout << fmt::format("{} cells written under {}\n", cells.size(), cfg.output_dir.string());
            return failed ? kRuntimeError : kOk;
        }
        if (*validate) {
            const auto result = cafe::validate_bounds(validate_dir);
            for (const auto& [path, report] : result.reports) {
                std::cout << "# " << path.filename().string() << "\n" << cafe::bound_report_text(report);
            }
            return result.all_pass ? kOk : kBoundFailure;
        }
        if (*synth) {
            const auto trace =
                cafe::synth_trace(synth_n, synth_T, cafe::parse_trace_profile(synth_profile), synth_seed);
            if (synth_out.empty()) {
                cafe::write_trace(std::cout, trace);
            } else {
                cafe::write_trace(std::filesystem::path(synth_out), trace);
            }
            return kOk;
        }
        if (*solve) {
            const auto request = cafe::parse_solve_request(read_file(solve_path));
            std::cout << cafe::run_solve(request);
            return kOk;
        }
    } catch (const cafe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kOk;
}
