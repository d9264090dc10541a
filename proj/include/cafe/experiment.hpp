#pragma once

/// @file experiment.hpp
/// @brief Experiment configuration, the (policy, seed) run grid, metrics
/// tables, sweeps and bound validation over saved run artifacts.

#include "cafe/controller.hpp"
#include "cafe/fedsim.hpp"
#include "cafe/fleet.hpp"
#include "cafe/lyapunov.hpp"
#include "cafe/trace_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cafe {

/// Any problem with a configuration found before computation starts.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TraceSource {
    /// Empty path means synthesize with the profile and seed below.
    std::filesystem::path path;
    TraceProfile profile = TraceProfile::diurnal;
    std::uint64_t seed = 7;
};

struct EnergySpec {
    /// One entry applies to every center; otherwise one entry per center.
    std::vector<double> static_kwh{40.0};
    std::vector<double> active_kwh{760.0};
};

/// Optional explicit utility settings. Unset values follow the task's gradient ceiling.
struct UtilitySpec {
    std::optional<double> b;
    std::optional<double> gradient_norm_cap;
};

struct ExperimentConfig {
    std::size_t n_centers = 10;
    double slot_hours = 1.0;
    EnergySpec energy;
    TraceSource trace;
    SyntheticTask task; ///< n_centers and seed are filled per run
    std::vector<PolicySpec> policies;
    ControlParams control;
    TrainConfig train;
    UtilitySpec utility;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t workers = 1;
    /// Compute the offline benchmark and the utility bound for CAFE runs (N <= 12 only).
    bool theorem2 = false;
    std::optional<double> oracle_grid;
    std::filesystem::path output_dir = "out";

    /// Laptop-sized scenario the repository is calibrated on.
    static ExperimentConfig desk_default();
    /// Headline setting: 30 centers over 200 slots with a 400 t budget.
    static ExperimentConfig full_scale_default();

    /// Throws ConfigError on the first violated invariant.
    void validate() const;
};

/// Parses "cafe-ddg", "cafe-exh", "cafe-rdg", "smu", "smn", "amu", "amn",
/// "util-k<k>", "carbon-k<k>" and "opt".
PolicySpec parse_policy_label(const std::string& label);

/// Reads a JSON config; keys not present keep their desk defaults.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

/// Trace for @p cfg: loaded from file, or synthesized. Truncated to T slots.
CarbonTrace resolve_trace(const ExperimentConfig& cfg);
EnergyModel resolve_energy(const ExperimentConfig& cfg);

struct RunSummary {
    std::string policy;
    std::uint64_t seed = 0;
    double avg_utility = 0.0;
    double avg_carbon_kg = 0.0;
    double total_carbon_kg = 0.0;
    double final_acc = 0.0;
    std::optional<BoundReport> bounds; ///< CAFE runs only
};

/// Slots averaged over for the final-accuracy metric.
inline constexpr std::size_t kFinalAccuracyWindow = 20;

RunSummary summarize_run(const PolicyRun& run);

struct PolicySummary {
    std::string policy;
    std::size_t seeds_ok = 0;
    double avg_utility = 0.0;
    double avg_carbon_kg = 0.0;
    double total_carbon_kg = 0.0;
    double final_acc = 0.0;
    std::optional<bool> thm1_pass;
    std::optional<double> thm1_rhs_main;
    std::optional<double> thm1_rhs_appendix;
};

/// Everything validate_bounds needs to rebuild a BoundReport.
struct RunArtifact {
    std::string policy;
    std::string solver;
    std::uint64_t seed = 0;
    BoundConstants constants; ///< B1 and c_max are recomputed from the series
    RunTrace trace;
    std::optional<double> opt_value;
};

struct CellError {
    std::string policy;
    std::uint64_t seed = 0;
    std::string message;
};

struct MetricsTable {
    std::vector<PolicyRun> runs; ///< policy-major, then seed order
    std::vector<RunSummary> run_summaries;
    std::vector<PolicySummary> summary;
    std::vector<CellError> errors;
    std::vector<RunArtifact> artifacts; ///< one per CAFE run
};

/// Seed-averaged rows, one per policy label in first-appearance order.
std::vector<PolicySummary> summarize(const std::vector<RunSummary>& runs);

std::string slots_csv(const std::vector<PolicyRun>& runs);
std::string summary_csv(const std::vector<PolicySummary>& rows);
std::string bound_report_text(const BoundReport& report);

std::string artifact_to_json(const RunArtifact& artifact);
RunArtifact artifact_from_json(const std::string& json_text);

/// Builds the artifact of a CAFE run: constants from the realized snapshots,
/// plus the full-participation snapshots when @p reference is given.
RunArtifact make_artifact(const RunContext& ctx, const PolicyRun& run, const FullReference* reference,
                          std::optional<double> opt_value);

/// Runs every (policy, seed) cell; a failing cell is recorded and the rest proceed.
MetricsTable run_experiment(const ExperimentConfig& cfg);

/// run_experiment plus every output file under cfg.output_dir.
MetricsTable run_and_write(const ExperimentConfig& cfg);

/// Cartesian grid over the listed parameters; empty lists keep the base value.
struct SweepSpec {
    std::vector<double> V;
    std::vector<double> q0;
    std::vector<double> H_kg;
    std::vector<double> epsilon;
    std::vector<double> alpha;

    [[nodiscard]] std::vector<ExperimentConfig> expand(const ExperimentConfig& base) const;
};

/// Accepts the grid object itself or a document holding it under "sweep".
SweepSpec parse_sweep(const std::string& json_text);

struct SweepCell {
    ExperimentConfig config;
    MetricsTable metrics;
};

/// Runs each grid cell into output_dir/cell_<k>, up to cfg.workers at once,
/// and writes output_dir/sweep_summary.csv.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepSpec& sweep);

struct ValidationResult {
    std::vector<std::pair<std::filesystem::path, BoundReport>> reports;
    bool all_pass = true;
};

/// One-shot per-slot problem for debugging a single decision.
struct SolveRequest {
    std::vector<Vector> gradients;
    std::vector<double> intensities; ///< kg/kWh per center for this slot
    std::vector<double> static_kwh;
    std::vector<double> active_kwh;
    double q = 0.0;
    double V = 1.0;
    std::optional<double> b;
    std::optional<double> gradient_norm_cap;
    SolverId solver = SolverId::exhaustive;
    std::uint64_t seed = 0;
};

SolveRequest parse_solve_request(const std::string& json_text);
/// Solves the request and renders the result as `key: value` lines.
std::string run_solve(const SolveRequest& request);

/// Rebuilds the bound reports from every run_*.json artifact in @p dir.
ValidationResult validate_bounds(const std::filesystem::path& dir);

} // namespace cafe
