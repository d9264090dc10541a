#include "cafe/experiment.hpp"

#include "cafe/io_util.hpp"
#include "cafe/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace cafe {

using nlohmann::json;

// ---------------------------------------------------------------- defaults

ExperimentConfig ExperimentConfig::desk_default() {
    ExperimentConfig cfg;
    cfg.n_centers = 10;
    cfg.trace = TraceSource{{}, TraceProfile::diurnal, 7};
    cfg.task.n_classes = 10;
    cfg.task.dim = 10;
    cfg.task.class_sep = 0.5;
    cfg.task.noise_scale = 1.0;
    cfg.task.samples_per_center = 1000;
    cfg.task.test_samples = 2000;
    cfg.task.dirichlet_alpha = 0.8;
    cfg.control.V = 2e5;
    cfg.control.H = 28.0 * kKgPerTonne;
    cfg.control.T = 48;
    cfg.control.q0 = 10.0;
    cfg.train = TrainConfig{};
    for (const char* p : {"cafe-ddg", "smu", "smn", "amu", "amn"}) {
        cfg.policies.push_back(parse_policy_label(p));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::full_scale_default() {
    ExperimentConfig cfg = desk_default();
    cfg.n_centers = 30;
    cfg.control = ControlParams{}; // V 0.5, H 400 t, T 200, q0 10
    cfg.task.class_sep = 1.0;
    cfg.task.samples_per_center = 200;
    return cfg;
}

PolicySpec parse_policy_label(const std::string& label) {
    PolicySpec spec;
    auto k_suffix = [&](std::string_view prefix) -> std::optional<std::size_t> {
        if (label.rfind(prefix, 0) != 0 || label.size() == prefix.size()) return std::nullopt;
        const auto digits = label.substr(prefix.size());
        if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(std::stoull(digits));
    };
    if (label == "cafe-ddg" || label == "cafe") {
        spec.solver = SolverId::det_double_greedy;
    } else if (label == "cafe-exh") {
        spec.solver = SolverId::exhaustive;
    } else if (label == "cafe-rdg") {
        spec.solver = SolverId::rand_double_greedy;
    } else if (label == "smu" || label == "smn" || label == "amu" || label == "amn") {
        spec.kind = parse_policy_kind(label);
    } else if (label == "opt") {
        spec.kind = PolicyKind::offline_oracle;
    } else if (auto k = k_suffix("util-k")) {
        spec.kind = PolicyKind::fixed_k_utility;
        spec.k = k;
    } else if (auto k2 = k_suffix("carbon-k")) {
        spec.kind = PolicyKind::carbon_only_k;
        spec.k = k2;
    } else {
        throw ConfigError(fmt::format("unknown policy '{}'", label));
    }
    return spec;
}

// ---------------------------------------------------------------- validation

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (n_centers < 1) fail("fleet.n_centers must be at least 1");
    if (!(slot_hours > 0.0) || !std::isfinite(slot_hours)) fail("fleet.slot_hours must be positive");
    for (const auto* v : {&energy.static_kwh, &energy.active_kwh}) {
        if (v->size() != 1 && v->size() != n_centers) {
            fail(fmt::format("energy lists need 1 or {} entries, got {}", n_centers, v->size()));
        }
        for (double x : *v) {
            if (!(x >= 0.0) || !std::isfinite(x)) fail("energy values must be finite and nonnegative");
        }
    }
    if (!trace.path.empty() && !std::filesystem::exists(trace.path)) {
        fail(fmt::format("trace file '{}' does not exist", trace.path.string()));
    }
    if (policies.empty()) fail("at least one policy is required");
    if (seeds.empty()) fail("at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds must be distinct");
    if (workers < 1) fail("workers must be at least 1");
    if (oracle_grid && !(*oracle_grid > 0.0)) fail("oracle_grid_kg must be positive");
    if (theorem2 && n_centers > kMaxOracleCenters) {
        fail(fmt::format("theorem2 needs n_centers <= {}", kMaxOracleCenters));
    }
    if (utility.b && !(*utility.b > 0.0)) fail("utility.b must be positive");
    if (utility.gradient_norm_cap && !(*utility.gradient_norm_cap > 0.0)) {
        fail("utility.gradient_norm_cap must be positive");
    }
    if (utility.b && utility.gradient_norm_cap &&
        *utility.b < 2.0 * static_cast<double>(n_centers) * *utility.gradient_norm_cap) {
        fail("utility.b must be at least 2 * n_centers * gradient_norm_cap");
    }
    try {
        SyntheticTask t = task;
        t.n_centers = n_centers;
        t.validate();
        control.validate();
        train.validate(task.samples_per_center);
        std::set<std::string> labels;
        for (const auto& p : policies) {
            p.validate(n_centers);
            if (!labels.insert(p.label()).second) fail(fmt::format("policy '{}' listed twice", p.label()));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    if (!trace.path.empty()) {
        try {
            const auto tr = load_trace(trace.path);
            if (tr.n_centers() != n_centers) {
                fail(fmt::format("trace has {} centers, fleet has {}", tr.n_centers(), n_centers));
            }
            if (tr.horizon() < control.T) {
                fail(fmt::format("trace covers {} slots, horizon is {}", tr.horizon(), control.T));
            }
        } catch (const TraceError& e) {
            fail(fmt::format("trace file: {}", e.what()));
        }
    }
}

// ---------------------------------------------------------------- JSON

namespace {

/// Strict object reader: unknown keys and type mismatches become ConfigError.
class Section {
public:
    Section(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(fmt::format("{} must be an object", where()));
        for (const auto& [key, _] : j_.items()) {
            if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where()));
        }
    }

    template <typename T> void read(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(fmt::format("{}.{} has the wrong type", where(), key));
        }
    }

    template <typename T> void read_optional(const char* key, std::optional<T>& out) const {
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        read(key, v);
        out = v;
    }

    /// Numbers are checked before conversion so negative values do not wrap.
    void read_count(const char* key, std::size_t& out) const {
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw ConfigError(fmt::format("{}.{} must be a nonnegative integer", where(), key));
        }
        out = v.get<std::size_t>();
    }

    void read_list(const char* key, std::vector<double>& out) const {
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (v.is_number()) {
            out = {v.get<double>()};
        } else {
            read(key, out);
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }
    [[nodiscard]] const json& at(const char* key) const { return j_.at(key); }

private:
    [[nodiscard]] std::string where() const { return path_.empty() ? "config" : path_; }
    const json& j_;
    std::string path_;
};

Aggregation parse_aggregation(const std::string& s) {
    if (s == "uniform") return Aggregation::uniform;
    if (s == "size_weighted") return Aggregation::size_weighted;
    throw ConfigError(fmt::format("unknown aggregation '{}'", s));
}

std::string to_string(Aggregation a) { return a == Aggregation::uniform ? "uniform" : "size_weighted"; }

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("invalid JSON: {}", e.what()));
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    const json root = parse_json(json_text);
    Section top(root, "",
                {"preset", "fleet", "energy", "trace", "task", "policies", "control", "train", "utility", "seeds",
                 "workers", "theorem2", "oracle_grid_kg", "output_dir", "sweep"});
    std::string preset = "desk";
    top.read("preset", preset);
    ExperimentConfig cfg;
    if (preset == "desk") {
        cfg = ExperimentConfig::desk_default();
    } else if (preset == "full") {
        cfg = ExperimentConfig::full_scale_default();
    } else {
        throw ConfigError(fmt::format("unknown preset '{}'", preset));
    }

    if (top.has("fleet")) {
        Section s(top.at("fleet"), "fleet", {"n_centers", "slot_hours"});
        s.read_count("n_centers", cfg.n_centers);
        s.read("slot_hours", cfg.slot_hours);
    }
    if (top.has("energy")) {
        Section s(top.at("energy"), "energy", {"static_kwh", "active_kwh"});
        s.read_list("static_kwh", cfg.energy.static_kwh);
        s.read_list("active_kwh", cfg.energy.active_kwh);
    }
    if (top.has("trace")) {
        Section s(top.at("trace"), "trace", {"path", "profile", "seed"});
        std::string path, profile = to_string(cfg.trace.profile);
        s.read("path", path);
        s.read("profile", profile);
        s.read("seed", cfg.trace.seed);
        cfg.trace.path = path;
        try {
            cfg.trace.profile = parse_trace_profile(profile);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (top.has("task")) {
        Section s(top.at("task"), "task",
                  {"n_classes", "dim", "class_sep", "noise_scale", "samples_per_center", "test_samples",
                   "dirichlet_alpha"});
        s.read_count("n_classes", cfg.task.n_classes);
        s.read_count("dim", cfg.task.dim);
        s.read("class_sep", cfg.task.class_sep);
        s.read("noise_scale", cfg.task.noise_scale);
        s.read_count("samples_per_center", cfg.task.samples_per_center);
        s.read_count("test_samples", cfg.task.test_samples);
        s.read("dirichlet_alpha", cfg.task.dirichlet_alpha);
    }
    if (top.has("policies")) {
        std::vector<std::string> labels;
        top.read("policies", labels);
        cfg.policies.clear();
        for (const auto& l : labels) cfg.policies.push_back(parse_policy_label(l));
    }
    if (top.has("control")) {
        Section s(top.at("control"), "control", {"V", "H_kg", "T", "q0"});
        s.read("V", cfg.control.V);
        s.read("H_kg", cfg.control.H);
        s.read_count("T", cfg.control.T);
        s.read("q0", cfg.control.q0);
    }
    if (top.has("train")) {
        Section s(top.at("train"), "train",
                  {"local_epochs", "learning_rate", "batch_size", "probe_fraction", "aggregation"});
        s.read_count("local_epochs", cfg.train.local_epochs);
        s.read("learning_rate", cfg.train.learning_rate);
        s.read_count("batch_size", cfg.train.batch_size);
        s.read("probe_fraction", cfg.train.probe_fraction);
        std::string agg = to_string(cfg.train.aggregation);
        s.read("aggregation", agg);
        cfg.train.aggregation = parse_aggregation(agg);
    }
    if (top.has("utility")) {
        Section s(top.at("utility"), "utility", {"b", "gradient_norm_cap"});
        s.read_optional("b", cfg.utility.b);
        s.read_optional("gradient_norm_cap", cfg.utility.gradient_norm_cap);
    }
    if (top.has("seeds")) {
        const auto& v = top.at("seeds");
        if (!v.is_array()) throw ConfigError("seeds must be a list of nonnegative integers");
        cfg.seeds.clear();
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 0) {
                throw ConfigError("seeds must be a list of nonnegative integers");
            }
            cfg.seeds.push_back(e.get<std::uint64_t>());
        }
    }
    top.read_count("workers", cfg.workers);
    top.read("theorem2", cfg.theorem2);
    top.read_optional("oracle_grid_kg", cfg.oracle_grid);
    if (top.has("output_dir")) {
        std::string dir;
        top.read("output_dir", dir);
        cfg.output_dir = dir;
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["fleet"] = {{"n_centers", cfg.n_centers}, {"slot_hours", cfg.slot_hours}};
    j["energy"] = {{"static_kwh", cfg.energy.static_kwh}, {"active_kwh", cfg.energy.active_kwh}};
    j["trace"] = {{"path", cfg.trace.path.string()},
                  {"profile", to_string(cfg.trace.profile)},
                  {"seed", cfg.trace.seed}};
    j["task"] = {{"n_classes", cfg.task.n_classes},
                 {"dim", cfg.task.dim},
                 {"class_sep", cfg.task.class_sep},
                 {"noise_scale", cfg.task.noise_scale},
                 {"samples_per_center", cfg.task.samples_per_center},
                 {"test_samples", cfg.task.test_samples},
                 {"dirichlet_alpha", cfg.task.dirichlet_alpha}};
    std::vector<std::string> labels;
    for (const auto& p : cfg.policies) labels.push_back(p.label());
    j["policies"] = labels;
    j["control"] = {{"V", cfg.control.V}, {"H_kg", cfg.control.H}, {"T", cfg.control.T}, {"q0", cfg.control.q0}};
    j["train"] = {{"local_epochs", cfg.train.local_epochs},
                  {"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"probe_fraction", cfg.train.probe_fraction},
                  {"aggregation", to_string(cfg.train.aggregation)}};
    j["utility"] = {{"b", cfg.utility.b ? json(*cfg.utility.b) : json(nullptr)},
                    {"gradient_norm_cap",
                     cfg.utility.gradient_norm_cap ? json(*cfg.utility.gradient_norm_cap) : json(nullptr)}};
    j["seeds"] = cfg.seeds;
    j["workers"] = cfg.workers;
    j["theorem2"] = cfg.theorem2;
    j["oracle_grid_kg"] = cfg.oracle_grid ? json(*cfg.oracle_grid) : json(nullptr);
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2) + "\n";
}

CarbonTrace resolve_trace(const ExperimentConfig& cfg) {
    if (cfg.trace.path.empty()) {
        return synth_trace(cfg.n_centers, cfg.control.T, cfg.trace.profile, cfg.trace.seed);
    }
    return load_trace(cfg.trace.path).truncated(cfg.control.T);
}

EnergyModel resolve_energy(const ExperimentConfig& cfg) {
    auto expand = [&](const std::vector<double>& v) {
        return v.size() == 1 ? std::vector<double>(cfg.n_centers, v.front()) : v;
    };
    return EnergyModel(expand(cfg.energy.static_kwh), expand(cfg.energy.active_kwh));
}

// ---------------------------------------------------------------- metrics

RunSummary summarize_run(const PolicyRun& run) {
    RunSummary s;
    s.policy = run.policy.label();
    s.seed = run.seed;
    if (run.slots.empty()) return s;
    const double T = static_cast<double>(run.slots.size());
    double u = 0.0, c = 0.0;
    for (const auto& r : run.slots) {
        u += r.utility;
        c += r.carbon_kg;
    }
    s.avg_utility = u / T;
    s.total_carbon_kg = c;
    s.avg_carbon_kg = c / T;
    const std::size_t w = std::min(kFinalAccuracyWindow, run.slots.size());
    double acc = 0.0;
    for (std::size_t i = run.slots.size() - w; i < run.slots.size(); ++i) acc += run.slots[i].test_accuracy;
    s.final_acc = acc / static_cast<double>(w);
    return s;
}

std::vector<PolicySummary> summarize(const std::vector<RunSummary>& runs) {
    std::vector<PolicySummary> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : runs) {
        auto [it, fresh] = index.try_emplace(r.policy, out.size());
        if (fresh) {
            PolicySummary fresh_row;
            fresh_row.policy = r.policy;
            out.push_back(std::move(fresh_row));
        }
        auto& s = out[it->second];
        s.seeds_ok += 1;
        s.avg_utility += r.avg_utility;
        s.avg_carbon_kg += r.avg_carbon_kg;
        s.total_carbon_kg += r.total_carbon_kg;
        s.final_acc += r.final_acc;
        if (r.bounds) {
            s.thm1_pass = s.thm1_pass.value_or(true) && r.bounds->thm1_pass;
            s.thm1_rhs_main = s.thm1_rhs_main.value_or(0.0) + r.bounds->thm1_rhs_main;
            s.thm1_rhs_appendix = s.thm1_rhs_appendix.value_or(0.0) + r.bounds->thm1_rhs_appendix;
        }
    }
    for (auto& s : out) {
        const double n = static_cast<double>(s.seeds_ok);
        s.avg_utility /= n;
        s.avg_carbon_kg /= n;
        s.total_carbon_kg /= n;
        s.final_acc /= n;
        if (s.thm1_rhs_main) *s.thm1_rhs_main /= n;
        if (s.thm1_rhs_appendix) *s.thm1_rhs_appendix /= n;
    }
    return out;
}

RunArtifact make_artifact(const RunContext& ctx, const PolicyRun& run, const FullReference* reference,
                          std::optional<double> opt_value) {
    RunArtifact a;
    a.policy = run.policy.label();
    a.solver = to_string(run.policy.solver);
    a.seed = run.seed;
    auto& c = a.constants;
    c.N = ctx.task.centers.size();
    c.G = empirical_gradient_bound(run.snapshots);
    for (const auto& s : run.snapshots) c.delta_max = std::max(c.delta_max, empirical_divergence(s));
    if (reference) {
        c.G = std::max(c.G, empirical_gradient_bound(reference->snapshots));
        for (const auto& s : reference->snapshots) c.delta_max = std::max(c.delta_max, empirical_divergence(s));
    }
    c.gamma = approximation_gamma(run.policy.solver).value_or(1.0);
    c.b = ctx.utility.b;
    c.q0 = ctx.params.q0;
    c.V = ctx.params.V;
    c.T = ctx.params.T;
    c.H = ctx.params.H;
    const auto all = SelectionVector::all(c.N);
    for (const auto& r : run.slots) {
        a.trace.slot_carbon.push_back(r.carbon_kg);
        a.trace.slot_utility.push_back(r.utility);
        a.trace.slot_objective.push_back(r.objective_value);
        a.trace.all_select_carbon.push_back(carbon_total(ctx.energy, ctx.trace, r.t, all));
    }
    a.trace.floor_violations = run.floor_violations.size();
    a.opt_value = opt_value;
    return a;
}

namespace {

BoundReport report_from_artifact(const RunArtifact& a) {
    return build_bound_report(a.trace, a.constants, a.solver, a.opt_value,
                              a.opt_value ? std::string{} : "no offline benchmark in the run artifact");
}

/// Runs fn(0..n-1) on up to @p workers threads. fn must not throw.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
}

std::string bounds_stem(const std::string& label, std::uint64_t seed) { return fmt::format("{}_seed{}", label, seed); }

struct CellResult {
    std::optional<PolicyRun> run;
    std::optional<RunArtifact> artifact;
    std::optional<BoundReport> report;
    std::string error;
};

} // namespace

MetricsTable run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto trace = resolve_trace(cfg);
    const auto energy = resolve_energy(cfg);

    std::vector<TaskData> tasks(cfg.seeds.size());
    std::vector<std::string> task_errors(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t k) {
        try {
            SyntheticTask st = cfg.task;
            st.n_centers = cfg.n_centers;
            st.seed = cfg.seeds[k];
            tasks[k] = generate_task(st);
        } catch (const std::exception& e) {
            task_errors[k] = e.what();
        }
    });

    const std::size_t n_cells = cfg.policies.size() * cfg.seeds.size();
    std::vector<CellResult> cells(n_cells);
    parallel_for(n_cells, cfg.workers, [&](std::size_t idx) {
        const auto& spec = cfg.policies[idx / cfg.seeds.size()];
        const std::size_t k = idx % cfg.seeds.size();
        auto& cell = cells[idx];
        if (!task_errors[k].empty()) {
            cell.error = "task generation: " + task_errors[k];
            return;
        }
        try {
            const auto& task = tasks[k];
            const double cap = cfg.utility.gradient_norm_cap.value_or(gradient_norm_ceiling(task));
            UtilityConfig ucfg = UtilityConfig::for_fleet(cfg.n_centers, cap);
            if (cfg.utility.b) ucfg.b = *cfg.utility.b;
            RunContext ctx{task, energy, trace, cfg.control, cfg.train, ucfg,
                           ModelState::zeros(task.n_classes, task.test.dim), cfg.seeds[k]};
            cell.run = run_policy(ctx, spec);
            if (spec.kind == PolicyKind::cafe) {
                std::optional<double> opt;
                std::optional<FullReference> ref;
                if (cfg.theorem2) {
                    ref = full_reference(ctx);
                    opt = offline_benchmark(ctx, *ref, cfg.oracle_grid).opt_value;
                }
                cell.artifact = make_artifact(ctx, *cell.run, ref ? &*ref : nullptr, opt);
                cell.report = report_from_artifact(*cell.artifact);
            }
        } catch (const std::exception& e) {
            cell.run.reset();
            cell.error = e.what();
        }
    });

    MetricsTable table;
    for (std::size_t idx = 0; idx < n_cells; ++idx) {
        auto& cell = cells[idx];
        const auto& spec = cfg.policies[idx / cfg.seeds.size()];
        const auto seed = cfg.seeds[idx % cfg.seeds.size()];
        if (!cell.run) {
            table.errors.push_back(CellError{spec.label(), seed, cell.error});
            continue;
        }
        auto summary = summarize_run(*cell.run);
        summary.bounds = cell.report;
        table.run_summaries.push_back(std::move(summary));
        table.runs.push_back(std::move(*cell.run));
    }
    table.summary = summarize(table.run_summaries);
    // Policies whose every cell failed still get a summary row.
    for (const auto& spec : cfg.policies) {
        const auto label = spec.label();
        if (std::none_of(table.summary.begin(), table.summary.end(),
                         [&](const PolicySummary& s) { return s.policy == label; })) {
            PolicySummary row;
            row.policy = label;
            table.summary.push_back(std::move(row));
        }
    }
    std::stable_sort(table.summary.begin(), table.summary.end(), [&](const auto& a, const auto& b) {
        auto pos = [&](const std::string& l) {
            for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
                if (cfg.policies[i].label() == l) return i;
            }
            return cfg.policies.size();
        };
        return pos(a.policy) < pos(b.policy);
    });

    for (auto& cell : cells) {
        if (cell.artifact) table.artifacts.push_back(std::move(*cell.artifact));
    }
    return table;
}

MetricsTable run_and_write(const ExperimentConfig& cfg) {
    auto table = run_experiment(cfg);
    const auto& dir = cfg.output_dir;
    write_file_atomic(dir / "effective_config.json", config_to_json(cfg));
    write_file_atomic(dir / "slots.csv", slots_csv(table.runs));
    write_file_atomic(dir / "summary.csv", summary_csv(table.summary));
    std::string errors;
    for (const auto& e : table.errors) errors += fmt::format("{},{},{}\n", e.policy, e.seed, e.message);
    write_file_atomic(dir / "errors.txt", errors);
    for (const auto& a : table.artifacts) {
        const auto stem = bounds_stem(a.policy, a.seed);
        write_file_atomic(dir / ("run_" + stem + ".json"), artifact_to_json(a));
        write_file_atomic(dir / ("bounds_" + stem + ".txt"), bound_report_text(report_from_artifact(a)));
    }
    return table;
}

// ---------------------------------------------------------------- sweeps

std::vector<ExperimentConfig> SweepSpec::expand(const ExperimentConfig& base) const {
    auto or_base = [](const std::vector<double>& v, double b) { return v.empty() ? std::vector<double>{b} : v; };
    const auto Vs = or_base(V, base.control.V);
    const auto qs = or_base(q0, base.control.q0);
    const auto Hs = or_base(H_kg, base.control.H);
    const auto es = or_base(epsilon, base.train.probe_fraction);
    const auto as = or_base(alpha, base.task.dirichlet_alpha);
    std::vector<ExperimentConfig> out;
    for (double v : Vs)
        for (double q : qs)
            for (double h : Hs)
                for (double e : es)
                    for (double a : as) {
                        ExperimentConfig c = base;
                        c.control.V = v;
                        c.control.q0 = q;
                        c.control.H = h;
                        c.train.probe_fraction = e;
                        c.task.dirichlet_alpha = a;
                        c.workers = 1;
                        c.output_dir = base.output_dir / fmt::format("cell_{}", out.size());
                        out.push_back(std::move(c));
                    }
    return out;
}

SweepSpec parse_sweep(const std::string& json_text) {
    const json root = parse_json(json_text);
    if (!root.is_object()) throw ConfigError("sweep grid must be an object");
    const json& grid = root.contains("sweep") ? root.at("sweep") : root;
    Section s(grid, "sweep", {"V", "q0", "H_kg", "epsilon", "alpha"});
    SweepSpec spec;
    s.read_list("V", spec.V);
    s.read_list("q0", spec.q0);
    s.read_list("H_kg", spec.H_kg);
    s.read_list("epsilon", spec.epsilon);
    s.read_list("alpha", spec.alpha);
    return spec;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepSpec& sweep) {
    base.validate();
    auto configs = sweep.expand(base);
    for (const auto& c : configs) c.validate();

    std::vector<SweepCell> cells(configs.size());
    std::vector<std::string> failures(configs.size());
    parallel_for(configs.size(), base.workers, [&](std::size_t i) {
        cells[i].config = configs[i];
        try {
            cells[i].metrics = run_and_write(configs[i]);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    std::string csv = "cell,V,q0,H_kg,epsilon,alpha,policy,avg_utility,avg_carbon_kg,total_carbon_kg,final_acc,"
                      "thm1_pass\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i].config;
        const auto prefix = fmt::format("{},{},{},{},{},{}", i, format_real(c.control.V), format_real(c.control.q0),
                                        format_real(c.control.H), format_real(c.train.probe_fraction),
                                        format_real(c.task.dirichlet_alpha));
        if (!failures[i].empty()) {
            csv += prefix + ",error,nan,nan,nan,nan,\n";
            continue;
        }
        for (const auto& s : cells[i].metrics.summary) {
            if (s.seeds_ok == 0) {
                csv += fmt::format("{},{},nan,nan,nan,nan,error\n", prefix, s.policy);
                continue;
            }
            csv += fmt::format("{},{},{},{},{},{},{}\n", prefix, s.policy, format_real(s.avg_utility),
                               format_real(s.avg_carbon_kg), format_real(s.total_carbon_kg),
                               format_real(s.final_acc),
                               s.thm1_pass ? (*s.thm1_pass ? "true" : "false") : "");
        }
    }
    write_file_atomic(base.output_dir / "effective_config.json", config_to_json(base));
    write_file_atomic(base.output_dir / "sweep_summary.csv", csv);
    return cells;
}

// ---------------------------------------------------------------- validation

ValidationResult validate_bounds(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error(fmt::format("'{}' is not a directory", dir.string()));
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("run_", 0) == 0 && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw std::runtime_error(fmt::format("no run_*.json artifacts in '{}'", dir.string()));
    }
    ValidationResult result;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        auto report = report_from_artifact(artifact_from_json(ss.str()));
        result.all_pass = result.all_pass && report.thm1_pass && report.thm2_pass.value_or(true);
        result.reports.emplace_back(f, std::move(report));
    }
    return result;
}

// ---------------------------------------------------------------- one-shot solve

SolveRequest parse_solve_request(const std::string& json_text) {
    const json root = parse_json(json_text);
    Section s(root, "solve request",
              {"gradients", "intensities", "static_kwh", "active_kwh", "q", "V", "b", "gradient_norm_cap", "solver",
               "seed"});
    SolveRequest r;
    s.read("gradients", r.gradients);
    s.read_list("intensities", r.intensities);
    s.read_list("static_kwh", r.static_kwh);
    s.read_list("active_kwh", r.active_kwh);
    s.read("q", r.q);
    s.read("V", r.V);
    s.read_optional("b", r.b);
    s.read_optional("gradient_norm_cap", r.gradient_norm_cap);
    s.read("seed", r.seed);
    std::string solver = to_string(r.solver);
    s.read("solver", solver);
    try {
        r.solver = parse_solver_id(solver);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const std::size_t n = r.gradients.size();
    if (n == 0) throw ConfigError("solve request needs at least one gradient");
    if (r.intensities.size() != n) throw ConfigError("one intensity per gradient is required");
    if (r.static_kwh.empty()) r.static_kwh = {40.0};
    if (r.active_kwh.empty()) r.active_kwh = {760.0};
    for (auto* v : {&r.static_kwh, &r.active_kwh}) {
        if (v->size() == 1) v->assign(n, v->front());
        if (v->size() != n) throw ConfigError("energy lists need 1 entry or one per center");
    }
    if (r.solver == SolverId::budget_greedy) throw ConfigError("solve supports the unconstrained solvers only");
    if (!(r.q >= 0.0) || !(r.V >= 0.0)) throw ConfigError("q and V must be nonnegative");
    return r;
}

std::string run_solve(const SolveRequest& r) {
    const std::size_t n = r.gradients.size();
    GradientSnapshot snapshot(r.gradients, "solve");
    const double cap = r.gradient_norm_cap.value_or(snapshot.max_norm() > 0.0 ? snapshot.max_norm() : 1.0);
    UtilityConfig ucfg = UtilityConfig::for_fleet(n, cap);
    if (r.b) ucfg.b = *r.b;
    ucfg.validate(n);
    const EnergyModel energy(r.static_kwh, r.active_kwh);
    const CarbonTrace trace(1, n, r.intensities);
    ControlParams params;
    params.V = r.V;
    params.T = 1;
    params.H = 1.0; // unused by the per-slot objective
    const auto oracle = make_p2_oracle(snapshot, r.q, 0, params, energy, trace, ucfg);
    const auto res = solve(oracle, r.solver, r.seed);
    std::string out;
    out += fmt::format("solver: {}\n", to_string(r.solver));
    out += fmt::format("selection_bits: {}\n", res.selection.bits());
    out += fmt::format("objective: {}\n", format_real(res.value));
    out += fmt::format("utility: {}\n", format_real(utility(snapshot, res.selection, ucfg)));
    out += fmt::format("carbon_kg: {}\n", format_real(carbon_total(energy, trace, 0, res.selection)));
    out += fmt::format("evaluations: {}\n", res.evaluations);
    out += fmt::format("b: {}\n", format_real(ucfg.b));
    if (res.min_step_sum) out += fmt::format("min_step_sum: {}\n", format_real(*res.min_step_sum));
    return out;
}

} // namespace cafe
