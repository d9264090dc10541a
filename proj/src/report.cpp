#include "cafe/experiment.hpp"
#include "cafe/io_util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <stdexcept>

namespace cafe {

using nlohmann::json;

namespace {

std::string flag(bool v) { return v ? "true" : "false"; }

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string{}; }

json series(const std::vector<double>& v) { return json(v); }

std::vector<double> read_series(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw std::invalid_argument(fmt::format("artifact lacks '{}'", key));
    }
    return j.at(key).get<std::vector<double>>();
}

} // namespace

std::string slots_csv(const std::vector<PolicyRun>& runs) {
    std::string out =
        "policy,seed,slot,selection_bits,utility,carbon_kg,cum_carbon_kg,queue,objective,train_loss,test_acc\n";
    for (const auto& run : runs) {
        const auto label = run.policy.label();
        for (const auto& r : run.slots) {
            out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", label, run.seed, r.t, r.selection.bits(),
                               format_real(r.utility), format_real(r.carbon_kg),
                               format_real(r.cumulative_carbon_kg), format_real(r.queue_after),
                               format_real(r.objective_value), format_real(r.train_loss),
                               format_real(r.test_accuracy));
        }
    }
    return out;
}

std::string summary_csv(const std::vector<PolicySummary>& rows) {
    std::string out =
        "policy,avg_utility,avg_carbon_kg,total_carbon_kg,final_acc,thm1_pass,thm1_rhs_main,thm1_rhs_appendix\n";
    for (const auto& s : rows) {
        if (s.seeds_ok == 0) {
            out += fmt::format("{},nan,nan,nan,nan,error,,\n", s.policy);
            continue;
        }
        out += fmt::format("{},{},{},{},{},{},{},{}\n", s.policy, format_real(s.avg_utility),
                           format_real(s.avg_carbon_kg), format_real(s.total_carbon_kg), format_real(s.final_acc),
                           s.thm1_pass ? flag(*s.thm1_pass) : std::string{}, optional_real(s.thm1_rhs_main),
                           optional_real(s.thm1_rhs_appendix));
    }
    return out;
}

std::string bound_report_text(const BoundReport& r) {
    const auto& c = r.constants;
    std::string out;
    auto line = [&out](std::string_view key, const std::string& value) {
        out += fmt::format("{}: {}\n", key, value);
    };
    line("solver", r.solver);
    line("N", std::to_string(c.N));
    line("T", std::to_string(c.T));
    line("V", format_real(c.V));
    line("H_kg", format_real(c.H));
    line("q0", format_real(c.q0));
    line("b", format_real(c.b));
    line("gamma", format_real(c.gamma));
    line("G", format_real(c.G));
    line("delta_max", format_real(c.delta_max));
    line("B1", format_real(c.B1));
    line("c_max", format_real(c.c_max));
    line("floor_violations", std::to_string(r.floor_violations));
    line("avg_carbon_kg", format_real(r.avg_carbon));
    line("per_slot_budget_kg", format_real(c.H / static_cast<double>(c.T)));
    line("avg_violation_kg", format_real(r.avg_violation));
    line("thm1_rhs_main", format_real(r.thm1_rhs_main));
    line("thm1_rhs_appendix", format_real(r.thm1_rhs_appendix));
    line("thm1_pass", flag(r.thm1_pass));
    line("thm1_pass_main", flag(r.avg_violation <= r.thm1_rhs_main + kBoundTolerance));
    line("thm1_pass_appendix", flag(r.thm1_pass_appendix));
    line("avg_utility", format_real(r.avg_utility));
    line("min_objective", format_real(r.min_objective));
    if (r.thm2_rhs) {
        line("opt_value", format_real(*r.opt_value));
        line("thm2_rhs", format_real(*r.thm2_rhs));
        line("thm2_pass", flag(*r.thm2_pass));
    } else {
        line("thm2", r.thm2_note.empty() ? "skipped" : "skipped (" + r.thm2_note + ")");
    }
    return out;
}

std::string artifact_to_json(const RunArtifact& a) {
    const auto& c = a.constants;
    json j;
    j["policy"] = a.policy;
    j["solver"] = a.solver;
    j["seed"] = a.seed;
    j["constants"] = {{"N", c.N}, {"G", c.G}, {"delta_max", c.delta_max}, {"gamma", c.gamma}, {"b", c.b},
                      {"q0", c.q0}, {"V", c.V},   {"T", c.T},                 {"H_kg", c.H}};
    j["slot_carbon_kg"] = series(a.trace.slot_carbon);
    j["slot_utility"] = series(a.trace.slot_utility);
    j["slot_objective"] = series(a.trace.slot_objective);
    j["all_select_carbon_kg"] = series(a.trace.all_select_carbon);
    j["floor_violations"] = a.trace.floor_violations;
    if (a.opt_value) {
        j["opt_value"] = *a.opt_value;
    } else {
        j["opt_value"] = nullptr;
    }
    return j.dump(2) + "\n";
}

RunArtifact artifact_from_json(const std::string& json_text) {
    RunArtifact a;
    try {
        const auto j = json::parse(json_text);
        a.policy = j.at("policy").get<std::string>();
        a.solver = j.at("solver").get<std::string>();
        a.seed = j.at("seed").get<std::uint64_t>();
        const auto& c = j.at("constants");
        a.constants.N = c.at("N").get<std::size_t>();
        a.constants.G = c.at("G").get<double>();
        a.constants.delta_max = c.at("delta_max").get<double>();
        a.constants.gamma = c.at("gamma").get<double>();
        a.constants.b = c.at("b").get<double>();
        a.constants.q0 = c.at("q0").get<double>();
        a.constants.V = c.at("V").get<double>();
        a.constants.T = c.at("T").get<std::size_t>();
        a.constants.H = c.at("H_kg").get<double>();
        a.trace.slot_carbon = read_series(j, "slot_carbon_kg");
        a.trace.slot_utility = read_series(j, "slot_utility");
        a.trace.slot_objective = read_series(j, "slot_objective");
        a.trace.all_select_carbon = read_series(j, "all_select_carbon_kg");
        a.trace.floor_violations = j.at("floor_violations").get<std::size_t>();
        if (j.contains("opt_value") && !j.at("opt_value").is_null()) {
            a.opt_value = j.at("opt_value").get<double>();
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(fmt::format("malformed run artifact: {}", e.what()));
    }
    if (a.trace.slot_carbon.size() != a.constants.T || a.trace.slot_utility.size() != a.constants.T) {
        throw std::invalid_argument("run artifact series length differs from T");
    }
    return a;
}

} // namespace cafe
