#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/policy_is.hpp"
#include "madrop/simulate.hpp"
#include "madrop/solve.hpp"

namespace madrop {

using json = nlohmann::json;

/// Shortest round-trip decimal rendering (17 significant digits).
inline std::string format_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

// ---------------------------------------------------------------------------
// System files
// ---------------------------------------------------------------------------

inline json system_to_json(const FactoredMdp& mdp) {
    json factors = json::array();
    for (int n = 0; n < mdp.n_agents(); ++n) {
        const int next_count = mdp.substate_sizes()[n];
        const int action_count = mdp.action_sizes()[n];
        const index_t parent_states = mdp.parent_states(n).size();
        json agent = json::array();
        for (index_t ps = 0; ps < parent_states; ++ps) {
            json per_action = json::array();
            for (int a = 0; a < action_count; ++a) {
                json row = json::array();
                for (int y = 0; y < next_count; ++y) row.push_back(mdp.factor(n, ps, a, y));
                per_action.push_back(std::move(row));
            }
            agent.push_back(std::move(per_action));
        }
        factors.push_back(std::move(agent));
    }
    json rewards = json::array();
    for (int n = 0; n < mdp.n_agents(); ++n) {
        json agent = json::array();
        for (int xn = 0; xn < mdp.substate_sizes()[n]; ++xn) {
            json row = json::array();
            for (int a = 0; a < mdp.action_sizes()[n]; ++a) row.push_back(mdp.agent_reward(n, xn, a));
            agent.push_back(std::move(row));
        }
        rewards.push_back(std::move(agent));
    }
    json out{{"n_agents", mdp.n_agents()},
             {"substate_sizes", mdp.substate_sizes()},
             {"action_sizes", mdp.action_sizes()},
             {"parent_sets", mdp.parent_sets()},
             {"factors", std::move(factors)},
             {"rewards", std::move(rewards)},
             {"discount", mdp.discount()}};
    if (mdp.survival_probs()) out["survival_probs"] = *mdp.survival_probs();
    return out;
}

inline FactoredMdp system_from_json(const json& j) {
    try {
        const int n_agents = j.at("n_agents").get<int>();
        const auto substates = j.at("substate_sizes").get<std::vector<int>>();
        const auto actions = j.at("action_sizes").get<std::vector<int>>();
        const auto parents = j.at("parent_sets").get<std::vector<std::vector<int>>>();
        std::vector<std::vector<double>> factors(n_agents);
        const json& jf = j.at("factors");
        for (int n = 0; n < n_agents; ++n) {
            for (const auto& per_action : jf.at(n))
                for (const auto& row : per_action)
                    for (const auto& p : row) factors[n].push_back(p.get<double>());
        }
        std::vector<std::vector<double>> rewards(n_agents);
        const json& jr = j.at("rewards");
        for (int n = 0; n < n_agents; ++n) {
            for (const auto& row : jr.at(n))
                for (const auto& r : row) rewards[n].push_back(r.get<double>());
        }
        std::optional<std::vector<double>> survival;
        if (j.contains("survival_probs")) survival = j.at("survival_probs").get<std::vector<double>>();
        return FactoredMdp(n_agents, substates, actions, parents, factors, rewards,
                           j.at("discount").get<double>(), survival);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed system document: ") + e.what());
    }
}

inline void save_system(const FactoredMdp& mdp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << system_to_json(mdp).dump(2) << '\n';
}

inline FactoredMdp load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("cannot parse ") + path + ": " + e.what());
    }
    return system_from_json(j);
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

inline json policy_to_json(const TabularPolicy& policy) {
    json out{{"substate_sizes", policy.states().digit_sizes()},
             {"action_sizes", policy.actions().digit_sizes()}};
    if (policy.rep() == TabularPolicy::Rep::product) {
        out["representation"] = "product";
        out["per_agent"] = policy.per_agent_tables();
    } else {
        out["representation"] = "joint";
        out["table"] = policy.joint_values();
    }
    return out;
}

inline TabularPolicy policy_from_json(const json& j) {
    try {
        const auto substates = j.at("substate_sizes").get<std::vector<int>>();
        const auto actions = j.at("action_sizes").get<std::vector<int>>();
        if (j.at("representation") == "product") {
            return TabularPolicy::product(substates, actions,
                                          j.at("per_agent").get<std::vector<std::vector<double>>>());
        }
        return TabularPolicy::joint_table(MixedRadixIndexer(substates), MixedRadixIndexer(actions),
                                          j.at("table").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed policy document: ") + e.what());
    }
}

inline void save_policy(const TabularPolicy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << policy_to_json(policy).dump(2) << '\n';
}

inline TabularPolicy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("cannot parse ") + path + ": " + e.what());
    }
    return policy_from_json(j);
}

// ---------------------------------------------------------------------------
// Solve reports
// ---------------------------------------------------------------------------

inline json solve_report_to_json(const SolveReport& report) {
    return json{{"values", report.values},
                {"policy", report.greedy},
                {"iterations", report.iterations},
                {"residual", report.residual},
                {"converged", report.converged}};
}

inline SolveReport solve_report_from_json(const json& j) {
    SolveReport report;
    try {
        report.values = j.at("values").get<std::vector<double>>();
        report.greedy = j.at("policy").get<std::vector<int>>();
        report.iterations = j.at("iterations").get<index_t>();
        report.residual = j.at("residual").get<double>();
        report.converged = j.value("converged", true);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed solve report: ") + e.what());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Trajectories and datasets: line-delimited text
// ---------------------------------------------------------------------------

inline void write_trajectory(std::ostream& out, const Trajectory& traj) {
    out << "# trajectory start=" << traj.start << " horizon=" << traj.horizon() << " seed=" << traj.seed
        << " policy=" << (traj.policy_id.empty() ? "-" : traj.policy_id) << '\n';
    for (int t = 0; t < traj.horizon(); ++t) {
        const auto& s = traj.steps[t];
        out << t << ' ' << s.state << ' ' << s.action << ' ' << format_double(s.reward) << '\n';
    }
}

inline void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "# dataset n_starts=" << data.n_starts() << " per_start=" << data.per_start
        << " horizon=" << data.horizon << " master_seed=" << data.master_seed
        << " policy=" << (data.policy_id.empty() ? "-" : data.policy_id) << '\n';
    for (const auto& group : data.by_start)
        for (const Trajectory& traj : group) write_trajectory(out, traj);
}

namespace detail {
inline std::string header_field(const std::string& line, const std::string& key) {
    const std::string token = key + "=";
    const auto pos = line.find(token);
    if (pos == std::string::npos) throw IoError("missing header field " + key);
    const auto start = pos + token.size();
    const auto end = line.find(' ', start);
    return line.substr(start, end == std::string::npos ? std::string::npos : end - start);
}
} // namespace detail

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# dataset", 0) != 0)
        throw IoError(path + " is not a dataset file");
    Dataset data;
    const index_t n_starts = std::stoll(detail::header_field(line, "n_starts"));
    data.per_start = std::stoi(detail::header_field(line, "per_start"));
    data.horizon = std::stoi(detail::header_field(line, "horizon"));
    data.master_seed = std::stoull(detail::header_field(line, "master_seed"));
    data.policy_id = detail::header_field(line, "policy");
    if (data.policy_id == "-") data.policy_id.clear();
    data.by_start.resize(static_cast<std::size_t>(n_starts));

    Trajectory current;
    bool open = false;
    auto flush = [&]() {
        if (!open) return;
        if (current.start < 0 || current.start >= n_starts) throw IoError("trajectory start out of range");
        data.by_start[current.start].push_back(std::move(current));
        current = Trajectory{};
        open = false;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# trajectory", 0) == 0) {
            flush();
            open = true;
            current.start = std::stoll(detail::header_field(line, "start"));
            current.seed = std::stoull(detail::header_field(line, "seed"));
            current.policy_id = detail::header_field(line, "policy");
            if (current.policy_id == "-") current.policy_id.clear();
            continue;
        }
        if (!open) throw IoError("step record outside a trajectory block");
        std::istringstream fields(line);
        int t = 0;
        TrajectoryStep step;
        if (!(fields >> t >> step.state >> step.action >> step.reward))
            throw IoError("malformed step record: " + line);
        current.steps.push_back(step);
    }
    flush();
    return data;
}

// ---------------------------------------------------------------------------
// Estimate and bound records
// ---------------------------------------------------------------------------

inline json estimate_report_to_json(const IsEstimate& estimate, std::int64_t h_mu = 0) {
    return json{{"variant", to_string(estimate.variant)},
                {"horizon", estimate.horizon},
                {"per_start", estimate.per_start},
                {"h_mu", h_mu},
                {"discount", estimate.discount},
                {"max_step_ratio", estimate.max_step_ratio},
                {"j_max", estimate.j_max},
                {"values", estimate.values}};
}

} // namespace madrop
