#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "madrop/bounds.hpp"
#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/io.hpp"
#include "madrop/parallel.hpp"
#include "madrop/policy_is.hpp"
#include "madrop/random_system.hpp"
#include "madrop/simulate.hpp"
#include "madrop/solve.hpp"

namespace madrop {

/// Plot-ready table: `# key=value` metadata lines, a header row, then
/// numeric rows rendered with full round-trip precision.
struct CsvTable {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_meta(const std::string& key, const std::string& value) { metadata.emplace_back(key, value); }
    void add_meta(const std::string& key, double value) { metadata.emplace_back(key, format_double(value)); }
    void add_meta(const std::string& key, std::int64_t value) { metadata.emplace_back(key, std::to_string(value)); }

    void write(std::ostream& out) const {
        for (const auto& [key, value] : metadata) out << "# " << key << "=" << value << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
        out << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
            out << '\n';
        }
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path + " for writing");
        write(out);
    }

    json to_json() const {
        json meta = json::object();
        for (const auto& [key, value] : metadata) meta[key] = value;
        return json{{"metadata", meta}, {"columns", columns}, {"rows", rows}};
    }
};

namespace detail {

/// Value iteration on every realization's masked-reward system, sharing one
/// transition table. Results are indexed like enumerate_masks.
struct MaskSolves {
    std::vector<DropoutMask> masks;
    std::vector<SolveReport> solves;
};

inline MaskSolves solve_all_masks(const FactoredMdp& mdp,
                                  const std::shared_ptr<const std::vector<double>>& transition,
                                  double tol = kDefaultValueTol, int workers = 1) {
    MaskSolves out;
    out.masks = enumerate_masks(mdp.n_agents());
    out.solves.resize(out.masks.size());
    parallel_for(0, static_cast<index_t>(out.masks.size()), workers, [&](index_t i) {
        out.solves[i] = value_iteration(flatten(mdp, out.masks[i], transition), tol);
    });
    return out;
}

/// Greedy policy of a realization solve, re-extended with uniform actions for
/// the dropped agents.
inline TabularPolicy uniform_extended_greedy(const FactoredMdp& mdp, const DropoutMask& mask,
                                             const std::vector<int>& greedy) {
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    const SubspaceSplit action_split(mdp.actions(), mask);
    double dropped_share = 1.0;
    for (int n = 0; n < mdp.n_agents(); ++n)
        if (!mask.active[n]) dropped_share /= mdp.action_sizes()[n];
    std::vector<double> table(static_cast<std::size_t>(S * A), 0.0);
    for (index_t x = 0; x < S; ++x) {
        const index_t abar = action_split.project_kept(greedy[x]);
        for (index_t d = 0; d < action_split.n_rest(); ++d)
            table[x * A + action_split.combine(abar, d)] += dropped_share;
    }
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

/// Mixture of the per-realization greedy policies (uniform on dropped
/// agents), weighted by realization probability.
inline TabularPolicy mixture_from_solves(const FactoredMdp& mdp, const MaskSolves& solved,
                                         const DropoutModel& model) {
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A), 0.0);
    for (std::size_t i = 0; i < solved.masks.size(); ++i) {
        const double weight = mask_probability(solved.masks[i], model);
        if (weight == 0.0) continue;
        const DropoutMask& mask = solved.masks[i];
        const SubspaceSplit action_split(mdp.actions(), mask);
        double dropped_share = 1.0;
        for (int n = 0; n < mdp.n_agents(); ++n)
            if (!mask.active[n]) dropped_share /= mdp.action_sizes()[n];
        for (index_t x = 0; x < S; ++x) {
            const index_t abar = mask.none_active() ? 0 : action_split.project_kept(solved.solves[i].greedy[x]);
            for (index_t d = 0; d < action_split.n_rest(); ++d)
                table[x * A + action_split.combine(abar, d)] += weight * dropped_share;
        }
    }
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

/// Mean-over-profiles loss of a policy on one realization: the optimal
/// masked-reward values minus the policy's, averaged over the dropped
/// profiles under the policy's own stationary marginal, then over surviving
/// profiles. Nonnegative by optimality. Returns {absolute, relative}.
inline std::pair<double, double> realization_loss(const FactoredMdp& mdp, const DropoutMask& mask,
                                                  const FlatMdp& flat_masked,
                                                  const std::vector<double>& optimal_values,
                                                  const TabularPolicy& policy) {
    const std::vector<double> policy_values = evaluate_policy(flat_masked, policy);
    const MarkovChain chain = induced_chain(flat_masked, policy);
    const std::vector<double> mu = stationary_distribution(chain);
    const SubspaceSplit split(mdp.states(), mask);
    std::vector<double> marginal(static_cast<std::size_t>(split.n_rest()), 0.0);
    for (index_t x = 0; x < mdp.n_states(); ++x) marginal[split.project_rest(x)] += mu[x];

    double loss_total = 0.0;
    double optimal_total = 0.0;
    for (index_t xbar = 0; xbar < split.n_kept(); ++xbar) {
        for (index_t d = 0; d < split.n_rest(); ++d) {
            const index_t x = split.combine(xbar, d);
            loss_total += marginal[d] * (optimal_values[x] - policy_values[x]);
            optimal_total += marginal[d] * optimal_values[x];
        }
    }
    const double n_profiles = static_cast<double>(split.n_kept());
    const double absolute = loss_total / n_profiles;
    const double relative = optimal_total > 0.0 ? loss_total / optimal_total : 0.0;
    return {absolute, relative};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Figure 1: sample-return time series around a dropout event
// ---------------------------------------------------------------------------

struct Fig1Config {
    int n_agents = 4;
    int substate_size = 2;
    int action_size = 2;
    double discount = 0.95;
    double smoothing = 0.1;
    double beta = 0.5;
    std::uint64_t seed = 1;
    std::vector<bool> realized_mask;  // defaults to dropping the last half
    int t_drop = 500;
    int t_total = 1000;
    int check_seeds = 50;             // rollouts for the ordering check
    int workers = 1;
    std::shared_ptr<const FactoredMdp> system;  // overrides the generated one
};

struct Fig1Result {
    CsvTable table;
    bool ordering_ok = false;
    double mean_post_oracle = 0.0;
    double mean_post_robust = 0.0;
    double mean_post_pre = 0.0;
};

namespace detail {

/// Per-step rewards of one rollout that switches from the intact reward to
/// the realization's masked reward at t_drop; policy_after takes over at the
/// same step.
inline std::vector<double> switched_rollout(const FlatMdp& flat, const std::vector<double>& masked,
                                            const TabularPolicy& policy_before,
                                            const TabularPolicy& policy_after, int t_drop, int t_total,
                                            std::uint64_t seed, index_t start) {
    std::vector<double> rewards(t_total, 0.0);
    SplitMix64 rng(seed);
    index_t state = start;
    for (int t = 0; t < t_total; ++t) {
        const TabularPolicy& policy = t < t_drop ? policy_before : policy_after;
        const std::vector<double> row = policy.row(state);
        const index_t action = sample_categorical(row, rng.next_double());
        rewards[t] = t < t_drop ? flat.r(state, action) : masked[state * flat.n_actions + action];
        state = sample_categorical(flat.row(state, action), rng.next_double());
    }
    return rewards;
}

} // namespace detail

inline Fig1Result run_fig1(const Fig1Config& config) {
    const FactoredMdp mdp = config.system
                                ? *config.system
                                : random_system(config.n_agents, config.substate_size, config.action_size,
                                                config.discount, config.seed, config.smoothing);
    const int n_agents = mdp.n_agents();
    std::vector<bool> mask_bits = config.realized_mask;
    if (mask_bits.empty()) {
        mask_bits.assign(n_agents, true);
        for (int n = n_agents / 2; n < n_agents; ++n) mask_bits[n] = false;
    }
    const DropoutMask mask(mask_bits);
    const DropoutModel model = DropoutModel::uniform(n_agents, config.beta);

    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const FlatMdp flat = flatten(mdp, DropoutMask::all(n_agents), transition);
    const std::vector<double> masked = masked_reward(mdp, mask);

    const SolveReport pre_solve = value_iteration(flat);
    const TabularPolicy pre_optimal =
        TabularPolicy::deterministic(mdp.states(), mdp.actions(), pre_solve.greedy);
    const SolveReport mask_solve = value_iteration(flatten(mdp, mask, transition));
    const TabularPolicy post_oracle =
        detail::uniform_extended_greedy(mdp, mask, mask_solve.greedy);
    const detail::MaskSolves all_masks = detail::solve_all_masks(mdp, transition, kDefaultValueTol,
                                                                 config.workers);
    const TabularPolicy robust = detail::mixture_from_solves(mdp, all_masks, model);

    const index_t start = 0;
    const std::uint64_t roll_seed = derive_seed(config.seed, 0xF1ull, 0);
    const auto r_pre = detail::switched_rollout(flat, masked, pre_optimal, pre_optimal, config.t_drop,
                                                config.t_total, roll_seed, start);
    const auto r_oracle = detail::switched_rollout(flat, masked, pre_optimal, post_oracle, config.t_drop,
                                                   config.t_total, roll_seed, start);
    const auto r_robust = detail::switched_rollout(flat, masked, robust, robust, config.t_drop,
                                                   config.t_total, roll_seed, start);

    Fig1Result result;
    result.table.add_meta("experiment", std::string("fig1"));
    result.table.add_meta("n_agents", static_cast<std::int64_t>(n_agents));
    result.table.add_meta("substate_size", static_cast<std::int64_t>(config.substate_size));
    result.table.add_meta("action_size", static_cast<std::int64_t>(config.action_size));
    result.table.add_meta("discount", config.discount);
    result.table.add_meta("smoothing", config.smoothing);
    result.table.add_meta("beta", config.beta);
    result.table.add_meta("seed", static_cast<std::int64_t>(config.seed));
    std::string bits;
    for (bool b : mask_bits) bits += b ? '1' : '0';
    result.table.add_meta("realized_mask", bits);
    result.table.add_meta("t_drop", static_cast<std::int64_t>(config.t_drop));

    result.table.columns = {"t",          "reward_pre_optimal", "reward_post_oracle", "reward_robust",
                            "norm_pre",   "norm_post_oracle",   "norm_robust"};
    double cum_pre = 0.0, cum_oracle = 0.0, cum_robust = 0.0;
    for (int t = 0; t < config.t_total; ++t) {
        cum_pre += r_pre[t];
        cum_oracle += r_oracle[t];
        cum_robust += r_robust[t];
        const double denom = cum_pre;
        result.table.rows.push_back({static_cast<double>(t), r_pre[t], r_oracle[t], r_robust[t],
                                     denom > 0.0 ? 1.0 : 0.0, denom > 0.0 ? cum_oracle / denom : 0.0,
                                     denom > 0.0 ? cum_robust / denom : 0.0});
    }

    // Ordering check: post-dropout mean rewards across independent rollouts.
    const int n_checks = config.check_seeds;
    std::vector<double> oracle_means(n_checks), robust_means(n_checks), pre_means(n_checks);
    parallel_for(0, n_checks, config.workers, [&](index_t i) {
        const std::uint64_t s = derive_seed(config.seed, 0xC4ECull, static_cast<std::uint64_t>(i));
        auto post_mean = [&](const std::vector<double>& rewards) {
            double total = 0.0;
            for (int t = config.t_drop; t < config.t_total; ++t) total += rewards[t];
            return total / static_cast<double>(config.t_total - config.t_drop);
        };
        pre_means[i] = post_mean(detail::switched_rollout(flat, masked, pre_optimal, pre_optimal,
                                                          config.t_drop, config.t_total, s, start));
        oracle_means[i] = post_mean(detail::switched_rollout(flat, masked, pre_optimal, post_oracle,
                                                             config.t_drop, config.t_total, s, start));
        robust_means[i] = post_mean(detail::switched_rollout(flat, masked, robust, robust, config.t_drop,
                                                             config.t_total, s, start));
    });
    auto mean_of = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        return m / static_cast<double>(v.size());
    };
    auto slack_of = [&](const std::vector<double>& a, const std::vector<double>& b) {
        // one-sided 95% allowance on the mean of paired differences
        const double n = static_cast<double>(a.size());
        double mean = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
        mean /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            var += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
        var /= (n - 1.0);
        return 1.6448536269514722 * std::sqrt(var / n);
    };
    result.mean_post_oracle = mean_of(oracle_means);
    result.mean_post_robust = mean_of(robust_means);
    result.mean_post_pre = mean_of(pre_means);
    const bool first = result.mean_post_oracle >= result.mean_post_robust - slack_of(oracle_means, robust_means);
    const bool second = result.mean_post_robust >= result.mean_post_pre - slack_of(robust_means, pre_means);
    result.ordering_ok = first && second;
    result.table.add_meta("post_mean_oracle", result.mean_post_oracle);
    result.table.add_meta("post_mean_robust", result.mean_post_robust);
    result.table.add_meta("post_mean_pre_optimal", result.mean_post_pre);
    result.table.add_meta("ordering_ok", std::string(result.ordering_ok ? "1" : "0"));
    return result;
}

// ---------------------------------------------------------------------------
// Figure 2: optimality gap of the robust policy against its bound
// ---------------------------------------------------------------------------

struct Fig2Config {
    int n_agents = 4;
    int substate_size = 3;
    int action_size = 3;
    double discount = 0.9;
    double smoothing = 0.1;
    std::uint64_t seed = 2;
    ParentStructure structure = ParentStructure::decoupled;
    std::vector<double> beta_grid;  // defaults to {0, 0.1, ..., 1}
    int workers = 1;
    std::shared_ptr<const FactoredMdp> system;  // overrides the generated one
};

struct Fig2Result {
    CsvTable table;
    bool all_within = false;
    double max_violation = 0.0;
};

inline Fig2Result run_fig2(const Fig2Config& config) {
    const FactoredMdp mdp = config.system
                                ? *config.system
                                : random_system(config.n_agents, config.substate_size, config.action_size,
                                                config.discount, config.seed, config.smoothing,
                                                config.structure);
    std::vector<double> betas = config.beta_grid;
    if (betas.empty())
        for (int i = 0; i <= 10; ++i) betas.push_back(0.1 * i);

    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const int N = mdp.n_agents();
    const FlatMdp intact = flatten(mdp, DropoutMask::all(N), transition);
    const std::vector<double> optimal = value_iteration(intact).values;
    const std::vector<double> uniform = evaluate_policy(intact, TabularPolicy::uniform(mdp));

    // Per-realization member values on the intact system are beta-free;
    // compute them once and reweight per grid point.
    const auto masks = enumerate_masks(N);
    std::vector<std::vector<double>> member_values(masks.size());
    parallel_for(0, static_cast<index_t>(masks.size()), config.workers, [&](index_t i) {
        const DropoutMask& mask = masks[i];
        if (mask.none_active()) {
            member_values[i] = uniform;
        } else if (mask.all_active()) {
            member_values[i] = optimal;
        } else {
            const SolveReport solved = value_iteration(flatten(mdp, mask, transition));
            member_values[i] =
                evaluate_policy(intact, detail::uniform_extended_greedy(mdp, mask, solved.greedy));
        }
    });

    Fig2Result result;
    result.table.add_meta("experiment", std::string("fig2"));
    result.table.add_meta("n_agents", static_cast<std::int64_t>(N));
    result.table.add_meta("substate_size", static_cast<std::int64_t>(config.substate_size));
    result.table.add_meta("action_size", static_cast<std::int64_t>(config.action_size));
    result.table.add_meta("discount", config.discount);
    result.table.add_meta("smoothing", config.smoothing);
    result.table.add_meta("seed", static_cast<std::int64_t>(config.seed));
    result.table.add_meta("structure",
                          std::string(config.structure == ParentStructure::decoupled ? "decoupled"
                                                                                     : "fully-connected"));
    result.table.columns = {"beta", "mean_gap", "max_gap", "mean_bound", "max_bound", "max_violation"};

    for (double beta : betas) {
        const DropoutModel model = DropoutModel::uniform(N, beta);
        std::vector<double> mixture(static_cast<std::size_t>(mdp.n_states()), 0.0);
        for (std::size_t i = 0; i < masks.size(); ++i) {
            const double weight = mask_probability(masks[i], model);
            if (weight == 0.0) continue;
            for (index_t x = 0; x < mdp.n_states(); ++x) mixture[x] += weight * member_values[i][x];
        }
        const double scale = 1.0 - std::pow(beta, N);
        double mean_gap = 0.0, max_gap = 0.0, mean_bound = 0.0, max_bound = 0.0, violation = 0.0;
        for (index_t x = 0; x < mdp.n_states(); ++x) {
            const double gap = optimal[x] - mixture[x];
            const double bound = scale * (optimal[x] - uniform[x]);
            mean_gap += gap;
            mean_bound += bound;
            max_gap = std::max(max_gap, gap);
            max_bound = std::max(max_bound, bound);
            violation = std::max(violation, gap - bound);
        }
        mean_gap /= static_cast<double>(mdp.n_states());
        mean_bound /= static_cast<double>(mdp.n_states());
        result.max_violation = std::max(result.max_violation, violation);
        result.table.rows.push_back({beta, mean_gap, max_gap, mean_bound, max_bound, violation});
    }
    result.all_within = result.max_violation <= 1e-9;
    result.table.add_meta("max_violation", result.max_violation);
    result.table.add_meta("all_within", std::string(result.all_within ? "1" : "0"));
    return result;
}

// ---------------------------------------------------------------------------
// Figure 3: realization losses over a batch of random systems
// ---------------------------------------------------------------------------

struct Fig3Config {
    int n_systems = 50;
    int n_agents = 5;
    int substate_size = 2;
    int action_size = 2;
    double discount = 0.95;
    double smoothing = 0.2;
    std::uint64_t seed = 3;
    int workers = 1;
};

struct Fig3Result {
    CsvTable table;
    bool direction_ok = false;       // robust beats pre-optimal where >= half drop
    bool predropout_loss_ok = false; // robust keeps >= 85% of intact optimum on average
    double mean_predropout_relative_loss = 0.0;
};

inline Fig3Result run_fig3(const Fig3Config& config) {
    const int N = config.n_agents;
    const auto masks = enumerate_masks(N);
    const std::size_t n_masks = masks.size();

    // per system, per mask: absolute losses of the two policies; per system,
    // per k: relative intact loss of the robust mixture
    std::vector<std::vector<double>> preopt_loss(config.n_systems, std::vector<double>(n_masks, 0.0));
    std::vector<std::vector<double>> robust_loss(config.n_systems, std::vector<double>(n_masks, 0.0));
    std::vector<std::vector<double>> intact_rel_loss(config.n_systems, std::vector<double>(N + 1, 0.0));

    parallel_for(0, config.n_systems, config.workers, [&](index_t s) {
        const FactoredMdp mdp =
            random_system(N, config.substate_size, config.action_size, config.discount,
                          derive_seed(config.seed, 0x516ull, static_cast<std::uint64_t>(s)),
                          config.smoothing);
        auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
        const FlatMdp intact = flatten(mdp, DropoutMask::all(N), transition);
        const detail::MaskSolves solved = detail::solve_all_masks(mdp, transition);
        const SolveReport& intact_solve = solved.solves[n_masks - 1];  // mask 11..1 is last
        const TabularPolicy pre_optimal =
            TabularPolicy::deterministic(mdp.states(), mdp.actions(), intact_solve.greedy);

        // Loss references: the greedy optima re-evaluated by exact linear
        // solves, so compared policies cannot beat them by solver slack.
        std::vector<std::vector<double>> optimal_values(n_masks);
        for (std::size_t i = 0; i < n_masks; ++i) {
            optimal_values[i] = evaluate_policy(
                flatten(mdp, masks[i], transition),
                TabularPolicy::deterministic(mdp.states(), mdp.actions(), solved.solves[i].greedy));
        }
        const std::vector<double>& intact_optimal = optimal_values[n_masks - 1];

        std::vector<TabularPolicy> mixtures;
        mixtures.reserve(N + 1);
        for (int k = 0; k <= N; ++k) {
            const double beta = 1.0 - static_cast<double>(k) / N;
            mixtures.push_back(
                detail::mixture_from_solves(mdp, solved, DropoutModel::uniform(N, beta)));
            const std::vector<double> mixture_values = evaluate_policy(intact, mixtures.back());
            double loss = 0.0, optimum = 0.0;
            for (index_t x = 0; x < mdp.n_states(); ++x) {
                loss += intact_optimal[x] - mixture_values[x];
                optimum += intact_optimal[x];
            }
            intact_rel_loss[s][k] = optimum > 0.0 ? loss / optimum : 0.0;
        }

        for (std::size_t i = 0; i < n_masks; ++i) {
            const DropoutMask& mask = masks[i];
            const int k = mask.dropped_count();
            const FlatMdp flat_masked = flatten(mdp, mask, transition);
            preopt_loss[s][i] =
                detail::realization_loss(mdp, mask, flat_masked, optimal_values[i], pre_optimal).first;
            robust_loss[s][i] =
                detail::realization_loss(mdp, mask, flat_masked, optimal_values[i], mixtures[k]).first;
        }
    });

    Fig3Result result;
    result.table.add_meta("experiment", std::string("fig3"));
    result.table.add_meta("n_systems", static_cast<std::int64_t>(config.n_systems));
    result.table.add_meta("n_agents", static_cast<std::int64_t>(N));
    result.table.add_meta("substate_size", static_cast<std::int64_t>(config.substate_size));
    result.table.add_meta("action_size", static_cast<std::int64_t>(config.action_size));
    result.table.add_meta("discount", config.discount);
    result.table.add_meta("smoothing", config.smoothing);
    result.table.add_meta("seed", static_cast<std::int64_t>(config.seed));
    result.table.columns = {"k",           "beta",        "preopt_mean", "preopt_min", "preopt_max",
                            "robust_mean", "robust_min",  "robust_max",  "intact_rel_loss"};

    // Batch-average per mask, then aggregate over the masks of each k.
    bool direction_ok = true;
    double rel_loss_total = 0.0;
    for (int k = 0; k <= N; ++k) {
        double pre_mean = 0.0, pre_min = 0.0, pre_max = 0.0;
        double rob_mean = 0.0, rob_min = 0.0, rob_max = 0.0;
        bool first_mask = true;
        int count = 0;
        for (std::size_t i = 0; i < n_masks; ++i) {
            if (masks[i].dropped_count() != k) continue;
            double pre_avg = 0.0, rob_avg = 0.0;
            for (int s = 0; s < config.n_systems; ++s) {
                pre_avg += preopt_loss[s][i];
                rob_avg += robust_loss[s][i];
            }
            pre_avg /= config.n_systems;
            rob_avg /= config.n_systems;
            if (first_mask) {
                pre_min = pre_max = pre_avg;
                rob_min = rob_max = rob_avg;
                first_mask = false;
            } else {
                pre_min = std::min(pre_min, pre_avg);
                pre_max = std::max(pre_max, pre_avg);
                rob_min = std::min(rob_min, rob_avg);
                rob_max = std::max(rob_max, rob_avg);
            }
            pre_mean += pre_avg;
            rob_mean += rob_avg;
            ++count;
        }
        pre_mean /= count;
        rob_mean /= count;
        double rel_loss = 0.0;
        for (int s = 0; s < config.n_systems; ++s) rel_loss += intact_rel_loss[s][k];
        rel_loss /= config.n_systems;
        rel_loss_total += rel_loss;
        const double beta = 1.0 - static_cast<double>(k) / N;
        result.table.rows.push_back(
            {static_cast<double>(k), beta, pre_mean, pre_min, pre_max, rob_mean, rob_min, rob_max, rel_loss});
        if (2 * k >= N) {
            if (pre_mean > 1e-9) {
                direction_ok = direction_ok && rob_mean < pre_mean;
            } else {
                direction_ok = direction_ok && rob_mean <= pre_mean + 1e-9;
            }
        }
    }
    result.direction_ok = direction_ok;
    result.mean_predropout_relative_loss = rel_loss_total / (N + 1);
    result.predropout_loss_ok = result.mean_predropout_relative_loss <= 0.15;
    result.table.add_meta("direction_ok", std::string(result.direction_ok ? "1" : "0"));
    result.table.add_meta("mean_intact_relative_loss", result.mean_predropout_relative_loss);
    result.table.add_meta("intact_loss_ok", std::string(result.predropout_loss_ok ? "1" : "0"));
    return result;
}

// ---------------------------------------------------------------------------
// Figure 4: estimator accuracy on the robust value
// ---------------------------------------------------------------------------

enum class MuSource { behavioral, target };

struct Fig4Config {
    int n_agents = 2;
    int substate_size = 2;
    int action_size = 2;
    double discount = 0.9;
    double smoothing = 0.1;
    std::uint64_t seed = 4;
    double beta = 0.5;
    int n_traj = 100;        // |D|
    int horizon = 50;        // H (paper scale: 500)
    std::int64_t h_mu = 5000;
    Estimator variant = Estimator::doubly_robust;
    double behavioral_mix = 0.2;  // uniform share blended into the behavioral policy
    MuSource mu_source = MuSource::behavioral;
    double confidence = 0.90;
    int direct_steps = 2000;
    int workers = 1;
    std::shared_ptr<const FactoredMdp> system;  // overrides the generated one
};

struct Fig4Result {
    CsvTable table;
    std::vector<double> is_estimate;
    std::vector<double> oracle;
    double max_abs_error = 0.0;
    double epsilon_total = 0.0;
    int t95 = 0;
    bool within_bound = false;
};

inline Fig4Result run_fig4(const Fig4Config& config) {
    const FactoredMdp mdp = config.system
                                ? *config.system
                                : random_system(config.n_agents, config.substate_size, config.action_size,
                                                config.discount, config.seed, config.smoothing);
    const int n_agents = mdp.n_agents();
    const DropoutModel model = DropoutModel::uniform(n_agents, config.beta);
    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const FlatMdp flat = flatten(mdp, DropoutMask::all(n_agents), transition);

    const SolveReport pre_solve = value_iteration(flat);
    const TabularPolicy behavioral = smoothed_greedy_policy(mdp, pre_solve.greedy, config.behavioral_mix);
    const TabularPolicy candidate = random_product_policy(mdp, derive_seed(config.seed, 0xCA4Dull), 0.2);

    const Dataset data = sample_dataset(flat, behavioral, config.n_traj, config.horizon,
                                        derive_seed(config.seed, 0xDA7Aull), "behavioral", config.workers);

    const auto masks = enumerate_masks(n_agents);
    std::vector<RealizationEstimate> per_mask;
    std::vector<double> oracle(static_cast<std::size_t>(mdp.n_states()), 0.0);
    double j_max = 0.0;
    for (const DropoutMask& mask : masks) {
        const double weight = mask_probability(mask, model);
        const TabularPolicy target = augment_policy(candidate.restrict(mask), mask, mdp);
        const std::vector<double> reward = masked_reward(mdp, mask);
        const IsEstimate estimate =
            estimate_values(data, behavioral, target, reward, config.discount, config.variant,
                            config.workers);
        j_max = std::max(j_max, estimate.j_max);
        const TabularPolicy& mu_policy = config.mu_source == MuSource::behavioral ? behavioral : target;
        const EmpiricalDistribution mu_hat = empirical_stationary(
            flat, mu_policy, config.h_mu, derive_seed(config.seed, 0x3EDull, mask_bits(mask)));
        RealizationEstimate entry{mask, estimate_realization_value(estimate, mu_hat, mask, mdp)};
        per_mask.push_back(std::move(entry));

        if (weight > 0.0) {
            const ValueTable exact =
                realization_value(mdp, mask, candidate.restrict(mask), Horizon::infinite, 0, transition);
            const SubspaceSplit split(mdp.states(), mask);
            for (index_t x = 0; x < mdp.n_states(); ++x)
                oracle[x] += weight * exact.values[split.project_kept(x)];
        }
    }
    const std::vector<double> is_estimate = estimate_robust_value(per_mask, model, mdp);

    Fig4Result result;
    result.is_estimate = is_estimate;
    result.oracle = oracle;
    for (index_t x = 0; x < mdp.n_states(); ++x)
        result.max_abs_error = std::max(result.max_abs_error, std::abs(is_estimate[x] - oracle[x]));

    // Tail bound at the requested confidence: invert the robust-system bound
    // for delta by bisection.
    const MarkovChain chain = induced_chain(flatten(mdp, model, transition), behavioral);
    const std::vector<double> mu = stationary_distribution(chain);
    BoundInputs inputs;
    inputs.horizon = config.horizon;
    inputs.h_mu = config.h_mu;
    inputs.n_traj = config.n_traj;
    inputs.t_mix = mixing_time(chain, mu);
    inputs.j_max = j_max;
    const std::vector<double> robust_r = robust_reward(mdp, model);
    inputs.r_max = *std::max_element(robust_r.begin(), robust_r.end());
    inputs.discount = config.discount;
    inputs.substate_size = mdp.substate_sizes().front();
    inputs.n_states = mdp.n_states();
    inputs.v_max_h = v_max_bound(inputs.r_max, config.discount, config.horizon);
    inputs.c_h_mu =
        estimate_tv_error(flat, behavioral, config.h_mu, 16, derive_seed(config.seed, 0xCEEull)).conservative;

    const double tail = 1.0 - config.confidence;
    double lo = 0.0, hi = std::max(1.0, 4.0 * inputs.j_max);
    for (int iter = 0; iter < 200; ++iter) {
        inputs.delta = 0.5 * (lo + hi);
        if (robust_bound(inputs).probability > tail) {
            lo = inputs.delta;
        } else {
            hi = inputs.delta;
        }
    }
    inputs.delta = hi;
    const BoundResult bound = robust_bound(inputs);
    result.epsilon_total = bound.epsilon_total;
    result.within_bound = result.max_abs_error <= bound.epsilon_total;

    // Direct execution of the candidate on the survival-weighted system.
    SplitMix64 rng(derive_seed(config.seed, 0xD14Eull));
    index_t state = 0;
    double running = 0.0;
    double weight = 1.0;
    std::vector<double> running_return(config.direct_steps);
    for (int t = 0; t < config.direct_steps; ++t) {
        const std::vector<double> row = candidate.row(state);
        const index_t action = sample_categorical(row, rng.next_double());
        running += weight * robust_r[state * mdp.n_actions() + action];
        weight *= config.discount;
        running_return[t] = running;
        state = sample_categorical(flat.row(state, action), rng.next_double());
    }
    const double limit = running_return.back();
    result.t95 = config.direct_steps;
    for (int t = 0; t < config.direct_steps; ++t) {
        if (running_return[t] >= 0.95 * limit) {
            result.t95 = t;
            break;
        }
    }

    result.table.add_meta("experiment", std::string("fig4"));
    result.table.add_meta("n_agents", static_cast<std::int64_t>(n_agents));
    result.table.add_meta("discount", config.discount);
    result.table.add_meta("beta", config.beta);
    result.table.add_meta("seed", static_cast<std::int64_t>(config.seed));
    result.table.add_meta("n_traj", static_cast<std::int64_t>(config.n_traj));
    result.table.add_meta("horizon", static_cast<std::int64_t>(config.horizon));
    result.table.add_meta("h_mu", static_cast<std::int64_t>(config.h_mu));
    result.table.add_meta("variant", to_string(config.variant));
    result.table.add_meta("mu_source",
                          std::string(config.mu_source == MuSource::behavioral ? "behavioral" : "target"));
    for (index_t x = 0; x < mdp.n_states(); ++x) {
        result.table.add_meta("is_estimate_x" + std::to_string(x), is_estimate[x]);
        result.table.add_meta("oracle_x" + std::to_string(x), oracle[x]);
    }
    result.table.add_meta("max_abs_error", result.max_abs_error);
    result.table.add_meta("epsilon_total", result.epsilon_total);
    result.table.add_meta("within_bound", std::string(result.within_bound ? "1" : "0"));
    result.table.add_meta("t95", static_cast<std::int64_t>(result.t95));
    result.table.columns = {"t", "running_return"};
    for (int t = 0; t < config.direct_steps; ++t)
        result.table.rows.push_back({static_cast<double>(t), running_return[t]});
    return result;
}

} // namespace madrop
