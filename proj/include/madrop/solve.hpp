#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"

namespace madrop {

inline constexpr double kDefaultValueTol = 1e-10;
inline constexpr double kDefaultStationaryTol = 1e-12;
inline constexpr index_t kDefaultIterationCap = 1'000'000;

/// Dense tabular MDP over joint indices: transition [x][a][x'], reward [x][a].
/// The transition table is shared so that the 2^N per-realization reward
/// variants reuse one copy.
struct FlatMdp {
    index_t n_states = 0;
    index_t n_actions = 0;
    std::shared_ptr<const std::vector<double>> transition;
    std::vector<double> reward;
    double discount = 0.0;

    double p(index_t x, index_t a, index_t y) const { return (*transition)[(x * n_actions + a) * n_states + y]; }
    double r(index_t x, index_t a) const { return reward[x * n_actions + a]; }
    std::span<const double> row(index_t x, index_t a) const {
        return {transition->data() + (x * n_actions + a) * n_states, static_cast<std::size_t>(n_states)};
    }
};

inline FlatMdp flatten(const FactoredMdp& mdp) {
    return {mdp.n_states(), mdp.n_actions(),
            std::make_shared<const std::vector<double>>(build_joint_transition(mdp)), total_reward(mdp),
            mdp.discount()};
}

inline FlatMdp flatten(const FactoredMdp& mdp, const DropoutMask& mask,
                       std::shared_ptr<const std::vector<double>> transition = nullptr) {
    if (!transition) transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    return {mdp.n_states(), mdp.n_actions(), std::move(transition), masked_reward(mdp, mask), mdp.discount()};
}

inline FlatMdp flatten(const FactoredMdp& mdp, const DropoutModel& model,
                       std::shared_ptr<const std::vector<double>> transition = nullptr) {
    if (!transition) transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    return {mdp.n_states(), mdp.n_actions(), std::move(transition), robust_reward(mdp, model), mdp.discount()};
}

/// State-to-state chain P_pi(x, x') induced by running a policy.
struct MarkovChain {
    index_t n = 0;
    std::vector<double> p;

    double at(index_t x, index_t y) const { return p[x * n + y]; }
    std::span<const double> row(index_t x) const {
        return {p.data() + x * n, static_cast<std::size_t>(n)};
    }
};

inline MarkovChain induced_chain(const FlatMdp& mdp, const TabularPolicy& policy) {
    if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
        throw DimensionError("policy dimensions do not match the system");
    MarkovChain chain{mdp.n_states, std::vector<double>(static_cast<std::size_t>(mdp.n_states * mdp.n_states), 0.0)};
    for (index_t x = 0; x < mdp.n_states; ++x) {
        for (index_t a = 0; a < mdp.n_actions; ++a) {
            const double w = policy.prob(x, a);
            if (w == 0.0) continue;
            const auto row = mdp.row(x, a);
            double* out = chain.p.data() + x * mdp.n_states;
            for (index_t y = 0; y < mdp.n_states; ++y) out[y] += w * row[y];
        }
    }
    return chain;
}

inline std::vector<double> induced_reward(const FlatMdp& mdp, const TabularPolicy& policy) {
    std::vector<double> out(static_cast<std::size_t>(mdp.n_states), 0.0);
    for (index_t x = 0; x < mdp.n_states; ++x)
        for (index_t a = 0; a < mdp.n_actions; ++a) out[x] += policy.prob(x, a) * mdp.r(x, a);
    return out;
}

struct SolveReport {
    std::vector<double> values;
    std::vector<int> greedy;
    index_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;
};

/// Optimal values by successive Bellman applications. Ties in the greedy
/// policy break to the lowest joint-action index.
inline SolveReport value_iteration(const FlatMdp& mdp, double tol = kDefaultValueTol,
                                   index_t max_iter = kDefaultIterationCap) {
    if (!(tol > 0.0)) throw ModelError("tolerance must be positive");
    const index_t S = mdp.n_states;
    const index_t A = mdp.n_actions;
    SolveReport report;
    report.values.assign(static_cast<std::size_t>(S), 0.0);
    report.greedy.assign(static_cast<std::size_t>(S), 0);
    std::vector<double> next(static_cast<std::size_t>(S));

    for (index_t iter = 1; iter <= max_iter; ++iter) {
        double residual = 0.0;
        for (index_t x = 0; x < S; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            int best_action = 0;
            for (index_t a = 0; a < A; ++a) {
                const auto row = mdp.row(x, a);
                double q = mdp.r(x, a);
                double exp_v = 0.0;
                for (index_t y = 0; y < S; ++y) exp_v += row[y] * report.values[y];
                q += mdp.discount * exp_v;
                if (q > best) {
                    best = q;
                    best_action = static_cast<int>(a);
                }
            }
            next[x] = best;
            report.greedy[x] = best_action;
            residual = std::max(residual, std::abs(best - report.values[x]));
        }
        report.values.swap(next);
        report.iterations = iter;
        report.residual = residual;
        report.residual_history.push_back(residual);
        if (residual <= tol) {
            report.converged = true;
            return report;
        }
    }
    report.converged = false;
    return report;
}

/// Optimal finite-horizon values: H Bellman applications from zero.
inline std::vector<double> optimal_finite_values(const FlatMdp& mdp, int horizon) {
    const index_t S = mdp.n_states;
    const index_t A = mdp.n_actions;
    std::vector<double> values(static_cast<std::size_t>(S), 0.0), next(static_cast<std::size_t>(S));
    for (int h = 0; h < horizon; ++h) {
        for (index_t x = 0; x < S; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (index_t a = 0; a < A; ++a) {
                const auto row = mdp.row(x, a);
                double q = mdp.r(x, a);
                double exp_v = 0.0;
                for (index_t y = 0; y < S; ++y) exp_v += row[y] * values[y];
                q += mdp.discount * exp_v;
                best = std::max(best, q);
            }
            next[x] = best;
        }
        values.swap(next);
    }
    return values;
}

/// Exact policy values by direct linear solve of (I - gamma P_pi) V = r_pi.
inline std::vector<double> evaluate_policy(const FlatMdp& mdp, const TabularPolicy& policy) {
    const MarkovChain chain = induced_chain(mdp, policy);
    const std::vector<double> reward = induced_reward(mdp, policy);
    const index_t S = mdp.n_states;

    Eigen::MatrixXd system(S, S);
    for (index_t x = 0; x < S; ++x)
        for (index_t y = 0; y < S; ++y) system(x, y) = (x == y ? 1.0 : 0.0) - mdp.discount * chain.at(x, y);
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(reward.data(), S);
    Eigen::VectorXd solution = system.partialPivLu().solve(rhs);

    double residual = 0.0;
    for (index_t x = 0; x < S; ++x) {
        double row = reward[x] - solution(x);
        for (index_t y = 0; y < S; ++y) row += mdp.discount * chain.at(x, y) * solution(y);
        residual = std::max(residual, std::abs(row));
    }
    if (!(residual <= 1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())))
        throw Error("policy evaluation linear solve failed (residual " + std::to_string(residual) + ")");
    return {solution.data(), solution.data() + S};
}

/// Finite-horizon policy values: H applications of the policy Bellman operator.
inline std::vector<double> evaluate_policy_finite(const FlatMdp& mdp, const TabularPolicy& policy,
                                                  int horizon) {
    const MarkovChain chain = induced_chain(mdp, policy);
    const std::vector<double> reward = induced_reward(mdp, policy);
    const index_t S = mdp.n_states;
    std::vector<double> values(static_cast<std::size_t>(S), 0.0), next(static_cast<std::size_t>(S));
    for (int h = 0; h < horizon; ++h) {
        for (index_t x = 0; x < S; ++x) {
            double exp_v = 0.0;
            const auto row = chain.row(x);
            for (index_t y = 0; y < S; ++y) exp_v += row[y] * values[y];
            next[x] = reward[x] + mdp.discount * exp_v;
        }
        values.swap(next);
    }
    return values;
}

namespace detail {

/// Primitivity test (irreducible + aperiodic) via boolean powers of the
/// adjacency pattern. A row-stochastic matrix is ergodic iff some power of
/// its pattern is strictly positive; squaring reaches such a power within
/// the Wielandt bound when one exists.
inline bool chain_is_ergodic(const MarkovChain& chain) {
    const index_t n = chain.n;
    std::vector<char> pattern(static_cast<std::size_t>(n * n));
    for (index_t i = 0; i < n * n; ++i) pattern[i] = chain.p[i] > 0.0 ? 1 : 0;

    auto all_positive = [&](const std::vector<char>& m) {
        return std::find(m.begin(), m.end(), char{0}) == m.end();
    };

    const index_t wielandt = (n - 1) * (n - 1) + 1;
    index_t exponent = 1;
    std::vector<char> next(static_cast<std::size_t>(n * n));
    while (true) {
        if (all_positive(pattern)) return true;
        if (exponent >= wielandt) return false;
        for (index_t i = 0; i < n; ++i) {
            for (index_t j = 0; j < n; ++j) {
                char any = 0;
                for (index_t k = 0; k < n; ++k) {
                    if (pattern[i * n + k] && pattern[k * n + j]) {
                        any = 1;
                        break;
                    }
                }
                next[i * n + j] = any;
            }
        }
        pattern.swap(next);
        exponent *= 2;
    }
}

} // namespace detail

/// Stationary distribution of an ergodic chain by power iteration from the
/// uniform start. The uniform vector is a fixed point of any doubly
/// stochastic chain, so ergodicity is verified structurally first; periodic
/// or reducible chains raise ErgodicityError.
inline std::vector<double> stationary_distribution(const MarkovChain& chain,
                                                   double tol = kDefaultStationaryTol,
                                                   index_t max_iter = kDefaultIterationCap) {
    const index_t n = chain.n;
    if (!detail::chain_is_ergodic(chain))
        throw ErgodicityError("ergodicity violated: chain is periodic or reducible under this policy");

    std::vector<double> mu(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    std::vector<double> next(static_cast<std::size_t>(n));
    for (index_t iter = 0; iter < max_iter; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (index_t x = 0; x < n; ++x) {
            const double w = mu[x];
            if (w == 0.0) continue;
            const auto row = chain.row(x);
            for (index_t y = 0; y < n; ++y) next[y] += w * row[y];
        }
        double diff = 0.0;
        for (index_t y = 0; y < n; ++y) diff += std::abs(next[y] - mu[y]);
        mu.swap(next);
        if (diff <= tol) {
            const double total = std::accumulate(mu.begin(), mu.end(), 0.0);
            for (double& v : mu) v /= total;
            return mu;
        }
    }
    throw ErgodicityError("ergodicity violated: stationary power iteration did not converge");
}

/// Smallest t >= 1 with max_x d_TV(P^t(x,.), mu) <= threshold.
inline index_t mixing_time(const MarkovChain& chain, std::span<const double> mu, double threshold = 0.25,
                           index_t cap = kDefaultIterationCap) {
    const index_t n = chain.n;
    std::vector<double> power = chain.p;
    std::vector<double> next(power.size());
    for (index_t t = 1; t <= cap; ++t) {
        double worst = 0.0;
        for (index_t x = 0; x < n; ++x) {
            double tv = 0.0;
            for (index_t y = 0; y < n; ++y) tv += std::abs(power[x * n + y] - mu[y]);
            worst = std::max(worst, 0.5 * tv);
        }
        if (worst <= threshold) return t;
        for (index_t x = 0; x < n; ++x) {
            for (index_t y = 0; y < n; ++y) {
                double sum = 0.0;
                for (index_t k = 0; k < n; ++k) sum += power[x * n + k] * chain.p[k * n + y];
                next[x * n + y] = sum;
            }
        }
        power.swap(next);
    }
    throw CapExceeded("mixing time cap exceeded");
}

enum class Horizon { finite, infinite };
enum class RewardKind { pre_dropout, masked, robust };

struct ValueTable {
    std::vector<double> values;
    Horizon horizon = Horizon::infinite;
    int horizon_steps = 0;
    RewardKind reward_kind = RewardKind::pre_dropout;
};

/// Value of a realization under a full-system policy: evaluate the policy on
/// the full chain with the masked reward, then average the dropped agents'
/// start substates under the stationary marginal of that same chain.
/// Returns one value per surviving-profile index.
inline ValueTable masked_policy_value(const FactoredMdp& mdp, const DropoutMask& mask,
                                      const TabularPolicy& full_policy, Horizon horizon = Horizon::infinite,
                                      int horizon_steps = 0,
                                      std::shared_ptr<const std::vector<double>> transition = nullptr) {
    const FlatMdp flat = flatten(mdp, mask, std::move(transition));
    const std::vector<double> fictitious =
        horizon == Horizon::infinite ? evaluate_policy(flat, full_policy)
                                     : evaluate_policy_finite(flat, full_policy, horizon_steps);
    const MarkovChain chain = induced_chain(flat, full_policy);
    const std::vector<double> mu = stationary_distribution(chain);

    const SubspaceSplit split(mdp.states(), mask);
    std::vector<double> dropped_marginal(static_cast<std::size_t>(split.n_rest()), 0.0);
    for (index_t x = 0; x < mdp.n_states(); ++x) dropped_marginal[split.project_rest(x)] += mu[x];

    std::vector<double> reduced(static_cast<std::size_t>(split.n_kept()), 0.0);
    for (index_t xbar = 0; xbar < split.n_kept(); ++xbar) {
        double v = 0.0;
        for (index_t d = 0; d < split.n_rest(); ++d)
            v += dropped_marginal[d] * fictitious[split.combine(xbar, d)];
        reduced[xbar] = v;
    }
    return {std::move(reduced), horizon, horizon_steps, RewardKind::masked};
}

/// Value of the realization under a policy defined over the surviving agents.
/// The policy is extended with uniform action choices for the dropped agents
/// before the fictitious evaluation.
inline ValueTable realization_value(const FactoredMdp& mdp, const DropoutMask& mask,
                                    const TabularPolicy& reduced_policy, Horizon horizon = Horizon::infinite,
                                    int horizon_steps = 0,
                                    std::shared_ptr<const std::vector<double>> transition = nullptr) {
    const TabularPolicy full = augment_policy(reduced_policy, mask, mdp);
    return masked_policy_value(mdp, mask, full, horizon, horizon_steps, std::move(transition));
}

struct RealizationOptimum {
    ValueTable value;        // marginalized optimal values over surviving profiles
    SolveReport fictitious;  // full-space solve of the masked-reward system
};

/// Per-realization optimum: value iteration on the masked-reward system over
/// the full spaces, marginalized under the greedy policy's stationary
/// distribution.
inline RealizationOptimum realization_optimal(const FactoredMdp& mdp, const DropoutMask& mask,
                                              double tol = kDefaultValueTol,
                                              std::shared_ptr<const std::vector<double>> transition = nullptr) {
    const FlatMdp flat = flatten(mdp, mask, std::move(transition));
    SolveReport report = value_iteration(flat, tol);
    const TabularPolicy greedy = TabularPolicy::deterministic(mdp.states(), mdp.actions(), report.greedy);
    const MarkovChain chain = induced_chain(flat, greedy);
    const std::vector<double> mu = stationary_distribution(chain);

    const SubspaceSplit split(mdp.states(), mask);
    std::vector<double> dropped_marginal(static_cast<std::size_t>(split.n_rest()), 0.0);
    for (index_t x = 0; x < mdp.n_states(); ++x) dropped_marginal[split.project_rest(x)] += mu[x];
    std::vector<double> reduced(static_cast<std::size_t>(split.n_kept()), 0.0);
    for (index_t xbar = 0; xbar < split.n_kept(); ++xbar) {
        double v = 0.0;
        for (index_t d = 0; d < split.n_rest(); ++d)
            v += dropped_marginal[d] * report.values[split.combine(xbar, d)];
        reduced[xbar] = v;
    }
    return {{std::move(reduced), Horizon::infinite, 0, RewardKind::masked}, std::move(report)};
}

struct RobustValueReport {
    /// Value of the survival-weighted-reward system under the policy (one
    /// solve on the full spaces).
    std::vector<double> system_value;
    /// The same values after the realization-expectation marginalization:
    /// sum_W p(W) sum over dropped profiles of mu * system_value.
    std::vector<double> marginalized;
};

/// Evaluates a policy on the survival-weighted-reward system and attaches
/// the mask-expected marginalization of that value.
inline RobustValueReport robust_value(const FactoredMdp& mdp, const DropoutModel& model,
                                      const TabularPolicy& policy, int mask_cap = 20,
                                      std::shared_ptr<const std::vector<double>> transition = nullptr) {
    const FlatMdp flat = flatten(mdp, model, std::move(transition));
    RobustValueReport report;
    report.system_value = evaluate_policy(flat, policy);

    const MarkovChain chain = induced_chain(flat, policy);
    const std::vector<double> mu = stationary_distribution(chain);
    const auto masks = enumerate_masks(mdp.n_agents(), mask_cap);

    report.marginalized.assign(static_cast<std::size_t>(mdp.n_states()), 0.0);
    for (const DropoutMask& mask : masks) {
        const double weight = mask_probability(mask, model);
        if (weight == 0.0) continue;
        const SubspaceSplit split(mdp.states(), mask);
        std::vector<double> dropped_marginal(static_cast<std::size_t>(split.n_rest()), 0.0);
        for (index_t x = 0; x < mdp.n_states(); ++x) dropped_marginal[split.project_rest(x)] += mu[x];
        std::vector<double> averaged(static_cast<std::size_t>(split.n_kept()), 0.0);
        for (index_t xbar = 0; xbar < split.n_kept(); ++xbar) {
            double v = 0.0;
            for (index_t d = 0; d < split.n_rest(); ++d)
                v += dropped_marginal[d] * report.system_value[split.combine(xbar, d)];
            averaged[xbar] = v;
        }
        for (index_t x = 0; x < mdp.n_states(); ++x)
            report.marginalized[x] += weight * averaged[split.project_kept(x)];
    }
    return report;
}

/// Optimal policy of the survival-weighted-reward system.
inline SolveReport robust_optimal(const FactoredMdp& mdp, const DropoutModel& model,
                                  double tol = kDefaultValueTol,
                                  std::shared_ptr<const std::vector<double>> transition = nullptr) {
    const FlatMdp flat = flatten(mdp, model, std::move(transition));
    return value_iteration(flat, tol);
}

/// Probability-weighted blend of per-realization optimal policies, each
/// extended with uniform choices for its dropped agents. This is the
/// stochastic robust policy used by the experiment harness.
inline TabularPolicy mixture_robust_policy(const FactoredMdp& mdp, const DropoutModel& model,
                                           double tol = kDefaultValueTol, int mask_cap = 20,
                                           std::shared_ptr<const std::vector<double>> transition = nullptr) {
    if (!transition) transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const auto masks = enumerate_masks(mdp.n_agents(), mask_cap);
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A), 0.0);
    const double uniform_share = 1.0 / static_cast<double>(A);
    for (const DropoutMask& mask : masks) {
        const double weight = mask_probability(mask, model);
        if (weight == 0.0) continue;
        if (mask.none_active()) {
            for (index_t x = 0; x < S; ++x)
                for (index_t a = 0; a < A; ++a) table[x * A + a] += weight * uniform_share;
            continue;
        }
        const FlatMdp flat = flatten(mdp, mask, transition);
        const SolveReport solved = value_iteration(flat, tol);
        const SubspaceSplit action_split(mdp.actions(), mask);
        double dropped_share = 1.0;
        for (int n = 0; n < mdp.n_agents(); ++n)
            if (!mask.active[n]) dropped_share /= mdp.action_sizes()[n];
        for (index_t x = 0; x < S; ++x) {
            const index_t abar = action_split.project_kept(solved.greedy[x]);
            for (index_t d = 0; d < action_split.n_rest(); ++d)
                table[x * A + action_split.combine(abar, d)] += weight * dropped_share;
        }
    }
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

struct OptGapReport {
    double beta = 0.0;
    std::vector<double> optimal_values;      // V* of the intact system
    std::vector<double> uniform_values;      // intact system under the uniform policy
    std::vector<double> mixture_values;      // intact system under the realization-optima mixture
    std::vector<double> gap;                 // optimal - mixture
    std::vector<double> bound;               // (1 - beta^N) (optimal - uniform)
    double max_violation = 0.0;              // max over states of gap - bound

    bool satisfied(double slack = 1e-9) const { return max_violation <= slack; }
};

/// Gap incurred by controlling the intact system with the robust policy,
/// against the (1 - beta^N)-scaled uniform-policy bound. The robust policy
/// here is the realization-optima mixture: with probability p(W) commit to
/// the optimal policy of realization W (uniform on its dropped agents).
/// The value of that mixture is the p(W)-weighted average of the per-policy
/// values on the intact system.
inline OptGapReport optimality_gap_bound(const FactoredMdp& mdp, double beta,
                                         double tol = kDefaultValueTol, int mask_cap = 20,
                                         std::shared_ptr<const std::vector<double>> transition = nullptr) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ModelError("beta must lie in [0, 1]");
    if (!transition) transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const int N = mdp.n_agents();
    const FlatMdp intact = flatten(mdp, DropoutMask::all(N), transition);

    OptGapReport report;
    report.beta = beta;
    report.optimal_values = value_iteration(intact, tol).values;
    report.uniform_values = evaluate_policy(intact, TabularPolicy::uniform(mdp));

    const DropoutModel model = DropoutModel::uniform(N, beta);
    const auto masks = enumerate_masks(N, mask_cap);
    report.mixture_values.assign(static_cast<std::size_t>(mdp.n_states()), 0.0);
    for (const DropoutMask& mask : masks) {
        const double weight = mask_probability(mask, model);
        if (weight == 0.0) continue;
        std::vector<double> member_values;
        if (mask.none_active()) {
            member_values = report.uniform_values;
        } else if (mask.all_active()) {
            member_values = report.optimal_values;
        } else {
            const FlatMdp masked = flatten(mdp, mask, transition);
            const SolveReport solved = value_iteration(masked, tol);
            const TabularPolicy greedy =
                TabularPolicy::deterministic(mdp.states(), mdp.actions(), solved.greedy);
            const SubspaceSplit action_split(mdp.actions(), mask);
            // Re-extend the greedy policy with uniform dropped-agent actions.
            const index_t A = mdp.n_actions();
            double dropped_share = 1.0;
            for (int n = 0; n < N; ++n)
                if (!mask.active[n]) dropped_share /= mdp.action_sizes()[n];
            std::vector<double> table(static_cast<std::size_t>(mdp.n_states() * A), 0.0);
            for (index_t x = 0; x < mdp.n_states(); ++x) {
                const index_t abar = action_split.project_kept(solved.greedy[x]);
                for (index_t d = 0; d < action_split.n_rest(); ++d)
                    table[x * A + action_split.combine(abar, d)] += dropped_share;
            }
            const TabularPolicy augmented =
                TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
            member_values = evaluate_policy(intact, augmented);
        }
        for (index_t x = 0; x < mdp.n_states(); ++x)
            report.mixture_values[x] += weight * member_values[x];
    }

    const double scale = 1.0 - std::pow(beta, N);
    report.gap.resize(static_cast<std::size_t>(mdp.n_states()));
    report.bound.resize(static_cast<std::size_t>(mdp.n_states()));
    for (index_t x = 0; x < mdp.n_states(); ++x) {
        report.gap[x] = report.optimal_values[x] - report.mixture_values[x];
        report.bound[x] = scale * (report.optimal_values[x] - report.uniform_values[x]);
        report.max_violation = std::max(report.max_violation, report.gap[x] - report.bound[x]);
    }
    return report;
}

struct FactoredSolveReport {
    struct Component {
        std::vector<int> agents;          // ascending agent ids in this block
        std::vector<double> values;       // over the block's joint substates
        std::vector<int> greedy;          // block action index per block state
    };
    std::vector<Component> components;
    SolveReport joint;                    // assembled full-space solution
};

/// Optimal values via the per-block Bellman recursion. Agents are grouped
/// into connected components of the parent graph; each block is an
/// independent sub-MDP whose local values sum to the joint optimum.
inline FactoredSolveReport factored_value_iteration(const FactoredMdp& mdp, double tol = kDefaultValueTol,
                                                    index_t max_iter = kDefaultIterationCap) {
    const int N = mdp.n_agents();
    // Connected components of the undirected closure of the parent graph.
    std::vector<int> component(N, -1);
    std::vector<std::vector<int>> adjacency(N);
    for (int n = 0; n < N; ++n) {
        for (int p : mdp.parent_sets()[n]) {
            if (p == n) continue;
            adjacency[n].push_back(p);
            adjacency[p].push_back(n);
        }
    }
    int n_components = 0;
    for (int n = 0; n < N; ++n) {
        if (component[n] != -1) continue;
        std::vector<int> stack{n};
        component[n] = n_components;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : adjacency[v]) {
                if (component[w] == -1) {
                    component[w] = n_components;
                    stack.push_back(w);
                }
            }
        }
        ++n_components;
    }

    FactoredSolveReport report;
    report.components.resize(n_components);
    for (int n = 0; n < N; ++n) report.components[component[n]].agents.push_back(n);

    index_t worst_iterations = 0;
    double worst_residual = 0.0;
    bool all_converged = true;
    for (auto& block : report.components) {
        // Sub-MDP over the block's agents; parents remapped to block positions.
        std::vector<int> position(N, -1);
        for (std::size_t i = 0; i < block.agents.size(); ++i) position[block.agents[i]] = static_cast<int>(i);
        std::vector<int> sub_sizes, act_sizes;
        std::vector<std::vector<int>> parents;
        std::vector<std::vector<double>> factors, rewards;
        for (int agent : block.agents) {
            sub_sizes.push_back(mdp.substate_sizes()[agent]);
            act_sizes.push_back(mdp.action_sizes()[agent]);
            std::vector<int> remapped;
            for (int p : mdp.parent_sets()[agent]) remapped.push_back(position[p]);
            parents.push_back(std::move(remapped));
            factors.push_back(mdp.factor_tables()[agent]);
            rewards.push_back(mdp.reward_tables()[agent]);
        }
        const FactoredMdp sub(static_cast<int>(block.agents.size()), sub_sizes, act_sizes, parents, factors,
                              rewards, mdp.discount());
        const SolveReport solved = value_iteration(flatten(sub), tol, max_iter);
        block.values = solved.values;
        block.greedy = solved.greedy;
        worst_iterations = std::max(worst_iterations, solved.iterations);
        worst_residual = std::max(worst_residual, solved.residual);
        all_converged = all_converged && solved.converged;
    }

    // Assemble the joint solution from the blocks.
    report.joint.values.assign(static_cast<std::size_t>(mdp.n_states()), 0.0);
    report.joint.greedy.assign(static_cast<std::size_t>(mdp.n_states()), 0);
    report.joint.iterations = worst_iterations;
    report.joint.residual = worst_residual;
    report.joint.converged = all_converged;
    std::vector<int> digits(N), action_digits(N);
    for (index_t x = 0; x < mdp.n_states(); ++x) {
        mdp.states().decode_into(x, digits);
        double total = 0.0;
        for (const auto& block : report.components) {
            std::vector<int> block_digits, block_action_sizes;
            for (int agent : block.agents) block_digits.push_back(digits[agent]);
            std::vector<int> block_sub_sizes;
            for (int agent : block.agents) block_sub_sizes.push_back(mdp.substate_sizes()[agent]);
            const MixedRadixIndexer block_states(block_sub_sizes);
            const index_t bx = block_states.encode(block_digits);
            total += block.values[bx];
            for (int agent : block.agents) block_action_sizes.push_back(mdp.action_sizes()[agent]);
            const MixedRadixIndexer block_actions(block_action_sizes);
            const auto chosen = block_actions.decode(block.greedy[bx]);
            for (std::size_t i = 0; i < block.agents.size(); ++i) action_digits[block.agents[i]] = chosen[i];
        }
        report.joint.values[x] = total;
        report.joint.greedy[x] = static_cast<int>(mdp.actions().encode(action_digits));
    }
    return report;
}

} // namespace madrop
