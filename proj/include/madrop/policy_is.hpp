#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/parallel.hpp"
#include "madrop/simulate.hpp"

namespace madrop {

enum class Estimator { ordinary, per_decision, weighted, doubly_robust };

inline std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::ordinary: return "ordinary";
        case Estimator::per_decision: return "per-decision";
        case Estimator::weighted: return "weighted";
        case Estimator::doubly_robust: return "doubly-robust";
    }
    return "?";
}

namespace detail {

/// Per-step target/behavioral probability ratios, accumulated in log space.
/// A zero target probability makes every later cumulative ratio zero.
struct RatioAccumulator {
    double log_ratio = 0.0;
    bool zero = false;

    void step(double target_p, double behavioral_p, int t, index_t state, index_t action) {
        if (behavioral_p == 0.0 && target_p > 0.0) throw SupportViolation(t, state, action);
        if (target_p == 0.0) {
            zero = true;
            return;
        }
        log_ratio += std::log(target_p) - std::log(behavioral_p);
    }

    double value() const { return zero ? 0.0 : std::exp(log_ratio); }
};

} // namespace detail

/// Product over all logged steps of target/behavioral action probabilities.
inline double importance_ratio(const Trajectory& traj, const TabularPolicy& behavioral,
                               const TabularPolicy& target) {
    detail::RatioAccumulator acc;
    for (int t = 0; t < traj.horizon(); ++t) {
        const auto& s = traj.steps[t];
        acc.step(target.prob(s.state, s.action), behavioral.prob(s.state, s.action), t, s.state, s.action);
        if (acc.zero) return 0.0;
    }
    return acc.value();
}

/// Discounted return with rewards recomputed from the given table at the
/// logged state-action pairs. Logged rewards are never reused, so one dataset
/// serves every realization's reward variant.
inline double trajectory_return(const Trajectory& traj, std::span<const double> reward, index_t n_actions,
                                double discount) {
    double total = 0.0;
    double weight = 1.0;
    for (const auto& s : traj.steps) {
        total += weight * reward[s.state * n_actions + s.action];
        weight *= discount;
    }
    return total;
}

/// Full-ratio reweighted return of one trajectory.
inline double ordinary_trajectory_estimate(const Trajectory& traj, const TabularPolicy& behavioral,
                                           const TabularPolicy& target, std::span<const double> reward,
                                           double discount) {
    return importance_ratio(traj, behavioral, target) *
           trajectory_return(traj, reward, behavioral.n_actions(), discount);
}

/// Step-wise reweighted return: each reward is weighted by the ratio of the
/// actions taken up to and including its step.
inline double per_decision_trajectory_estimate(const Trajectory& traj, const TabularPolicy& behavioral,
                                               const TabularPolicy& target, std::span<const double> reward,
                                               double discount) {
    detail::RatioAccumulator acc;
    double total = 0.0;
    double weight = 1.0;
    for (int t = 0; t < traj.horizon(); ++t) {
        const auto& s = traj.steps[t];
        acc.step(target.prob(s.state, s.action), behavioral.prob(s.state, s.action), t, s.state, s.action);
        if (acc.zero) break;
        total += weight * acc.value() * reward[s.state * behavioral.n_actions() + s.action];
        weight *= discount;
    }
    return total;
}

/// Empirical transition/reward model with visit bookkeeping. Rows with no
/// observed transition stay zero and are excluded from control-variate
/// baselines.
struct ModelEstimate {
    index_t n_states = 0;
    index_t n_actions = 0;
    std::vector<double> transition;            // [x][a][x'], rows normalized where observed
    std::vector<double> mean_reward;           // observed logged reward per (x, a)
    std::vector<std::int64_t> occurrences;     // times (x, a) appeared
    std::vector<std::int64_t> transition_obs;  // times a successor of (x, a) was observed

    bool visited(index_t x, index_t a) const { return occurrences[x * n_actions + a] > 0; }
    bool transition_known(index_t x, index_t a) const { return transition_obs[x * n_actions + a] > 0; }
};

inline ModelEstimate learn_model(const Dataset& data, index_t n_states, index_t n_actions) {
    if (data.by_start.empty() || data.per_start < 1) throw ModelError("cannot learn a model from an empty dataset");
    ModelEstimate model;
    model.n_states = n_states;
    model.n_actions = n_actions;
    model.transition.assign(static_cast<std::size_t>(n_states * n_actions * n_states), 0.0);
    model.mean_reward.assign(static_cast<std::size_t>(n_states * n_actions), 0.0);
    model.occurrences.assign(static_cast<std::size_t>(n_states * n_actions), 0);
    model.transition_obs.assign(static_cast<std::size_t>(n_states * n_actions), 0);

    for (const auto& group : data.by_start) {
        for (const Trajectory& traj : group) {
            for (int t = 0; t < traj.horizon(); ++t) {
                const auto& s = traj.steps[t];
                const index_t cell = s.state * n_actions + s.action;
                model.mean_reward[cell] += s.reward;
                ++model.occurrences[cell];
                if (t + 1 < traj.horizon()) {
                    ++model.transition_obs[cell];
                    ++model.transition[cell * n_states + traj.steps[t + 1].state];
                }
            }
        }
    }
    for (index_t cell = 0; cell < n_states * n_actions; ++cell) {
        if (model.occurrences[cell] > 0)
            model.mean_reward[cell] /= static_cast<double>(model.occurrences[cell]);
        if (model.transition_obs[cell] > 0) {
            const double total = static_cast<double>(model.transition_obs[cell]);
            for (index_t y = 0; y < n_states; ++y) model.transition[cell * n_states + y] /= total;
        }
    }
    return model;
}

namespace detail {

/// Finite-horizon baselines under the target policy on the learned model,
/// using the evaluation reward table. baseline_v[h][x] is the h-steps-to-go
/// value; unknown transitions contribute a zero baseline.
inline std::vector<std::vector<double>> dr_baseline_values(const ModelEstimate& model,
                                                           const TabularPolicy& target,
                                                           std::span<const double> reward, double discount,
                                                           int horizon) {
    const index_t S = model.n_states;
    const index_t A = model.n_actions;
    std::vector<std::vector<double>> v(horizon + 1, std::vector<double>(static_cast<std::size_t>(S), 0.0));
    for (int h = 1; h <= horizon; ++h) {
        for (index_t x = 0; x < S; ++x) {
            double value = 0.0;
            for (index_t a = 0; a < A; ++a) {
                const double pi = target.prob(x, a);
                if (pi == 0.0) continue;
                if (!model.transition_known(x, a)) continue;
                double next = 0.0;
                const double* row = model.transition.data() + (x * A + a) * S;
                for (index_t y = 0; y < S; ++y) next += row[y] * v[h - 1][y];
                value += pi * (reward[x * A + a] + discount * next);
            }
            v[h][x] = value;
        }
    }
    return v;
}

inline double dr_q_value(const ModelEstimate& model, std::span<const double> reward, double discount,
                         const std::vector<std::vector<double>>& baseline_v, int steps_to_go, index_t x,
                         index_t a) {
    if (!model.transition_known(x, a)) return 0.0;
    const index_t S = model.n_states;
    const index_t A = model.n_actions;
    double next = 0.0;
    const double* row = model.transition.data() + (x * A + a) * S;
    for (index_t y = 0; y < S; ++y) next += row[y] * baseline_v[steps_to_go - 1][y];
    return reward[x * A + a] + discount * next;
}

} // namespace detail

/// Per-start-state return estimates under the target policy.
struct IsEstimate {
    std::vector<double> values;
    Estimator variant = Estimator::ordinary;
    int horizon = 0;
    int per_start = 0;
    double discount = 0.0;
    double max_step_ratio = 0.0;  // realized over the dataset's support
    double j_max = 0.0;           // deterministic estimate bound
};

/// Importance-sampling estimate of the target policy's H-step return from
/// every start state, with rewards recomputed from `reward`. The
/// doubly-robust variant learns its control-variate model from the same
/// dataset.
inline IsEstimate estimate_values(const Dataset& data, const TabularPolicy& behavioral,
                                  const TabularPolicy& target, std::span<const double> reward,
                                  double discount, Estimator variant, int workers = 1) {
    if (data.by_start.empty() || data.per_start < 1) throw ModelError("cannot estimate from an empty dataset");
    const index_t S = behavioral.n_states();
    const index_t A = behavioral.n_actions();
    if (data.n_starts() != S) {
        std::string missing;
        for (index_t x = data.n_starts(); x < S && missing.size() < 64; ++x)
            missing += (missing.empty() ? "" : ", ") + std::to_string(x);
        throw ModelError("dataset lacks trajectories for start states: " + missing);
    }

    IsEstimate out;
    out.variant = variant;
    out.horizon = data.horizon;
    out.per_start = data.per_start;
    out.discount = discount;
    out.values.assign(static_cast<std::size_t>(S), 0.0);

    ModelEstimate model;
    std::vector<std::vector<double>> baseline;
    if (variant == Estimator::doubly_robust) {
        model = learn_model(data, S, A);
        baseline = detail::dr_baseline_values(model, target, reward, discount, data.horizon);
    }

    std::vector<double> step_ratio_max(static_cast<std::size_t>(S), 0.0);
    parallel_for(0, S, workers, [&](index_t x) {
        const auto& group = data.by_start[x];
        double sum = 0.0;
        double ratio_sum = 0.0;
        double local_max_ratio = 0.0;
        for (const Trajectory& traj : group) {
            for (int t = 0; t < traj.horizon(); ++t) {
                const auto& s = traj.steps[t];
                const double bp = behavioral.prob(s.state, s.action);
                const double tp = target.prob(s.state, s.action);
                if (bp == 0.0 && tp > 0.0) throw SupportViolation(t, s.state, s.action);
                if (bp > 0.0) local_max_ratio = std::max(local_max_ratio, tp / bp);
            }
            switch (variant) {
                case Estimator::ordinary:
                    sum += ordinary_trajectory_estimate(traj, behavioral, target, reward, discount);
                    break;
                case Estimator::per_decision:
                    sum += per_decision_trajectory_estimate(traj, behavioral, target, reward, discount);
                    break;
                case Estimator::weighted: {
                    const double rho = importance_ratio(traj, behavioral, target);
                    ratio_sum += rho;
                    sum += rho * trajectory_return(traj, reward, A, discount);
                    break;
                }
                case Estimator::doubly_robust: {
                    double tail = 0.0;
                    for (int t = traj.horizon() - 1; t >= 0; --t) {
                        const auto& s = traj.steps[t];
                        const double bp = behavioral.prob(s.state, s.action);
                        const double tp = target.prob(s.state, s.action);
                        const double w = bp > 0.0 ? tp / bp : 0.0;
                        const int to_go = traj.horizon() - t;
                        const double q =
                            detail::dr_q_value(model, reward, discount, baseline, to_go, s.state, s.action);
                        const double r = reward[s.state * A + s.action];
                        tail = baseline[to_go][s.state] + w * (r + discount * tail - q);
                    }
                    sum += tail;
                    break;
                }
            }
        }
        if (variant == Estimator::weighted) {
            out.values[x] = ratio_sum > 0.0 ? sum / ratio_sum : 0.0;
        } else {
            out.values[x] = sum / static_cast<double>(group.size());
        }
        step_ratio_max[x] = local_max_ratio;
    });

    out.max_step_ratio = *std::max_element(step_ratio_max.begin(), step_ratio_max.end());
    const double max_reward = reward.empty() ? 0.0 : *std::max_element(reward.begin(), reward.end());
    const double v_max_h = (1.0 - std::pow(discount, data.horizon)) / (1.0 - discount) * max_reward;
    out.j_max = variant == Estimator::weighted
                    ? v_max_h
                    : std::pow(std::max(out.max_step_ratio, 1.0), data.horizon) * v_max_h;
    return out;
}

/// Per-surviving-profile estimates: the dropped-profile-weighted average of
/// the per-start estimates, using the empirical marginal.
inline std::vector<double> estimate_realization_value(const IsEstimate& estimate,
                                                      const EmpiricalDistribution& mu_hat,
                                                      const DropoutMask& mask, const FactoredMdp& mdp) {
    if (static_cast<index_t>(estimate.values.size()) != mdp.n_states())
        throw ModelError("estimates must cover every joint start state (" +
                         std::to_string(estimate.values.size()) + " of " + std::to_string(mdp.n_states()) +
                         " present)");
    const std::vector<double> marginal = marginalize_empirical(mu_hat, mask, mdp);
    const SubspaceSplit split(mdp.states(), mask);
    std::vector<double> reduced(static_cast<std::size_t>(split.n_kept()), 0.0);
    for (index_t xbar = 0; xbar < split.n_kept(); ++xbar) {
        double v = 0.0;
        for (index_t d = 0; d < split.n_rest(); ++d)
            v += marginal[d] * estimate.values[split.combine(xbar, d)];
        reduced[xbar] = v;
    }
    return reduced;
}

struct RealizationEstimate {
    DropoutMask mask;
    std::vector<double> values;  // over surviving profiles
};

/// Survival-probability-weighted combination of per-realization estimates,
/// expanded back over the full joint states.
inline std::vector<double> estimate_robust_value(const std::vector<RealizationEstimate>& per_mask,
                                                 const DropoutModel& model, const FactoredMdp& mdp,
                                                 int mask_cap = 20) {
    std::vector<double> out(static_cast<std::size_t>(mdp.n_states()), 0.0);
    for (const DropoutMask& mask : enumerate_masks(mdp.n_agents(), mask_cap)) {
        const double weight = mask_probability(mask, model);
        if (weight == 0.0) continue;
        const RealizationEstimate* found = nullptr;
        for (const auto& entry : per_mask) {
            if (entry.mask == mask) {
                found = &entry;
                break;
            }
        }
        if (!found) {
            std::string bits;
            for (bool b : mask.active) bits += b ? '1' : '0';
            throw ModelError("missing estimate for realization " + bits + " with positive probability");
        }
        const SubspaceSplit split(mdp.states(), mask);
        if (static_cast<index_t>(found->values.size()) != split.n_kept())
            throw DimensionError("realization estimate has wrong length");
        for (index_t x = 0; x < mdp.n_states(); ++x)
            out[x] += weight * found->values[split.project_kept(x)];
    }
    return out;
}

} // namespace madrop
