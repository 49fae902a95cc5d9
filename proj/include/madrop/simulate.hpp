#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/parallel.hpp"
#include "madrop/rng.hpp"
#include "madrop/solve.hpp"

namespace madrop {

struct TrajectoryStep {
    index_t state = 0;
    index_t action = 0;
    double reward = 0.0;
};

struct Trajectory {
    index_t start = 0;
    std::uint64_t seed = 0;
    std::string policy_id;
    std::vector<TrajectoryStep> steps;

    int horizon() const { return static_cast<int>(steps.size()); }
};

/// One rollout of the system under a behavioral policy. Fully reproducible:
/// each step consumes one uniform draw for the action and one for the next
/// state. Logged rewards are the system's own (pre-dropout) rewards.
inline Trajectory sample_trajectory(const FlatMdp& mdp, const TabularPolicy& policy, index_t start,
                                    int horizon, std::uint64_t seed, std::string policy_id = {}) {
    if (horizon < 1) throw ModelError("horizon must be at least 1");
    if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
        throw DimensionError("policy dimensions do not match the system");
    Trajectory out;
    out.start = start;
    out.seed = seed;
    out.policy_id = std::move(policy_id);
    out.steps.reserve(horizon);
    SplitMix64 rng(seed);
    index_t state = start;
    for (int t = 0; t < horizon; ++t) {
        const std::vector<double> action_row = policy.row(state);
        const index_t action = sample_categorical(action_row, rng.next_double());
        out.steps.push_back({state, action, mdp.r(state, action)});
        state = sample_categorical(mdp.row(state, action), rng.next_double());
    }
    return out;
}

inline Trajectory sample_trajectory(const FactoredMdp& mdp, const TabularPolicy& policy, index_t start,
                                    int horizon, std::uint64_t seed, std::string policy_id = {}) {
    return sample_trajectory(flatten(mdp), policy, start, horizon, seed, std::move(policy_id));
}

/// |D| independent trajectories of length H from every joint start state.
struct Dataset {
    int horizon = 0;
    int per_start = 0;
    std::string policy_id;
    std::uint64_t master_seed = 0;
    std::vector<std::vector<Trajectory>> by_start;

    index_t n_starts() const { return static_cast<index_t>(by_start.size()); }
};

inline Dataset sample_dataset(const FlatMdp& mdp, const TabularPolicy& policy, int per_start, int horizon,
                              std::uint64_t master_seed, std::string policy_id = {}, int workers = 1) {
    Dataset data;
    data.horizon = horizon;
    data.per_start = per_start;
    data.policy_id = std::move(policy_id);
    data.master_seed = master_seed;
    data.by_start.resize(static_cast<std::size_t>(mdp.n_states));
    parallel_for(0, mdp.n_states, workers, [&](index_t start) {
        auto& slot = data.by_start[start];
        slot.reserve(per_start);
        for (int i = 0; i < per_start; ++i) {
            slot.push_back(sample_trajectory(mdp, policy, start, horizon,
                                             derive_seed(master_seed, static_cast<std::uint64_t>(start),
                                                         static_cast<std::uint64_t>(i)),
                                             data.policy_id));
        }
    });
    return data;
}

/// State-visit frequencies from one long rollout.
struct EmpiricalDistribution {
    std::vector<std::uint64_t> counts;
    std::vector<double> freq;
    std::uint64_t horizon = 0;

    index_t n_states() const { return static_cast<index_t>(freq.size()); }

    /// Wraps an exact distribution so the marginalization helpers can be
    /// reused with the true stationary distribution substituted.
    static EmpiricalDistribution exact(std::span<const double> mu) {
        EmpiricalDistribution d;
        d.freq.assign(mu.begin(), mu.end());
        d.horizon = 0;
        return d;
    }
};

/// Visit frequencies over H_mu consecutive states (after burn_in steps) of a
/// single rollout started from a seeded uniform draw. No ergodicity check is
/// performed here; callers that need one should validate the chain upstream.
inline EmpiricalDistribution empirical_stationary(const FlatMdp& mdp, const TabularPolicy& policy,
                                                  std::int64_t h_mu, std::uint64_t seed,
                                                  std::int64_t burn_in = 0) {
    if (h_mu < 1) throw ModelError("H_mu must be at least 1");
    EmpiricalDistribution out;
    out.counts.assign(static_cast<std::size_t>(mdp.n_states), 0);
    out.horizon = static_cast<std::uint64_t>(h_mu);
    SplitMix64 rng(seed);
    index_t state = static_cast<index_t>(rng.next() % static_cast<std::uint64_t>(mdp.n_states));
    for (std::int64_t t = 0; t < burn_in + h_mu; ++t) {
        if (t >= burn_in) ++out.counts[state];
        const std::vector<double> action_row = policy.row(state);
        const index_t action = sample_categorical(action_row, rng.next_double());
        state = sample_categorical(mdp.row(state, action), rng.next_double());
    }
    out.freq.resize(out.counts.size());
    for (std::size_t i = 0; i < out.counts.size(); ++i)
        out.freq[i] = static_cast<double>(out.counts[i]) / static_cast<double>(h_mu);
    return out;
}

/// Distribution of the dropped agents' substate profiles: sums the joint
/// frequencies over all states that agree on the dropped substates.
inline std::vector<double> marginalize_empirical(const EmpiricalDistribution& dist, const DropoutMask& mask,
                                                 const FactoredMdp& mdp) {
    if (mask.size() != mdp.n_agents()) throw DimensionError("mask length does not match system");
    if (dist.n_states() != mdp.n_states()) throw DimensionError("distribution length does not match system");
    const SubspaceSplit split(mdp.states(), mask);
    std::vector<double> marginal(static_cast<std::size_t>(split.n_rest()), 0.0);
    for (index_t x = 0; x < mdp.n_states(); ++x) marginal[split.project_rest(x)] += dist.freq[x];
    return marginal;
}

} // namespace madrop
