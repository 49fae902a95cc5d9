#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/rng.hpp"

namespace madrop {

enum class ParentStructure { fully_connected, decoupled };

/// Seeded random system. Factor rows are symmetric-Dirichlet draws mixed with
/// the uniform row by `smoothing`, so every entry is at least
/// smoothing / substate_size and the chain is ergodic under any policy.
/// Rewards are uniform on [0, 1] per (substate, action).
inline FactoredMdp random_system(int n_agents, int substate_size, int action_size, double discount,
                                 std::uint64_t seed, double smoothing,
                                 ParentStructure structure = ParentStructure::fully_connected) {
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ModelError("smoothing must lie in (0, 1]");
    SplitMix64 rng(derive_seed(seed, 0xFACBull));

    std::vector<int> substates(n_agents, substate_size);
    std::vector<int> actions(n_agents, action_size);
    std::vector<std::vector<int>> parents(n_agents);
    for (int n = 0; n < n_agents; ++n) {
        if (structure == ParentStructure::fully_connected) {
            parents[n].resize(n_agents);
            for (int p = 0; p < n_agents; ++p) parents[n][p] = p;
        } else {
            parents[n] = {n};
        }
    }

    std::vector<std::vector<double>> factors(n_agents);
    std::vector<std::vector<double>> rewards(n_agents);
    for (int n = 0; n < n_agents; ++n) {
        std::int64_t parent_states = 1;
        for (int p : parents[n]) parent_states *= substate_size;
        factors[n].resize(static_cast<std::size_t>(parent_states) * action_size * substate_size);
        for (std::int64_t row = 0; row < parent_states * action_size; ++row) {
            double total = 0.0;
            std::vector<double> draw(substate_size);
            for (int y = 0; y < substate_size; ++y) {
                draw[y] = -std::log(1.0 - rng.next_double());
                total += draw[y];
            }
            for (int y = 0; y < substate_size; ++y) {
                factors[n][row * substate_size + y] =
                    (1.0 - smoothing) * draw[y] / total + smoothing / substate_size;
            }
        }
        rewards[n].resize(static_cast<std::size_t>(substate_size) * action_size);
        for (double& r : rewards[n]) r = rng.next_double();
    }
    return FactoredMdp(n_agents, substates, actions, parents, factors, rewards, discount);
}

/// Random per-agent-product policy with strictly positive rows.
inline TabularPolicy random_product_policy(const FactoredMdp& mdp, std::uint64_t seed,
                                           double min_mass = 0.05) {
    SplitMix64 rng(derive_seed(seed, 0xA0501ull));
    std::vector<std::vector<double>> tables(mdp.n_agents());
    for (int n = 0; n < mdp.n_agents(); ++n) {
        const int A = mdp.action_sizes()[n];
        tables[n].resize(static_cast<std::size_t>(mdp.substate_sizes()[n]) * A);
        for (int xn = 0; xn < mdp.substate_sizes()[n]; ++xn) {
            double total = 0.0;
            std::vector<double> draw(A);
            for (int a = 0; a < A; ++a) {
                draw[a] = -std::log(1.0 - rng.next_double());
                total += draw[a];
            }
            for (int a = 0; a < A; ++a)
                tables[n][static_cast<std::size_t>(xn) * A + a] =
                    (1.0 - min_mass) * draw[a] / total + min_mass / A;
        }
    }
    return TabularPolicy::product(mdp.substate_sizes(), mdp.action_sizes(), std::move(tables));
}

/// Random joint-table policy with strictly positive rows.
inline TabularPolicy random_joint_policy(const FactoredMdp& mdp, std::uint64_t seed, double min_mass = 0.05) {
    SplitMix64 rng(derive_seed(seed, 0x701917ull));
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A));
    for (index_t x = 0; x < S; ++x) {
        double total = 0.0;
        for (index_t a = 0; a < A; ++a) {
            table[x * A + a] = -std::log(1.0 - rng.next_double());
            total += table[x * A + a];
        }
        for (index_t a = 0; a < A; ++a)
            table[x * A + a] = (1.0 - min_mass) * table[x * A + a] / total + min_mass / A;
    }
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

/// Blend of a deterministic greedy policy with the uniform policy; keeps full
/// support so it can serve as a behavioral policy.
inline TabularPolicy smoothed_greedy_policy(const FactoredMdp& mdp, const std::vector<int>& greedy,
                                            double uniform_share) {
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A), uniform_share / A);
    for (index_t x = 0; x < S; ++x) table[x * A + greedy[x]] += 1.0 - uniform_share;
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

} // namespace madrop
