#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "madrop/errors.hpp"

namespace madrop {

using index_t = std::int64_t;

inline constexpr double kRowSumTolerance = 1e-12;     // accepted as exactly stochastic
inline constexpr double kRowSumRepairLimit = 1e-9;    // renormalized; beyond this, rejected
inline constexpr index_t kMaxTableEntries = index_t{1} << 31;

/// Mixed-radix encoding between digit tuples and flat indices.
/// Digit 0 (agent 0) is the most significant, so flat indices enumerate
/// tuples in lexicographic order.
class MixedRadixIndexer {
public:
    MixedRadixIndexer() = default;

    explicit MixedRadixIndexer(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        strides_.resize(sizes_.size());
        index_t stride = 1;
        for (int i = static_cast<int>(sizes_.size()) - 1; i >= 0; --i) {
            if (sizes_[i] <= 0) throw ModelError("mixed-radix digit size must be positive");
            strides_[i] = stride;
            if (stride > std::numeric_limits<index_t>::max() / sizes_[i])
                throw StateSpaceError("state space too large: index exceeds 64-bit range");
            stride *= sizes_[i];
        }
        total_ = stride;
    }

    index_t size() const { return total_; }
    int digits() const { return static_cast<int>(sizes_.size()); }
    const std::vector<int>& digit_sizes() const { return sizes_; }

    index_t encode(std::span<const int> digits) const {
        index_t out = 0;
        for (std::size_t i = 0; i < sizes_.size(); ++i) out += strides_[i] * digits[i];
        return out;
    }

    void decode_into(index_t index, std::span<int> out) const {
        for (std::size_t i = 0; i < sizes_.size(); ++i) {
            out[i] = static_cast<int>((index / strides_[i]) % sizes_[i]);
        }
    }

    std::vector<int> decode(index_t index) const {
        std::vector<int> out(sizes_.size());
        decode_into(index, out);
        return out;
    }

    int digit(index_t index, int position) const {
        return static_cast<int>((index / strides_[position]) % sizes_[position]);
    }

private:
    std::vector<int> sizes_;
    std::vector<index_t> strides_;
    index_t total_ = 1;
};

/// Binary realization flags: active[n] == true means agent n remains in the system.
struct DropoutMask {
    std::vector<bool> active;

    DropoutMask() = default;
    explicit DropoutMask(std::vector<bool> flags) : active(std::move(flags)) {}

    int size() const { return static_cast<int>(active.size()); }

    int surviving_count() const {
        return static_cast<int>(std::count(active.begin(), active.end(), true));
    }
    int dropped_count() const { return size() - surviving_count(); }

    std::vector<int> surviving() const {
        std::vector<int> out;
        for (int n = 0; n < size(); ++n)
            if (active[n]) out.push_back(n);
        return out;
    }
    std::vector<int> dropped() const {
        std::vector<int> out;
        for (int n = 0; n < size(); ++n)
            if (!active[n]) out.push_back(n);
        return out;
    }

    bool all_active() const { return surviving_count() == size(); }
    bool none_active() const { return surviving_count() == 0; }

    static DropoutMask all(int n_agents) { return DropoutMask(std::vector<bool>(n_agents, true)); }
    static DropoutMask none(int n_agents) { return DropoutMask(std::vector<bool>(n_agents, false)); }

    bool operator==(const DropoutMask& other) const { return active == other.active; }
};

/// Per-agent survival probabilities: agent n stays with probability survival[n].
struct DropoutModel {
    std::vector<double> survival;

    DropoutModel() = default;
    explicit DropoutModel(std::vector<double> probs) : survival(std::move(probs)) {
        for (double b : survival)
            if (!(b >= 0.0 && b <= 1.0)) throw ModelError("survival probability outside [0, 1]");
    }

    int size() const { return static_cast<int>(survival.size()); }

    static DropoutModel uniform(int n_agents, double beta) {
        return DropoutModel(std::vector<double>(n_agents, beta));
    }

    bool identical() const {
        for (double b : survival)
            if (b != survival.front()) return false;
        return !survival.empty();
    }
};

/// Flag vector packed into an integer, agent 0 in the highest bit; equals the
/// mask's position in enumerate_masks.
inline std::uint64_t mask_bits(const DropoutMask& mask) {
    std::uint64_t bits = 0;
    for (bool b : mask.active) bits = (bits << 1) | (b ? 1u : 0u);
    return bits;
}

/// Probability of a specific realization under independent per-agent survival.
inline double mask_probability(const DropoutMask& mask, const DropoutModel& model) {
    if (mask.size() != model.size()) throw DimensionError("mask/model length mismatch");
    double p = 1.0;
    for (int n = 0; n < mask.size(); ++n) p *= mask.active[n] ? model.survival[n] : 1.0 - model.survival[n];
    return p;
}

/// All 2^N realizations in lexicographic order of the flag vector.
inline std::vector<DropoutMask> enumerate_masks(int n_agents, int cap = 20) {
    if (n_agents > cap)
        throw CapExceeded("mask enumeration cap exceeded (" + std::to_string(n_agents) + " agents > cap " +
                          std::to_string(cap) + "); enumerate a Monte Carlo subset of masks instead");
    std::vector<DropoutMask> out;
    const index_t total = index_t{1} << n_agents;
    out.reserve(static_cast<std::size_t>(total));
    for (index_t bits = 0; bits < total; ++bits) {
        std::vector<bool> flags(n_agents);
        for (int n = 0; n < n_agents; ++n) flags[n] = ((bits >> (n_agents - 1 - n)) & 1) != 0;
        out.emplace_back(std::move(flags));
    }
    return out;
}

namespace detail {
inline void check_stochastic_row(std::span<double> row, const std::string& what) {
    double sum = 0.0;
    for (double p : row) {
        if (!std::isfinite(p) || p < 0.0) throw ModelError(what + ": entries must be finite and nonnegative");
        sum += p;
    }
    const double err = std::abs(sum - 1.0);
    if (err <= kRowSumTolerance) return;
    if (err <= kRowSumRepairLimit) {
        for (double& p : row) p /= sum;
        return;
    }
    throw ModelError(what + ": row sums to " + std::to_string(sum) + ", outside repairable range");
}
} // namespace detail

/// Transition-independent multi-agent MDP with separable rewards.
///
/// Agent n picks up a new substate according to the conditional table
/// factors[n], indexed by (parent profile, own action, next substate), where
/// the parent profile ranges over the substates of parent_sets[n] in agent
/// order. Rewards are per-agent tables over (own substate, own action).
/// Instances are immutable after construction and safe to share across
/// threads.
class FactoredMdp {
public:
    FactoredMdp(int n_agents,
                std::vector<int> substate_sizes,
                std::vector<int> action_sizes,
                std::vector<std::vector<int>> parent_sets,
                std::vector<std::vector<double>> factors,
                std::vector<std::vector<double>> rewards,
                double discount,
                std::optional<std::vector<double>> survival_probs = std::nullopt)
        : n_agents_(n_agents),
          substate_sizes_(std::move(substate_sizes)),
          action_sizes_(std::move(action_sizes)),
          parent_sets_(std::move(parent_sets)),
          factors_(std::move(factors)),
          rewards_(std::move(rewards)),
          discount_(discount),
          survival_probs_(std::move(survival_probs)) {
        validate();
        state_indexer_ = MixedRadixIndexer(substate_sizes_);
        action_indexer_ = MixedRadixIndexer(action_sizes_);
        parent_indexers_.reserve(n_agents_);
        for (int n = 0; n < n_agents_; ++n) {
            std::vector<int> parent_sizes;
            parent_sizes.reserve(parent_sets_[n].size());
            for (int p : parent_sets_[n]) parent_sizes.push_back(substate_sizes_[p]);
            parent_indexers_.emplace_back(std::move(parent_sizes));
        }
        repair_factor_rows();
    }

    int n_agents() const { return n_agents_; }
    const std::vector<int>& substate_sizes() const { return substate_sizes_; }
    const std::vector<int>& action_sizes() const { return action_sizes_; }
    const std::vector<std::vector<int>>& parent_sets() const { return parent_sets_; }
    const std::vector<std::vector<double>>& factor_tables() const { return factors_; }
    const std::vector<std::vector<double>>& reward_tables() const { return rewards_; }
    double discount() const { return discount_; }
    const std::optional<std::vector<double>>& survival_probs() const { return survival_probs_; }

    const MixedRadixIndexer& states() const { return state_indexer_; }
    const MixedRadixIndexer& actions() const { return action_indexer_; }
    const MixedRadixIndexer& parent_states(int agent) const { return parent_indexers_[agent]; }

    index_t n_states() const { return state_indexer_.size(); }
    index_t n_actions() const { return action_indexer_.size(); }

    /// P(next substate of `agent` | parent profile, own action).
    double factor(int agent, index_t parent_state, int action, int next_substate) const {
        const index_t next_count = substate_sizes_[agent];
        return factors_[agent][(parent_state * action_sizes_[agent] + action) * next_count + next_substate];
    }

    double agent_reward(int agent, int substate, int action) const {
        return rewards_[agent][static_cast<index_t>(substate) * action_sizes_[agent] + action];
    }

    /// Parent profile index for `agent` extracted from a full joint state.
    index_t parent_profile(int agent, index_t state) const {
        const auto& parents = parent_sets_[agent];
        index_t profile = 0;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            profile = profile * substate_sizes_[parents[i]] + state_indexer_.digit(state, parents[i]);
        }
        return profile;
    }

    /// True when every agent's parent set is contained in itself, so the
    /// agents evolve as independent chains.
    bool decoupled() const {
        for (int n = 0; n < n_agents_; ++n) {
            for (int p : parent_sets_[n])
                if (p != n) return false;
        }
        return true;
    }

    double max_total_reward() const {
        double total = 0.0;
        for (int n = 0; n < n_agents_; ++n) total += *std::max_element(rewards_[n].begin(), rewards_[n].end());
        return total;
    }

private:
    void validate() {
        if (n_agents_ <= 0) throw ModelError("system needs at least one agent");
        if (static_cast<int>(substate_sizes_.size()) != n_agents_ ||
            static_cast<int>(action_sizes_.size()) != n_agents_ ||
            static_cast<int>(parent_sets_.size()) != n_agents_ ||
            static_cast<int>(factors_.size()) != n_agents_ || static_cast<int>(rewards_.size()) != n_agents_)
            throw DimensionError("per-agent containers must all have n_agents entries");
        for (int s : substate_sizes_)
            if (s != substate_sizes_.front()) throw ModelError("substate sizes must be identical across agents");
        if (!(discount_ > 0.0 && discount_ < 1.0)) throw ModelError("discount must lie in (0, 1)");
        for (int n = 0; n < n_agents_; ++n) {
            if (substate_sizes_[n] <= 0 || action_sizes_[n] <= 0)
                throw ModelError("substate and action counts must be positive");
            std::vector<int> sorted = parent_sets_[n];
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                throw ModelError("duplicate agent in parent set");
            for (int p : sorted)
                if (p < 0 || p >= n_agents_) throw ModelError("parent index out of range");
            parent_sets_[n] = std::move(sorted);
            index_t expected = 1;
            for (int p : parent_sets_[n]) expected *= substate_sizes_[p];
            expected *= static_cast<index_t>(action_sizes_[n]) * substate_sizes_[n];
            if (static_cast<index_t>(factors_[n].size()) != expected)
                throw DimensionError("factor table for agent " + std::to_string(n) + " has wrong size");
            if (static_cast<index_t>(rewards_[n].size()) !=
                static_cast<index_t>(substate_sizes_[n]) * action_sizes_[n])
                throw DimensionError("reward table for agent " + std::to_string(n) + " has wrong size");
            for (double r : rewards_[n])
                if (!std::isfinite(r) || r < 0.0)
                    throw ModelError("rewards must be finite and nonnegative");
        }
        if (survival_probs_) {
            if (static_cast<int>(survival_probs_->size()) != n_agents_)
                throw DimensionError("survival probability vector length mismatch");
            for (double b : *survival_probs_)
                if (!(b >= 0.0 && b <= 1.0)) throw ModelError("survival probability outside [0, 1]");
        }
    }

    void repair_factor_rows() {
        for (int n = 0; n < n_agents_; ++n) {
            const int next_count = substate_sizes_[n];
            const index_t rows = static_cast<index_t>(factors_[n].size()) / next_count;
            for (index_t row = 0; row < rows; ++row) {
                detail::check_stochastic_row(
                    std::span<double>(factors_[n].data() + row * next_count, next_count),
                    "factor row (agent " + std::to_string(n) + ")");
            }
        }
    }

    int n_agents_;
    std::vector<int> substate_sizes_;
    std::vector<int> action_sizes_;
    std::vector<std::vector<int>> parent_sets_;
    std::vector<std::vector<double>> factors_;
    std::vector<std::vector<double>> rewards_;
    double discount_;
    std::optional<std::vector<double>> survival_probs_;

    MixedRadixIndexer state_indexer_;
    MixedRadixIndexer action_indexer_;
    std::vector<MixedRadixIndexer> parent_indexers_;
};

/// Splits a mixed-radix space into the digits selected by a mask and the rest.
/// Used to move between joint states (or actions) and
/// (surviving profile, dropped profile) pairs.
class SubspaceSplit {
public:
    SubspaceSplit(const MixedRadixIndexer& full, const DropoutMask& mask) {
        if (mask.size() != full.digits()) throw DimensionError("mask length does not match digit count");
        std::vector<int> kept_sizes, rest_sizes;
        for (int i = 0; i < full.digits(); ++i) {
            if (mask.active[i]) {
                kept_positions_.push_back(i);
                kept_sizes.push_back(full.digit_sizes()[i]);
            } else {
                rest_positions_.push_back(i);
                rest_sizes.push_back(full.digit_sizes()[i]);
            }
        }
        full_ = full;
        kept_ = MixedRadixIndexer(kept_sizes.empty() ? std::vector<int>{} : kept_sizes);
        rest_ = MixedRadixIndexer(rest_sizes.empty() ? std::vector<int>{} : rest_sizes);
    }

    index_t n_kept() const { return kept_.size(); }
    index_t n_rest() const { return rest_.size(); }

    index_t project_kept(index_t full_index) const {
        index_t out = 0;
        for (std::size_t i = 0; i < kept_positions_.size(); ++i)
            out = out * full_.digit_sizes()[kept_positions_[i]] + full_.digit(full_index, kept_positions_[i]);
        return out;
    }

    index_t project_rest(index_t full_index) const {
        index_t out = 0;
        for (std::size_t i = 0; i < rest_positions_.size(); ++i)
            out = out * full_.digit_sizes()[rest_positions_[i]] + full_.digit(full_index, rest_positions_[i]);
        return out;
    }

    index_t combine(index_t kept_index, index_t rest_index) const {
        std::vector<int> digits(full_.digits());
        std::vector<int> kept_digits(kept_positions_.size());
        std::vector<int> rest_digits(rest_positions_.size());
        if (!kept_positions_.empty()) kept_.decode_into(kept_index, kept_digits);
        if (!rest_positions_.empty()) rest_.decode_into(rest_index, rest_digits);
        for (std::size_t i = 0; i < kept_positions_.size(); ++i) digits[kept_positions_[i]] = kept_digits[i];
        for (std::size_t i = 0; i < rest_positions_.size(); ++i) digits[rest_positions_[i]] = rest_digits[i];
        return full_.encode(digits);
    }

    const MixedRadixIndexer& kept_indexer() const { return kept_; }
    const MixedRadixIndexer& rest_indexer() const { return rest_; }

private:
    MixedRadixIndexer full_, kept_, rest_;
    std::vector<int> kept_positions_, rest_positions_;
};

/// Stochastic joint-action policy over joint states. Either a dense joint
/// table or a product of per-agent tables pi_n(action | own substate).
class TabularPolicy {
public:
    enum class Rep { joint, product };

    static TabularPolicy joint_table(MixedRadixIndexer states, MixedRadixIndexer actions,
                                     std::vector<double> table) {
        TabularPolicy p;
        p.rep_ = Rep::joint;
        p.states_ = std::move(states);
        p.actions_ = std::move(actions);
        p.joint_ = std::move(table);
        if (static_cast<index_t>(p.joint_.size()) != p.states_.size() * p.actions_.size())
            throw DimensionError("joint policy table has wrong size");
        for (index_t x = 0; x < p.states_.size(); ++x) {
            detail::check_stochastic_row(
                std::span<double>(p.joint_.data() + x * p.actions_.size(), p.actions_.size()),
                "policy row");
        }
        return p;
    }

    /// per_agent[n] is a row-stochastic table over (substate, action).
    static TabularPolicy product(std::vector<int> substate_sizes, std::vector<int> action_sizes,
                                 std::vector<std::vector<double>> per_agent) {
        TabularPolicy p;
        p.rep_ = Rep::product;
        p.states_ = MixedRadixIndexer(substate_sizes);
        p.actions_ = MixedRadixIndexer(action_sizes);
        p.per_agent_ = std::move(per_agent);
        if (p.per_agent_.size() != substate_sizes.size())
            throw DimensionError("product policy needs one table per agent");
        for (std::size_t n = 0; n < p.per_agent_.size(); ++n) {
            if (static_cast<index_t>(p.per_agent_[n].size()) !=
                static_cast<index_t>(substate_sizes[n]) * action_sizes[n])
                throw DimensionError("per-agent policy table has wrong size");
            for (int xn = 0; xn < substate_sizes[n]; ++xn) {
                detail::check_stochastic_row(
                    std::span<double>(p.per_agent_[n].data() + static_cast<index_t>(xn) * action_sizes[n],
                                      action_sizes[n]),
                    "per-agent policy row");
            }
        }
        return p;
    }

    static TabularPolicy uniform(const MixedRadixIndexer& states, const MixedRadixIndexer& actions) {
        std::vector<std::vector<double>> tables;
        tables.reserve(states.digits());
        for (int n = 0; n < states.digits(); ++n) {
            const int a = actions.digit_sizes()[n];
            tables.emplace_back(static_cast<std::size_t>(states.digit_sizes()[n]) * a, 1.0 / a);
        }
        return product(states.digit_sizes(), actions.digit_sizes(), std::move(tables));
    }

    static TabularPolicy uniform(const FactoredMdp& mdp) { return uniform(mdp.states(), mdp.actions()); }

    /// Deterministic policy from a per-state action list (one-hot joint table).
    static TabularPolicy deterministic(MixedRadixIndexer states, MixedRadixIndexer actions,
                                       const std::vector<int>& chosen) {
        if (static_cast<index_t>(chosen.size()) != states.size())
            throw DimensionError("action list length does not match state count");
        std::vector<double> table(static_cast<std::size_t>(states.size() * actions.size()), 0.0);
        for (index_t x = 0; x < states.size(); ++x) table[x * actions.size() + chosen[x]] = 1.0;
        return joint_table(std::move(states), std::move(actions), std::move(table));
    }

    Rep rep() const { return rep_; }
    index_t n_states() const { return states_.size(); }
    index_t n_actions() const { return actions_.size(); }
    const MixedRadixIndexer& states() const { return states_; }
    const MixedRadixIndexer& actions() const { return actions_; }
    const std::vector<std::vector<double>>& per_agent_tables() const { return per_agent_; }
    const std::vector<double>& joint_values() const { return joint_; }

    double prob(index_t state, index_t action) const {
        if (rep_ == Rep::joint) return joint_[state * actions_.size() + action];
        double p = 1.0;
        for (std::size_t n = 0; n < per_agent_.size(); ++n) {
            const int xn = states_.digit(state, static_cast<int>(n));
            const int an = actions_.digit(action, static_cast<int>(n));
            p *= per_agent_[n][static_cast<index_t>(xn) * actions_.digit_sizes()[n] + an];
        }
        return p;
    }

    std::vector<double> row(index_t state) const {
        std::vector<double> out(static_cast<std::size_t>(actions_.size()));
        if (rep_ == Rep::joint) {
            std::copy_n(joint_.begin() + state * actions_.size(), actions_.size(), out.begin());
        } else {
            for (index_t a = 0; a < actions_.size(); ++a) out[a] = prob(state, a);
        }
        return out;
    }

    TabularPolicy expand() const {
        if (rep_ == Rep::joint) return *this;
        std::vector<double> table(static_cast<std::size_t>(states_.size() * actions_.size()));
        for (index_t x = 0; x < states_.size(); ++x)
            for (index_t a = 0; a < actions_.size(); ++a) table[x * actions_.size() + a] = prob(x, a);
        return joint_table(states_, actions_, std::move(table));
    }

    /// Surviving agents' factors of a product policy, as a policy over the
    /// reduced joint spaces.
    TabularPolicy restrict(const DropoutMask& mask) const {
        if (rep_ != Rep::product)
            throw ModelError("only per-agent-product policies can be restricted to a realization");
        if (mask.size() != states_.digits()) throw DimensionError("mask length does not match policy");
        std::vector<int> sub_sizes, act_sizes;
        std::vector<std::vector<double>> tables;
        for (int n = 0; n < mask.size(); ++n) {
            if (!mask.active[n]) continue;
            sub_sizes.push_back(states_.digit_sizes()[n]);
            act_sizes.push_back(actions_.digit_sizes()[n]);
            tables.push_back(per_agent_[n]);
        }
        return product(std::move(sub_sizes), std::move(act_sizes), std::move(tables));
    }

private:
    Rep rep_ = Rep::joint;
    MixedRadixIndexer states_, actions_;
    std::vector<double> joint_;
    std::vector<std::vector<double>> per_agent_;
};

/// Joint transition table P(x' | x, a), flattened as [x][a][x'].
/// Entries are the product of the per-agent factors.
inline std::vector<double> build_joint_transition(const FactoredMdp& mdp) {
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    if (S > kMaxTableEntries / S || S * S > kMaxTableEntries / A)
        throw StateSpaceError("state space too large: joint transition table would exceed the memory budget");
    std::vector<double> table(static_cast<std::size_t>(S * A * S));

    const int N = mdp.n_agents();
    std::vector<int> action_digits(N), next_digits(N);
    std::vector<index_t> parent_profiles(N);
    for (index_t x = 0; x < S; ++x) {
        for (int n = 0; n < N; ++n) parent_profiles[n] = mdp.parent_profile(n, x);
        for (index_t a = 0; a < A; ++a) {
            mdp.actions().decode_into(a, action_digits);
            double* row = table.data() + (x * A + a) * S;
            for (index_t y = 0; y < S; ++y) {
                mdp.states().decode_into(y, next_digits);
                double p = 1.0;
                for (int n = 0; n < N; ++n)
                    p *= mdp.factor(n, parent_profiles[n], action_digits[n], next_digits[n]);
                row[y] = p;
            }
        }
    }
    return table;
}

/// Summed reward of the surviving agents; dropped agents contribute zero.
/// Flattened as [x][a].
inline std::vector<double> masked_reward(const FactoredMdp& mdp, const DropoutMask& mask) {
    if (mask.size() != mdp.n_agents()) throw DimensionError("mask length does not match system");
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A), 0.0);
    for (index_t x = 0; x < S; ++x) {
        for (index_t a = 0; a < A; ++a) {
            double r = 0.0;
            for (int n = 0; n < mdp.n_agents(); ++n) {
                if (!mask.active[n]) continue;
                r += mdp.agent_reward(n, mdp.states().digit(x, n), mdp.actions().digit(a, n));
            }
            table[x * A + a] = r;
        }
    }
    return table;
}

/// Survival-weighted reward sum_n beta_n r_n, flattened as [x][a].
inline std::vector<double> robust_reward(const FactoredMdp& mdp, const DropoutModel& model) {
    if (model.size() != mdp.n_agents()) throw DimensionError("survival vector length does not match system");
    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    std::vector<double> table(static_cast<std::size_t>(S * A), 0.0);
    for (index_t x = 0; x < S; ++x) {
        for (index_t a = 0; a < A; ++a) {
            double r = 0.0;
            for (int n = 0; n < mdp.n_agents(); ++n) {
                r += model.survival[n] *
                     mdp.agent_reward(n, mdp.states().digit(x, n), mdp.actions().digit(a, n));
            }
            table[x * A + a] = r;
        }
    }
    return table;
}

/// Pre-dropout reward (every agent active), flattened as [x][a].
inline std::vector<double> total_reward(const FactoredMdp& mdp) {
    return masked_reward(mdp, DropoutMask::all(mdp.n_agents()));
}

/// Extends a policy over the surviving agents to the full system by assigning
/// each dropped agent a uniform action distribution. Product policies stay
/// products; joint reduced policies become joint full policies.
inline TabularPolicy augment_policy(const TabularPolicy& reduced, const DropoutMask& mask,
                                    const FactoredMdp& mdp) {
    if (mask.size() != mdp.n_agents()) throw DimensionError("mask length does not match system");
    const SubspaceSplit state_split(mdp.states(), mask);
    const SubspaceSplit action_split(mdp.actions(), mask);
    if (reduced.n_states() != state_split.n_kept() || reduced.n_actions() != action_split.n_kept())
        throw DimensionError("reduced policy dimensions do not match the surviving agents' spaces");

    if (reduced.rep() == TabularPolicy::Rep::product) {
        std::vector<std::vector<double>> tables(mdp.n_agents());
        int k = 0;
        for (int n = 0; n < mdp.n_agents(); ++n) {
            if (mask.active[n]) {
                tables[n] = reduced.per_agent_tables()[k++];
            } else {
                const int a = mdp.action_sizes()[n];
                tables[n].assign(static_cast<std::size_t>(mdp.substate_sizes()[n]) * a, 1.0 / a);
            }
        }
        return TabularPolicy::product(mdp.substate_sizes(), mdp.action_sizes(), std::move(tables));
    }

    const index_t S = mdp.n_states();
    const index_t A = mdp.n_actions();
    double dropped_weight = 1.0;
    for (int n = 0; n < mdp.n_agents(); ++n)
        if (!mask.active[n]) dropped_weight /= mdp.action_sizes()[n];
    std::vector<double> table(static_cast<std::size_t>(S * A));
    for (index_t x = 0; x < S; ++x) {
        const index_t xbar = state_split.project_kept(x);
        for (index_t a = 0; a < A; ++a) {
            const index_t abar = action_split.project_kept(a);
            table[x * A + a] = reduced.prob(xbar, abar) * dropped_weight;
        }
    }
    return TabularPolicy::joint_table(mdp.states(), mdp.actions(), std::move(table));
}

} // namespace madrop
