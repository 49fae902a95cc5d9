#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/parallel.hpp"
#include "madrop/simulate.hpp"
#include "madrop/solve.hpp"

namespace madrop {

/// Deterministic cap on any H-step return: geometric reward sum at the
/// largest single-step reward.
inline double v_max_bound(double r_max, double discount, int horizon) {
    if (horizon < 1) throw ModelError("horizon must be at least 1");
    return (1.0 - std::pow(discount, horizon)) / (1.0 - discount) * r_max;
}

inline double v_max_bound(const FactoredMdp& mdp, const DropoutModel& model, int horizon) {
    const std::vector<double> reward = robust_reward(mdp, model);
    return v_max_bound(*std::max_element(reward.begin(), reward.end()), mdp.discount(), horizon);
}

/// Two-sided Hoeffding tail for the mean of |D| estimates bounded by j_max,
/// at total slack delta (each of the two error halves gets delta/2).
inline double hoeffding_term(std::int64_t n_traj, double delta, double j_max) {
    if (!(j_max > 0.0)) throw ModelError("j_max must be positive");
    return 2.0 * std::exp(-static_cast<double>(n_traj) * delta * delta / (4.0 * j_max * j_max));
}

/// Everything the composite bounds consume. sum_j_h is the finite-horizon
/// value summed over the dropped-agent start profiles; c_h_mu bounds the
/// expected total-variation error of the empirical stationary distribution.
struct BoundInputs {
    double delta = 0.0;
    int horizon = 0;
    std::int64_t h_mu = 0;
    std::int64_t n_traj = 0;       // |D|
    std::int64_t t_mix = 1;
    double j_max = 0.0;
    double r_max = 0.0;
    double discount = 0.0;
    int substate_size = 0;
    int surviving = 0;             // |W = 1|
    double sum_j_h = 0.0;
    double c_h_mu = 0.0;
    double bias_is = 0.0;          // 0 for the unbiased estimator variants
    std::int64_t n_states = 0;     // |X|, for the robust variant
    double v_max_h = 0.0;          // for the robust variant
};

namespace detail {
inline double marginalization_tail(double inner_scale, const BoundInputs& in) {
    const double inner = in.delta / inner_scale - in.c_h_mu;
    if (inner <= 0.0) return 1.0;  // vacuous regime
    const double exponent = -inner * inner * static_cast<double>(in.h_mu) / (4.5 * static_cast<double>(in.t_mix));
    return std::clamp(2.0 * std::exp(exponent), 0.0, 1.0);
}
}  // namespace detail

/// Tail probability of the empirical-marginalization error exceeding delta.
/// Returns 1 when the slack is too small for the bound to say anything.
inline double marginalization_term(const BoundInputs& in) {
    const double denom = std::pow(static_cast<double>(in.substate_size), in.surviving) * in.sum_j_h;
    if (!(denom > 0.0)) return 1.0;
    return detail::marginalization_tail(denom, in);
}

struct BoundResult {
    double epsilon_prime = 0.0;   // deterministic truncation-plus-bias slack
    double epsilon_total = 0.0;   // delta + epsilon_prime
    double marginalization = 0.0;
    double sampling = 0.0;
    double probability = 0.0;     // clamped sum of the two tails
};

/// Composite tail bound for the per-realization estimate: the
/// marginalization tail (at the delta/2 split) plus the Hoeffding tail.
inline BoundResult realization_bound(const BoundInputs& in) {
    BoundResult out;
    out.epsilon_prime = std::pow(in.discount, in.horizon) / (1.0 - in.discount) * in.r_max + in.bias_is;
    out.epsilon_total = in.delta + out.epsilon_prime;
    const double denom = 2.0 * std::pow(static_cast<double>(in.substate_size), in.surviving) * in.sum_j_h;
    out.marginalization = denom > 0.0 ? detail::marginalization_tail(denom, in) : 1.0;
    out.sampling = hoeffding_term(in.n_traj, in.delta, in.j_max);
    out.probability = std::clamp(out.marginalization + out.sampling, 0.0, 1.0);
    return out;
}

/// Same composite with the whole-state-space denominator |X| V_H^max, which
/// covers every realization at once.
inline BoundResult robust_bound(const BoundInputs& in) {
    BoundResult out;
    out.epsilon_prime = std::pow(in.discount, in.horizon) / (1.0 - in.discount) * in.r_max + in.bias_is;
    out.epsilon_total = in.delta + out.epsilon_prime;
    const double denom = 2.0 * static_cast<double>(in.n_states) * in.v_max_h;
    out.marginalization = denom > 0.0 ? detail::marginalization_tail(denom, in) : 1.0;
    out.sampling = hoeffding_term(in.n_traj, in.delta, in.j_max);
    out.probability = std::clamp(out.marginalization + out.sampling, 0.0, 1.0);
    return out;
}

struct TvErrorEstimate {
    double mean = 0.0;
    double half_width = 0.0;   // 95% normal-approximation interval
    double conservative = 0.0; // mean + half_width, suitable as C(H_mu)
    int n_reps = 0;
};

/// Monte Carlo estimate of the expected total-variation distance between the
/// empirical distribution of an H_mu-step stationary-start rollout and the
/// true stationary distribution. The conservative value (estimate plus the
/// 95% half-width) stands in for the concentration constant the composite
/// bounds need.
inline TvErrorEstimate estimate_tv_error(const FlatMdp& mdp, const TabularPolicy& policy, std::int64_t h_mu,
                                         int n_reps, std::uint64_t seed, int workers = 1) {
    if (n_reps < 2) throw ModelError("estimating a half-width needs n_reps >= 2");
    const MarkovChain chain = induced_chain(mdp, policy);
    const std::vector<double> mu = stationary_distribution(chain);

    std::vector<double> distances(n_reps, 0.0);
    parallel_for(0, n_reps, workers, [&](std::int64_t rep) {
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
        index_t state = sample_categorical(mu, rng.next_double());
        std::vector<double> freq(static_cast<std::size_t>(mdp.n_states), 0.0);
        for (std::int64_t t = 0; t < h_mu; ++t) {
            freq[state] += 1.0;
            const std::vector<double> action_row = policy.row(state);
            const index_t action = sample_categorical(action_row, rng.next_double());
            state = sample_categorical(mdp.row(state, action), rng.next_double());
        }
        double tv = 0.0;
        for (index_t x = 0; x < mdp.n_states; ++x)
            tv += std::abs(freq[x] / static_cast<double>(h_mu) - mu[x]);
        distances[rep] = 0.5 * tv;
    });

    TvErrorEstimate out;
    out.n_reps = n_reps;
    for (double d : distances) out.mean += d;
    out.mean /= n_reps;
    double variance = 0.0;
    for (double d : distances) variance += (d - out.mean) * (d - out.mean);
    variance /= (n_reps - 1);
    out.half_width = 1.959963984540054 * std::sqrt(variance / n_reps);
    out.conservative = out.mean + out.half_width;
    return out;
}

} // namespace madrop
