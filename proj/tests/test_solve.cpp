#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "madrop/core.hpp"
#include "madrop/random_system.hpp"
#include "madrop/solve.hpp"
#include "test_util.hpp"

using namespace madrop;

namespace {

std::vector<double> lift(const std::vector<double>& reduced, const SubspaceSplit& split, index_t n_states) {
    std::vector<double> out(static_cast<std::size_t>(n_states));
    for (index_t x = 0; x < n_states; ++x) out[x] = reduced[split.project_kept(x)];
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace

TEST_CASE("value iteration on the swap chain", "[solve]") {
    const FactoredMdp mdp = test_util::swap_chain(0.5);
    const SolveReport report = value_iteration(flatten(mdp), 1e-12);
    REQUIRE(report.converged);
    // (I - gamma P) V = r with P the swap gives V = (4/3, 2/3).
    CHECK(report.values[0] == Catch::Approx(4.0 / 3.0).margin(1e-11));
    CHECK(report.values[1] == Catch::Approx(2.0 / 3.0).margin(1e-11));
}

TEST_CASE("value iteration trivial cases", "[solve]") {
    SECTION("zero rewards give zero values") {
        FactoredMdp mdp = random_system(2, 2, 2, 0.9, 41, 0.1);
        FlatMdp flat = flatten(mdp);
        std::fill(flat.reward.begin(), flat.reward.end(), 0.0);
        const SolveReport report = value_iteration(flat);
        for (double v : report.values) CHECK(v == 0.0);
    }
    SECTION("self loop accumulates the geometric series") {
        const SolveReport report = value_iteration(flatten(test_util::self_loop(0.9)), 1e-12);
        CHECK(report.values[0] == Catch::Approx(10.0).margin(1e-9));
    }
    SECTION("greedy ties break to the lowest action index") {
        // two identical actions
        const FactoredMdp mdp(1, {2}, {2}, {{0}}, {{0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
                              {{1.0, 1.0, 0.0, 0.0}}, 0.9);
        const SolveReport report = value_iteration(flatten(mdp));
        CHECK(report.greedy[0] == 0);
        CHECK(report.greedy[1] == 0);
    }
}

TEST_CASE("value iteration residuals contract at rate gamma", "[solve]") {
    const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 43, 0.1);
    const SolveReport report = value_iteration(flatten(mdp), 1e-10);
    REQUIRE(report.residual_history.size() >= 11);
    for (std::size_t k = 0; k + 1 < report.residual_history.size() && k < 10; ++k) {
        CHECK(report.residual_history[k + 1] <= 0.9 * report.residual_history[k] + 1e-12);
    }
}

TEST_CASE("exact policy evaluation", "[solve]") {
    SECTION("constant rewards give r / (1 - gamma) for any policy") {
        const FactoredMdp mdp = test_util::two_state_chain(0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 0.5);
        const auto values = evaluate_policy(flatten(mdp), TabularPolicy::uniform(mdp));
        CHECK(values[0] == Catch::Approx(2.0).margin(1e-12));
        CHECK(values[1] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("deterministic swap chain") {
        const auto values = evaluate_policy(flatten(test_util::swap_chain(0.5)),
                                            TabularPolicy::uniform(test_util::swap_chain(0.5)));
        CHECK(values[0] == Catch::Approx(4.0 / 3.0).margin(1e-12));
        CHECK(values[1] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    }
    SECTION("constant reward c gives c / (1 - gamma) under a random policy") {
        FactoredMdp mdp = random_system(2, 2, 2, 0.8, 47, 0.1);
        FlatMdp flat = flatten(mdp);
        std::fill(flat.reward.begin(), flat.reward.end(), 3.0);
        const auto values = evaluate_policy(flat, random_joint_policy(mdp, 3));
        for (double v : values) CHECK(v == Catch::Approx(15.0).margin(1e-10));
    }
}

TEST_CASE("stationary distributions", "[solve]") {
    SECTION("doubly stochastic chains are uniform") {
        const MarkovChain chain{2, {0.3, 0.7, 0.7, 0.3}};
        const auto mu = stationary_distribution(chain);
        CHECK(mu[0] == Catch::Approx(0.5).margin(1e-12));
        CHECK(mu[1] == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("asymmetric two-state chain") {
        // mu P = mu with sum 1 solves to (5/6, 1/6)
        const MarkovChain chain{2, {0.9, 0.1, 0.5, 0.5}};
        const auto mu = stationary_distribution(chain);
        CHECK(mu[0] == Catch::Approx(5.0 / 6.0).margin(1e-10));
        CHECK(mu[1] == Catch::Approx(1.0 / 6.0).margin(1e-10));
    }
    SECTION("periodic chains are rejected") {
        const MarkovChain chain{2, {0.0, 1.0, 1.0, 0.0}};
        CHECK_THROWS_AS(stationary_distribution(chain), ErgodicityError);
    }
    SECTION("reducible chains are rejected") {
        const MarkovChain chain{2, {1.0, 0.0, 0.0, 1.0}};
        CHECK_THROWS_AS(stationary_distribution(chain), ErgodicityError);
    }
}

TEST_CASE("mixing times", "[solve]") {
    SECTION("already-mixed chain") {
        const MarkovChain chain{2, {0.3, 0.7, 0.3, 0.7}};
        const auto mu = stationary_distribution(chain);
        CHECK(mixing_time(chain, mu) == 1);
    }
    SECTION("symmetric two-state chains have closed-form distance |1-2p|^t / 2") {
        const MarkovChain fast{2, {0.6, 0.4, 0.4, 0.6}};
        CHECK(mixing_time(fast, stationary_distribution(fast)) == 1);

        const MarkovChain slow{2, {0.95, 0.05, 0.05, 0.95}};
        // smallest t with 0.9^t / 2 <= 1/4
        CHECK(mixing_time(slow, stationary_distribution(slow)) == 7);
    }
}

TEST_CASE("factored value iteration", "[solve]") {
    SECTION("single agent matches the flat solver") {
        const FactoredMdp mdp = random_system(1, 3, 2, 0.9, 51, 0.1);
        const FactoredSolveReport factored = factored_value_iteration(mdp, 1e-12);
        const SolveReport flat = value_iteration(flatten(mdp), 1e-12);
        CHECK(max_abs_diff(factored.joint.values, flat.values) < 1e-8);
        CHECK(factored.joint.greedy == flat.greedy);
    }
    SECTION("decoupled agents solve independently and sum") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 53, 0.1, ParentStructure::decoupled);
        const FactoredSolveReport factored = factored_value_iteration(mdp, 1e-12);
        REQUIRE(factored.components.size() == 2);

        // Oracle: each agent as its own single-agent system.
        for (int n = 0; n < 2; ++n) {
            const FactoredMdp solo(1, {2}, {2}, {{0}}, {mdp.factor_tables()[n]}, {mdp.reward_tables()[n]},
                                   mdp.discount());
            const SolveReport expected = value_iteration(flatten(solo), 1e-12);
            CHECK(max_abs_diff(factored.components[n].values, expected.values) < 1e-9);
        }
        const SolveReport flat = value_iteration(flatten(mdp), 1e-12);
        CHECK(max_abs_diff(factored.joint.values, flat.values) < 1e-8);
    }
    SECTION("coupled agents form one block matching the flat solver") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 11, 0.1);
        const FactoredSolveReport factored = factored_value_iteration(mdp, 1e-12);
        REQUIRE(factored.components.size() == 1);
        const SolveReport flat = value_iteration(flatten(mdp), 1e-12);
        CHECK(max_abs_diff(factored.joint.values, flat.values) < 1e-8);
    }
}

TEST_CASE("realization values", "[solve]") {
    const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 13, 0.1);
    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));

    SECTION("all agents active recovers plain policy evaluation") {
        const TabularPolicy policy = random_product_policy(mdp, 5);
        const ValueTable table =
            realization_value(mdp, DropoutMask::all(2), policy, Horizon::infinite, 0, transition);
        const auto expected = evaluate_policy(flatten(mdp, DropoutMask::all(2), transition), policy);
        CHECK(max_abs_diff(table.values, expected) < 1e-12);
    }
    SECTION("no agents active gives the zero scalar") {
        const TabularPolicy empty = TabularPolicy::product({}, {}, {});
        const ValueTable table =
            realization_value(mdp, DropoutMask::none(2), empty, Horizon::infinite, 0, transition);
        REQUIRE(table.values.size() == 1);
        CHECK(table.values[0] == 0.0);
    }
    SECTION("marginalization matches an independent recomputation") {
        const DropoutMask mask({std::vector<bool>{true, false}});
        const TabularPolicy reduced = TabularPolicy::uniform(MixedRadixIndexer({2}), MixedRadixIndexer({2}));
        const ValueTable table = realization_value(mdp, mask, reduced, Horizon::infinite, 0, transition);

        // Oracle: evaluate the augmented policy on the masked-reward system,
        // fetch the stationary law, and marginalize by hand.
        const TabularPolicy augmented = augment_policy(reduced, mask, mdp);
        const FlatMdp masked = flatten(mdp, mask, transition);
        const auto fictitious = evaluate_policy(masked, augmented);
        const auto mu = stationary_distribution(induced_chain(masked, augmented));
        for (int x0 = 0; x0 < 2; ++x0) {
            double expected = 0.0;
            for (int x1 = 0; x1 < 2; ++x1) {
                const double mu_x1 = mu[mdp.states().encode(std::vector<int>{0, x1})] +
                                     mu[mdp.states().encode(std::vector<int>{1, x1})];
                expected += mu_x1 * fictitious[mdp.states().encode(std::vector<int>{x0, x1})];
            }
            CHECK(table.values[x0] == Catch::Approx(expected).margin(1e-9));
        }
    }
}

TEST_CASE("robust values", "[solve]") {
    const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 13, 0.1);
    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const TabularPolicy policy = random_joint_policy(mdp, 7);

    SECTION("certain survival reduces to the intact system") {
        const RobustValueReport report =
            robust_value(mdp, DropoutModel::uniform(2, 1.0), policy, 20, transition);
        const auto expected = evaluate_policy(flatten(mdp, DropoutMask::all(2), transition), policy);
        CHECK(max_abs_diff(report.system_value, expected) < 1e-12);
        CHECK(max_abs_diff(report.marginalized, expected) < 1e-12);
    }
    SECTION("certain dropout gives zero") {
        const RobustValueReport report =
            robust_value(mdp, DropoutModel::uniform(2, 0.0), policy, 20, transition);
        for (double v : report.system_value) CHECK(v == Catch::Approx(0.0).margin(1e-14));
        for (double v : report.marginalized) CHECK(v == Catch::Approx(0.0).margin(1e-14));
    }
    SECTION("identical survival probability scales the intact value") {
        const RobustValueReport report =
            robust_value(mdp, DropoutModel::uniform(2, 0.5), policy, 20, transition);
        const auto pre = evaluate_policy(flatten(mdp, DropoutMask::all(2), transition), policy);
        for (index_t x = 0; x < mdp.n_states(); ++x)
            CHECK(report.system_value[x] == Catch::Approx(0.5 * pre[x]).margin(1e-10));

        // The marginalized output is the mask-expected stationary average of
        // the same function; recompute it independently.
        const auto mu =
            stationary_distribution(induced_chain(flatten(mdp, DropoutModel::uniform(2, 0.5), transition),
                                                  policy));
        std::vector<double> expected(4, 0.0);
        for (const DropoutMask& mask : enumerate_masks(2)) {
            const double weight = mask_probability(mask, DropoutModel::uniform(2, 0.5));
            const SubspaceSplit split(mdp.states(), mask);
            for (index_t x = 0; x < 4; ++x) {
                double averaged = 0.0;
                for (index_t d = 0; d < split.n_rest(); ++d) {
                    double marginal = 0.0;
                    for (index_t z = 0; z < 4; ++z)
                        if (split.project_rest(z) == d) marginal += mu[z];
                    averaged += marginal * report.system_value[split.combine(split.project_kept(x), d)];
                }
                expected[x] += weight * averaged;
            }
        }
        CHECK(max_abs_diff(report.marginalized, expected) < 1e-12);
    }
}

TEST_CASE("robust optimum", "[solve]") {
    SECTION("certain survival matches the intact optimum, including ties") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 29, 0.1);
        const SolveReport robust = robust_optimal(mdp, DropoutModel::uniform(2, 1.0), 1e-12);
        const SolveReport pre = value_iteration(flatten(mdp), 1e-12);
        CHECK(robust.greedy == pre.greedy);
        CHECK(max_abs_diff(robust.values, pre.values) < 1e-9);
    }
    SECTION("certain dropout returns the lowest-index policy and zero values") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 29, 0.1);
        const SolveReport robust = robust_optimal(mdp, DropoutModel::uniform(2, 0.0));
        for (int a : robust.greedy) CHECK(a == 0);
        for (double v : robust.values) CHECK(v == 0.0);
    }
    SECTION("matches the per-realization brute force on a decoupled system") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 29, 0.1, ParentStructure::decoupled);
        auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
        const DropoutModel model = DropoutModel::uniform(2, 0.5);
        const SolveReport robust = robust_optimal(mdp, model, 1e-12, transition);

        std::vector<double> brute(static_cast<std::size_t>(mdp.n_states()), 0.0);
        for (const DropoutMask& mask : enumerate_masks(2)) {
            const double weight = mask_probability(mask, model);
            const RealizationOptimum optimum = realization_optimal(mdp, mask, 1e-12, transition);
            const SubspaceSplit split(mdp.states(), mask);
            for (index_t x = 0; x < mdp.n_states(); ++x)
                brute[x] += weight * optimum.value.values[split.project_kept(x)];
        }
        CHECK(max_abs_diff(robust.values, brute) < 1e-8);
    }
}

TEST_CASE("robust-system value under the mask expectation equals one solve on decoupled systems",
          "[solve]") {
    for (std::uint64_t seed : {61ull, 62ull, 63ull}) {
        const FactoredMdp mdp = random_system(3, 2, 2, 0.9, seed, 0.1, ParentStructure::decoupled);
        auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
        std::vector<double> survival{0.3, 0.8, 0.55};
        const DropoutModel model{survival};
        const TabularPolicy policy = random_product_policy(mdp, seed + 100);

        const auto single_solve = evaluate_policy(flatten(mdp, model, transition), policy);
        std::vector<double> brute(static_cast<std::size_t>(mdp.n_states()), 0.0);
        for (const DropoutMask& mask : enumerate_masks(3)) {
            const double weight = mask_probability(mask, model);
            if (weight == 0.0) continue;
            const ValueTable per_mask =
                realization_value(mdp, mask, policy.restrict(mask), Horizon::infinite, 0, transition);
            const SubspaceSplit split(mdp.states(), mask);
            for (index_t x = 0; x < mdp.n_states(); ++x)
                brute[x] += weight * per_mask.values[split.project_kept(x)];
        }
        CHECK(max_abs_diff(single_solve, brute) < 1e-8);
    }
}

TEST_CASE("robust optimum dominates sampled policies on the robust system", "[solve]") {
    const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 67, 0.1);
    auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
    const DropoutModel model{std::vector<double>{0.7, 0.4}};
    const FlatMdp robust_system = flatten(mdp, model, transition);
    const SolveReport optimum = value_iteration(robust_system, 1e-12);
    for (int i = 0; i < 100; ++i) {
        const auto values = evaluate_policy(robust_system, random_joint_policy(mdp, 1000 + i));
        for (index_t x = 0; x < mdp.n_states(); ++x) CHECK(optimum.values[x] >= values[x] - 1e-9);
    }
}

TEST_CASE("optimality gap bound", "[solve]") {
    SECTION("beta = 1 gives zero gap and zero bound") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 71, 0.1, ParentStructure::decoupled);
        const OptGapReport report = optimality_gap_bound(mdp, 1.0);
        for (double b : report.bound) CHECK(std::abs(b) < 1e-9);
        for (double g : report.gap) CHECK(std::abs(g) < 1e-9);
        CHECK(report.satisfied());
    }
    SECTION("beta = 0 makes the bound the uniform-policy shortfall, attained") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 73, 0.1, ParentStructure::decoupled);
        const OptGapReport report = optimality_gap_bound(mdp, 0.0);
        for (index_t x = 0; x < mdp.n_states(); ++x) {
            CHECK(report.bound[x] ==
                  Catch::Approx(report.optimal_values[x] - report.uniform_values[x]).margin(1e-12));
            CHECK(report.gap[x] == Catch::Approx(report.bound[x]).margin(1e-9));
        }
        CHECK(report.satisfied());
    }
    SECTION("gap stays within the bound across a beta grid") {
        const FactoredMdp mdp = random_system(3, 2, 2, 0.9, 79, 0.1, ParentStructure::decoupled);
        auto transition = std::make_shared<const std::vector<double>>(build_joint_transition(mdp));
        for (int i = 0; i <= 10; ++i) {
            const OptGapReport report = optimality_gap_bound(mdp, 0.1 * i, 1e-11, 20, transition);
            CHECK(report.satisfied());
        }
    }
}

TEST_CASE("marginalized intact optimum violates the realization Bellman equation", "[solve]") {
    // Two agents. Agent 0 collects reward when its substate is 1 and moves
    // there reliably only when its action matches agent 1's substate. Agent 1
    // flips its substate on its own. Dropping agent 1 marginalizes away the
    // information agent 0's optimal actions rely on.
    std::vector<double> f0(16, 0.0);
    for (int x0 = 0; x0 < 2; ++x0) {
        for (int x1 = 0; x1 < 2; ++x1) {
            for (int a = 0; a < 2; ++a) {
                const int profile = x0 * 2 + x1;
                const double to_one = (a == x1) ? 0.95 : 0.05;
                f0[(profile * 2 + a) * 2 + 0] = 1.0 - to_one;
                f0[(profile * 2 + a) * 2 + 1] = to_one;
            }
        }
    }
    const std::vector<double> f1{0.1, 0.9, 0.9, 0.1};  // agent 1 mostly flips
    const FactoredMdp mdp(2, {2, 2}, {2, 1}, {{0, 1}, {1}}, {f0, f1},
                          {{0.0, 0.0, 1.0, 1.0}, {0.0, 0.0}}, 0.9);

    const FlatMdp flat = flatten(mdp);
    const SolveReport solved = value_iteration(flat, 1e-12);
    const TabularPolicy greedy = TabularPolicy::deterministic(mdp.states(), mdp.actions(), solved.greedy);
    const auto mu = stationary_distribution(induced_chain(flat, greedy));

    const DropoutMask mask({std::vector<bool>{true, false}});
    const SubspaceSplit split(mdp.states(), mask);

    // Marginal of the dropped agent's substate under the intact optimum.
    std::vector<double> dropped_marginal(2, 0.0);
    for (index_t x = 0; x < 4; ++x) dropped_marginal[split.project_rest(x)] += mu[x];

    // Candidate realization values: marginalize the intact optimal values.
    std::vector<double> candidate(2, 0.0);
    for (index_t xbar = 0; xbar < 2; ++xbar)
        for (index_t d = 0; d < 2; ++d)
            candidate[xbar] += dropped_marginal[d] * solved.values[split.combine(xbar, d)];

    // Realization dynamics: agent 0's factor with the dropped substate
    // averaged out under the same marginal.
    std::vector<double> reduced_p(2 * 2 * 2, 0.0);
    for (int x0 = 0; x0 < 2; ++x0)
        for (int a = 0; a < 2; ++a)
            for (int y = 0; y < 2; ++y)
                for (int x1 = 0; x1 < 2; ++x1)
                    reduced_p[(x0 * 2 + a) * 2 + y] +=
                        dropped_marginal[x1] * mdp.factor(0, static_cast<index_t>(x0) * 2 + x1, a, y);

    double worst_residual = 0.0;
    for (int x0 = 0; x0 < 2; ++x0) {
        double best = -1e300;
        for (int a = 0; a < 2; ++a) {
            double q = mdp.agent_reward(0, x0, a);
            for (int y = 0; y < 2; ++y) q += 0.9 * reduced_p[(x0 * 2 + a) * 2 + y] * candidate[y];
            best = std::max(best, q);
        }
        worst_residual = std::max(worst_residual, std::abs(candidate[x0] - best));
    }
    CHECK(worst_residual > 1e-3);
}
