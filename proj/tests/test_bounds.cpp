#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "madrop/bounds.hpp"
#include "madrop/core.hpp"
#include "madrop/random_system.hpp"
#include "madrop/solve.hpp"
#include "test_util.hpp"

using namespace madrop;

TEST_CASE("value cap", "[bounds]") {
    SECTION("one step caps at the largest reward") {
        CHECK(v_max_bound(3.5, 0.9, 1) == Catch::Approx(3.5).margin(1e-15));
    }
    SECTION("two steps at gamma one half") {
        CHECK(v_max_bound(2.0, 0.5, 2) == Catch::Approx(3.0).margin(1e-15));
    }
    SECTION("caps the exact finite-horizon optimum") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 121, 0.1);
        const DropoutModel model{std::vector<double>{0.6, 0.8}};
        const FlatMdp flat = flatten(mdp, model);
        const auto j_h = optimal_finite_values(flat, 10);
        const double cap = v_max_bound(mdp, model, 10);
        for (double v : j_h) CHECK(v <= cap + 1e-12);
    }
}

TEST_CASE("sampling tail term", "[bounds]") {
    SECTION("zero slack is the uninformative pair constant") {
        CHECK(hoeffding_term(100, 0.0, 1.0) == 2.0);
    }
    SECTION("doubling the dataset squares the halved term") {
        const double one = hoeffding_term(250, 0.3, 2.0);
        const double two = hoeffding_term(500, 0.3, 2.0);
        CHECK(std::log(two) - std::log(2.0) ==
              Catch::Approx(2.0 * (std::log(one) - std::log(2.0))).margin(1e-12));
    }
    SECTION("direct substitution") {
        CHECK(hoeffding_term(100, 3.0, 3.0) == Catch::Approx(2.0 * std::exp(-25.0)).margin(1e-18));
    }
}

TEST_CASE("marginalization tail term", "[bounds]") {
    BoundInputs in;
    in.substate_size = 2;
    in.surviving = 1;
    in.sum_j_h = 4.0;
    in.h_mu = 1000;
    in.t_mix = 2;

    SECTION("vacuous when the slack cannot exceed the bias") {
        in.delta = 0.1;
        in.c_h_mu = 10.0;
        CHECK(marginalization_term(in) == 1.0);
    }
    SECTION("decreases along an H_mu grid") {
        in.delta = 4.0;
        in.c_h_mu = 0.0;
        double previous = 1.0;
        for (std::int64_t h_mu : {1000, 10000, 100000}) {
            in.h_mu = h_mu;
            const double term = marginalization_term(in);
            CHECK(term < previous);
            previous = term;
        }
    }
    SECTION("arithmetic substitution") {
        BoundInputs direct;
        direct.substate_size = 1;
        direct.surviving = 0;
        direct.sum_j_h = 1.0;
        direct.delta = 0.1;
        direct.c_h_mu = 0.0;
        direct.h_mu = 45000;
        direct.t_mix = 1;
        CHECK(marginalization_term(direct) == Catch::Approx(2.0 * std::exp(-100.0)).margin(1e-50));
    }
}

TEST_CASE("composite realization bound", "[bounds]") {
    BoundInputs in;
    in.delta = 1.0;
    in.n_traj = 200;
    in.j_max = 2.0;
    in.r_max = 1.5;
    in.discount = 0.9;
    in.substate_size = 2;
    in.surviving = 1;
    in.sum_j_h = 3.0;
    in.c_h_mu = 0.0;
    in.h_mu = 100000;
    in.t_mix = 3;

    SECTION("truncation slack decays to the estimator bias") {
        in.bias_is = 0.25;
        double previous = 1e300;
        for (int horizon : {10, 100, 1000}) {
            in.horizon = horizon;
            const BoundResult bound = realization_bound(in);
            CHECK(bound.epsilon_prime < previous);
            previous = bound.epsilon_prime;
        }
        in.horizon = 1000;
        CHECK(realization_bound(in).epsilon_prime == Catch::Approx(0.25).margin(1e-12));
    }
    SECTION("with a huge stationary sample only the sampling term remains") {
        in.horizon = 50;
        in.bias_is = 0.0;
        in.h_mu = 1000000000;
        const BoundResult bound = realization_bound(in);
        CHECK(bound.marginalization < 1e-12);
        CHECK(bound.probability ==
              Catch::Approx(hoeffding_term(in.n_traj, in.delta, in.j_max)).margin(1e-12));
    }
    SECTION("probability is clamped to one in hopeless regimes") {
        in.horizon = 50;
        in.delta = 1e-9;
        const BoundResult bound = realization_bound(in);
        CHECK(bound.probability == 1.0);
    }
    SECTION("monotone in the dataset size and the stationary horizon") {
        in.horizon = 50;
        in.delta = 1.5;
        double previous = 2.0;
        for (std::int64_t d : {100, 400, 1600}) {
            in.n_traj = d;
            const double p = realization_bound(in).probability;
            CHECK(p <= previous);
            previous = p;
        }
        previous = 2.0;
        in.n_traj = 200;
        for (std::int64_t h : {10000, 100000, 1000000}) {
            in.h_mu = h;
            const double p = realization_bound(in).probability;
            CHECK(p <= previous);
            previous = p;
        }
    }
}

TEST_CASE("robust bound against the per-realization bound", "[bounds]") {
    BoundInputs in;
    in.delta = 2.0;
    in.horizon = 30;
    in.n_traj = 500;
    in.j_max = 2.5;
    in.r_max = 1.0;
    in.discount = 0.9;
    in.substate_size = 2;
    in.h_mu = 50000;
    in.t_mix = 4;
    in.c_h_mu = 1e-3;
    in.n_states = 8;  // three agents of two substates
    in.v_max_h = v_max_bound(1.0, 0.9, 30);

    SECTION("dominates the per-realization bound whenever the cap holds") {
        SplitMix64 rng(7);
        for (int trial = 0; trial < 50; ++trial) {
            in.surviving = 1 + static_cast<int>(rng.next() % 3);
            const int dropped = 3 - in.surviving;
            const double cap = std::pow(2.0, dropped) * in.v_max_h;
            in.sum_j_h = rng.next_double() * cap;  // respects the proof's cap
            CHECK(robust_bound(in).probability >= realization_bound(in).probability - 1e-15);
        }
    }
    SECTION("denominators coincide when every agent survives at the cap") {
        in.surviving = 3;
        in.sum_j_h = in.v_max_h;  // single empty dropped profile at its cap
        CHECK(robust_bound(in).probability ==
              Catch::Approx(realization_bound(in).probability).margin(1e-15));
    }
    SECTION("vacuous regime returns one") {
        in.delta = 1e-12;
        CHECK(robust_bound(in).probability == 1.0);
    }
}

TEST_CASE("stationary sampling error estimate", "[bounds]") {
    SECTION("matches the binomial mean absolute deviation on an i.i.d. chain") {
        // Rows all equal to mu = (0.3, 0.7): the empirical distribution is a
        // scaled binomial and E d_TV = E|p_hat - 0.3|, with the classical
        // closed form 2 nu (1-p) P(X = nu) / n at nu = ceil(n p).
        const FactoredMdp mdp = test_util::two_state_chain(0.3, 0.7, 0.3, 0.7, 0.0, 0.0, 0.5);
        const FlatMdp flat = flatten(mdp);
        const std::int64_t h_mu = 100000;
        const double p = 0.3;
        const double nu = std::ceil(h_mu * p);
        const double log_pmf = std::lgamma(h_mu + 1.0) - std::lgamma(nu + 1.0) -
                               std::lgamma(h_mu - nu + 1.0) + nu * std::log(p) +
                               (h_mu - nu) * std::log(1.0 - p);
        const double exact = 2.0 * nu * (1.0 - p) * std::exp(log_pmf) / h_mu;

        const TvErrorEstimate estimate =
            estimate_tv_error(flat, TabularPolicy::uniform(mdp), h_mu, 24, 77, 4);
        CHECK(std::abs(estimate.mean - exact) <= estimate.half_width + 1e-6);
        CHECK(estimate.conservative >= estimate.mean);
    }
    SECTION("estimates shrink as the horizon grows") {
        const FactoredMdp mdp = random_system(2, 2, 2, 0.9, 123, 0.15);
        const FlatMdp flat = flatten(mdp);
        const TabularPolicy policy = random_joint_policy(mdp, 124);
        double previous = 1e300;
        for (std::int64_t h_mu : {1000, 10000, 100000}) {
            const TvErrorEstimate estimate = estimate_tv_error(flat, policy, h_mu, 12, 88, 4);
            CHECK(estimate.mean < previous);
            previous = estimate.mean;
        }
    }
    SECTION("a single repetition is rejected") {
        const FactoredMdp mdp = random_system(1, 2, 2, 0.9, 125, 0.2);
        CHECK_THROWS_AS(estimate_tv_error(flatten(mdp), TabularPolicy::uniform(mdp), 100, 1, 5),
                        ModelError);
    }
}
