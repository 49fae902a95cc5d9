#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "madrop/experiments.hpp"
#include "madrop/random_system.hpp"

using namespace madrop;

namespace {

std::string render(const CsvTable& table) {
    std::ostringstream out;
    table.write(out);
    return out.str();
}

} // namespace

TEST_CASE("random system generation", "[experiments]") {
    SECTION("full smoothing gives uniform rows") {
        const FactoredMdp mdp = random_system(2, 3, 2, 0.9, 11, 1.0);
        for (int n = 0; n < 2; ++n)
            for (index_t ps = 0; ps < mdp.parent_states(n).size(); ++ps)
                for (int a = 0; a < 2; ++a)
                    for (int y = 0; y < 3; ++y)
                        CHECK(mdp.factor(n, ps, a, y) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("entries respect the smoothing floor") {
        const FactoredMdp mdp = random_system(3, 2, 2, 0.9, 13, 0.2);
        for (int n = 0; n < 3; ++n)
            for (index_t ps = 0; ps < mdp.parent_states(n).size(); ++ps)
                for (int a = 0; a < 2; ++a)
                    for (int y = 0; y < 2; ++y) CHECK(mdp.factor(n, ps, a, y) >= 0.1 - 1e-15);
    }
    SECTION("equal seeds agree, different seeds differ") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const FactoredMdp a = random_system(2, 2, 2, 0.9, seed, 0.1);
            const FactoredMdp b = random_system(2, 2, 2, 0.9, seed, 0.1);
            const FactoredMdp c = random_system(2, 2, 2, 0.9, seed + 1000, 0.1);
            CHECK(a.factor_tables() == b.factor_tables());
            CHECK(a.reward_tables() == b.reward_tables());
            CHECK(a.factor_tables() != c.factor_tables());
        }
    }
    SECTION("decoupled structure has self parents only") {
        const FactoredMdp mdp = random_system(3, 2, 2, 0.9, 17, 0.1, ParentStructure::decoupled);
        CHECK(mdp.decoupled());
        for (int n = 0; n < 3; ++n) CHECK(mdp.parent_sets()[n] == std::vector<int>{n});
    }
}

TEST_CASE("figure 1 coincides for certain survival and an intact realization", "[experiments]") {
    Fig1Config config;
    config.n_agents = 2;
    config.beta = 1.0;
    config.realized_mask = {true, true};
    config.t_drop = 20;
    config.t_total = 40;
    config.check_seeds = 8;
    config.seed = 5;
    const Fig1Result result = run_fig1(config);
    for (const auto& row : result.table.rows) {
        CHECK(row[1] == row[2]);  // pre-optimal vs post-oracle rewards
        CHECK(row[1] == row[3]);  // pre-optimal vs robust rewards
    }
    CHECK(result.ordering_ok);
}

TEST_CASE("figure 1 on a zero-reward system emits zero curves", "[experiments]") {
    const FactoredMdp base = random_system(2, 2, 2, 0.9, 6, 0.1);
    std::vector<std::vector<double>> zero_rewards(2, std::vector<double>(4, 0.0));
    Fig1Config config;
    config.system = std::make_shared<const FactoredMdp>(base.n_agents(), base.substate_sizes(),
                                                        base.action_sizes(), base.parent_sets(),
                                                        base.factor_tables(), zero_rewards, base.discount());
    config.t_drop = 10;
    config.t_total = 20;
    config.check_seeds = 4;
    const Fig1Result result = run_fig1(config);
    for (const auto& row : result.table.rows)
        for (std::size_t c = 1; c < row.size(); ++c) CHECK(row[c] == 0.0);
}

TEST_CASE("figure 2 endpoints and determinism", "[experiments]") {
    Fig2Config config;
    config.n_agents = 2;
    config.substate_size = 2;
    config.action_size = 2;
    config.seed = 7;
    const Fig2Result result = run_fig2(config);
    REQUIRE(result.table.rows.size() == 11);
    CHECK(result.all_within);

    // beta = 0: the bound is the uniform-policy shortfall and the gap attains it
    const auto& first = result.table.rows.front();
    CHECK(first[0] == 0.0);
    CHECK(first[1] == Catch::Approx(first[3]).margin(1e-9));  // mean gap == mean bound
    // beta = 1: both vanish
    const auto& last = result.table.rows.back();
    CHECK(last[0] == 1.0);
    CHECK(last[1] == Catch::Approx(0.0).margin(1e-9));
    CHECK(last[3] == Catch::Approx(0.0).margin(1e-9));

    const Fig2Result again = run_fig2(config);
    CHECK(render(result.table) == render(again.table));
}

TEST_CASE("figure 3 smoke run keeps losses nonnegative", "[experiments]") {
    Fig3Config config;
    config.n_systems = 3;
    config.n_agents = 3;
    config.seed = 9;
    config.workers = 4;
    const Fig3Result result = run_fig3(config);
    REQUIRE(result.table.rows.size() == 4);  // k = 0..3
    for (const auto& row : result.table.rows) {
        CHECK(row[2] >= -1e-9);  // pre-optimal mean loss
        CHECK(row[5] >= -1e-9);  // robust mean loss
        CHECK(row[3] <= row[4] + 1e-12);
        CHECK(row[6] <= row[7] + 1e-12);
    }
    const Fig3Result again = run_fig3(config);
    CHECK(render(result.table) == render(again.table));
}

TEST_CASE("figure 4 estimates land inside the requested bound", "[experiments]") {
    Fig4Config config;
    config.seed = 10;
    config.n_traj = 64;
    config.horizon = 25;
    config.h_mu = 4000;
    config.direct_steps = 400;
    config.workers = 4;
    const Fig4Result result = run_fig4(config);
    CHECK(result.within_bound);
    CHECK(result.t95 < config.direct_steps);
    REQUIRE(result.is_estimate.size() == result.oracle.size());

    const Fig4Result again = run_fig4(config);
    CHECK(render(result.table) == render(again.table));
}
