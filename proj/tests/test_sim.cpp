#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>

#include "hetrl/errors.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/sim.hpp"

using namespace hetrl;

namespace {
Policy uniform2() { return TabularPolicy(TabularPolicy::Rule::Uniform, 2); }
Policy quadrant() { return TabularPolicy(TabularPolicy::Rule::SimTargetV1, 2); }
} // namespace

TEST_CASE("environment settings are validated") {
    SimSpec spec;
    CHECK_NOTHROW(spec.validate());
    SUBCASE("population size") {
        spec.n_per_group = 0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("horizon") {
        spec.horizon = 0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("discount") {
        spec.gamma = 1.0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        spec.gamma = -0.1;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("noise") {
        spec.noise_sd = -1.0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("degenerate groups") {
        spec.b2 = spec.b1;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("reward vectors by group") {
        CHECK(spec.reward_vector(0) == Eigen::Vector2d(2.0, -1.0));
        CHECK(spec.reward_vector(1) == Eigen::Vector2d(-2.0, 1.0));
        CHECK_THROWS_AS(spec.reward_vector(2), ConfigError);
    }
}

TEST_CASE("one transition follows the sign-flipping linear dynamics exactly") {
    SimSpec spec;
    const Eigen::Vector2d x(1.0, 1.0);
    const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    // action 1: first coordinate keeps its sign, second flips.
    CHECK((sim_step(spec, x, 1, zero) - Eigen::Vector2d(0.75, -0.75)).norm() == 0.0);
    // action 0: the mirror image.
    CHECK((sim_step(spec, x, 0, zero) - Eigen::Vector2d(-0.75, 0.75)).norm() == 0.0);
    // noise enters additively
    CHECK((sim_step(spec, x, 1, Eigen::Vector2d(0.1, -0.2)) -
           Eigen::Vector2d(0.85, -0.95))
              .norm() <= 1e-15);
    // scaling of the dynamics coefficient
    SimSpec half = spec;
    half.dyn_coef = 0.5;
    CHECK((sim_step(half, x, 1, zero) - Eigen::Vector2d(0.5, -0.5)).norm() == 0.0);
}

TEST_CASE("rewards are the group inner product minus the signed action cost") {
    SimSpec spec;
    const Eigen::Vector2d x(1.0, 2.0);
    // group 0: x.(2,-1) = 0, action 1 costs +0.25, action 0 refunds 0.25.
    CHECK(sim_reward(spec, x, 1, 0) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(sim_reward(spec, x, 0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    // group 1 flips the reward vector.
    const Eigen::Vector2d y(1.0, 0.0);
    CHECK(sim_reward(spec, y, 1, 1) == doctest::Approx(-2.25).epsilon(1e-15));
    CHECK(sim_reward(spec, y, 0, 1) == doctest::Approx(-1.75).epsilon(1e-15));
}

TEST_CASE("generated batches are reproducible and independent of threading") {
    SimSpec spec;
    spec.n_per_group = 12;
    spec.horizon = 7;
    spec.seed = 99;
    auto [b1, m1] = generate(spec, 1);
    auto [b2, m2] = generate(spec, 4);
    REQUIRE(b1.trajectories.size() == b2.trajectories.size());
    CHECK(m1 == m2);
    for (std::size_t i = 0; i < b1.trajectories.size(); ++i) {
        const Trajectory& ta = b1.trajectories[i];
        const Trajectory& tb = b2.trajectories[i];
        CHECK(ta.id == tb.id);
        REQUIRE(ta.states.size() == tb.states.size());
        for (std::size_t t = 0; t < ta.states.size(); ++t)
            CHECK(ta.states[t] == tb.states[t]); // bitwise
        CHECK(ta.actions == tb.actions);
        CHECK(ta.rewards == tb.rewards);
    }

    SUBCASE("a different seed changes the draw") {
        SimSpec other = spec;
        other.seed = 100;
        auto [b3, m3] = generate(other, 1);
        CHECK(b3.trajectories[0].states[0] != b1.trajectories[0].states[0]);
    }
}

TEST_CASE("batch layout puts group zero first with the documented shapes") {
    SimSpec spec;
    spec.n_per_group = 10;
    spec.horizon = 6;
    spec.seed = 3;
    auto [batch, membership] = generate(spec, 2);
    REQUIRE(batch.trajectories.size() == 20);
    CHECK(batch.state_dim == 2);
    CHECK(batch.num_actions == 2);
    CHECK(batch.gamma == spec.gamma);
    for (int i = 0; i < 20; ++i)
        CHECK(membership[static_cast<std::size_t>(i)] == (i < 10 ? 0 : 1));
    for (const auto& tr : batch.trajectories) {
        CHECK(tr.length() == 6);
        CHECK(tr.states.size() == 7);
        for (int a : tr.actions) CHECK((a == 1 || a == 2));
    }
    CHECK_NOTHROW(batch.validate());
}

TEST_CASE("logged quantities agree with the closed-form model") {
    SimSpec spec;
    spec.n_per_group = 40;
    spec.horizon = 15;
    spec.seed = 17;
    auto [batch, membership] = generate(spec, 1);

    double action_sum = 0.0;
    int steps = 0;
    double resid_sum = 0.0, resid_sq = 0.0;
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
        const Trajectory& tr = batch.trajectories[i];
        const int group = membership[i];
        for (int t = 0; t < tr.length(); ++t) {
            const int printed = tr.actions[static_cast<std::size_t>(t)] - 1;
            // exact reward recomputation
            CHECK(tr.rewards[static_cast<std::size_t>(t)] ==
                  sim_reward(spec, tr.states[static_cast<std::size_t>(t)], printed,
                             group));
            // transition residual should be the Gaussian innovation
            const Eigen::Vector2d pred = sim_step(
                spec, tr.states[static_cast<std::size_t>(t)], printed,
                Eigen::Vector2d::Zero());
            const Eigen::Vector2d resid =
                tr.states[static_cast<std::size_t>(t) + 1].head<2>() - pred;
            resid_sum += resid(0) + resid(1);
            resid_sq += resid.squaredNorm();
            action_sum += printed;
            ++steps;
        }
    }
    const double n_draws = 2.0 * steps;
    const double mean_resid = resid_sum / n_draws;
    const double var_resid = resid_sq / n_draws;
    CHECK(std::abs(mean_resid) <= 5.0 * 0.5 / std::sqrt(n_draws));
    CHECK(var_resid == doctest::Approx(0.25).epsilon(0.10));
    // behavior policy is a fair coin
    const double se_action = 0.5 / std::sqrt(double(steps));
    CHECK(std::abs(action_sum / steps - 0.5) <= 5.0 * se_action);
}

TEST_CASE("rollout value estimates behave like discounted returns") {
    SimSpec spec;
    spec.seed = 23;

    SUBCASE("no discounting leaves only the one-step expectation, which is zero") {
        SimSpec myopic = spec;
        myopic.gamma = 0.0;
        const MCValue v = mc_true_value(myopic, uniform2(), 0, 20000, 1, 1);
        CHECK(v.rollouts == 20000);
        CHECK(std::abs(v.value) <= 4.0 * v.se);
    }
    SUBCASE("uniform play is value-neutral for both groups") {
        const MCValue v0 = mc_true_value(spec, uniform2(), 0, 20000, 25, 1);
        const MCValue v1 = mc_true_value(spec, uniform2(), 1, 20000, 25, 1);
        CHECK(std::abs(v0.value) <= 4.0 * v0.se);
        CHECK(std::abs(v1.value) <= 4.0 * v1.se);
    }
    SUBCASE("the quadrant rule is costly for group zero and profitable for group one") {
        // Frozen anchors from a 200k-rollout run of this same generator.
        const MCValue v0 = mc_true_value(spec, quadrant(), 0, 20000, 0, 1);
        const MCValue v1 = mc_true_value(spec, quadrant(), 1, 20000, 0, 1);
        CHECK(v0.horizon > 0); // adaptive horizon resolved
        CHECK(v0.value == doctest::Approx(-1.7348).epsilon(0.12));
        CHECK(v1.value == doctest::Approx(1.0694).epsilon(0.12));
    }
    SUBCASE("longer horizons change nothing once the tail is discounted away") {
        const MCValue a = mc_true_value(spec, quadrant(), 0, 20000, 30, 1);
        const MCValue b = mc_true_value(spec, quadrant(), 0, 20000, 50, 1);
        CHECK(std::abs(a.value - b.value) <= 5.0 * std::hypot(a.se, b.se));
    }
    SUBCASE("same seed, same estimate") {
        const MCValue a = mc_true_value(spec, quadrant(), 1, 5000, 20, 2);
        const MCValue b = mc_true_value(spec, quadrant(), 1, 5000, 20, 2);
        CHECK(a.value == b.value);
        CHECK(a.se == b.se);
    }
}

TEST_CASE("policy comparison tables cover every policy-group pair") {
    SimSpec spec;
    spec.seed = 31;
    PolicyValueSettings settings;
    settings.rollouts = 4000;
    settings.horizon = 25;
    settings.reps = 4;
    settings.threads = 1;
    std::vector<std::pair<std::string, Policy>> policies;
    policies.emplace_back("uniform", uniform2());
    policies.emplace_back("quadrant", quadrant());
    const auto entries = policy_value_experiment(spec, policies, settings);
    REQUIRE(entries.size() == 4);

    for (const auto& e : entries) CHECK(e.se > 0.0);
    // uniform rows sit at zero value for both groups
    for (const auto& e : entries)
        if (e.policy_name == "uniform") CHECK(std::abs(e.value) <= 5.0 * e.se);

    const std::string csv = policy_value_csv(entries);
    CHECK(csv.rfind("policy,group,value,se", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    int rows = -1;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);

    const nlohmann::json j = policy_value_json(entries);
    REQUIRE(j.is_array());
    CHECK(j.size() == 4);
    CHECK(j[0].contains("policy"));
    CHECK(j[0].contains("group"));
    CHECK(j[0].contains("value"));
    CHECK(j[0].contains("se"));
}

TEST_CASE("interval experiment settings are validated") {
    CoverageSettings cs;
    CHECK_NOTHROW(cs.validate());
    SUBCASE("replications floor") {
        cs.reps = 10;
        CHECK_THROWS_AS(cs.validate(), ConfigError);
    }
    SUBCASE("level") {
        cs.level = 1.0;
        CHECK_THROWS_AS(cs.validate(), ConfigError);
    }
    SUBCASE("truth rollouts") {
        cs.truth_rollouts = 10;
        CHECK_THROWS_AS(cs.validate(), ConfigError);
    }
    SUBCASE("reference size") {
        cs.reference_size = 0;
        CHECK_THROWS_AS(cs.validate(), ConfigError);
    }
    SUBCASE("restarts") {
        cs.kmeans_restarts = 0;
        CHECK_THROWS_AS(cs.validate(), ConfigError);
    }
}

TEST_CASE("a miniature interval experiment produces a sane report") {
    SimSpec base;
    base.seed = 41;
    CoverageSettings cs;
    cs.reps = 50;
    cs.truth_rollouts = 2000;
    cs.reference_size = 200;
    cs.threads = 1;
    cs.admm.ridge_eps = 0.1;
    cs.admm.max_iters = 400;
    const CoverageReport rep = coverage_experiment(base, {8}, {6}, cs);
    REQUIRE(rep.cells.size() == 1);
    const CoverageCell& cell = rep.cells[0];
    CHECK(cell.n_per_group == 8);
    CHECK(cell.horizon == 6);
    CHECK(rep.truth_horizon > 0);
    CHECK(std::isfinite(rep.truth[0]));
    CHECK(std::isfinite(rep.truth[1]));
    CHECK(cell.reps_used + cell.failures == 50);
    for (int g = 0; g < 2; ++g) {
        if (!cell.valid) continue;
        CHECK(cell.coverage[g] >= 0.0);
        CHECK(cell.coverage[g] <= 1.0);
        CHECK(cell.mean_width[g] > 0.0);
    }

    const std::string csv = coverage_csv(rep);
    CHECK(csv.rfind("n_per_group,horizon,group,", 0) == 0);

    const nlohmann::json j = coverage_json(rep);
    CHECK(j.contains("cells"));
    CHECK(j.contains("truth"));
    CHECK(j.at("level").get<double>() == doctest::Approx(0.95));
}
