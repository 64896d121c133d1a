#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hetrl/admm.hpp"
#include "hetrl/basis.hpp"
#include "hetrl/penalty.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/trajectory.hpp"
#include "hetrl/vendor_json.hpp"

namespace hetrl {

// Two-group synthetic environment. States are 2-d, actions binary (printed
// {0,1}), dynamics x' = diag(c(2a-1), c(1-2a)) x + noise, rewards
// x^T b_k - cost*(2a-1), behavior policy Bernoulli(1/2), x0 ~ N(0, I).
struct SimSpec {
    int n_per_group = 100;
    int horizon = 10;
    double gamma = 0.6;
    std::uint64_t seed = 1;

    double dyn_coef = 0.75;
    double noise_sd = 0.5; // per coordinate; covariance I/4
    Eigen::Vector2d b1{2.0, -1.0};
    Eigen::Vector2d b2{-2.0, 1.0};
    double action_cost = 0.25;

    static constexpr int num_groups = 2;
    static constexpr int state_dim = 2;
    static constexpr int num_actions = 2;

    void validate() const;
    const Eigen::Vector2d& reward_vector(int group) const;
};

// One transition of the dynamics; printed_action is in {0,1}.
Eigen::Vector2d sim_step(const SimSpec& spec, const Eigen::Vector2d& x,
                         int printed_action, const Eigen::Vector2d& noise);
double sim_reward(const SimSpec& spec, const Eigen::Vector2d& x,
                  int printed_action, int group);

// Batch under the Bernoulli(1/2) behavior policy plus the true group label
// per trajectory (group 0 first, then group 1). Reproducible from the seed
// for any thread count.
std::pair<TrajectoryBatch, std::vector<int>> generate(const SimSpec& spec,
                                                      int threads = 0);

struct MCValue {
    double value = 0.0;
    double se = 0.0;
    int horizon = 0;
    int rollouts = 0;
};

// Monte-Carlo discounted return from x0 ~ N(0, I) following `policy` on
// group `group`'s rewards. horizon <= 0 picks the smallest H with
// gamma^H * R_max < 1e-6 (R_max probed from a 1000-step warmup rollout).
MCValue mc_true_value(const SimSpec& spec, const Policy& policy, int group,
                      int n_rollouts, int horizon = 0, int threads = 0);

// -------- experiment harnesses --------

struct CoverageSettings {
    PenaltyConfig penalty;
    ADMMConfig admm;
    // Sieve the estimator fits (default: identity with intercept). Spline
    // boxes are resolved from each replication's own data.
    BasisRequest basis;
    int kmeans_restarts = 10;
    int reps = 200;
    double level = 0.95;
    int truth_rollouts = 200000;
    int reference_size = 2000;
    int threads = 0;

    void validate() const;
};

struct CoverageCell {
    int n_per_group = 0;
    int horizon = 0;
    // index 0/1 = true group
    double coverage[2] = {0.0, 0.0};
    double pooled_coverage[2] = {0.0, 0.0};
    double mean_width[2] = {0.0, 0.0};
    double pooled_mean_width[2] = {0.0, 0.0};
    int failures = 0;
    int reps_used = 0;
    bool valid = true;
};

struct CoverageReport {
    std::vector<CoverageCell> cells;
    double truth[2] = {0.0, 0.0};
    double truth_se[2] = {0.0, 0.0};
    int truth_horizon = 0;
    double level = 0.95;
};

// CI coverage of the grouped estimator vs the pooled baseline over a grid of
// (n per group, horizon) cells, `reps` replications each. Reference states
// are drawn fresh from the initial-state law each replication.
CoverageReport coverage_experiment(const SimSpec& base, const std::vector<int>& ns,
                                   const std::vector<int>& ts,
                                   const CoverageSettings& settings);

std::string coverage_csv(const CoverageReport& report);
nlohmann::json coverage_json(const CoverageReport& report);

struct PolicyValueSettings {
    int rollouts = 500;
    int horizon = 50;
    int reps = 10;
    int threads = 0;
};

struct PolicyValueEntry {
    std::string policy_name;
    int group = 0; // true group the rollouts used
    double value = 0.0;
    double se = 0.0; // across-repetition standard error
};

// MC value of each named policy on each group (full cross table), averaged
// over `reps` independent repetitions of `rollouts` rollouts.
std::vector<PolicyValueEntry> policy_value_experiment(
    const SimSpec& spec, const std::vector<std::pair<std::string, Policy>>& policies,
    const PolicyValueSettings& settings);

std::string policy_value_csv(const std::vector<PolicyValueEntry>& table);
nlohmann::json policy_value_json(const std::vector<PolicyValueEntry>& table);

} // namespace hetrl
