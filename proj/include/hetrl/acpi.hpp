#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <vector>

#include "hetrl/admm.hpp"
#include "hetrl/basis.hpp"
#include "hetrl/grouping.hpp"
#include "hetrl/penalty.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/trajectory.hpp"
#include "hetrl/vendor_json.hpp"

namespace hetrl {

struct OptimizerConfig {
    int max_iters = 200;
    double grad_tol = 1e-6;
    double init_step = 1.0;
    double backtrack = 0.5;
    int max_backtracks = 40;

    void validate() const;
};

struct ImprovedPolicy {
    SoftmaxPolicy policy;
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Gradient ascent with backtracking line search on the surrogate value
//   F(alpha) = (1/|R|) sum_x sum_a pi(a|x;alpha) q_a(x),  q_a(x) = phi(x)^T theta_a,
// theta held fixed. The softmax gradient reduces to
//   dF/dalpha_j = (1/|R|) sum_x pi(j|x) (q_j(x) - sum_a pi(a|x) q_a(x)) f(x).
// Accepted steps never decrease F.
ImprovedPolicy improve_policy(const FeatureContext& ctx,
                              const Eigen::VectorXd& theta,
                              const std::vector<Eigen::VectorXd>& reference,
                              SoftmaxPolicy init, const OptimizerConfig& opt);

// Objective/gradient exposed for finite-difference verification.
double policy_objective(const FeatureContext& ctx, const Eigen::VectorXd& theta,
                        const std::vector<Eigen::VectorXd>& reference,
                        const SoftmaxPolicy& policy);
Eigen::MatrixXd policy_gradient(const FeatureContext& ctx,
                                const Eigen::VectorXd& theta,
                                const std::vector<Eigen::VectorXd>& reference,
                                const SoftmaxPolicy& policy);

struct ACPIConfig {
    int max_outer = 100;
    double tol_v = 1e-4;
    // force_k = 0: cluster per the grouping config (K discovered);
    // force_k = 1: pooled single-group path; force_k >= 2: kmeans with that K.
    int force_k = 0;
    bool policy_intercept = true;
    OptimizerConfig optimizer;
    GroupingConfig grouping;
    ADMMConfig admm;
    PenaltyConfig penalty;
    int threads = 0;
    // One JSON line per outer iteration, flushed as written, so an
    // interrupted run still leaves a readable trace prefix.
    std::ostream* trace = nullptr;

    void validate() const;
};

struct ACPIterate {
    int iteration = 0;
    int num_groups = 0;
    std::vector<int> labels;
    std::vector<double> values;
};

struct ACPIGroup {
    SoftmaxPolicy policy;
    double value = 0.0;
    std::vector<int> members;
};

struct ACPIResult {
    std::vector<ACPIGroup> groups;
    std::vector<ACPIterate> trace;
    int iterations = 0;
    bool converged = false;
};

ACPIResult run_acpi(const TrajectoryBatch& batch, const BasisSpec& basis,
                    const ACPIConfig& cfg,
                    const std::vector<Eigen::VectorXd>& reference);

nlohmann::json acpi_result_to_json(const ACPIResult& result);

} // namespace hetrl
