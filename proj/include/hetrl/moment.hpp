#pragma once

#include <Eigen/Core>
#include <vector>

#include "hetrl/basis.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/trajectory.hpp"

namespace hetrl {

// Per-trajectory sufficient statistics of the linear Bellman system under a
// fixed target policy. Columns of z_steps/u_next are per-transition feature
// vectors; they are kept because the robust covariance needs per-step
// residuals, not just the aggregated A and b.
struct TrajectoryStats {
    Eigen::MatrixXd A;       // sum_t Z_t (Z_t - gamma*U_{t+1})^T, JM x JM
    Eigen::VectorXd b;       // sum_t Z_t R_t
    Eigen::MatrixXd gram;    // sum_t Z_t Z_t^T
    Eigen::MatrixXd z_steps; // JM x T
    Eigen::MatrixXd u_next;  // JM x T, policy-averaged next-state features
    Eigen::VectorXd rewards; // T
    int steps = 0;
};

struct MomentSystem {
    std::vector<TrajectoryStats> stats;
    double gamma = 0.0;
    int basis_dim = 0;   // J
    int num_actions = 0; // M
    long long total_steps = 0;

    int size() const { return static_cast<int>(stats.size()); }
    int feature_dim() const { return basis_dim * num_actions; }
    // 1/((sum_i T_i) * J); the N of the equal-length case is absorbed into
    // the step total.
    double norm_const() const {
        return 1.0 / (static_cast<double>(total_steps) * basis_dim);
    }
};

MomentSystem assemble(const TrajectoryBatch& batch, const FeatureContext& ctx,
                      const Policy& policy, int threads = 0);

// Coefficients are a JM x N matrix, one column per trajectory.

// Stacked moment vector; block i = norm_const * (b_i - A_i beta_i).
Eigen::VectorXd moment_vector(const MomentSystem& sys, const Eigen::MatrixXd& beta);

// ||moment_vector||^2 and its gradient (JM x N, column i = d/d beta_i).
double bellman_loss(const MomentSystem& sys, const Eigen::MatrixXd& beta);
Eigen::MatrixXd bellman_loss_gradient(const MomentSystem& sys,
                                      const Eigen::MatrixXd& beta);

// Root of the stacked estimating equation (sum_members A_i) theta =
// sum_members b_i. Throws NumericError when the condition number of the
// summed matrix exceeds 1e12.
Eigen::VectorXd solve_group(const MomentSystem& sys,
                            const std::vector<int>& members);

struct SandwichMatrices {
    Eigen::MatrixXd sigma; // (1/NT) sum_members sum_t Z (Z - gamma U)^T
    Eigen::MatrixXd omega; // (1/NT) sum_members sum_t Z Z^T residual^2
};

// Member-only sums with the full-sample normalizer NT = total_steps.
SandwichMatrices sandwich(const MomentSystem& sys, const std::vector<int>& members,
                          const Eigen::VectorXd& theta);

} // namespace hetrl
