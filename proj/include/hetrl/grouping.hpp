#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "hetrl/basis.hpp"
#include "hetrl/moment.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/vendor_json.hpp"

namespace hetrl {

struct GroupAssignment {
    int num_groups = 0;
    std::vector<int> labels; // size N, values in [0, num_groups)

    std::vector<int> sizes() const;
    std::vector<std::vector<int>> members() const;
    // 0/1 membership matrix W (N x K), rows summing to 1.
    Eigen::MatrixXd membership_matrix() const;
    void validate() const;
    // Relabels groups by smallest member index so equal partitions compare
    // equal regardless of label history.
    void canonicalize();
};

struct GroupingConfig {
    enum class Mode { FusedGraph, KMeans };
    Mode mode = Mode::FusedGraph;
    // fused_graph: edge iff ||beta_i - beta_j||/sqrt(JM) <= tau;
    // tau < 0 means derive 0.5*lambda at the call site.
    double tau = -1.0;
    int k = 2;
    int restarts = 10;
    std::uint64_t seed = 0;
};

GroupingConfig parse_grouping(const std::string& grammar);

GroupAssignment detect_groups(const Eigen::MatrixXd& beta,
                              const GroupingConfig& cfg);

// theta per group as columns of a JM x K matrix.
Eigen::MatrixXd average_coefficients(const Eigen::MatrixXd& beta,
                                     const GroupAssignment& assignment);
Eigen::MatrixXd refit_coefficients(const MomentSystem& sys,
                                   const GroupAssignment& assignment);

struct GroupModel {
    GroupAssignment assignment;
    Eigen::MatrixXd theta; // JM x K
    std::vector<SandwichMatrices> sandwiches;
    bool refit = true;
};

enum class ThetaMode { Refit, Average };

GroupModel fit_group_model(const MomentSystem& sys, const Eigen::MatrixXd& beta,
                           const GroupingConfig& grouping, ThetaMode mode);

// Pointwise value reads off the fitted coefficients.
double q_value(const FeatureContext& ctx, const Eigen::VectorXd& theta,
               const Eigen::VectorXd& x, int action);
double v_value(const FeatureContext& ctx, const Policy& policy,
               const Eigen::VectorXd& theta, const Eigen::VectorXd& x);

struct GroupInference {
    double value = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double sigma_condition = 0.0;
};

struct InferenceResult {
    std::vector<GroupInference> groups;
    double level = 0.95;
};

// Integrated value with sandwich CIs:
//   V_R^(k)    = mean over reference of u(pi,x)^T theta_k
//   sigma^2_R  = ubar^T Sigma^-1 Omega Sigma^-T ubar
//   CI         = V_R -+ z_{1-alpha/2} sigma_R / sqrt(total steps)
InferenceResult integrated_value(const MomentSystem& sys, const FeatureContext& ctx,
                                 const Policy& policy, const GroupModel& model,
                                 const std::vector<Eigen::VectorXd>& reference,
                                 double level = 0.95);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

nlohmann::json group_model_to_json(const GroupModel& model,
                                   const InferenceResult& inference);

} // namespace hetrl
