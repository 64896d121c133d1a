#pragma once

#include <Eigen/Core>
#include <variant>

#include "vendor_json.hpp"

namespace hetrl {

// Softmax policy with action M as the reference category:
//   pi(j|x) = exp(f(x)^T alpha_j) / (1 + sum_{j'<M} exp(f(x)^T alpha_j'))
//   pi(M|x) = 1 / (1 + sum_{j'<M} exp(f(x)^T alpha_j'))
// where f(x) is x, or (1, x) when the intercept flag is set.
class SoftmaxPolicy {
public:
    SoftmaxPolicy(Eigen::MatrixXd alpha, bool intercept);

    static SoftmaxPolicy zeros(int num_actions, int state_dim, bool intercept);

    int num_actions() const { return static_cast<int>(alpha_.rows()) + 1; }
    int state_dim() const {
        return static_cast<int>(alpha_.cols()) - (intercept_ ? 1 : 0);
    }
    bool intercept() const { return intercept_; }
    const Eigen::MatrixXd& alpha() const { return alpha_; }

    Eigen::VectorXd features(const Eigen::VectorXd& x) const;
    Eigen::VectorXd probs(const Eigen::VectorXd& x) const;

private:
    Eigen::MatrixXd alpha_; // (M-1) x p_pol
    bool intercept_;
};

// Fixed decision rules used by the simulation study.
class TabularPolicy {
public:
    enum class Rule {
        // a=1 (internal; printed action 0) iff x1 > 0 and x2 > 0, else a=2.
        SimTargetV1,
        Uniform,
    };

    TabularPolicy(Rule rule, int num_actions);

    Rule rule() const { return rule_; }
    int num_actions() const { return num_actions_; }
    Eigen::VectorXd probs(const Eigen::VectorXd& x) const;

private:
    Rule rule_;
    int num_actions_;
};

using Policy = std::variant<SoftmaxPolicy, TabularPolicy>;

Eigen::VectorXd policy_probs(const Policy& policy, const Eigen::VectorXd& x);
int policy_num_actions(const Policy& policy);

nlohmann::json policy_to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

} // namespace hetrl
