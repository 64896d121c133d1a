#include "hetrl/policy.hpp"

#include <cmath>

#include "hetrl/errors.hpp"

namespace hetrl {

SoftmaxPolicy::SoftmaxPolicy(Eigen::MatrixXd alpha, bool intercept)
    : alpha_(std::move(alpha)), intercept_(intercept) {
    if (alpha_.rows() < 1)
        throw ConfigError("softmax policy needs at least one parameter row (M >= 2)");
    if (alpha_.cols() < (intercept_ ? 2 : 1))
        throw ConfigError("softmax policy parameter rows are too short");
}

SoftmaxPolicy SoftmaxPolicy::zeros(int num_actions, int state_dim, bool intercept) {
    if (num_actions < 2) throw ConfigError("softmax policy needs M >= 2");
    const int p_pol = state_dim + (intercept ? 1 : 0);
    return SoftmaxPolicy(Eigen::MatrixXd::Zero(num_actions - 1, p_pol), intercept);
}

Eigen::VectorXd SoftmaxPolicy::features(const Eigen::VectorXd& x) const {
    if (x.size() != state_dim())
        throw DataError("state dimension does not match the policy");
    if (!intercept_) return x;
    Eigen::VectorXd f(x.size() + 1);
    f(0) = 1.0;
    f.tail(x.size()) = x;
    return f;
}

Eigen::VectorXd SoftmaxPolicy::probs(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd f = features(x);
    const int M = num_actions();
    // Logits with the reference action pinned at 0, shifted by the max so
    // exp never overflows.
    Eigen::VectorXd logits(M);
    logits.head(M - 1) = alpha_ * f;
    logits(M - 1) = 0.0;
    const double shift = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - shift).exp();
    return w / w.sum();
}

TabularPolicy::TabularPolicy(Rule rule, int num_actions)
    : rule_(rule), num_actions_(num_actions) {
    if (num_actions_ < 1) throw ConfigError("tabular policy needs M >= 1");
    if (rule_ == Rule::SimTargetV1 && num_actions_ != 2)
        throw ConfigError("rule sim_target_v1 is defined for M = 2");
}

Eigen::VectorXd TabularPolicy::probs(const Eigen::VectorXd& x) const {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(num_actions_);
    switch (rule_) {
    case Rule::SimTargetV1:
        if (x.size() < 2) throw DataError("sim_target_v1 needs a 2-d state");
        if (x(0) > 0.0 && x(1) > 0.0)
            p(0) = 1.0;
        else
            p(1) = 1.0;
        break;
    case Rule::Uniform:
        p.setConstant(1.0 / num_actions_);
        break;
    }
    return p;
}

Eigen::VectorXd policy_probs(const Policy& policy, const Eigen::VectorXd& x) {
    return std::visit([&](const auto& p) { return p.probs(x); }, policy);
}

int policy_num_actions(const Policy& policy) {
    return std::visit([](const auto& p) { return p.num_actions(); }, policy);
}

nlohmann::json policy_to_json(const Policy& policy) {
    nlohmann::json j;
    if (const auto* sp = std::get_if<SoftmaxPolicy>(&policy)) {
        j["type"] = "softmax";
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < sp->alpha().rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < sp->alpha().cols(); ++c)
                row.push_back(sp->alpha()(r, c));
            rows.push_back(std::move(row));
        }
        j["alpha"] = std::move(rows);
        j["intercept"] = sp->intercept();
    } else {
        const auto& tp = std::get<TabularPolicy>(policy);
        j["type"] = "tabular";
        j["rule"] = tp.rule() == TabularPolicy::Rule::SimTargetV1 ? "sim_target_v1"
                                                                  : "uniform";
        j["num_actions"] = tp.num_actions();
    }
    return j;
}

Policy policy_from_json(const nlohmann::json& j) {
    const std::string type = j.value("type", "");
    if (type == "softmax") {
        const auto& rows = j.at("alpha");
        if (!rows.is_array() || rows.empty())
            throw DataError("softmax policy JSON needs a non-empty alpha matrix");
        const std::size_t cols = rows.front().size();
        Eigen::MatrixXd alpha(rows.size(), cols);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != cols)
                throw DataError("softmax policy alpha rows have unequal lengths");
            for (std::size_t c = 0; c < cols; ++c)
                alpha(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    rows[r][c].get<double>();
        }
        return SoftmaxPolicy(std::move(alpha), j.value("intercept", true));
    }
    if (type == "tabular") {
        const std::string rule = j.value("rule", "");
        if (rule == "sim_target_v1")
            return TabularPolicy(TabularPolicy::Rule::SimTargetV1,
                                 j.value("num_actions", 2));
        if (rule == "uniform") {
            if (!j.contains("num_actions"))
                throw DataError("uniform tabular policy JSON needs num_actions");
            return TabularPolicy(TabularPolicy::Rule::Uniform,
                                 j["num_actions"].get<int>());
        }
        throw DataError("unknown tabular policy rule '" + rule + "'");
    }
    throw DataError("unknown policy type '" + type + "'");
}

} // namespace hetrl
