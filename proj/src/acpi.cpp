#include "hetrl/acpi.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hetrl/errors.hpp"

namespace hetrl {
namespace {

// Per-reference-point quantities reused across optimizer iterations:
// q (M x |R|) action values and f (p_pol x |R|) policy features.
struct ImprovementWorkspace {
    Eigen::MatrixXd q;
    Eigen::MatrixXd f;

    ImprovementWorkspace(const FeatureContext& ctx, const Eigen::VectorXd& theta,
                         const std::vector<Eigen::VectorXd>& reference,
                         const SoftmaxPolicy& policy) {
        const int M = ctx.num_actions();
        const int J = ctx.basis_dim();
        const int R = static_cast<int>(reference.size());
        q.resize(M, R);
        f.resize(policy.alpha().cols(), R);
        for (int r = 0; r < R; ++r) {
            const Eigen::VectorXd phi_x = phi(ctx.spec(), reference[r]);
            for (int a = 0; a < M; ++a)
                q(a, r) = theta.segment(static_cast<Eigen::Index>(a) * J, J)
                              .dot(phi_x);
            f.col(r) = policy.features(reference[r]);
        }
    }

    // probs column r = softmax over logits [alpha * f_r; 0].
    Eigen::MatrixXd probs(const Eigen::MatrixXd& alpha) const {
        const int M = static_cast<int>(alpha.rows()) + 1;
        const int R = static_cast<int>(f.cols());
        Eigen::MatrixXd p(M, R);
        p.topRows(M - 1) = alpha * f;
        p.bottomRows(1).setZero();
        for (int r = 0; r < R; ++r) {
            Eigen::VectorXd col = p.col(r);
            const double shift = col.maxCoeff();
            col = (col.array() - shift).exp();
            p.col(r) = col / col.sum();
        }
        return p;
    }

    double objective(const Eigen::MatrixXd& alpha) const {
        const Eigen::MatrixXd p = probs(alpha);
        return (p.array() * q.array()).sum() / static_cast<double>(f.cols());
    }

    Eigen::MatrixXd gradient(const Eigen::MatrixXd& alpha) const {
        const Eigen::MatrixXd p = probs(alpha);
        const int M = static_cast<int>(p.rows());
        const int R = static_cast<int>(f.cols());
        // weight(j, r) = pi(j) * (q_j - sum_a pi(a) q_a)
        Eigen::MatrixXd weight(M - 1, R);
        const Eigen::RowVectorXd vbar = (p.array() * q.array()).colwise().sum();
        for (int j = 0; j < M - 1; ++j)
            weight.row(j) =
                p.row(j).array() * (q.row(j).array() - vbar.array());
        return weight * f.transpose() / static_cast<double>(R);
    }
};

} // namespace

void OptimizerConfig::validate() const {
    if (max_iters < 1) throw ConfigError("optimizer max_iters must be >= 1");
    if (grad_tol <= 0.0) throw ConfigError("optimizer gradient tolerance must be > 0");
    if (init_step <= 0.0) throw ConfigError("optimizer step size must be > 0");
    if (!(backtrack > 0.0 && backtrack < 1.0))
        throw ConfigError("optimizer backtrack factor must lie in (0,1)");
    if (max_backtracks < 1) throw ConfigError("optimizer max_backtracks must be >= 1");
}

double policy_objective(const FeatureContext& ctx, const Eigen::VectorXd& theta,
                        const std::vector<Eigen::VectorXd>& reference,
                        const SoftmaxPolicy& policy) {
    return ImprovementWorkspace(ctx, theta, reference, policy)
        .objective(policy.alpha());
}

Eigen::MatrixXd policy_gradient(const FeatureContext& ctx,
                                const Eigen::VectorXd& theta,
                                const std::vector<Eigen::VectorXd>& reference,
                                const SoftmaxPolicy& policy) {
    return ImprovementWorkspace(ctx, theta, reference, policy)
        .gradient(policy.alpha());
}

ImprovedPolicy improve_policy(const FeatureContext& ctx,
                              const Eigen::VectorXd& theta,
                              const std::vector<Eigen::VectorXd>& reference,
                              SoftmaxPolicy init, const OptimizerConfig& opt) {
    opt.validate();
    if (reference.empty())
        throw DataError("policy improvement needs reference states");
    if (theta.size() != ctx.feature_dim())
        throw DataError("theta must have length JM");

    const ImprovementWorkspace ws(ctx, theta, reference, init);
    Eigen::MatrixXd alpha = init.alpha();
    double value = ws.objective(alpha);

    ImprovedPolicy out{init, value, 0.0, 0, false};
    for (int it = 1; it <= opt.max_iters; ++it) {
        const Eigen::MatrixXd grad = ws.gradient(alpha);
        out.grad_norm = grad.cwiseAbs().maxCoeff();
        out.iterations = it;
        if (out.grad_norm < opt.grad_tol) {
            out.converged = true;
            break;
        }
        // Armijo backtracking on the ascent direction.
        const double g2 = grad.squaredNorm();
        double step = opt.init_step;
        bool accepted = false;
        for (int bt = 0; bt < opt.max_backtracks; ++bt) {
            const Eigen::MatrixXd cand = alpha + step * grad;
            const double cand_value = ws.objective(cand);
            if (cand_value >= value + 1e-4 * step * g2) {
                alpha = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= opt.backtrack;
        }
        if (!accepted) break; // no ascent found at the smallest step
    }
    out.policy = SoftmaxPolicy(alpha, init.intercept());
    out.objective = value;
    return out;
}

void ACPIConfig::validate() const {
    if (max_outer < 1) throw ConfigError("acpi max_outer must be >= 1");
    if (tol_v <= 0.0) throw ConfigError("acpi value tolerance must be > 0");
    if (force_k < 0) throw ConfigError("acpi force_k must be >= 0");
    optimizer.validate();
    admm.validate();
    penalty.validate();
}

namespace {

// The previous group contributing the most members to new group k; policy
// coefficients and warm starts are inherited along this map.
int majority_parent(const std::vector<int>& members,
                    const std::vector<int>& prev_labels, int prev_k) {
    std::vector<int> votes(prev_k, 0);
    for (int i : members) ++votes.at(prev_labels[i]);
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                            votes.begin());
}

} // namespace

ACPIResult run_acpi(const TrajectoryBatch& batch, const BasisSpec& basis,
                    const ACPIConfig& cfg,
                    const std::vector<Eigen::VectorXd>& reference) {
    cfg.validate();
    batch.validate();
    if (reference.empty()) throw DataError("acpi needs reference states");

    const int N = batch.size();
    FeatureContext ctx(basis, batch.num_actions);
    const std::vector<int> everyone = [N] {
        std::vector<int> v(N);
        for (int i = 0; i < N; ++i) v[i] = i;
        return v;
    }();

    GroupingConfig grouping = cfg.grouping;
    if (cfg.force_k >= 2) {
        grouping.mode = GroupingConfig::Mode::KMeans;
        grouping.k = cfg.force_k;
    }
    if (grouping.mode == GroupingConfig::Mode::FusedGraph && grouping.tau < 0.0)
        grouping.tau = 0.5 * cfg.penalty.lambda;

    std::vector<SoftmaxPolicy> policies{SoftmaxPolicy::zeros(
        batch.num_actions, batch.state_dim, cfg.policy_intercept)};
    std::vector<int> labels(N, 0);
    std::vector<double> values;
    Eigen::MatrixXd warm; // previous clustered coefficients, JM x N

    ACPIResult result;
    for (int outer = 1; outer <= cfg.max_outer; ++outer) {
        const int K = static_cast<int>(policies.size());

        // Evaluation: per-group ACPE under that group's policy. Every
        // trajectory keeps the coefficients fitted under its own group's run.
        std::vector<MomentSystem> systems;
        systems.reserve(K);
        Eigen::MatrixXd coeffs(ctx.feature_dim(), N);
        for (int k = 0; k < K; ++k) {
            systems.push_back(
                assemble(batch, ctx, Policy(policies[k]), cfg.threads));
            Eigen::MatrixXd beta_k;
            if (cfg.force_k == 1) {
                const Eigen::VectorXd pooled = solve_group(systems[k], everyone);
                beta_k.resize(ctx.feature_dim(), N);
                beta_k.colwise() = pooled;
            } else {
                FusedADMM solver(systems[k], cfg.penalty, cfg.admm);
                const ADMMResult r =
                    warm.size() > 0 ? solver.solve_from(solver.init_state(warm))
                                    : solver.solve();
                beta_k = r.beta;
            }
            for (int i = 0; i < N; ++i)
                if (labels[i] == k) coeffs.col(i) = beta_k.col(i);
        }

        // Re-cluster all N trajectories on their own-group coefficients.
        GroupAssignment assignment =
            cfg.force_k == 1
                ? [&] {
                      GroupAssignment a;
                      a.num_groups = 1;
                      a.labels.assign(N, 0);
                      return a;
                  }()
                : detect_groups(coeffs, grouping);
        assignment.canonicalize();
        const auto members = assignment.members();
        const int new_k = assignment.num_groups;

        // theta per new group from its majority parent's system, then the
        // policy-improvement step.
        std::vector<SoftmaxPolicy> new_policies;
        std::vector<double> new_values(new_k, 0.0);
        new_policies.reserve(new_k);
        for (int k = 0; k < new_k; ++k) {
            const int parent = majority_parent(members[k], labels, K);
            const Eigen::VectorXd theta =
                solve_group(systems[parent], members[k]);
            ImprovedPolicy imp = improve_policy(ctx, theta, reference,
                                                policies[parent], cfg.optimizer);
            new_policies.push_back(std::move(imp.policy));
            new_values[k] = imp.objective;
        }

        ACPIterate it;
        it.iteration = outer;
        it.num_groups = new_k;
        it.labels = assignment.labels;
        it.values = new_values;
        if (cfg.trace) {
            nlohmann::json line;
            line["iter"] = it.iteration;
            line["K"] = it.num_groups;
            line["labels"] = it.labels;
            line["V_R"] = it.values;
            *cfg.trace << line.dump() << std::endl; // flush: crash-safe trace
        }
        result.trace.push_back(it);
        result.iterations = outer;

        bool converged = false;
        if (outer > 1 && assignment.labels == labels &&
            static_cast<int>(values.size()) == new_k) {
            double dv = 0.0;
            for (int k = 0; k < new_k; ++k)
                dv = std::max(dv, std::abs(new_values[k] - values[k]));
            converged = dv < cfg.tol_v;
        }

        labels = assignment.labels;
        policies = std::move(new_policies);
        values = std::move(new_values);
        warm = coeffs;

        if (converged) {
            result.converged = true;
            break;
        }
    }

    GroupAssignment final_assignment;
    final_assignment.num_groups = static_cast<int>(policies.size());
    final_assignment.labels = labels;
    const auto members = final_assignment.members();
    for (std::size_t k = 0; k < policies.size(); ++k) {
        ACPIGroup g{policies[k], values[k], members[k]};
        result.groups.push_back(std::move(g));
    }
    return result;
}

nlohmann::json acpi_result_to_json(const ACPIResult& result) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : result.groups) {
        nlohmann::json jg;
        jg["alpha"] = policy_to_json(Policy(g.policy))["alpha"];
        jg["intercept"] = g.policy.intercept();
        jg["V_R"] = g.value;
        jg["members"] = g.members;
        groups.push_back(std::move(jg));
    }
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& it : result.trace) {
        nlohmann::json jt;
        jt["iter"] = it.iteration;
        jt["K"] = it.num_groups;
        jt["labels"] = it.labels;
        jt["V_R"] = it.values;
        trace.push_back(std::move(jt));
    }
    nlohmann::json j;
    j["K"] = result.groups.size();
    j["converged"] = result.converged;
    j["iterations"] = result.iterations;
    j["groups"] = std::move(groups);
    j["iters"] = std::move(trace);
    return j;
}

} // namespace hetrl
