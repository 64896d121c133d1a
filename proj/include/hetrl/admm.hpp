#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <iosfwd>
#include <vector>

#include "hetrl/moment.hpp"
#include "hetrl/penalty.hpp"

namespace hetrl {

struct ADMMConfig {
    double rho = 1.0;
    double eps_primal = 1e-4;
    int max_iters = 2000;

    enum class Init { PerTrajectoryRidge, Pooled, Zeros };
    Init init = Init::PerTrajectoryRidge;
    double ridge_eps = 1e-6;

    int threads = 0;
    std::ostream* trace = nullptr; // one JSON line per iteration when set

    void validate() const;
};

ADMMConfig::Init parse_admm_init(const std::string& name);

// beta: one JM column per trajectory. delta/nu: one JM column per pair,
// pairs (i,j), i<j, in lexicographic order.
struct ADMMState {
    Eigen::MatrixXd beta;
    Eigen::MatrixXd delta;
    Eigen::MatrixXd nu;
    int iterations = 0;
    std::vector<double> residual_history;
};

struct ADMMDiagnostics {
    int iterations = 0;
    double final_residual = 0.0;
    bool converged = false;
    std::vector<double> residual_trace;
    std::vector<double> objective_trace;
};

struct ADMMResult {
    Eigen::MatrixXd beta;
    ADMMDiagnostics diag;
};

// ADMM for the fused objective
//   ||G(beta)||^2 + (1/N^2) sum_{i<j} p(||beta_i - beta_j||/sqrt(JM), lambda)
// in scaled form: each pair contributes (c/2)||beta_i - beta_j - delta_ij
// + nu_ij/rho||^2 to the beta-subproblem with c = rho/(JM N^2), the printed
// dual update nu += rho*(beta_i - beta_j - delta_ij) being the matching
// scaled-dual convention.
class FusedADMM {
public:
    FusedADMM(const MomentSystem& sys, PenaltyConfig penalty, ADMMConfig cfg);

    int num_pairs() const { return static_cast<int>(pairs_.size()); }
    static int pair_index(int i, int j, int n) {
        return i * n - i * (i + 1) / 2 + (j - i - 1);
    }
    const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

    ADMMState init_state() const;
    // Warm start: delta from the pairwise differences of beta0, nu = 0.
    ADMMState init_state(const Eigen::MatrixXd& beta0) const;

    // Exact solve of the beta-subproblem. The coupling matrix
    // bdiag(H_i + cN I) - c (11^T (x) I) is eliminated through the
    // aggregate S = sum_j beta_j, which solves the JM x JM system
    // ((1/N) sum_i K_i H_i) S = sum_i K_i rhs_i with K_i = (H_i + cN I)^-1.
    void beta_update(ADMMState& state) const;
    void delta_update(ADMMState& state) const;
    void dual_update(ADMMState& state) const;

    // max over pairs of ||beta_i - beta_j - delta_ij||_2
    double primal_residual(const ADMMState& state) const;
    double objective(const Eigen::MatrixXd& beta) const;

    ADMMResult solve() const;
    ADMMResult solve_from(ADMMState state) const;

    // Default initial coefficients per cfg.init (exposed so callers can
    // reuse the ridge solution).
    Eigen::MatrixXd initial_beta() const;

private:
    const MomentSystem* sys_;
    PenaltyConfig penalty_;
    ADMMConfig cfg_;
    int n_ = 0;
    int jm_ = 0;
    double c_ = 0.0; // rho/(JM N^2)
    std::vector<std::pair<int, int>> pairs_;
    std::vector<Eigen::MatrixXd> H_;                // 2 c_G^2 A_i^T A_i
    Eigen::MatrixXd g_;                             // columns 2 c_G^2 A_i^T b_i
    std::vector<Eigen::LLT<Eigen::MatrixXd>> block_; // H_i + cN I
    Eigen::PartialPivLU<Eigen::MatrixXd> agg_;       // (1/N) sum K_i H_i
};

} // namespace hetrl
