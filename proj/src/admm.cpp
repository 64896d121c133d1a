#include "hetrl/admm.hpp"

#include <cmath>
#include <ostream>

#include "hetrl/errors.hpp"
#include "hetrl/parallel.hpp"

namespace hetrl {

void ADMMConfig::validate() const {
    if (rho <= 0.0) throw ConfigError("admm rho must be > 0");
    if (eps_primal <= 0.0) throw ConfigError("admm tolerance must be > 0");
    if (max_iters < 1) throw ConfigError("admm max_iters must be >= 1");
    if (ridge_eps < 0.0) throw ConfigError("admm ridge epsilon must be >= 0");
}

ADMMConfig::Init parse_admm_init(const std::string& name) {
    if (name == "ridge" || name == "per_trajectory_ridge")
        return ADMMConfig::Init::PerTrajectoryRidge;
    if (name == "pooled") return ADMMConfig::Init::Pooled;
    if (name == "zeros") return ADMMConfig::Init::Zeros;
    throw ConfigError("unknown admm init '" + name +
                      "' (expected ridge, pooled, or zeros)");
}

FusedADMM::FusedADMM(const MomentSystem& sys, PenaltyConfig penalty,
                     ADMMConfig cfg)
    : sys_(&sys), penalty_(std::move(penalty)), cfg_(cfg) {
    cfg_.validate();
    penalty_.validate_prox(cfg_.rho);
    n_ = sys.size();
    jm_ = sys.feature_dim();
    c_ = cfg_.rho / (static_cast<double>(jm_) * n_ * n_);

    pairs_.reserve(static_cast<std::size_t>(n_) * (n_ - 1) / 2);
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) pairs_.emplace_back(i, j);

    const double c2 = 2.0 * sys.norm_const() * sys.norm_const();
    H_.resize(n_);
    g_.resize(jm_, n_);
    block_.resize(n_);
    parallel_for(n_, cfg_.threads, [&](int i) {
        const Eigen::MatrixXd& A = sys.stats[i].A;
        H_[i] = c2 * A.transpose() * A;
        g_.col(i) = c2 * A.transpose() * sys.stats[i].b;
    });

    const double shift = c_ * n_;
    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(jm_, jm_);
    for (int i = 0; i < n_; ++i) {
        Eigen::MatrixXd blk = H_[i];
        blk.diagonal().array() += shift;
        block_[i].compute(blk);
        if (block_[i].info() != Eigen::Success) {
            // H_i is PSD and shift > 0, so failure here means severe
            // conditioning; one jitter retry, then give up.
            blk.diagonal().array() += 1e-10;
            block_[i].compute(blk);
            if (block_[i].info() != Eigen::Success)
                throw NumericError("admm block " + std::to_string(i) +
                                   " is numerically singular");
        }
        // K_i H_i = I - cN K_i, accumulated in product form to avoid the
        // cancellation when H_i << cN.
        agg += block_[i].solve(H_[i]);
    }
    agg /= static_cast<double>(n_);
    agg_.compute(agg);
}

Eigen::MatrixXd FusedADMM::initial_beta() const {
    Eigen::MatrixXd beta(jm_, n_);
    switch (cfg_.init) {
    case ADMMConfig::Init::Zeros:
        beta.setZero();
        break;
    case ADMMConfig::Init::Pooled: {
        Eigen::MatrixXd AtA = Eigen::MatrixXd::Zero(jm_, jm_);
        Eigen::VectorXd Atb = Eigen::VectorXd::Zero(jm_);
        for (int i = 0; i < n_; ++i) {
            AtA += sys_->stats[i].A.transpose() * sys_->stats[i].A;
            Atb += sys_->stats[i].A.transpose() * sys_->stats[i].b;
        }
        AtA.diagonal().array() += cfg_.ridge_eps;
        const Eigen::VectorXd pooled = AtA.ldlt().solve(Atb);
        beta.colwise() = pooled;
        break;
    }
    case ADMMConfig::Init::PerTrajectoryRidge:
        parallel_for(n_, cfg_.threads, [&](int i) {
            Eigen::MatrixXd AtA =
                sys_->stats[i].A.transpose() * sys_->stats[i].A;
            AtA.diagonal().array() += cfg_.ridge_eps;
            beta.col(i) =
                AtA.ldlt().solve(sys_->stats[i].A.transpose() * sys_->stats[i].b);
        });
        break;
    }
    return beta;
}

ADMMState FusedADMM::init_state() const { return init_state(initial_beta()); }

ADMMState FusedADMM::init_state(const Eigen::MatrixXd& beta0) const {
    if (beta0.rows() != jm_ || beta0.cols() != n_)
        throw DataError("warm-start coefficients must be JM x N");
    ADMMState st;
    st.beta = beta0;
    st.delta.resize(jm_, num_pairs());
    st.nu = Eigen::MatrixXd::Zero(jm_, num_pairs());
    for (int q = 0; q < num_pairs(); ++q)
        st.delta.col(q) = beta0.col(pairs_[q].first) - beta0.col(pairs_[q].second);
    return st;
}

void FusedADMM::beta_update(ADMMState& state) const {
    // rhs_i = g_i + c * (sum_{j>i} w_ij - sum_{j<i} w_ji), w = delta - nu/rho.
    // The accumulation stays serial: both endpoint columns of every pair are
    // written, and a fixed order keeps results thread-count independent.
    Eigen::MatrixXd rhs = g_;
    const double inv_rho = 1.0 / cfg_.rho;
    Eigen::VectorXd w(jm_);
    for (int q = 0; q < num_pairs(); ++q) {
        w.noalias() = c_ * state.delta.col(q);
        w.noalias() -= (c_ * inv_rho) * state.nu.col(q);
        rhs.col(pairs_[q].first) += w;
        rhs.col(pairs_[q].second) -= w;
    }

    Eigen::VectorXd y = Eigen::VectorXd::Zero(jm_);
    Eigen::MatrixXd solved(jm_, n_);
    parallel_for(n_, cfg_.threads, [&](int i) {
        solved.col(i) = block_[i].solve(rhs.col(i));
    });
    for (int i = 0; i < n_; ++i) y += solved.col(i);
    const Eigen::VectorXd S = agg_.solve(y);

    parallel_for(n_, cfg_.threads, [&](int i) {
        state.beta.col(i) = block_[i].solve(rhs.col(i) + c_ * S);
    });
}

void FusedADMM::delta_update(ADMMState& state) const {
    const double inv_rho = 1.0 / cfg_.rho;
    const double root = std::sqrt(static_cast<double>(jm_));
    parallel_for(num_pairs(), cfg_.threads, [&](int q) {
        // In-place evaluation of delta_prox on w = beta_i - beta_j + nu/rho;
        // the minimizer is a rescaling of w along its own ray.
        state.delta.col(q) = state.beta.col(pairs_[q].first) -
                             state.beta.col(pairs_[q].second) +
                             inv_rho * state.nu.col(q);
        const double wn = state.delta.col(q).norm();
        if (wn == 0.0) return;
        const double s = penalty_scalar_prox(penalty_, wn / root, cfg_.rho);
        state.delta.col(q) *= s * root / wn;
    });
}

void FusedADMM::dual_update(ADMMState& state) const {
    parallel_for(num_pairs(), cfg_.threads, [&](int q) {
        state.nu.col(q) += cfg_.rho * (state.beta.col(pairs_[q].first) -
                                       state.beta.col(pairs_[q].second) -
                                       state.delta.col(q));
    });
}

double FusedADMM::primal_residual(const ADMMState& state) const {
    double worst = 0.0;
    for (int q = 0; q < num_pairs(); ++q) {
        const double r = (state.beta.col(pairs_[q].first) -
                          state.beta.col(pairs_[q].second) - state.delta.col(q))
                             .norm();
        if (r > worst) worst = r;
    }
    return worst;
}

double FusedADMM::objective(const Eigen::MatrixXd& beta) const {
    const double root = std::sqrt(static_cast<double>(jm_));
    double pen = 0.0;
    for (const auto& [i, j] : pairs_)
        pen += penalty_value(penalty_, (beta.col(i) - beta.col(j)).norm() / root);
    return bellman_loss(*sys_, beta) +
           pen / (static_cast<double>(n_) * n_);
}

ADMMResult FusedADMM::solve() const { return solve_from(init_state()); }

ADMMResult FusedADMM::solve_from(ADMMState state) const {
    ADMMResult out;
    out.diag.residual_trace.reserve(cfg_.max_iters);
    out.diag.objective_trace.reserve(cfg_.max_iters);
    double residual = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd prev_delta = state.delta;
    for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
        beta_update(state);
        delta_update(state);
        dual_update(state);
        residual = primal_residual(state);
        // Wherever the penalty's prox is locally the identity (lambda = 0, or
        // a pair past the MCP/SCAD saturation knee) the delta step copies
        // beta_i - beta_j + nu/rho verbatim and the primal residual collapses
        // to zero no matter how far beta is from stationarity. Convergence is
        // therefore also gated on the dual residual, so that "converged"
        // always means a fixed point of all three updates.
        const double dual_residual =
            num_pairs() == 0
                ? 0.0
                : cfg_.rho *
                      (state.delta - prev_delta).colwise().norm().maxCoeff();
        prev_delta = state.delta;
        const double obj = objective(state.beta);
        state.iterations = iter;
        state.residual_history.push_back(residual);
        out.diag.residual_trace.push_back(residual);
        out.diag.objective_trace.push_back(obj);
        if (cfg_.trace)
            (*cfg_.trace) << "{\"iter\":" << iter << ",\"primal_residual\":"
                          << residual << ",\"objective\":" << obj << "}\n";
        if (!state.beta.allFinite())
            throw NumericError("admm produced non-finite coefficients at iteration " +
                               std::to_string(iter));
        if (residual < cfg_.eps_primal && dual_residual < cfg_.eps_primal) {
            out.diag.converged = true;
            break;
        }
    }
    out.diag.iterations = state.iterations;
    out.diag.final_residual = residual;
    out.beta = std::move(state.beta);
    return out;
}

} // namespace hetrl
