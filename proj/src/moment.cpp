#include "hetrl/moment.hpp"

#include <Eigen/Dense>

#include "hetrl/errors.hpp"
#include "hetrl/parallel.hpp"

namespace hetrl {

MomentSystem assemble(const TrajectoryBatch& batch, const FeatureContext& ctx,
                      const Policy& policy, int threads) {
    batch.validate();
    if (ctx.num_actions() != batch.num_actions)
        throw DataError("feature context action count does not match the batch");
    if (policy_num_actions(policy) != batch.num_actions)
        throw DataError("policy action count does not match the batch");

    const int N = batch.size();
    const int JM = ctx.feature_dim();
    MomentSystem sys;
    sys.gamma = batch.gamma;
    sys.basis_dim = ctx.basis_dim();
    sys.num_actions = batch.num_actions;
    sys.total_steps = batch.total_steps();
    sys.stats.resize(N);

    // Each index writes only its own slot, so the result does not depend on
    // the thread count.
    parallel_for(N, threads, [&](int i) {
        const Trajectory& tr = batch.trajectories[i];
        const int T = tr.length();
        TrajectoryStats st;
        st.steps = T;
        st.z_steps.resize(JM, T);
        st.u_next.resize(JM, T);
        st.rewards.resize(T);
        Eigen::VectorXd phi_t = phi(ctx.spec(), tr.states[0]);
        for (int t = 0; t < T; ++t) {
            const Eigen::VectorXd phi_next = phi(ctx.spec(), tr.states[t + 1]);
            st.z_steps.col(t) = ctx.z_from_phi(phi_t, tr.actions[t]);
            st.u_next.col(t) =
                ctx.u_from_phi(phi_next, policy_probs(policy, tr.states[t + 1]));
            st.rewards(t) = tr.rewards[t];
            phi_t = phi_next;
        }
        st.A = st.z_steps * (st.z_steps - batch.gamma * st.u_next).transpose();
        st.b = st.z_steps * st.rewards;
        st.gram = st.z_steps * st.z_steps.transpose();
        sys.stats[i] = std::move(st);
    });
    return sys;
}

Eigen::VectorXd moment_vector(const MomentSystem& sys, const Eigen::MatrixXd& beta) {
    const int N = sys.size();
    const int JM = sys.feature_dim();
    if (beta.rows() != JM || beta.cols() != N)
        throw DataError("coefficient matrix must be JM x N");
    const double c = sys.norm_const();
    Eigen::VectorXd g(static_cast<Eigen::Index>(JM) * N);
    for (int i = 0; i < N; ++i)
        g.segment(static_cast<Eigen::Index>(i) * JM, JM) =
            c * (sys.stats[i].b - sys.stats[i].A * beta.col(i));
    return g;
}

double bellman_loss(const MomentSystem& sys, const Eigen::MatrixXd& beta) {
    return moment_vector(sys, beta).squaredNorm();
}

Eigen::MatrixXd bellman_loss_gradient(const MomentSystem& sys,
                                      const Eigen::MatrixXd& beta) {
    const int N = sys.size();
    const int JM = sys.feature_dim();
    const double c2 = sys.norm_const() * sys.norm_const();
    Eigen::MatrixXd grad(JM, N);
    for (int i = 0; i < N; ++i)
        grad.col(i) = 2.0 * c2 * sys.stats[i].A.transpose() *
                      (sys.stats[i].A * beta.col(i) - sys.stats[i].b);
    return grad;
}

Eigen::VectorXd solve_group(const MomentSystem& sys,
                            const std::vector<int>& members) {
    if (members.empty()) throw DataError("group solve needs at least one member");
    const int JM = sys.feature_dim();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(JM, JM);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(JM);
    for (int i : members) {
        A += sys.stats.at(i).A;
        b += sys.stats.at(i).b;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 0.0) || smax / smin > 1e12)
        throw NumericError(
            "group system is ill-posed (condition " +
            std::to_string(smin > 0.0 ? smax / smin
                                      : std::numeric_limits<double>::infinity()) +
            " for a group of " + std::to_string(members.size()) + " trajectories)");
    return svd.solve(b);
}

SandwichMatrices sandwich(const MomentSystem& sys, const std::vector<int>& members,
                          const Eigen::VectorXd& theta) {
    const int JM = sys.feature_dim();
    if (theta.size() != JM) throw DataError("theta must have length JM");
    if (!theta.allFinite()) throw NumericError("theta is not finite");
    SandwichMatrices out;
    out.sigma = Eigen::MatrixXd::Zero(JM, JM);
    out.omega = Eigen::MatrixXd::Zero(JM, JM);
    for (int i : members) {
        const TrajectoryStats& st = sys.stats.at(i);
        out.sigma += st.A;
        const Eigen::VectorXd resid =
            st.rewards -
            (st.z_steps - sys.gamma * st.u_next).transpose() * theta;
        out.omega +=
            st.z_steps * resid.array().square().matrix().asDiagonal() *
            st.z_steps.transpose();
    }
    const double c = 1.0 / static_cast<double>(sys.total_steps);
    out.sigma *= c;
    out.omega *= c;
    return out;
}

} // namespace hetrl
