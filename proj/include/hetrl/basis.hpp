#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "hetrl/policy.hpp"
#include "hetrl/trajectory.hpp"
#include "hetrl/vendor_json.hpp"

namespace hetrl {

// Per-action feature map phi. Identity passes states through (optionally
// with a leading intercept 1); tensor_bspline evaluates a tensor product of
// open uniform B-spline bases over a box. J is the per-action dimension.
struct BasisSpec {
    enum class Kind { Identity, TensorBspline };

    Kind kind = Kind::Identity;
    int state_dim = 0;
    bool intercept = true; // identity only

    int degree = 3;                 // bspline only
    std::vector<int> segments;      // knot spans per coordinate
    Eigen::VectorXd box_lo, box_hi; // domain box per coordinate
    bool clamp = true;              // clamp out-of-box states (else error)

    static BasisSpec identity(int state_dim, bool intercept = true);
    static BasisSpec tensor_bspline(int degree, std::vector<int> segments,
                                    Eigen::VectorXd lo, Eigen::VectorXd hi,
                                    bool clamp = true);
    // Box from per-coordinate empirical [min,max] over all states in the
    // batch, expanded by 5% of the range on each side.
    static BasisSpec bspline_from_data(const TrajectoryBatch& batch, int degree,
                                       int segments_per_dim, bool clamp = true);

    int dim() const; // J
    void validate() const;

    nlohmann::json to_json() const;
    static BasisSpec from_json(const nlohmann::json& j);
};

Eigen::VectorXd phi(const BasisSpec& spec, const Eigen::VectorXd& x);

// Builds the stacked action-indexed features of length J*M:
//   z(x,a)  = (0, ..., phi(x) in block a, ..., 0)
//   u(pi,x) = (phi(x)*pi(1|x), ..., phi(x)*pi(M|x))
class FeatureContext {
public:
    FeatureContext(BasisSpec spec, int num_actions);

    const BasisSpec& spec() const { return spec_; }
    int num_actions() const { return num_actions_; }
    int basis_dim() const { return basis_dim_; }
    int feature_dim() const { return basis_dim_ * num_actions_; }

    Eigen::VectorXd z(const Eigen::VectorXd& x, int action) const;
    Eigen::VectorXd u(const Policy& policy, const Eigen::VectorXd& x) const;

    // Same layouts built from an already-evaluated phi(x); the hot paths in
    // moment assembly use these to avoid re-evaluating the basis.
    Eigen::VectorXd z_from_phi(const Eigen::VectorXd& phi_x, int action) const;
    Eigen::VectorXd u_from_phi(const Eigen::VectorXd& phi_x,
                               const Eigen::VectorXd& probs) const;

private:
    BasisSpec spec_;
    int num_actions_;
    int basis_dim_;
};

// CLI grammar: "identity", "identity:intercept=false",
// "bspline:degree=3:knots=5". knots counts the uniform spans per coordinate.
// Bspline boxes are filled in later from data (bspline_from_data).
struct BasisRequest {
    BasisSpec::Kind kind = BasisSpec::Kind::Identity;
    bool intercept = true;
    int degree = 3;
    int knots = 5;

    BasisSpec resolve(const TrajectoryBatch& batch) const;
};

BasisRequest parse_basis(const std::string& grammar);

} // namespace hetrl
