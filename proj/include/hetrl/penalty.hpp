#pragma once

#include <Eigen/Core>
#include <string>

namespace hetrl {

// Folded concave fusion penalty p(t, lambda), t >= 0.
//   MCP : lambda*t - t^2/(2 eta)                     t <= eta*lambda
//         eta*lambda^2/2                             t >  eta*lambda
//   SCAD: lambda*t                                   t <= lambda
//         (2 eta lambda t - t^2 - lambda^2)
//           / (2(eta-1))                             lambda < t <= eta*lambda
//         lambda^2 (eta+1)/2                         t >  eta*lambda
struct PenaltyConfig {
    enum class Kind { Mcp, Scad };

    Kind kind = Kind::Mcp;
    double lambda = 0.1;
    double eta = 1.5;

    // Bounds: lambda >= 0; eta > 1 (MCP) or eta > 2 (SCAD).
    void validate() const;
    // The thresholding operator below is the exact global minimizer only
    // when the quadratic dominates the penalty's concavity:
    // eta*rho > 1 (MCP), (eta-1)*rho > 1 (SCAD).
    void validate_prox(double rho) const;

    std::string describe() const;
};

double penalty_value(const PenaltyConfig& cfg, double t);

// (1 - c/||w||)_+ * w; the zero vector when ||w||_2 <= c.
Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& w, double c);

// Scalar firm-thresholding: argmin_{s >= 0} p(s, lambda) + (rho/2)(s - x)^2.
double penalty_scalar_prox(const PenaltyConfig& cfg, double x, double rho);

// Pairwise-difference proximal update. Minimizes, over delta,
//   p(||delta||_2 / sqrt(dim), lambda) + (rho/2) (||delta||_2/sqrt(dim)
//                                                 - ||w||_2/sqrt(dim))^2,
// which is the pair subproblem after the objective's 1/N^2 factors cancel
// and s = ||delta||/sqrt(dim) is substituted (dim = J*M). The minimizer
// lies on the ray of w, so the scalar prox above decides the length.
Eigen::VectorXd delta_prox(const PenaltyConfig& cfg, const Eigen::VectorXd& w,
                           double rho, double dim);

// CLI grammar: "mcp:lambda=0.1:eta=1.5" / "scad:lambda=0.1:eta=3.7".
// eta defaults to 1.5 (mcp) or 3.7 (scad) when omitted.
PenaltyConfig parse_penalty(const std::string& grammar);

} // namespace hetrl
