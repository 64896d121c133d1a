#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "hetrl/basis.hpp"
#include "hetrl/errors.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/rng.hpp"

using namespace hetrl;

namespace {

// Cox-de Boor recursion, transcribed directly from the textbook definition:
//   N_{i,0}(x) = 1 if knot[i] <= x < knot[i+1]
//   N_{i,d}(x) = (x-k_i)/(k_{i+d}-k_i) N_{i,d-1} + (k_{i+d+1}-x)/(k_{i+d+1}-k_{i+1}) N_{i+1,d-1}
// with 0/0 = 0, evaluated on an open-uniform (clamped) knot vector.
double cox_de_boor(const std::vector<double>& knots, int i, int d, double x) {
    if (d == 0) {
        // half-open spans, with the final span closed so x = hi is covered
        const bool last =
            knots[static_cast<std::size_t>(i) + 1] == knots.back() &&
            x == knots.back();
        return (x >= knots[static_cast<std::size_t>(i)] &&
                (x < knots[static_cast<std::size_t>(i) + 1] || last))
                   ? 1.0
                   : 0.0;
    }
    double left = 0.0, right = 0.0;
    const double den_l = knots[static_cast<std::size_t>(i + d)] -
                         knots[static_cast<std::size_t>(i)];
    if (den_l > 0.0)
        left = (x - knots[static_cast<std::size_t>(i)]) / den_l *
               cox_de_boor(knots, i, d - 1, x);
    const double den_r = knots[static_cast<std::size_t>(i + d + 1)] -
                         knots[static_cast<std::size_t>(i) + 1];
    if (den_r > 0.0)
        right = (knots[static_cast<std::size_t>(i + d + 1)] - x) / den_r *
                cox_de_boor(knots, i + 1, d - 1, x);
    return left + right;
}

std::vector<double> open_uniform_knots(int degree, int spans, double lo, double hi) {
    std::vector<double> knots;
    for (int r = 0; r < degree; ++r) knots.push_back(lo);
    for (int s = 0; s <= spans; ++s)
        knots.push_back(lo + (hi - lo) * double(s) / double(spans));
    for (int r = 0; r < degree; ++r) knots.push_back(hi);
    return knots;
}

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd x(2);
    x << a, b;
    return x;
}

} // namespace

TEST_CASE("identity basis passes the state through") {
    const BasisSpec spec = BasisSpec::identity(2, false);
    const Eigen::VectorXd out = phi(spec, vec2(1.25, 0.77));
    REQUIRE(out.size() == 2);
    CHECK(out(0) == 1.25);
    CHECK(out(1) == 0.77);
    CHECK(spec.dim() == 2);
}

TEST_CASE("identity basis with intercept prepends a one") {
    const BasisSpec spec = BasisSpec::identity(2, true);
    const Eigen::VectorXd out = phi(spec, vec2(1.25, 0.77));
    REQUIRE(out.size() == 3);
    CHECK(out(0) == 1.0);
    CHECK(out(1) == 1.25);
    CHECK(out(2) == 0.77);
    CHECK(spec.dim() == 3);
}

TEST_CASE("degree-1 spline with two spans on the unit interval hits known values") {
    Eigen::VectorXd lo(1), hi(1);
    lo << 0.0;
    hi << 1.0;
    const BasisSpec spec = BasisSpec::tensor_bspline(1, {2}, lo, hi);
    CHECK(spec.dim() == 3); // spans + degree hat functions
    Eigen::VectorXd x(1);
    x << 0.25;
    const Eigen::VectorXd out = phi(spec, x);
    REQUIRE(out.size() == 3);
    CHECK(out(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out(2) == doctest::Approx(0.0).epsilon(1e-12));
    x << 0.5; // at the interior knot, the middle hat peaks
    const Eigen::VectorXd mid = phi(spec, x);
    CHECK(mid(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("1-d spline values match the Cox-de Boor recursion") {
    for (int degree : {1, 2, 3}) {
        for (int spans : {2, 4, 5}) {
            Eigen::VectorXd lo(1), hi(1);
            lo << -1.5;
            hi << 2.0;
            const BasisSpec spec = BasisSpec::tensor_bspline(degree, {spans}, lo, hi);
            const auto knots = open_uniform_knots(degree, spans, -1.5, 2.0);
            const int J = spans + degree;
            REQUIRE(spec.dim() == J);
            for (int g = 0; g <= 40; ++g) {
                Eigen::VectorXd x(1);
                x << -1.5 + 3.5 * double(g) / 40.0;
                const Eigen::VectorXd out = phi(spec, x);
                for (int j = 0; j < J; ++j) {
                    const double ref = cox_de_boor(knots, j, degree, x(0));
                    CHECK(std::abs(out(j) - ref) <= 1e-10);
                }
            }
        }
    }
}

TEST_CASE("tensor-product spline sums to one everywhere in the box") {
    Eigen::VectorXd lo(2), hi(2);
    lo << -2.0, -3.0;
    hi << 2.0, 1.0;
    const BasisSpec spec = BasisSpec::tensor_bspline(3, {5, 4}, lo, hi);
    CHECK(spec.dim() == (5 + 3) * (4 + 3));
    rng::Stream s(21, {3});
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::VectorXd x =
            vec2(-2.0 + 4.0 * s.next_u01(), -3.0 + 4.0 * s.next_u01());
        const Eigen::VectorXd out = phi(spec, x);
        CHECK(std::abs(out.sum() - 1.0) <= 1e-10);
        CHECK(out.minCoeff() >= 0.0);
    }
    // corners included
    CHECK(std::abs(phi(spec, vec2(-2.0, -3.0)).sum() - 1.0) <= 1e-10);
    CHECK(std::abs(phi(spec, vec2(2.0, 1.0)).sum() - 1.0) <= 1e-10);
}

TEST_CASE("out-of-box states clamp to the boundary value, or error when asked") {
    Eigen::VectorXd lo(1), hi(1);
    lo << 0.0;
    hi << 1.0;
    const BasisSpec clamped = BasisSpec::tensor_bspline(2, {3}, lo, hi, true);
    Eigen::VectorXd far(1), edge(1);
    far << 3.5;
    edge << 1.0;
    CHECK((phi(clamped, far) - phi(clamped, edge)).cwiseAbs().maxCoeff() == 0.0);

    const BasisSpec strict = BasisSpec::tensor_bspline(2, {3}, lo, hi, false);
    CHECK_THROWS_AS(phi(strict, far), DataError);
}

TEST_CASE("data-derived spline box covers all states with a five percent margin") {
    TrajectoryBatch batch;
    batch.state_dim = 1;
    batch.num_actions = 2;
    batch.gamma = 0.5;
    Trajectory tr;
    tr.id = "a";
    for (double v : {-1.0, 0.0, 3.0}) {
        Eigen::VectorXd x(1);
        x << v;
        tr.states.push_back(x);
    }
    tr.actions = {1, 2};
    tr.rewards = {0.0, 0.0};
    batch.trajectories.push_back(tr);

    const BasisSpec spec = BasisSpec::bspline_from_data(batch, 3, 5);
    CHECK(spec.box_lo(0) == doctest::Approx(-1.2).epsilon(1e-12)); // -1 - 0.05*4
    CHECK(spec.box_hi(0) == doctest::Approx(3.2).epsilon(1e-12));  //  3 + 0.05*4
}

TEST_CASE("action-indexed features place the basis block by action") {
    FeatureContext ctx(BasisSpec::identity(2, false), 2);
    CHECK(ctx.basis_dim() == 2);
    CHECK(ctx.feature_dim() == 4);
    const Eigen::VectorXd x = vec2(1.0, 2.0);
    const Eigen::VectorXd z1 = ctx.z(x, 1);
    const Eigen::VectorXd z2 = ctx.z(x, 2);
    REQUIRE(z1.size() == 4);
    CHECK(z1(0) == 1.0);
    CHECK(z1(1) == 2.0);
    CHECK(z1(2) == 0.0);
    CHECK(z1(3) == 0.0);
    CHECK(z2(0) == 0.0);
    CHECK(z2(1) == 0.0);
    CHECK(z2(2) == 1.0);
    CHECK(z2(3) == 2.0);
    CHECK(z1.norm() == doctest::Approx(x.norm()).epsilon(1e-15));
}

TEST_CASE("policy-averaged features weight each block by its action probability") {
    FeatureContext ctx(BasisSpec::identity(2, false), 2);
    const Eigen::VectorXd x = vec2(1.0, 2.0);
    const Policy uniform = SoftmaxPolicy::zeros(2, 2, true);
    const Eigen::VectorXd u = ctx.u(uniform, x);
    REQUIRE(u.size() == 4);
    CHECK(u(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(u(1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(u(2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(u(3) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("policy-averaged features equal the probability-weighted sum of z") {
    FeatureContext ctx(BasisSpec::identity(3, true), 3);
    rng::Stream s(33, {1});
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::MatrixXd alpha(2, 4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 4; ++j) alpha(i, j) = s.next_normal();
        const Policy pol = SoftmaxPolicy(alpha, true);
        Eigen::VectorXd x(3);
        x << s.next_normal(), s.next_normal(), s.next_normal();
        const Eigen::VectorXd probs = policy_probs(pol, x);
        Eigen::VectorXd direct = Eigen::VectorXd::Zero(ctx.feature_dim());
        for (int a = 1; a <= 3; ++a) direct += probs(a - 1) * ctx.z(x, a);
        CHECK((ctx.u(pol, x) - direct).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("precomputed-phi fast paths agree with the direct ones") {
    FeatureContext ctx(BasisSpec::identity(2, true), 2);
    const Eigen::VectorXd x = vec2(-0.4, 1.7);
    const Eigen::VectorXd phi_x = phi(ctx.spec(), x);
    CHECK((ctx.z_from_phi(phi_x, 2) - ctx.z(x, 2)).cwiseAbs().maxCoeff() == 0.0);
    const Policy pol = SoftmaxPolicy::zeros(2, 2, false);
    CHECK((ctx.u_from_phi(phi_x, policy_probs(pol, x)) - ctx.u(pol, x))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("basis grammar parses and validates") {
    CHECK(parse_basis("identity").kind == BasisSpec::Kind::Identity);
    CHECK(parse_basis("identity").intercept == true);
    CHECK(parse_basis("identity:intercept=false").intercept == false);
    const BasisRequest req = parse_basis("bspline:degree=2:knots=4");
    CHECK(req.kind == BasisSpec::Kind::TensorBspline);
    CHECK(req.degree == 2);
    CHECK(req.knots == 4);
    CHECK_THROWS_AS(parse_basis("fourier"), ConfigError);
    CHECK_THROWS_AS(parse_basis("bspline:degree=0"), ConfigError);
    CHECK_THROWS_AS(parse_basis("identity:interceptt=true"), ConfigError);
}

TEST_CASE("basis specs survive a JSON round-trip") {
    Eigen::VectorXd lo(2), hi(2);
    lo << -1.0, 0.0;
    hi << 1.0, 2.0;
    for (const BasisSpec& spec :
         {BasisSpec::identity(2, false), BasisSpec::tensor_bspline(2, {3, 4}, lo, hi)}) {
        const BasisSpec back = BasisSpec::from_json(spec.to_json());
        const Eigen::VectorXd x = vec2(0.3, 1.1);
        CHECK((phi(spec, x) - phi(back, x)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(back.dim() == spec.dim());
    }
}

TEST_CASE("invalid basis configurations are rejected") {
    Eigen::VectorXd lo(1), hi(1);
    lo << 1.0;
    hi << 0.0; // inverted box
    CHECK_THROWS_AS(BasisSpec::tensor_bspline(2, {3}, lo, hi).validate(),
                    ConfigError);
    CHECK_THROWS_AS(BasisSpec::identity(0).validate(), ConfigError);
    Eigen::VectorXd lo2(1), hi2(1);
    lo2 << 0.0;
    hi2 << 1.0;
    CHECK_THROWS_AS(BasisSpec::tensor_bspline(0, {3}, lo2, hi2).validate(),
                    ConfigError);
    CHECK_THROWS_AS(BasisSpec::tensor_bspline(2, {0}, lo2, hi2).validate(),
                    ConfigError);
}
