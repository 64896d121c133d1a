#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <vector>

#include "hetrl/errors.hpp"
#include "hetrl/penalty.hpp"
#include "hetrl/rng.hpp"

using namespace hetrl;

namespace {

PenaltyConfig mcp(double lambda, double eta) {
    PenaltyConfig c;
    c.kind = PenaltyConfig::Kind::Mcp;
    c.lambda = lambda;
    c.eta = eta;
    return c;
}

PenaltyConfig scad(double lambda, double eta) {
    PenaltyConfig c;
    c.kind = PenaltyConfig::Kind::Scad;
    c.lambda = lambda;
    c.eta = eta;
    return c;
}

// The penalty derivative both families are defined by; integrating it is an
// independent construction of the value.
double penalty_derivative(const PenaltyConfig& cfg, double s) {
    if (cfg.kind == PenaltyConfig::Kind::Mcp)
        return std::max(0.0, cfg.lambda - s / cfg.eta);
    if (s <= cfg.lambda) return cfg.lambda;
    return std::max(0.0, cfg.eta * cfg.lambda - s) / (cfg.eta - 1.0);
}

// Simpson's rule on [0, t] with an even, fine subdivision.
double penalty_by_quadrature(const PenaltyConfig& cfg, double t) {
    if (t <= 0.0) return 0.0;
    const int n = 2000; // intervals; h^4 error way below 1e-8 here
    const double h = t / n;
    double sum = penalty_derivative(cfg, 0.0) + penalty_derivative(cfg, t);
    for (int i = 1; i < n; ++i)
        sum += penalty_derivative(cfg, i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

// Dense-grid + golden-section minimizer of g over [lo, hi].
double minimize_1d(const std::function<double(double)>& g, double lo, double hi) {
    const int grid = 20000;
    double best_x = lo, best_v = g(lo);
    for (int i = 1; i <= grid; ++i) {
        const double x = lo + (hi - lo) * double(i) / grid;
        const double v = g(x);
        if (v < best_v) {
            best_v = v;
            best_x = x;
        }
    }
    double a = std::max(lo, best_x - 2.0 * (hi - lo) / grid);
    double b = std::min(hi, best_x + 2.0 * (hi - lo) / grid);
    const double phi_ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - phi_ratio * (b - a), d = a + phi_ratio * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (g(c) < g(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi_ratio * (b - a);
        d = a + phi_ratio * (b - a);
    }
    return 0.5 * (a + b);
}

} // namespace

TEST_CASE("quadratic-region and saturation values of the first penalty family") {
    const PenaltyConfig cfg = mcp(0.1, 1.5);
    CHECK(penalty_value(cfg, 0.0) == 0.0);
    CHECK(penalty_value(cfg, 0.1) ==
          doctest::Approx(0.1 * 0.1 - 0.01 / 3.0).epsilon(1e-14));
    // flat beyond eta*lambda = 0.15 at eta*lambda^2/2
    for (double t : {0.15, 0.2, 1.0, 100.0})
        CHECK(penalty_value(cfg, t) == doctest::Approx(0.0075).epsilon(1e-14));
}

TEST_CASE("saturation value of the second penalty family") {
    const PenaltyConfig cfg = scad(0.1, 3.7);
    CHECK(penalty_value(cfg, 0.0) == 0.0);
    CHECK(penalty_value(cfg, 0.05) == doctest::Approx(0.005).epsilon(1e-14));
    for (double t : {0.37, 0.4, 10.0})
        CHECK(penalty_value(cfg, t) ==
              doctest::Approx(0.01 * 4.7 / 2.0).epsilon(1e-14));
}

TEST_CASE("closed-form values equal the integral of the stated derivative") {
    for (const PenaltyConfig& cfg :
         {mcp(0.1, 1.5), mcp(0.05, 3.7), scad(0.1, 3.7), scad(0.05, 2.5)}) {
        for (int i = 0; i <= 100; ++i) {
            const double t = 2.0 * cfg.eta * cfg.lambda * double(i) / 100.0;
            CHECK(std::abs(penalty_value(cfg, t) - penalty_by_quadrature(cfg, t)) <=
                  1e-8);
        }
    }
}

TEST_CASE("penalties are nondecreasing and concave in t") {
    for (const PenaltyConfig& cfg : {mcp(0.1, 1.5), scad(0.1, 3.7)}) {
        const double hi = 2.0 * cfg.eta * cfg.lambda;
        double prev = 0.0;
        std::vector<double> vals;
        for (int i = 0; i <= 400; ++i) {
            const double v = penalty_value(cfg, hi * double(i) / 400.0);
            CHECK(v >= prev - 1e-15);
            prev = v;
            vals.push_back(v);
        }
        for (std::size_t i = 1; i + 1 < vals.size(); ++i)
            CHECK(vals[i + 1] - 2.0 * vals[i] + vals[i - 1] <= 1e-10);
    }
}

TEST_CASE("group soft threshold shrinks the norm and keeps the direction") {
    Eigen::VectorXd w(2);
    w << 3.0, 4.0;
    CHECK(group_soft_threshold(w, 5.0).norm() == 0.0);
    CHECK(group_soft_threshold(w, 7.0).norm() == 0.0);
    CHECK((group_soft_threshold(w, 0.0) - w).norm() == 0.0);
    const Eigen::VectorXd half = group_soft_threshold(w, 2.5);
    CHECK(half(0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(half(1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("scalar threshold operator matches closed-form firm thresholding") {
    const PenaltyConfig cfg = mcp(0.1, 1.5);
    const double rho = 1.0;
    CHECK(penalty_scalar_prox(cfg, 0.05, rho) == doctest::Approx(0.0));
    CHECK(penalty_scalar_prox(cfg, 0.12, rho) ==
          doctest::Approx(0.02 / (1.0 - 1.0 / 1.5)).epsilon(1e-12));
    CHECK(penalty_scalar_prox(cfg, 0.2, rho) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(penalty_scalar_prox(cfg, 0.0, rho) == 0.0);
}

TEST_CASE("scalar threshold operator minimizes its objective numerically") {
    rng::Stream s(71, {2});
    int tested = 0;
    while (tested < 40) {
        const bool use_mcp = s.next_u01() < 0.5;
        const double lambda = s.next_u01() < 0.5 ? 0.05 : 0.1;
        const double eta = use_mcp ? (s.next_u01() < 0.5 ? 1.5 : 3.7)
                                   : (s.next_u01() < 0.5 ? 2.5 : 3.7);
        const double rho = std::vector<double>{0.5, 1.0, 2.0}[s.next_below(3)];
        const PenaltyConfig cfg = use_mcp ? mcp(lambda, eta) : scad(lambda, eta);
        try {
            cfg.validate_prox(rho);
        } catch (const ConfigError&) {
            continue; // ill-posed corner of the grid: operator not a minimizer
        }
        ++tested;
        const double x = 3.0 * eta * lambda * s.next_u01();
        const auto obj = [&](double t) {
            return penalty_value(cfg, t) + 0.5 * rho * (t - x) * (t - x);
        };
        const double ref = minimize_1d(obj, 0.0, x + eta * lambda + 1.0);
        const double got = penalty_scalar_prox(cfg, x, rho);
        // compare objective values too: ties (flat regions) allowed
        CHECK(obj(got) <= obj(ref) + 1e-12);
        CHECK(std::abs(got - ref) <= 1e-6);
    }
}

TEST_CASE("pair update returns w unchanged when there is nothing to shrink") {
    Eigen::VectorXd w(4);
    w << 1.0, -2.0, 0.5, 0.25;
    SUBCASE("zero penalty weight") {
        const PenaltyConfig cfg = mcp(0.0, 1.5);
        CHECK((delta_prox(cfg, w, 1.0, 4.0) - w).norm() == 0.0);
    }
    SUBCASE("norm beyond the flat region") {
        const PenaltyConfig cfg = mcp(0.1, 1.5);
        // ||w||/sqrt(dim) = 1.17... >> 0.15
        CHECK((delta_prox(cfg, w, 1.0, 4.0) - w).norm() <= 1e-14);
    }
}

TEST_CASE("pair update zeroes small differences entirely") {
    const PenaltyConfig cfg = mcp(0.1, 1.5);
    Eigen::VectorXd w(4);
    w << 0.01, -0.02, 0.015, 0.005; // ||w||/2 = 0.0137 < lambda/rho
    CHECK(delta_prox(cfg, w, 1.0, 4.0).norm() == 0.0);
}

TEST_CASE("pair update stays on the ray of its input") {
    rng::Stream s(72, {1});
    const PenaltyConfig cfg = scad(0.1, 3.7);
    for (int rep = 0; rep < 25; ++rep) {
        Eigen::VectorXd w(6);
        for (int i = 0; i < 6; ++i) w(i) = 0.2 * s.next_normal();
        const Eigen::VectorXd d = delta_prox(cfg, w, 1.0, 6.0);
        // d = t*w for some t in [0,1]
        const double t = w.norm() > 0 ? d.dot(w) / w.squaredNorm() : 0.0;
        CHECK(t >= -1e-15);
        CHECK(t <= 1.0 + 1e-12);
        CHECK((d - t * w).norm() <= 1e-12 * (1.0 + w.norm()));
    }
}

TEST_CASE("pair update output norm is nondecreasing in the input norm") {
    const PenaltyConfig cfg = mcp(0.1, 1.5);
    Eigen::VectorXd dir(3);
    dir << 1.0, 2.0, -2.0;
    dir.normalize();
    double prev = 0.0;
    for (int i = 0; i <= 300; ++i) {
        const double r = 1.0 * double(i) / 300.0;
        const double n = delta_prox(cfg, r * dir, 2.0, 3.0).norm();
        CHECK(n >= prev - 1e-12);
        prev = n;
    }
}

TEST_CASE("pair update beats random perturbations on the full vector objective") {
    rng::Stream s(73, {9});
    for (const PenaltyConfig& cfg : {mcp(0.1, 1.5), scad(0.1, 3.7)}) {
        for (double rho : {1.0, 2.0}) {
            for (int rep = 0; rep < 10; ++rep) {
                const int dim = 6;
                Eigen::VectorXd w(dim);
                for (int i = 0; i < dim; ++i) w(i) = 0.15 * s.next_normal();
                const auto f = [&](const Eigen::VectorXd& d) {
                    return penalty_value(cfg, d.norm() / std::sqrt(double(dim))) +
                           rho / (2.0 * dim) * (w - d).squaredNorm();
                };
                const Eigen::VectorXd d0 = delta_prox(cfg, w, rho, double(dim));
                const double f0 = f(d0);
                for (int k = 0; k < 64; ++k) {
                    Eigen::VectorXd pert(dim);
                    for (int i = 0; i < dim; ++i) pert(i) = s.next_normal();
                    const double scale =
                        std::vector<double>{1e-4, 1e-2, 0.1, 0.5}[k % 4];
                    CHECK(f0 <= f(d0 + scale * pert) + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("penalty grammar parses kinds, fields, and defaults") {
    const PenaltyConfig a = parse_penalty("mcp:lambda=0.1:eta=1.5");
    CHECK(a.kind == PenaltyConfig::Kind::Mcp);
    CHECK(a.lambda == 0.1);
    CHECK(a.eta == 1.5);
    CHECK(parse_penalty("mcp").eta == 1.5);
    CHECK(parse_penalty("scad").eta == 3.7);
    CHECK(parse_penalty("scad:lambda=0.05").lambda == 0.05);
    CHECK_THROWS_AS(parse_penalty("lasso"), ConfigError);
    CHECK_THROWS_AS(parse_penalty("mcp:lambda=-1"), ConfigError);
    CHECK_THROWS_AS(parse_penalty("mcp:eta=1.0"), ConfigError);
    CHECK_THROWS_AS(parse_penalty("scad:eta=2.0"), ConfigError);
    CHECK_THROWS_AS(parse_penalty("mcp:gamma=3"), ConfigError);
}

TEST_CASE("threshold well-posedness precondition is enforced") {
    CHECK_THROWS_AS(mcp(0.1, 1.5).validate_prox(0.5), ConfigError); // 0.75 < 1
    CHECK_NOTHROW(mcp(0.1, 1.5).validate_prox(1.0));
    CHECK_THROWS_AS(scad(0.1, 3.7).validate_prox(0.3), ConfigError); // 0.81 < 1
    CHECK_NOTHROW(scad(0.1, 3.7).validate_prox(0.5));
}
