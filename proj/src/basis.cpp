#include "hetrl/basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hetrl/errors.hpp"

namespace hetrl {
namespace {

// Nonzero B-spline values at x for an open uniform knot vector of degree r
// with n spans on [lo, hi]. Returns the r+1 nonzero values and the index of
// the first one within the n+r basis functions. De Boor's triangular
// scheme; only the nonzero window is computed.
void bspline_nonzero(double x, double lo, double hi, int n, int r,
                     Eigen::VectorXd& vals, int& first) {
    const double h = (hi - lo) / n;
    // Span k covers [lo + k*h, lo + (k+1)*h), with the last span closed.
    int span = static_cast<int>(std::floor((x - lo) / h));
    span = std::clamp(span, 0, n - 1);

    // Knot t_j for the clamped uniform vector: index j in [0, n + 2r + 1],
    // clamped to the boundary values.
    auto knot = [&](int j) {
        return lo + h * std::clamp(j - r, 0, n);
    };

    // In knot indexing the active span is [t_{span+r}, t_{span+r+1}).
    const int k = span + r;
    vals = Eigen::VectorXd::Zero(r + 1);
    vals(0) = 1.0;
    Eigen::VectorXd left(r + 1), right(r + 1);
    for (int d = 1; d <= r; ++d) {
        left(d) = x - knot(k + 1 - d);
        right(d) = knot(k + d) - x;
        double saved = 0.0;
        for (int i = 0; i < d; ++i) {
            const double denom = right(i + 1) + left(d - i);
            const double tmp = denom != 0.0 ? vals(i) / denom : 0.0;
            vals(i) = saved + right(i + 1) * tmp;
            saved = left(d - i) * tmp;
        }
        vals(d) = saved;
    }
    first = span;
}

} // namespace

BasisSpec BasisSpec::identity(int state_dim, bool intercept) {
    BasisSpec s;
    s.kind = Kind::Identity;
    s.state_dim = state_dim;
    s.intercept = intercept;
    s.validate();
    return s;
}

BasisSpec BasisSpec::tensor_bspline(int degree, std::vector<int> segments,
                                    Eigen::VectorXd lo, Eigen::VectorXd hi,
                                    bool clamp) {
    BasisSpec s;
    s.kind = Kind::TensorBspline;
    s.state_dim = static_cast<int>(segments.size());
    s.degree = degree;
    s.segments = std::move(segments);
    s.box_lo = std::move(lo);
    s.box_hi = std::move(hi);
    s.clamp = clamp;
    s.validate();
    return s;
}

BasisSpec BasisSpec::bspline_from_data(const TrajectoryBatch& batch, int degree,
                                       int segments_per_dim, bool clamp) {
    const int p = batch.state_dim;
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::max());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::lowest());
    for (const auto& tr : batch.trajectories)
        for (const auto& x : tr.states) {
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
        }
    for (int d = 0; d < p; ++d) {
        double range = hi(d) - lo(d);
        if (range <= 0.0) range = 1.0; // constant coordinate: give it width
        lo(d) -= 0.05 * range;
        hi(d) += 0.05 * range;
    }
    return tensor_bspline(degree, std::vector<int>(p, segments_per_dim),
                          std::move(lo), std::move(hi), clamp);
}

int BasisSpec::dim() const {
    if (kind == Kind::Identity) return state_dim + (intercept ? 1 : 0);
    int J = 1;
    for (int n : segments) J *= n + degree;
    return J;
}

void BasisSpec::validate() const {
    if (state_dim < 1) throw ConfigError("basis needs state_dim >= 1");
    if (kind == Kind::TensorBspline) {
        if (degree < 1) throw ConfigError("bspline degree must be >= 1");
        if (static_cast<int>(segments.size()) != state_dim ||
            box_lo.size() != state_dim || box_hi.size() != state_dim)
            throw ConfigError("bspline segments/box must cover every coordinate");
        for (int n : segments)
            if (n < 1) throw ConfigError("bspline needs >= 1 span per coordinate");
        for (int d = 0; d < state_dim; ++d)
            if (!(box_lo(d) < box_hi(d)))
                throw ConfigError("bspline box must have positive width");
    }
}

Eigen::VectorXd phi(const BasisSpec& spec, const Eigen::VectorXd& x) {
    if (x.size() != spec.state_dim)
        throw DataError("state dimension does not match the basis");
    if (spec.kind == BasisSpec::Kind::Identity) {
        if (!spec.intercept) return x;
        Eigen::VectorXd f(x.size() + 1);
        f(0) = 1.0;
        f.tail(x.size()) = x;
        return f;
    }

    const int p = spec.state_dim;
    const int r = spec.degree;
    std::vector<Eigen::VectorXd> vals(p);
    std::vector<int> first(p), sizes(p);
    for (int d = 0; d < p; ++d) {
        double xd = x(d);
        if (xd < spec.box_lo(d) || xd > spec.box_hi(d)) {
            if (!spec.clamp)
                throw DataError("state coordinate " + std::to_string(d + 1) +
                                " lies outside the basis box");
            xd = std::clamp(xd, spec.box_lo(d), spec.box_hi(d));
        }
        bspline_nonzero(xd, spec.box_lo(d), spec.box_hi(d), spec.segments[d], r,
                        vals[d], first[d]);
        sizes[d] = spec.segments[d] + r;
    }

    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.dim());
    // Tensor index: coordinate 0 varies fastest. Only the (r+1)^p nonzero
    // combinations are visited.
    std::vector<int> idx(p, 0);
    while (true) {
        double v = 1.0;
        int flat = 0, stride = 1;
        for (int d = 0; d < p; ++d) {
            v *= vals[d](idx[d]);
            flat += (first[d] + idx[d]) * stride;
            stride *= sizes[d];
        }
        out(flat) += v;
        int d = 0;
        while (d < p && ++idx[d] > r) idx[d++] = 0;
        if (d == p) break;
    }
    return out;
}

FeatureContext::FeatureContext(BasisSpec spec, int num_actions)
    : spec_(std::move(spec)), num_actions_(num_actions) {
    spec_.validate();
    if (num_actions_ < 1) throw ConfigError("feature context needs M >= 1");
    basis_dim_ = spec_.dim();
}

Eigen::VectorXd FeatureContext::z_from_phi(const Eigen::VectorXd& phi_x,
                                           int action) const {
    if (action < 1 || action > num_actions_)
        throw DataError("action " + std::to_string(action) + " outside {1.." +
                        std::to_string(num_actions_) + "}");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(feature_dim());
    out.segment(static_cast<Eigen::Index>(action - 1) * basis_dim_, basis_dim_) =
        phi_x;
    return out;
}

Eigen::VectorXd FeatureContext::u_from_phi(const Eigen::VectorXd& phi_x,
                                           const Eigen::VectorXd& probs) const {
    if (probs.size() != num_actions_)
        throw DataError("policy action count does not match the feature context");
    Eigen::VectorXd out(feature_dim());
    for (int a = 0; a < num_actions_; ++a)
        out.segment(static_cast<Eigen::Index>(a) * basis_dim_, basis_dim_) =
            phi_x * probs(a);
    return out;
}

Eigen::VectorXd FeatureContext::z(const Eigen::VectorXd& x, int action) const {
    return z_from_phi(phi(spec_, x), action);
}

Eigen::VectorXd FeatureContext::u(const Policy& policy,
                                  const Eigen::VectorXd& x) const {
    return u_from_phi(phi(spec_, x), policy_probs(policy, x));
}

nlohmann::json BasisSpec::to_json() const {
    nlohmann::json j;
    if (kind == Kind::Identity) {
        j["kind"] = "identity";
        j["state_dim"] = state_dim;
        j["intercept"] = intercept;
    } else {
        j["kind"] = "tensor_bspline";
        j["degree"] = degree;
        j["segments"] = segments;
        j["lo"] = std::vector<double>(box_lo.data(), box_lo.data() + box_lo.size());
        j["hi"] = std::vector<double>(box_hi.data(), box_hi.data() + box_hi.size());
        j["clamp"] = clamp;
    }
    return j;
}

BasisSpec BasisSpec::from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "");
    if (kind == "identity")
        return identity(j.at("state_dim").get<int>(), j.value("intercept", true));
    if (kind == "tensor_bspline") {
        const auto lo = j.at("lo").get<std::vector<double>>();
        const auto hi = j.at("hi").get<std::vector<double>>();
        return tensor_bspline(
            j.at("degree").get<int>(), j.at("segments").get<std::vector<int>>(),
            Eigen::Map<const Eigen::VectorXd>(lo.data(), lo.size()),
            Eigen::Map<const Eigen::VectorXd>(hi.data(), hi.size()),
            j.value("clamp", true));
    }
    throw DataError("unknown basis kind '" + kind + "'");
}

BasisSpec BasisRequest::resolve(const TrajectoryBatch& batch) const {
    if (kind == BasisSpec::Kind::Identity)
        return BasisSpec::identity(batch.state_dim, intercept);
    return BasisSpec::bspline_from_data(batch, degree, knots);
}

BasisRequest parse_basis(const std::string& grammar) {
    std::vector<std::string> parts;
    std::stringstream ss(grammar);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.empty()) throw ConfigError("empty basis spec");

    BasisRequest req;
    if (parts[0] == "identity")
        req.kind = BasisSpec::Kind::Identity;
    else if (parts[0] == "bspline")
        req.kind = BasisSpec::Kind::TensorBspline;
    else
        throw ConfigError("unknown basis '" + parts[0] +
                          "' (expected identity or bspline)");

    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos)
            throw ConfigError("basis option '" + parts[i] + "' needs key=value");
        const std::string key = parts[i].substr(0, eq);
        const std::string val = parts[i].substr(eq + 1);
        if (key == "intercept" && req.kind == BasisSpec::Kind::Identity) {
            if (val == "true" || val == "1")
                req.intercept = true;
            else if (val == "false" || val == "0")
                req.intercept = false;
            else
                throw ConfigError("basis intercept must be true or false");
        } else if (key == "degree" && req.kind == BasisSpec::Kind::TensorBspline) {
            req.degree = std::stoi(val);
            if (req.degree < 1) throw ConfigError("bspline degree must be >= 1");
        } else if (key == "knots" && req.kind == BasisSpec::Kind::TensorBspline) {
            req.knots = std::stoi(val);
            if (req.knots < 1) throw ConfigError("bspline knots must be >= 1");
        } else {
            throw ConfigError("unknown basis option '" + key + "'");
        }
    }
    return req;
}

} // namespace hetrl
