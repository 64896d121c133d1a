#include "hetrl/grouping.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "hetrl/errors.hpp"
#include "hetrl/rng.hpp"

namespace hetrl {

std::vector<int> GroupAssignment::sizes() const {
    std::vector<int> s(num_groups, 0);
    for (int l : labels) ++s.at(l);
    return s;
}

std::vector<std::vector<int>> GroupAssignment::members() const {
    std::vector<std::vector<int>> m(num_groups);
    for (std::size_t i = 0; i < labels.size(); ++i)
        m.at(labels[i]).push_back(static_cast<int>(i));
    return m;
}

Eigen::MatrixXd GroupAssignment::membership_matrix() const {
    Eigen::MatrixXd w =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), num_groups);
    for (std::size_t i = 0; i < labels.size(); ++i)
        w(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return w;
}

void GroupAssignment::validate() const {
    if (num_groups < 1) throw DataError("assignment needs at least one group");
    if (labels.empty()) throw DataError("assignment covers no trajectories");
    std::vector<int> s(num_groups, 0);
    for (int l : labels) {
        if (l < 0 || l >= num_groups)
            throw DataError("group label out of range");
        ++s[l];
    }
    for (int k = 0; k < num_groups; ++k)
        if (s[k] == 0)
            throw DataError("group " + std::to_string(k + 1) + " is empty");
}

void GroupAssignment::canonicalize() {
    std::vector<int> order(num_groups, -1);
    int next = 0;
    for (int l : labels)
        if (order[l] < 0) order[l] = next++;
    for (int& l : labels) l = order[l];
}

GroupingConfig parse_grouping(const std::string& grammar) {
    std::vector<std::string> parts;
    std::stringstream ss(grammar);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.empty()) throw ConfigError("empty grouping spec");

    GroupingConfig cfg;
    if (parts[0] == "fused" || parts[0] == "fused_graph")
        cfg.mode = GroupingConfig::Mode::FusedGraph;
    else if (parts[0] == "kmeans")
        cfg.mode = GroupingConfig::Mode::KMeans;
    else
        throw ConfigError("unknown grouping '" + parts[0] +
                          "' (expected fused or kmeans)");
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos)
            throw ConfigError("grouping option '" + parts[i] + "' needs key=value");
        const std::string key = parts[i].substr(0, eq);
        const std::string val = parts[i].substr(eq + 1);
        try {
            if (key == "tau" && cfg.mode == GroupingConfig::Mode::FusedGraph)
                cfg.tau = std::stod(val);
            else if (key == "k" && cfg.mode == GroupingConfig::Mode::KMeans)
                cfg.k = std::stoi(val);
            else if (key == "restarts" && cfg.mode == GroupingConfig::Mode::KMeans)
                cfg.restarts = std::stoi(val);
            else
                throw ConfigError("unknown grouping option '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("grouping option '" + key + "' needs a number");
        }
    }
    if (cfg.mode == GroupingConfig::Mode::KMeans &&
        (cfg.k < 1 || cfg.restarts < 1))
        throw ConfigError("kmeans needs k >= 1 and restarts >= 1");
    return cfg;
}

namespace {

GroupAssignment fused_components(const Eigen::MatrixXd& beta, double tau) {
    const int n = static_cast<int>(beta.cols());
    const double root = std::sqrt(static_cast<double>(beta.rows()));
    // Union-find over the tau-neighborhood graph.
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if ((beta.col(i) - beta.col(j)).norm() / root <= tau) {
                const int ri = find(i), rj = find(j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }
        }
    GroupAssignment out;
    out.labels.resize(n);
    std::vector<int> relabel(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (relabel[r] < 0) relabel[r] = next++;
        out.labels[i] = relabel[r];
    }
    out.num_groups = next;
    return out;
}

GroupAssignment kmeans_cluster(const Eigen::MatrixXd& beta, int k, int restarts,
                               std::uint64_t seed) {
    const int n = static_cast<int>(beta.cols());
    const int d = static_cast<int>(beta.rows());
    if (k > n)
        throw ConfigError("kmeans needs k <= N (k=" + std::to_string(k) +
                          ", N=" + std::to_string(n) + ")");

    std::vector<int> best_labels(n, 0);
    double best_inertia = std::numeric_limits<double>::infinity();

    for (int rs = 0; rs < restarts; ++rs) {
        rng::Stream stream(seed, {0x6b6dU, static_cast<std::uint64_t>(rs)});
        // k-means++ seeding.
        Eigen::MatrixXd centers(d, k);
        std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
        centers.col(0) = beta.col(stream.next_below(n));
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d2 = (beta.col(i) - centers.col(c - 1)).squaredNorm();
                dist2[i] = std::min(dist2[i], d2);
                total += dist2[i];
            }
            if (total <= 0.0) {
                // All points coincide with existing centers; reuse any point.
                centers.col(c) = beta.col(stream.next_below(n));
                continue;
            }
            double target = stream.next_u01() * total;
            int chosen = n - 1;
            for (int i = 0; i < n; ++i) {
                target -= dist2[i];
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            centers.col(c) = beta.col(chosen);
        }

        std::vector<int> labels(n, -1);
        double inertia = 0.0;
        for (int sweep = 0; sweep < 200; ++sweep) {
            bool changed = false;
            inertia = 0.0;
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                double best = (beta.col(i) - centers.col(0)).squaredNorm();
                for (int c = 1; c < k; ++c) {
                    const double d2 = (beta.col(i) - centers.col(c)).squaredNorm();
                    if (d2 < best) {
                        best = d2;
                        arg = c;
                    }
                }
                if (labels[i] != arg) {
                    labels[i] = arg;
                    changed = true;
                }
                inertia += best;
            }
            if (!changed && sweep > 0) break;
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, k);
            std::vector<int> counts(k, 0);
            for (int i = 0; i < n; ++i) {
                sums.col(labels[i]) += beta.col(i);
                ++counts[labels[i]];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] > 0)
                    centers.col(c) = sums.col(c) / counts[c];
                else
                    // Empty cluster: reseed at the point farthest from its
                    // center (standard repair, keeps k clusters alive).
                    centers.col(c) = beta.col(stream.next_below(n));
            }
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_labels = labels;
        }
    }

    GroupAssignment out;
    out.labels = std::move(best_labels);
    // Empty clusters can survive when points < k distinct positions; compact
    // the label set so every reported group is nonempty.
    std::vector<int> used;
    for (int l : out.labels)
        if (std::find(used.begin(), used.end(), l) == used.end()) used.push_back(l);
    std::sort(used.begin(), used.end());
    for (int& l : out.labels)
        l = static_cast<int>(std::find(used.begin(), used.end(), l) - used.begin());
    out.num_groups = static_cast<int>(used.size());
    out.canonicalize();
    return out;
}

} // namespace

GroupAssignment detect_groups(const Eigen::MatrixXd& beta,
                              const GroupingConfig& cfg) {
    if (!beta.allFinite())
        throw NumericError("group detection received non-finite coefficients");
    if (beta.cols() < 1) throw DataError("group detection needs N >= 1");
    GroupAssignment out;
    if (cfg.mode == GroupingConfig::Mode::FusedGraph) {
        if (cfg.tau < 0.0)
            throw ConfigError("fused grouping needs a resolved tau >= 0");
        out = fused_components(beta, cfg.tau);
    } else {
        out = kmeans_cluster(beta, cfg.k, cfg.restarts, cfg.seed);
    }
    out.validate();
    return out;
}

Eigen::MatrixXd average_coefficients(const Eigen::MatrixXd& beta,
                                     const GroupAssignment& assignment) {
    assignment.validate();
    const auto groups = assignment.members();
    Eigen::MatrixXd theta(beta.rows(), assignment.num_groups);
    for (int k = 0; k < assignment.num_groups; ++k) {
        theta.col(k).setZero();
        for (int i : groups[k]) theta.col(k) += beta.col(i);
        theta.col(k) /= static_cast<double>(groups[k].size());
    }
    return theta;
}

Eigen::MatrixXd refit_coefficients(const MomentSystem& sys,
                                   const GroupAssignment& assignment) {
    assignment.validate();
    const auto groups = assignment.members();
    Eigen::MatrixXd theta(sys.feature_dim(), assignment.num_groups);
    for (int k = 0; k < assignment.num_groups; ++k)
        theta.col(k) = solve_group(sys, groups[k]);
    return theta;
}

GroupModel fit_group_model(const MomentSystem& sys, const Eigen::MatrixXd& beta,
                           const GroupingConfig& grouping, ThetaMode mode) {
    GroupModel model;
    model.assignment = detect_groups(beta, grouping);
    model.refit = mode == ThetaMode::Refit;
    model.theta = model.refit ? refit_coefficients(sys, model.assignment)
                              : average_coefficients(beta, model.assignment);
    const auto groups = model.assignment.members();
    model.sandwiches.reserve(groups.size());
    for (int k = 0; k < model.assignment.num_groups; ++k)
        model.sandwiches.push_back(sandwich(sys, groups[k], model.theta.col(k)));
    return model;
}

double q_value(const FeatureContext& ctx, const Eigen::VectorXd& theta,
               const Eigen::VectorXd& x, int action) {
    return ctx.z(x, action).dot(theta);
}

double v_value(const FeatureContext& ctx, const Policy& policy,
               const Eigen::VectorXd& theta, const Eigen::VectorXd& x) {
    return ctx.u(policy, x).dot(theta);
}

InferenceResult integrated_value(const MomentSystem& sys, const FeatureContext& ctx,
                                 const Policy& policy, const GroupModel& model,
                                 const std::vector<Eigen::VectorXd>& reference,
                                 double level) {
    if (reference.empty()) throw DataError("integrated value needs reference states");
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("confidence level must lie in (0,1)");

    Eigen::VectorXd ubar = Eigen::VectorXd::Zero(ctx.feature_dim());
    for (const auto& x : reference) ubar += ctx.u(policy, x);
    ubar /= static_cast<double>(reference.size());

    const double z = rng::normal_quantile(0.5 * (1.0 + level));
    const double root_nt = std::sqrt(static_cast<double>(sys.total_steps));

    InferenceResult out;
    out.level = level;
    out.groups.resize(model.assignment.num_groups);
    for (int k = 0; k < model.assignment.num_groups; ++k) {
        GroupInference& gi = out.groups[k];
        gi.value = ubar.dot(model.theta.col(k));

        const Eigen::MatrixXd& sigma = model.sandwiches[k].sigma;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(
            sigma, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(svd.singularValues().size() - 1);
        gi.sigma_condition =
            smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        if (!(smin > 0.0) || gi.sigma_condition > 1e12)
            throw NumericError("sandwich matrix for group " + std::to_string(k + 1) +
                               " is ill-posed (condition " +
                               std::to_string(gi.sigma_condition) + ")");
        // sigma^2 = (Sigma^-T ubar)^T Omega (Sigma^-T ubar); solving against
        // Sigma^T keeps the quadratic form symmetric by construction.
        const Eigen::VectorXd v =
            sigma.transpose().partialPivLu().solve(ubar);
        double s2 = v.dot(model.sandwiches[k].omega * v);
        if (s2 < 0.0) s2 = 0.0; // Omega PSD; clamp roundoff
        gi.se = std::sqrt(s2);
        const double half = z * gi.se / root_nt;
        gi.ci_lo = gi.value - half;
        gi.ci_hi = gi.value + half;
    }
    return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw DataError("rand index needs two labelings of equal size");
    const int n = static_cast<int>(a.size());
    const int ka = 1 + *std::max_element(a.begin(), a.end());
    const int kb = 1 + *std::max_element(b.begin(), b.end());
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
    for (int i = 0; i < n; ++i) table(a[i], b[i]) += 1.0;

    auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
    double sum_cells = 0.0;
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j) sum_cells += choose2(table(i, j));
    double sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < ka; ++i) sum_a += choose2(table.row(i).sum());
    for (int j = 0; j < kb; ++j) sum_b += choose2(table.col(j).sum());
    const double total = choose2(static_cast<double>(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0; // both partitions trivial
    return (sum_cells - expected) / (max_index - expected);
}

nlohmann::json group_model_to_json(const GroupModel& model,
                                   const InferenceResult& inference) {
    nlohmann::json groups = nlohmann::json::array();
    const auto members = model.assignment.members();
    for (int k = 0; k < model.assignment.num_groups; ++k) {
        nlohmann::json g;
        g["members"] = members[k];
        g["size"] = members[k].size();
        g["theta"] = std::vector<double>(
            model.theta.col(k).data(),
            model.theta.col(k).data() + model.theta.rows());
        if (k < static_cast<int>(inference.groups.size())) {
            g["V_R"] = inference.groups[k].value;
            g["se"] = inference.groups[k].se;
            g["ci"] = {inference.groups[k].ci_lo, inference.groups[k].ci_hi};
            g["sigma_condition"] = inference.groups[k].sigma_condition;
        }
        groups.push_back(std::move(g));
    }
    nlohmann::json j;
    j["K"] = model.assignment.num_groups;
    j["labels"] = model.assignment.labels;
    j["theta_mode"] = model.refit ? "refit" : "average";
    j["level"] = inference.level;
    j["groups"] = std::move(groups);
    return j;
}

} // namespace hetrl
