#include "hetrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hetrl/basis.hpp"
#include "hetrl/errors.hpp"
#include "hetrl/grouping.hpp"
#include "hetrl/moment.hpp"
#include "hetrl/parallel.hpp"
#include "hetrl/rng.hpp"

namespace hetrl {
namespace {

// Stream purposes; combined with the spec seed they key every random draw.
constexpr std::uint64_t kPurposeGenerate = 1;
constexpr std::uint64_t kPurposeRollout = 2;
constexpr std::uint64_t kPurposeReference = 3;
constexpr std::uint64_t kPurposeReplication = 4;

int sample_action(rng::Stream& stream, const Eigen::VectorXd& probs) {
    const double u = stream.next_u01();
    double acc = 0.0;
    for (Eigen::Index a = 0; a < probs.size(); ++a) {
        acc += probs(a);
        if (u <= acc) return static_cast<int>(a); // printed 0-based
    }
    return static_cast<int>(probs.size()) - 1;
}

} // namespace

void SimSpec::validate() const {
    if (n_per_group < 1) throw ConfigError("sim needs n_per_group >= 1");
    if (horizon < 1) throw ConfigError("sim needs horizon >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("sim gamma must lie in [0,1)");
    if (noise_sd < 0.0) throw ConfigError("sim noise sd must be >= 0");
    if ((b1 - b2).norm() == 0.0)
        throw ConfigError("group reward vectors must differ");
}

const Eigen::Vector2d& SimSpec::reward_vector(int group) const {
    if (group != 0 && group != 1)
        throw ConfigError("group index must be 0 or 1");
    return group == 0 ? b1 : b2;
}

Eigen::Vector2d sim_step(const SimSpec& spec, const Eigen::Vector2d& x,
                         int printed_action, const Eigen::Vector2d& noise) {
    const double s = 2.0 * printed_action - 1.0;
    Eigen::Vector2d next;
    next(0) = spec.dyn_coef * s * x(0) + noise(0);
    next(1) = -spec.dyn_coef * s * x(1) + noise(1);
    return next;
}

double sim_reward(const SimSpec& spec, const Eigen::Vector2d& x,
                  int printed_action, int group) {
    return x.dot(spec.reward_vector(group)) -
           spec.action_cost * (2.0 * printed_action - 1.0);
}

std::pair<TrajectoryBatch, std::vector<int>> generate(const SimSpec& spec,
                                                      int threads) {
    spec.validate();
    const int n = 2 * spec.n_per_group;
    TrajectoryBatch batch;
    batch.state_dim = SimSpec::state_dim;
    batch.num_actions = SimSpec::num_actions;
    batch.gamma = spec.gamma;
    batch.trajectories.resize(n);
    std::vector<int> membership(n);

    parallel_for(n, threads, [&](int i) {
        const int group = i < spec.n_per_group ? 0 : 1;
        membership[i] = group;
        rng::Stream stream(spec.seed,
                           {kPurposeGenerate, static_cast<std::uint64_t>(i)});
        Trajectory tr;
        {
            std::ostringstream id;
            id << "t" << i;
            tr.id = id.str();
        }
        Eigen::Vector2d x{stream.next_normal(), stream.next_normal()};
        tr.states.reserve(spec.horizon + 1);
        tr.actions.reserve(spec.horizon);
        tr.rewards.reserve(spec.horizon);
        for (int t = 0; t < spec.horizon; ++t) {
            const int a = stream.next_u01() < 0.5 ? 0 : 1; // Bernoulli(1/2)
            tr.states.push_back(x);
            tr.actions.push_back(a + 1);
            tr.rewards.push_back(sim_reward(spec, x, a, group));
            const Eigen::Vector2d noise{spec.noise_sd * stream.next_normal(),
                                        spec.noise_sd * stream.next_normal()};
            x = sim_step(spec, x, a, noise);
        }
        tr.states.push_back(x);
        batch.trajectories[i] = std::move(tr);
    });
    batch.validate();
    return {std::move(batch), std::move(membership)};
}

namespace {

double rollout_return(const SimSpec& spec, const Policy& policy, int group,
                      int horizon, rng::Stream& stream) {
    Eigen::Vector2d x{stream.next_normal(), stream.next_normal()};
    double value = 0.0;
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
        const int a = sample_action(stream, policy_probs(policy, x));
        value += disc * sim_reward(spec, x, a, group);
        disc *= spec.gamma;
        const Eigen::Vector2d noise{spec.noise_sd * stream.next_normal(),
                                    spec.noise_sd * stream.next_normal()};
        x = sim_step(spec, x, a, noise);
    }
    return value;
}

int adaptive_horizon(const SimSpec& spec, int group) {
    if (spec.gamma == 0.0) return 1;
    // Probe the reward magnitude along a long behavior-policy rollout.
    rng::Stream stream(spec.seed, {kPurposeRollout, 0xFFFFU});
    Eigen::Vector2d x{stream.next_normal(), stream.next_normal()};
    double r_max = 1e-12;
    for (int t = 0; t < 1000; ++t) {
        const int a = stream.next_u01() < 0.5 ? 0 : 1;
        r_max = std::max(r_max, std::abs(sim_reward(spec, x, a, group)));
        const Eigen::Vector2d noise{spec.noise_sd * stream.next_normal(),
                                    spec.noise_sd * stream.next_normal()};
        x = sim_step(spec, x, a, noise);
    }
    const int h = static_cast<int>(
        std::ceil(std::log(1e-6 / r_max) / std::log(spec.gamma)));
    return std::max(h, 1);
}

} // namespace

MCValue mc_true_value(const SimSpec& spec, const Policy& policy, int group,
                      int n_rollouts, int horizon, int threads) {
    spec.validate();
    if (n_rollouts < 2) throw ConfigError("mc value needs >= 2 rollouts");
    MCValue out;
    out.horizon = horizon > 0 ? horizon : adaptive_horizon(spec, group);
    out.rollouts = n_rollouts;

    std::vector<double> returns(n_rollouts);
    parallel_for(n_rollouts, threads, [&](int r) {
        rng::Stream stream(spec.seed,
                           {kPurposeRollout, static_cast<std::uint64_t>(group),
                            static_cast<std::uint64_t>(r)});
        returns[r] = rollout_return(spec, policy, group, out.horizon, stream);
    });

    double mean = 0.0;
    for (double v : returns) mean += v;
    mean /= n_rollouts;
    double var = 0.0;
    for (double v : returns) var += (v - mean) * (v - mean);
    var /= (n_rollouts - 1);
    out.value = mean;
    out.se = std::sqrt(var / n_rollouts);
    return out;
}

void CoverageSettings::validate() const {
    penalty.validate();
    admm.validate();
    if (kmeans_restarts < 1) throw ConfigError("coverage needs restarts >= 1");
    if (reps < 50) throw ConfigError("coverage needs at least 50 replications");
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("coverage level must lie in (0,1)");
    if (truth_rollouts < 100) throw ConfigError("coverage truth needs >= 100 rollouts");
    if (reference_size < 1) throw ConfigError("coverage needs reference states");
}

namespace {

struct RepOutcome {
    bool failed = false;
    // CI per true group, grouped estimator then pooled.
    double lo[2], hi[2], plo[2], phi_[2];
};

// Matches estimated groups (2 expected) to true groups by total agreement.
// Returns est-group index serving each true group.
std::array<int, 2> match_groups(const std::vector<int>& labels,
                                const std::vector<int>& truth) {
    int agree_identity = 0, agree_swapped = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int est = labels[i] == 0 ? 0 : 1;
        if (est == truth[i])
            ++agree_identity;
        else
            ++agree_swapped;
    }
    if (agree_identity >= agree_swapped) return {0, 1};
    return {1, 0};
}

RepOutcome run_coverage_rep(const SimSpec& cell_spec,
                            const CoverageSettings& settings,
                            std::uint64_t rep_key) {
    RepOutcome out;
    auto [batch, truth] = generate(cell_spec, 1);
    const Policy target =
        TabularPolicy(TabularPolicy::Rule::SimTargetV1, SimSpec::num_actions);
    FeatureContext ctx(settings.basis.resolve(batch), SimSpec::num_actions);
    const MomentSystem sys = assemble(batch, ctx, target, 1);

    ADMMConfig admm = settings.admm;
    admm.threads = 1;
    FusedADMM solver(sys, settings.penalty, admm);
    const ADMMResult fit = solver.solve();

    GroupingConfig grouping;
    grouping.mode = GroupingConfig::Mode::KMeans;
    grouping.k = 2;
    grouping.restarts = settings.kmeans_restarts;
    grouping.seed = rep_key;
    const GroupModel model =
        fit_group_model(sys, fit.beta, grouping, ThetaMode::Refit);

    // Fresh reference sample from the known initial-state law.
    rng::Stream ref_stream(cell_spec.seed, {kPurposeReference});
    std::vector<Eigen::VectorXd> reference(settings.reference_size);
    for (auto& x : reference) {
        Eigen::VectorXd v(2);
        v << ref_stream.next_normal(), ref_stream.next_normal();
        x = std::move(v);
    }

    const InferenceResult grouped =
        integrated_value(sys, ctx, target, model, reference, settings.level);

    // Estimated groups can number != 2 only with kmeans collapse on
    // degenerate fits; treat as failure.
    if (model.assignment.num_groups != 2) {
        out.failed = true;
        return out;
    }
    const auto matched = match_groups(model.assignment.labels, truth);
    for (int g = 0; g < 2; ++g) {
        out.lo[g] = grouped.groups[matched[g]].ci_lo;
        out.hi[g] = grouped.groups[matched[g]].ci_hi;
    }

    // Pooled baseline: one group holding everyone, same CI machinery.
    GroupModel pooled;
    pooled.assignment.num_groups = 1;
    pooled.assignment.labels.assign(batch.size(), 0);
    pooled.refit = true;
    pooled.theta = refit_coefficients(sys, pooled.assignment);
    pooled.sandwiches.push_back(
        sandwich(sys, pooled.assignment.members()[0], pooled.theta.col(0)));
    const InferenceResult pooled_inf =
        integrated_value(sys, ctx, target, pooled, reference, settings.level);
    for (int g = 0; g < 2; ++g) {
        out.plo[g] = pooled_inf.groups[0].ci_lo;
        out.phi_[g] = pooled_inf.groups[0].ci_hi;
    }
    return out;
}

} // namespace

CoverageReport coverage_experiment(const SimSpec& base, const std::vector<int>& ns,
                                   const std::vector<int>& ts,
                                   const CoverageSettings& settings) {
    base.validate();
    settings.validate();
    if (ns.empty() || ts.empty())
        throw ConfigError("coverage grid must be nonempty");

    CoverageReport report;
    report.level = settings.level;

    const Policy target =
        TabularPolicy(TabularPolicy::Rule::SimTargetV1, SimSpec::num_actions);
    for (int g = 0; g < 2; ++g) {
        const MCValue truth = mc_true_value(base, target, g,
                                            settings.truth_rollouts, 0,
                                            settings.threads);
        report.truth[g] = truth.value;
        report.truth_se[g] = truth.se;
        report.truth_horizon = truth.horizon;
    }

    for (int n : ns) {
        for (int t : ts) {
            CoverageCell cell;
            cell.n_per_group = n;
            cell.horizon = t;

            std::vector<RepOutcome> outcomes(settings.reps);
            parallel_for(settings.reps, settings.threads, [&](int rep) {
                SimSpec spec = base;
                spec.n_per_group = n;
                spec.horizon = t;
                spec.seed = rng::Stream(base.seed,
                                        {kPurposeReplication,
                                         static_cast<std::uint64_t>(n),
                                         static_cast<std::uint64_t>(t),
                                         static_cast<std::uint64_t>(rep)})
                                .next_u64();
                try {
                    outcomes[rep] = run_coverage_rep(spec, settings, spec.seed);
                } catch (const std::exception&) {
                    outcomes[rep].failed = true;
                }
            });

            int used = 0;
            for (const auto& oc : outcomes) {
                if (oc.failed) {
                    ++cell.failures;
                    continue;
                }
                ++used;
                for (int g = 0; g < 2; ++g) {
                    if (oc.lo[g] <= report.truth[g] && report.truth[g] <= oc.hi[g])
                        cell.coverage[g] += 1.0;
                    if (oc.plo[g] <= report.truth[g] &&
                        report.truth[g] <= oc.phi_[g])
                        cell.pooled_coverage[g] += 1.0;
                    cell.mean_width[g] += oc.hi[g] - oc.lo[g];
                    cell.pooled_mean_width[g] += oc.phi_[g] - oc.plo[g];
                }
            }
            cell.reps_used = used;
            cell.valid = cell.failures < 0.05 * settings.reps;
            if (used > 0) {
                for (int g = 0; g < 2; ++g) {
                    cell.coverage[g] /= used;
                    cell.pooled_coverage[g] /= used;
                    cell.mean_width[g] /= used;
                    cell.pooled_mean_width[g] /= used;
                }
            } else {
                cell.valid = false;
            }
            report.cells.push_back(cell);
        }
    }
    return report;
}

std::string coverage_csv(const CoverageReport& report) {
    std::ostringstream os;
    os << "n_per_group,horizon,group,truth,coverage,pooled_coverage,"
          "mean_ci_width,pooled_mean_ci_width,failures,reps_used,valid\n";
    for (const auto& cell : report.cells)
        for (int g = 0; g < 2; ++g)
            os << cell.n_per_group << ',' << cell.horizon << ',' << (g + 1) << ','
               << report.truth[g] << ',' << cell.coverage[g] << ','
               << cell.pooled_coverage[g] << ',' << cell.mean_width[g] << ','
               << cell.pooled_mean_width[g] << ',' << cell.failures << ','
               << cell.reps_used << ',' << (cell.valid ? 1 : 0) << '\n';
    return os.str();
}

nlohmann::json coverage_json(const CoverageReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : report.cells) {
        nlohmann::json c;
        c["n_per_group"] = cell.n_per_group;
        c["horizon"] = cell.horizon;
        c["coverage"] = {cell.coverage[0], cell.coverage[1]};
        c["pooled_coverage"] = {cell.pooled_coverage[0], cell.pooled_coverage[1]};
        c["mean_ci_width"] = {cell.mean_width[0], cell.mean_width[1]};
        c["pooled_mean_ci_width"] = {cell.pooled_mean_width[0],
                                     cell.pooled_mean_width[1]};
        c["failures"] = cell.failures;
        c["reps_used"] = cell.reps_used;
        c["valid"] = cell.valid;
        cells.push_back(std::move(c));
    }
    nlohmann::json j;
    j["truth"] = {report.truth[0], report.truth[1]};
    j["truth_se"] = {report.truth_se[0], report.truth_se[1]};
    j["truth_horizon"] = report.truth_horizon;
    j["level"] = report.level;
    j["cells"] = std::move(cells);
    return j;
}

std::vector<PolicyValueEntry> policy_value_experiment(
    const SimSpec& spec, const std::vector<std::pair<std::string, Policy>>& policies,
    const PolicyValueSettings& settings) {
    spec.validate();
    if (policies.empty()) throw ConfigError("policy value experiment needs policies");
    if (settings.rollouts < 2 || settings.reps < 2)
        throw ConfigError("policy value experiment needs >= 2 rollouts and reps");
    if (settings.horizon < 1) throw ConfigError("policy value horizon must be >= 1");

    std::vector<PolicyValueEntry> table;
    for (std::size_t p = 0; p < policies.size(); ++p) {
        for (int g = 0; g < 2; ++g) {
            std::vector<double> rep_means(settings.reps, 0.0);
            parallel_for(settings.reps, settings.threads, [&](int rep) {
                double sum = 0.0;
                for (int r = 0; r < settings.rollouts; ++r) {
                    rng::Stream stream(
                        spec.seed,
                        {kPurposeRollout, static_cast<std::uint64_t>(p),
                         static_cast<std::uint64_t>(g),
                         static_cast<std::uint64_t>(rep),
                         static_cast<std::uint64_t>(r)});
                    sum += rollout_return(spec, policies[p].second, g,
                                          settings.horizon, stream);
                }
                rep_means[rep] = sum / settings.rollouts;
            });
            double mean = 0.0;
            for (double v : rep_means) mean += v;
            mean /= settings.reps;
            double var = 0.0;
            for (double v : rep_means) var += (v - mean) * (v - mean);
            var /= (settings.reps - 1);
            PolicyValueEntry e;
            e.policy_name = policies[p].first;
            e.group = g + 1;
            e.value = mean;
            e.se = std::sqrt(var / settings.reps);
            table.push_back(std::move(e));
        }
    }
    return table;
}

std::string policy_value_csv(const std::vector<PolicyValueEntry>& table) {
    std::ostringstream os;
    os << "policy,group,value,se\n";
    for (const auto& e : table)
        os << e.policy_name << ',' << e.group << ',' << e.value << ',' << e.se
           << '\n';
    return os.str();
}

nlohmann::json policy_value_json(const std::vector<PolicyValueEntry>& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : table) {
        nlohmann::json r;
        r["policy"] = e.policy_name;
        r["group"] = e.group;
        r["value"] = e.value;
        r["se"] = e.se;
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace hetrl
