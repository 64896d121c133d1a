// Command-line front end: data -> estimation -> inference -> experiments.
//
// Subcommands: evaluate (clustered policy evaluation with group CIs),
// iterate (clustered policy iteration), simulate / coverage / policy-value
// (synthetic-environment drivers). Exit codes: 0 ok, 2 bad configuration,
// 3 bad data, 4 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hetrl/acpi.hpp"
#include "hetrl/admm.hpp"
#include "hetrl/basis.hpp"
#include "hetrl/dataio.hpp"
#include "hetrl/errors.hpp"
#include "hetrl/grouping.hpp"
#include "hetrl/moment.hpp"
#include "hetrl/penalty.hpp"
#include "hetrl/policy.hpp"
#include "hetrl/sim.hpp"
#include "hetrl/vendor_json.hpp"

namespace {

using nlohmann::json;

// JSON config files: a flat object keyed by long option names for the
// invoked subcommand. A file whose top level carries a "config" object (for
// example a result file of a previous run) is read through that object, so
// any output can be replayed with --config. Command-line flags take
// precedence over the file; unknown keys are rejected.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") +
                                 e.what());
        }
        if (!j.is_object())
            throw CLI::FileError("config must be a JSON object");
        if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
        std::vector<CLI::ConfigItem> items;
        for (auto it = j.begin(); it != j.end(); ++it) {
            CLI::ConfigItem item;
            item.name = it.key();
            if (it.value().is_array())
                for (const auto& v : it.value()) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(it.value()));
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    static std::string scalar(const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    }
};

void attach_config(CLI::App* cmd) {
    cmd->set_config("--config", "", "JSON config file (flags override it)");
    cmd->config_formatter(std::make_shared<JsonConfig>());
    cmd->allow_config_extras(CLI::config_extras_mode::error);
}

// ---------------------------------------------------------------- helpers

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw hetrl::DataError("cannot write '" + path + "'");
    out << text;
}

void write_json_file(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string tok;
    std::stringstream ss(s);
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

// State sample CSV: columns x_1..x_p (other columns ignored), '#' comment
// lines skipped. Used for --reference.
std::vector<Eigen::VectorXd> load_states_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hetrl::DataError("cannot open '" + path + "'");
    std::string line;
    for (;;) {
        if (!std::getline(in, line))
            throw hetrl::DataError("'" + path + "': empty file");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') break;
    }
    const auto header = split(line, ',');
    std::vector<int> cols;
    for (int d = 1;; ++d) {
        const auto it = std::find(header.begin(), header.end(),
                                  "x_" + std::to_string(d));
        if (it == header.end()) break;
        cols.push_back(static_cast<int>(it - header.begin()));
    }
    if (cols.empty())
        throw hetrl::DataError("'" + path + "': missing column 'x_1'");

    std::vector<Eigen::VectorXd> states;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, ',');
        Eigen::VectorXd x(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t d = 0; d < cols.size(); ++d) {
            if (static_cast<std::size_t>(cols[d]) >= fields.size())
                throw hetrl::DataError("'" + path + "' line " +
                                       std::to_string(lineno) + ": too few fields");
            try {
                x(static_cast<Eigen::Index>(d)) = std::stod(fields[cols[d]]);
            } catch (const std::exception&) {
                throw hetrl::DataError("'" + path + "' line " +
                                       std::to_string(lineno) +
                                       ": cannot parse state coordinate");
            }
        }
        states.push_back(std::move(x));
    }
    if (states.empty()) throw hetrl::DataError("'" + path + "': no state rows");
    return states;
}

// Default reference sample: every observed state in the batch, terminal
// states included.
std::vector<Eigen::VectorXd> batch_states(const hetrl::TrajectoryBatch& batch) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(batch.total_steps()) +
                batch.trajectories.size());
    for (const auto& tr : batch.trajectories)
        out.insert(out.end(), tr.states.begin(), tr.states.end());
    return out;
}

hetrl::ThetaMode parse_theta_mode(const std::string& name) {
    if (name == "refit") return hetrl::ThetaMode::Refit;
    if (name == "average") return hetrl::ThetaMode::Average;
    throw hetrl::ConfigError("unknown theta mode '" + name +
                             "' (expected refit or average)");
}

// ------------------------------------------------------------ shared args

struct DataArgs {
    std::string path;
    std::string format = "csv";
    double gamma = 0.0;
    int num_actions = 0;
    int action_base = 0;
};

void add_data_args(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--data", a.path, "trajectory batch file")->required();
    cmd->add_option("--data-format", a.format, "batch file format: csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}))
        ->capture_default_str();
    cmd->add_option("--gamma", a.gamma, "discount factor in [0,1)")->required();
    cmd->add_option("--num-actions", a.num_actions,
                    "number of actions M; 0 infers the largest label seen")
        ->capture_default_str();
    cmd->add_option("--action-base", a.action_base,
                    "first action label used by the file")
        ->capture_default_str();
}

void data_config(json& c, const DataArgs& a) {
    c["data"] = a.path;
    c["data-format"] = a.format;
    c["gamma"] = a.gamma;
    c["num-actions"] = a.num_actions;
    c["action-base"] = a.action_base;
}

hetrl::TrajectoryBatch load_data(const DataArgs& a) {
    hetrl::BatchSchema schema;
    schema.gamma = a.gamma;
    schema.num_actions = a.num_actions;
    schema.action_base = a.action_base;
    return hetrl::load_batch(a.path, hetrl::parse_batch_format(a.format), schema);
}

struct AdmmArgs {
    double rho = 1.0;
    double eps_primal = 1e-4;
    int max_iters = 2000;
    std::string init = "per_trajectory_ridge";
    double ridge_eps = 1e-6;
};

void add_admm_args(CLI::App* cmd, AdmmArgs& a) {
    cmd->add_option("--rho", a.rho, "admm augmentation weight")
        ->capture_default_str();
    cmd->add_option("--eps-primal", a.eps_primal,
                    "stop when the largest pairwise residual falls below this")
        ->capture_default_str();
    cmd->add_option("--admm-max-iters", a.max_iters, "admm iteration cap")
        ->capture_default_str();
    cmd->add_option("--init", a.init,
                    "coefficient start: per_trajectory_ridge, pooled, or zeros")
        ->capture_default_str();
    cmd->add_option("--ridge-eps", a.ridge_eps,
                    "ridge used by the per-trajectory start")
        ->capture_default_str();
}

void admm_config(json& c, const AdmmArgs& a) {
    c["rho"] = a.rho;
    c["eps-primal"] = a.eps_primal;
    c["admm-max-iters"] = a.max_iters;
    c["init"] = a.init;
    c["ridge-eps"] = a.ridge_eps;
}

hetrl::ADMMConfig to_admm(const AdmmArgs& a, int threads) {
    hetrl::ADMMConfig cfg;
    cfg.rho = a.rho;
    cfg.eps_primal = a.eps_primal;
    cfg.max_iters = a.max_iters;
    cfg.init = hetrl::parse_admm_init(a.init);
    cfg.ridge_eps = a.ridge_eps;
    cfg.threads = threads;
    return cfg;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    DataArgs data;
    std::string policy_path;
    std::string basis = "identity";
    std::string penalty = "mcp:lambda=0.1:eta=1.5";
    std::string grouping = "fused";
    std::string theta_mode = "refit";
    AdmmArgs admm;
    double level = 0.95;
    std::string reference_path;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
    std::string trace_path;
};

json evaluate_config(const EvaluateArgs& a) {
    json c;
    data_config(c, a.data);
    c["policy"] = a.policy_path;
    c["basis"] = a.basis;
    c["penalty"] = a.penalty;
    c["grouping"] = a.grouping;
    c["theta-mode"] = a.theta_mode;
    admm_config(c, a.admm);
    c["level"] = a.level;
    if (!a.reference_path.empty()) c["reference"] = a.reference_path;
    c["seed"] = a.seed;
    c["threads"] = a.threads;
    c["out"] = a.out;
    if (!a.trace_path.empty()) c["trace"] = a.trace_path;
    return c;
}

void run_evaluate(const EvaluateArgs& a) {
    using namespace hetrl;
    const TrajectoryBatch batch = load_data(a.data);
    const Policy policy = load_policy(a.policy_path);
    const BasisSpec basis = parse_basis(a.basis).resolve(batch);
    const FeatureContext ctx(basis, batch.num_actions);
    const PenaltyConfig penalty = parse_penalty(a.penalty);

    GroupingConfig grouping = parse_grouping(a.grouping);
    grouping.seed = a.seed;
    if (grouping.mode == GroupingConfig::Mode::FusedGraph && grouping.tau < 0.0)
        grouping.tau = 0.5 * penalty.lambda;

    ADMMConfig admm = to_admm(a.admm, a.threads);
    std::ofstream trace;
    if (!a.trace_path.empty()) {
        trace.open(a.trace_path);
        if (!trace) throw DataError("cannot write '" + a.trace_path + "'");
        admm.trace = &trace;
    }

    const MomentSystem sys = assemble(batch, ctx, policy, a.threads);
    const FusedADMM solver(sys, penalty, admm);
    const ADMMResult fit = solver.solve();
    const GroupModel model =
        fit_group_model(sys, fit.beta, grouping, parse_theta_mode(a.theta_mode));
    const auto reference = a.reference_path.empty()
                               ? batch_states(batch)
                               : load_states_csv(a.reference_path);
    const InferenceResult inference =
        integrated_value(sys, ctx, policy, model, reference, a.level);

    json result = group_model_to_json(model, inference);
    result["basis"] = basis.to_json();
    result["admm"] = {{"iterations", fit.diag.iterations},
                      {"converged", fit.diag.converged},
                      {"final_residual", fit.diag.final_residual}};
    result["config"] = evaluate_config(a);
    write_json_file(a.out, result);

    const auto sizes = model.assignment.sizes();
    std::cout << "groups: " << model.assignment.num_groups << "\n";
    for (int k = 0; k < model.assignment.num_groups; ++k) {
        const auto& g = inference.groups[static_cast<std::size_t>(k)];
        std::cout << "  group " << (k + 1) << ": " << sizes[static_cast<std::size_t>(k)]
                  << " members  V_R = " << g.value << "  " << 100.0 * a.level
                  << "% CI [" << g.ci_lo << ", " << g.ci_hi << "]\n";
    }
    std::cout << "admm: " << fit.diag.iterations << " iterations, "
              << (fit.diag.converged ? "converged" : "iteration cap reached")
              << " (final residual " << fit.diag.final_residual << ")\n"
              << "wrote " << a.out << "\n";
}

// ----------------------------------------------------------------- iterate

struct IterateArgs {
    DataArgs data;
    std::string basis = "identity";
    std::string penalty = "mcp:lambda=0.1:eta=1.5";
    std::string grouping = "fused";
    AdmmArgs admm;
    int max_outer = 100;
    double tol_v = 1e-4;
    int force_k = 0;
    bool policy_intercept = true;
    int opt_max_iters = 200;
    double grad_tol = 1e-6;
    double opt_step = 1.0;
    std::string reference_path;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
    std::string trace_path;
};

json iterate_config(const IterateArgs& a) {
    json c;
    data_config(c, a.data);
    c["basis"] = a.basis;
    c["penalty"] = a.penalty;
    c["grouping"] = a.grouping;
    admm_config(c, a.admm);
    c["max-outer"] = a.max_outer;
    c["tol-v"] = a.tol_v;
    c["force-k"] = a.force_k;
    c["policy-intercept"] = a.policy_intercept;
    c["opt-max-iters"] = a.opt_max_iters;
    c["grad-tol"] = a.grad_tol;
    c["opt-step"] = a.opt_step;
    if (!a.reference_path.empty()) c["reference"] = a.reference_path;
    c["seed"] = a.seed;
    c["threads"] = a.threads;
    c["out"] = a.out;
    if (!a.trace_path.empty()) c["trace"] = a.trace_path;
    return c;
}

void run_iterate(const IterateArgs& a) {
    using namespace hetrl;
    const TrajectoryBatch batch = load_data(a.data);
    const BasisSpec basis = parse_basis(a.basis).resolve(batch);

    ACPIConfig cfg;
    cfg.max_outer = a.max_outer;
    cfg.tol_v = a.tol_v;
    cfg.force_k = a.force_k;
    cfg.policy_intercept = a.policy_intercept;
    cfg.optimizer.max_iters = a.opt_max_iters;
    cfg.optimizer.grad_tol = a.grad_tol;
    cfg.optimizer.init_step = a.opt_step;
    cfg.penalty = parse_penalty(a.penalty);
    cfg.grouping = parse_grouping(a.grouping);
    cfg.grouping.seed = a.seed;
    cfg.admm = to_admm(a.admm, a.threads);
    cfg.threads = a.threads;

    std::ofstream trace;
    if (!a.trace_path.empty()) {
        trace.open(a.trace_path);
        if (!trace) throw DataError("cannot write '" + a.trace_path + "'");
        cfg.trace = &trace;
    }

    const auto reference = a.reference_path.empty()
                               ? batch_states(batch)
                               : load_states_csv(a.reference_path);
    const ACPIResult result = run_acpi(batch, basis, cfg, reference);

    json out = acpi_result_to_json(result);
    out["basis"] = basis.to_json();
    out["config"] = iterate_config(a);
    write_json_file(a.out, out);

    std::cout << (result.converged ? "converged" : "stopped") << " after "
              << result.iterations << " outer iterations, "
              << result.groups.size() << " groups\n";
    for (std::size_t k = 0; k < result.groups.size(); ++k)
        std::cout << "  group " << (k + 1) << ": "
                  << result.groups[k].members.size()
                  << " members  V_R = " << result.groups[k].value << "\n";
    std::cout << "wrote " << a.out << "\n";
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    int n_per_group = 100;
    int horizon = 10;
    double gamma = 0.6;
    std::uint64_t seed = 1;
    std::string format = "csv";
    std::string out;
    int threads = 0;
};

json simulate_config(const SimulateArgs& a) {
    json c;
    c["n-per-group"] = a.n_per_group;
    c["t"] = a.horizon;
    c["gamma"] = a.gamma;
    c["seed"] = a.seed;
    c["format"] = a.format;
    c["out"] = a.out;
    c["threads"] = a.threads;
    return c;
}

void run_simulate(const SimulateArgs& a) {
    using namespace hetrl;
    SimSpec spec;
    spec.n_per_group = a.n_per_group;
    spec.horizon = a.horizon;
    spec.gamma = a.gamma;
    spec.seed = a.seed;

    const auto [batch, membership] = generate(spec, a.threads);
    const json cfg = simulate_config(a);
    save_batch(batch, a.out, parse_batch_format(a.format), 0, &cfg);

    const std::string side = a.out + ".membership.csv";
    std::ofstream ms(side);
    if (!ms) throw DataError("cannot write '" + side + "'");
    ms << "# config: " << cfg.dump() << "\n" << "traj_id,group\n";
    for (int i = 0; i < batch.size(); ++i)
        ms << batch.trajectories[static_cast<std::size_t>(i)].id << ','
           << membership[static_cast<std::size_t>(i)] + 1 << '\n';

    std::cout << "wrote " << a.out << " (" << batch.size()
              << " trajectories, horizon " << spec.horizon << ") and " << side
              << "\n";
}

// ---------------------------------------------------------------- coverage

struct CoverageArgs {
    std::vector<std::string> grid{"n=100", "t=40"};
    int reps = 200;
    double level = 0.95;
    int truth_rollouts = 200000;
    int reference_size = 2000;
    int kmeans_restarts = 10;
    std::string basis = "identity";
    std::string penalty = "mcp:lambda=0.1:eta=1.5";
    AdmmArgs admm;
    double gamma = 0.6;
    std::uint64_t seed = 1;
    std::string format = "csv";
    std::string out;
    int threads = 0;
};

json coverage_config(const CoverageArgs& a) {
    json c;
    c["grid"] = a.grid;
    c["reps"] = a.reps;
    c["level"] = a.level;
    c["truth-rollouts"] = a.truth_rollouts;
    c["reference-size"] = a.reference_size;
    c["kmeans-restarts"] = a.kmeans_restarts;
    c["basis"] = a.basis;
    c["penalty"] = a.penalty;
    admm_config(c, a.admm);
    c["gamma"] = a.gamma;
    c["seed"] = a.seed;
    c["format"] = a.format;
    if (!a.out.empty()) c["out"] = a.out;
    c["threads"] = a.threads;
    return c;
}

void parse_grid(const std::vector<std::string>& tokens, std::vector<int>& ns,
                std::vector<int>& ts) {
    for (const auto& token : tokens) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw hetrl::ConfigError("grid token '" + token +
                                     "' needs n=... or t=...");
        const std::string key = token.substr(0, eq);
        std::vector<int>* dst = nullptr;
        if (key == "n")
            dst = &ns;
        else if (key == "t")
            dst = &ts;
        else
            throw hetrl::ConfigError("unknown grid axis '" + key + "'");
        dst->clear();
        for (const auto& v : split(token.substr(eq + 1), ',')) {
            try {
                dst->push_back(std::stoi(v));
            } catch (const std::exception&) {
                throw hetrl::ConfigError("grid value '" + v + "' is not a number");
            }
            if (dst->back() < 1)
                throw hetrl::ConfigError("grid values must be >= 1");
        }
    }
    if (ns.empty() || ts.empty())
        throw hetrl::ConfigError("grid needs both n=... and t=...");
}

void run_coverage(const CoverageArgs& a) {
    using namespace hetrl;
    std::vector<int> ns, ts;
    parse_grid(a.grid, ns, ts);

    SimSpec base;
    base.gamma = a.gamma;
    base.seed = a.seed;

    CoverageSettings st;
    st.basis = parse_basis(a.basis);
    st.penalty = parse_penalty(a.penalty);
    st.admm = to_admm(a.admm, 1); // replications parallelize, not the solver
    st.kmeans_restarts = a.kmeans_restarts;
    st.reps = a.reps;
    st.level = a.level;
    st.truth_rollouts = a.truth_rollouts;
    st.reference_size = a.reference_size;
    st.threads = a.threads;

    const CoverageReport report = coverage_experiment(base, ns, ts, st);
    const json cfg = coverage_config(a);
    if (a.format == "csv") {
        write_text(a.out, "# config: " + cfg.dump() + "\n" + coverage_csv(report));
    } else {
        json j = coverage_json(report);
        j["config"] = cfg;
        write_json_file(a.out, j);
    }
    if (!a.out.empty()) std::cout << "wrote " << a.out << "\n";
}

// ------------------------------------------------------------ policy-value

struct PolicyValueArgs {
    int rollouts = 500;
    int horizon = 50;
    int reps = 10;
    double gamma = 0.6;
    std::uint64_t seed = 1;
    std::vector<std::string> policy_specs{"target=@sim_target_v1"};
    std::string format = "csv";
    std::string out;
    int threads = 0;
};

json policy_value_config(const PolicyValueArgs& a) {
    json c;
    c["rollouts"] = a.rollouts;
    c["t"] = a.horizon;
    c["reps"] = a.reps;
    c["gamma"] = a.gamma;
    c["seed"] = a.seed;
    c["policy"] = a.policy_specs;
    c["format"] = a.format;
    if (!a.out.empty()) c["out"] = a.out;
    c["threads"] = a.threads;
    return c;
}

void run_policy_value(const PolicyValueArgs& a) {
    using namespace hetrl;
    std::vector<std::pair<std::string, Policy>> policies;
    for (const auto& tok : a.policy_specs) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw ConfigError("policy '" + tok + "' needs name=file form");
        const std::string name = tok.substr(0, eq);
        const std::string src = tok.substr(eq + 1);
        if (src == "@sim_target_v1")
            policies.emplace_back(name, TabularPolicy(TabularPolicy::Rule::SimTargetV1,
                                                      SimSpec::num_actions));
        else if (src == "@uniform")
            policies.emplace_back(name, TabularPolicy(TabularPolicy::Rule::Uniform,
                                                      SimSpec::num_actions));
        else
            policies.emplace_back(name, load_policy(src));
    }

    SimSpec spec;
    spec.gamma = a.gamma;
    spec.seed = a.seed;

    PolicyValueSettings st;
    st.rollouts = a.rollouts;
    st.horizon = a.horizon;
    st.reps = a.reps;
    st.threads = a.threads;

    const auto table = policy_value_experiment(spec, policies, st);
    const json cfg = policy_value_config(a);
    if (a.format == "csv") {
        write_text(a.out,
                   "# config: " + cfg.dump() + "\n" + policy_value_csv(table));
    } else {
        json j;
        j["table"] = policy_value_json(table);
        j["config"] = cfg;
        write_json_file(a.out, j);
    }
    if (!a.out.empty()) std::cout << "wrote " << a.out << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clustered offline policy evaluation and iteration"};
    app.require_subcommand(1);

    EvaluateArgs ev;
    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "fit per-trajectory coefficients, cluster, report group CIs");
    attach_config(evaluate);
    add_data_args(evaluate, ev.data);
    evaluate->add_option("--policy", ev.policy_path, "target policy JSON file")
        ->required();
    evaluate->add_option("--basis", ev.basis,
                         "identity[:intercept=BOOL] or bspline:degree=D:knots=K")
        ->capture_default_str();
    evaluate->add_option("--penalty", ev.penalty,
                         "mcp:lambda=L:eta=E or scad:lambda=L:eta=E")
        ->capture_default_str();
    evaluate->add_option("--grouping", ev.grouping,
                         "fused[:tau=T] or kmeans:k=K[:restarts=R]")
        ->capture_default_str();
    evaluate->add_option("--theta-mode", ev.theta_mode,
                         "group coefficients: refit or average")
        ->check(CLI::IsMember({"refit", "average"}))
        ->capture_default_str();
    add_admm_args(evaluate, ev.admm);
    evaluate->add_option("--level", ev.level, "confidence level")
        ->capture_default_str();
    evaluate->add_option("--reference", ev.reference_path,
                         "state sample CSV for the integrated value "
                         "(default: all states in --data)");
    evaluate->add_option("--seed", ev.seed, "root random seed")
        ->capture_default_str();
    evaluate->add_option("--threads", ev.threads,
                         "worker threads (0 = HRL_THREADS or all cores)")
        ->capture_default_str();
    evaluate->add_option("--out", ev.out, "result JSON path")->required();
    evaluate->add_option("--trace", ev.trace_path,
                         "solver iteration trace (JSON lines)");

    IterateArgs it;
    CLI::App* iterate = app.add_subcommand(
        "iterate", "alternate clustered evaluation and policy improvement");
    attach_config(iterate);
    add_data_args(iterate, it.data);
    iterate->add_option("--basis", it.basis,
                        "identity[:intercept=BOOL] or bspline:degree=D:knots=K")
        ->capture_default_str();
    iterate->add_option("--penalty", it.penalty,
                        "mcp:lambda=L:eta=E or scad:lambda=L:eta=E")
        ->capture_default_str();
    iterate->add_option("--grouping", it.grouping,
                        "fused[:tau=T] or kmeans:k=K[:restarts=R]")
        ->capture_default_str();
    add_admm_args(iterate, it.admm);
    iterate->add_option("--max-outer", it.max_outer, "outer iteration cap")
        ->capture_default_str();
    iterate->add_option("--tol-v", it.tol_v,
                        "value-change convergence tolerance")
        ->capture_default_str();
    iterate->add_option("--force-k", it.force_k,
                        "0 = discover groups; 1 = pooled; >=2 = fixed k-means K")
        ->capture_default_str();
    iterate->add_flag("--policy-intercept,!--no-policy-intercept",
                      it.policy_intercept, "intercept in the softmax policies")
        ->capture_default_str();
    iterate->add_option("--opt-max-iters", it.opt_max_iters,
                        "policy optimizer iteration cap")
        ->capture_default_str();
    iterate->add_option("--grad-tol", it.grad_tol,
                        "policy optimizer gradient tolerance")
        ->capture_default_str();
    iterate->add_option("--opt-step", it.opt_step,
                        "policy optimizer initial step size")
        ->capture_default_str();
    iterate->add_option("--reference", it.reference_path,
                        "state sample CSV (default: all states in --data)");
    iterate->add_option("--seed", it.seed, "root random seed")
        ->capture_default_str();
    iterate->add_option("--threads", it.threads,
                        "worker threads (0 = HRL_THREADS or all cores)")
        ->capture_default_str();
    iterate->add_option("--out", it.out, "result JSON path")->required();
    iterate->add_option("--trace", it.trace_path,
                        "outer-iteration trace (JSON lines, flushed per line)");

    SimulateArgs sm;
    CLI::App* simulate =
        app.add_subcommand("simulate", "draw a batch from the two-group environment");
    attach_config(simulate);
    simulate->add_option("--n-per-group", sm.n_per_group, "trajectories per group")
        ->capture_default_str();
    simulate->add_option("--t", sm.horizon, "steps per trajectory")
        ->capture_default_str();
    simulate->add_option("--gamma", sm.gamma, "discount factor recorded for the run")
        ->capture_default_str();
    simulate->add_option("--seed", sm.seed, "root random seed")
        ->capture_default_str();
    simulate->add_option("--format", sm.format, "output format: csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}))
        ->capture_default_str();
    simulate->add_option("--out", sm.out, "batch output path")->required();
    simulate->add_option("--threads", sm.threads,
                         "worker threads (0 = HRL_THREADS or all cores)")
        ->capture_default_str();

    CoverageArgs cv;
    CLI::App* coverage = app.add_subcommand(
        "coverage", "CI coverage of the clustered estimator vs the pooled baseline");
    attach_config(coverage);
    coverage->add_option("--grid", cv.grid, "cells, e.g. --grid n=20,50,100 t=10,30,40")
        ->expected(1, 2)
        ->capture_default_str();
    coverage->add_option("--reps", cv.reps, "replications per cell")
        ->capture_default_str();
    coverage->add_option("--level", cv.level, "confidence level")
        ->capture_default_str();
    coverage->add_option("--truth-rollouts", cv.truth_rollouts,
                         "Monte-Carlo rollouts behind the reference truth")
        ->capture_default_str();
    coverage->add_option("--reference-size", cv.reference_size,
                         "reference states drawn per replication")
        ->capture_default_str();
    coverage->add_option("--kmeans-restarts", cv.kmeans_restarts,
                         "k-means restarts per replication")
        ->capture_default_str();
    coverage->add_option("--basis", cv.basis,
                         "estimator sieve: identity[:intercept=BOOL] or "
                         "bspline:degree=D:knots=K")
        ->capture_default_str();
    coverage->add_option("--penalty", cv.penalty,
                         "mcp:lambda=L:eta=E or scad:lambda=L:eta=E")
        ->capture_default_str();
    add_admm_args(coverage, cv.admm);
    coverage->add_option("--gamma", cv.gamma, "discount factor")
        ->capture_default_str();
    coverage->add_option("--seed", cv.seed, "root random seed")
        ->capture_default_str();
    coverage->add_option("--format", cv.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    coverage->add_option("--out", cv.out, "output path (default: stdout)");
    coverage->add_option("--threads", cv.threads,
                         "worker threads (0 = HRL_THREADS or all cores)")
        ->capture_default_str();

    PolicyValueArgs pv;
    CLI::App* policy_value = app.add_subcommand(
        "policy-value", "Monte-Carlo value of named policies on each group");
    attach_config(policy_value);
    policy_value->add_option("--rollouts", pv.rollouts, "rollouts per repetition")
        ->capture_default_str();
    policy_value->add_option("--t", pv.horizon, "rollout horizon")
        ->capture_default_str();
    policy_value->add_option("--reps", pv.reps, "independent repetitions")
        ->capture_default_str();
    policy_value->add_option("--gamma", pv.gamma, "discount factor")
        ->capture_default_str();
    policy_value->add_option("--seed", pv.seed, "root random seed")
        ->capture_default_str();
    policy_value->add_option("--policy", pv.policy_specs,
                             "name=FILE entries; @sim_target_v1 and @uniform "
                             "name the built-in rules")
        ->capture_default_str();
    policy_value->add_option("--format", pv.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    policy_value->add_option("--out", pv.out, "output path (default: stdout)");
    policy_value->add_option("--threads", pv.threads,
                             "worker threads (0 = HRL_THREADS or all cores)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
        if (evaluate->parsed()) run_evaluate(ev);
        if (iterate->parsed()) run_iterate(it);
        if (simulate->parsed()) run_simulate(sm);
        if (coverage->parsed()) run_coverage(cv);
        if (policy_value->parsed()) run_policy_value(pv);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 2;
    } catch (const hetrl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hetrl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const hetrl::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
