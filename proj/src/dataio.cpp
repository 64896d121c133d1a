#include "hetrl/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hetrl/errors.hpp"

namespace hetrl {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("cannot parse " + what + " from '" + s + "'");
    }
}

long parse_long(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("cannot parse " + what + " from '" + s + "'");
    }
}

// Round-trip-exact formatting for doubles in CSV output.
std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void finalize_actions(TrajectoryBatch& batch, const BatchSchema& schema) {
    int max_action = 0;
    for (const auto& tr : batch.trajectories)
        for (int a : tr.actions) max_action = std::max(max_action, a);
    batch.num_actions = schema.num_actions > 0 ? schema.num_actions : max_action;
    batch.gamma = schema.gamma;
    batch.validate();
}

TrajectoryBatch load_csv(const std::string& path, const BatchSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::string line;
    // Header is the first non-comment line; '#' lines carry embedded config.
    for (;;) {
        if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') break;
    }

    const auto header = split_csv_line(line);
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw DataError("'" + path + "': missing column '" + name + "'");
        return static_cast<int>(it - header.begin());
    };
    const int c_id = col("traj_id");
    const int c_t = col("t");
    const int c_action = col("action");
    const int c_reward = col("reward");
    std::vector<int> c_x;
    for (int d = 1;; ++d) {
        const std::string name = "x_" + std::to_string(d);
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) break;
        c_x.push_back(static_cast<int>(it - header.begin()));
    }
    if (c_x.empty()) throw DataError("'" + path + "': missing column 'x_1'");
    const int p = static_cast<int>(c_x.size());

    TrajectoryBatch batch;
    batch.state_dim = p;
    Trajectory* cur = nullptr;
    long expected_t = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < header.size())
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": expected " + std::to_string(header.size()) +
                            " fields");
        const std::string& id = fields[c_id];
        if (cur == nullptr || cur->id != id) {
            // New trajectories must not revisit an earlier id: rows of one
            // trajectory are contiguous in the file.
            for (const auto& tr : batch.trajectories)
                if (tr.id == id)
                    throw DataError("'" + path + "' line " + std::to_string(lineno) +
                                    ": trajectory '" + id + "' is not contiguous");
            batch.trajectories.emplace_back();
            cur = &batch.trajectories.back();
            cur->id = id;
            expected_t = 0;
        }
        const long t = parse_long(fields[c_t], "step index");
        if (t != expected_t)
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": step index " + std::to_string(t) +
                            " breaks 0-based contiguity");
        ++expected_t;

        Eigen::VectorXd x(p);
        for (int d = 0; d < p; ++d)
            x(d) = parse_double(fields[c_x[d]], "state coordinate");
        cur->states.push_back(std::move(x));
        // Parsed as if every row had a transition; the per-trajectory final
        // row (terminal state, action/reward ignorable) is trimmed after the
        // file is consumed.
        cur->actions.push_back(0);
        cur->rewards.push_back(0.0);
        const std::string& af = fields[c_action];
        const std::string& rf = fields[c_reward];
        if (!af.empty())
            cur->actions.back() =
                static_cast<int>(parse_long(af, "action")) - schema.action_base + 1;
        if (!rf.empty()) cur->rewards.back() = parse_double(rf, "reward");
    }
    if (batch.trajectories.empty())
        throw DataError("'" + path + "': no data rows");
    // Drop the per-trajectory terminal placeholders: the last row of each
    // block only supplies the terminal state.
    for (auto& tr : batch.trajectories) {
        if (tr.actions.size() < 2)
            throw DataError("trajectory '" + tr.id +
                            "' needs at least 2 rows (one transition)");
        tr.actions.pop_back();
        tr.rewards.pop_back();
    }
    finalize_actions(batch, schema);
    return batch;
}

TrajectoryBatch load_jsonl(const std::string& path, const BatchSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    TrajectoryBatch batch;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": " + e.what());
        }
        if (j.contains("_config")) continue; // embedded run config, not data
        Trajectory tr;
        tr.id = j.value("id", "traj" + std::to_string(lineno));
        if (!j.contains("states") || !j.contains("actions") || !j.contains("rewards"))
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": needs states, actions, rewards");
        for (const auto& row : j["states"]) {
            Eigen::VectorXd x(row.size());
            for (std::size_t d = 0; d < row.size(); ++d)
                x(static_cast<Eigen::Index>(d)) = row[d].get<double>();
            tr.states.push_back(std::move(x));
        }
        for (const auto& a : j["actions"])
            tr.actions.push_back(a.get<int>() - schema.action_base + 1);
        for (const auto& r : j["rewards"]) tr.rewards.push_back(r.get<double>());
        batch.trajectories.push_back(std::move(tr));
    }
    if (batch.trajectories.empty()) throw DataError("'" + path + "': empty file");
    batch.state_dim = static_cast<int>(batch.trajectories.front().states.empty()
                                           ? 0
                                           : batch.trajectories.front().states[0].size());
    finalize_actions(batch, schema);
    return batch;
}

} // namespace

BatchFormat parse_batch_format(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower == "csv") return BatchFormat::Csv;
    if (lower == "jsonl") return BatchFormat::Jsonl;
    throw ConfigError("unknown data format '" + name + "' (expected csv or jsonl)");
}

TrajectoryBatch load_batch(const std::string& path, BatchFormat format,
                           const BatchSchema& schema) {
    return format == BatchFormat::Csv ? load_csv(path, schema)
                                      : load_jsonl(path, schema);
}

void save_batch(const TrajectoryBatch& batch, const std::string& path,
                BatchFormat format, int action_base,
                const nlohmann::json* config) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    if (format == BatchFormat::Csv) {
        if (config) out << "# config: " << config->dump() << '\n';
        out << "traj_id,t";
        for (int d = 1; d <= batch.state_dim; ++d) out << ",x_" << d;
        out << ",action,reward\n";
        for (const auto& tr : batch.trajectories) {
            for (std::size_t t = 0; t < tr.states.size(); ++t) {
                out << tr.id << ',' << t;
                for (int d = 0; d < batch.state_dim; ++d)
                    out << ',' << format_double(tr.states[t](d));
                if (t < tr.actions.size())
                    out << ',' << (tr.actions[t] - 1 + action_base) << ','
                        << format_double(tr.rewards[t]);
                else
                    out << ",,";
                out << '\n';
            }
        }
    } else {
        if (config) {
            nlohmann::json meta;
            meta["_config"] = *config;
            out << meta.dump() << '\n';
        }
        for (const auto& tr : batch.trajectories) {
            nlohmann::json j;
            j["id"] = tr.id;
            nlohmann::json states = nlohmann::json::array();
            for (const auto& x : tr.states) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index d = 0; d < x.size(); ++d) row.push_back(x(d));
                states.push_back(std::move(row));
            }
            j["states"] = std::move(states);
            nlohmann::json actions = nlohmann::json::array();
            for (int a : tr.actions) actions.push_back(a - 1 + action_base);
            j["actions"] = std::move(actions);
            j["rewards"] = tr.rewards;
            out << j.dump() << '\n';
        }
    }
}

Policy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path + "': " + e.what());
    }
    return policy_from_json(j);
}

void save_policy(const Policy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << policy_to_json(policy).dump(2) << '\n';
}

} // namespace hetrl
