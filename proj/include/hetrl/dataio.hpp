#pragma once

#include <string>

#include "hetrl/policy.hpp"
#include "hetrl/trajectory.hpp"
#include "hetrl/vendor_json.hpp"

namespace hetrl {

enum class BatchFormat { Csv, Jsonl };

// Maps file contents onto the internal batch. gamma is not stored in data
// files, so it always comes from here. action_base is the file's encoding
// of the first action (0 for the simulation outputs, 1 for already 1-based
// files); num_actions = 0 means infer M as the largest action seen.
struct BatchSchema {
    double gamma = 0.0;
    int num_actions = 0;
    int action_base = 0;
};

BatchFormat parse_batch_format(const std::string& name);

TrajectoryBatch load_batch(const std::string& path, BatchFormat format,
                           const BatchSchema& schema);
// `config`, when given, is embedded at the top of the file: a "# config: ..."
// comment line in CSV, a {"_config": ...} first line in JSONL. Loaders skip
// both, so embedded files round-trip.
void save_batch(const TrajectoryBatch& batch, const std::string& path,
                BatchFormat format, int action_base = 0,
                const nlohmann::json* config = nullptr);

Policy load_policy(const std::string& path);
void save_policy(const Policy& policy, const std::string& path);

} // namespace hetrl
