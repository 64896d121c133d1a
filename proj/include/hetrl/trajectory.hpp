#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace hetrl {

// One observed trajectory. Actions are stored 1-based ({1..M}) no matter
// how the source file encodes them. states holds T+1 entries: the state at
// every decision time plus the terminal next-state.
struct Trajectory {
    std::string id;
    std::vector<Eigen::VectorXd> states;
    std::vector<int> actions;
    std::vector<double> rewards;

    int length() const { return static_cast<int>(actions.size()); }
};

struct TrajectoryBatch {
    std::vector<Trajectory> trajectories;
    int state_dim = 0;
    int num_actions = 0;
    double gamma = 0.0;

    int size() const { return static_cast<int>(trajectories.size()); }

    // Sum of T_i. Normalizations divide by this rather than N*T so unequal
    // lengths are handled uniformly.
    long long total_steps() const {
        long long s = 0;
        for (const auto& tr : trajectories) s += tr.length();
        return s;
    }

    // Throws DataError on any structural violation (empty batch, length
    // mismatches, out-of-range actions, inconsistent dimensions, non-finite
    // values) and ConfigError for gamma outside [0,1).
    void validate() const;
};

} // namespace hetrl
