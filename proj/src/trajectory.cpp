#include "hetrl/trajectory.hpp"

#include <cmath>

#include "hetrl/errors.hpp"

namespace hetrl {

void TrajectoryBatch::validate() const {
    if (trajectories.empty()) throw DataError("batch holds no trajectories");
    if (state_dim <= 0) throw DataError("state dimension must be positive");
    if (num_actions <= 0) throw DataError("action count must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("discount gamma must lie in [0,1)");

    for (const auto& tr : trajectories) {
        const int T = tr.length();
        if (T < 1) throw DataError("trajectory '" + tr.id + "' has no transitions");
        if (static_cast<int>(tr.states.size()) != T + 1)
            throw DataError("trajectory '" + tr.id +
                            "' needs T+1 states for T actions");
        if (static_cast<int>(tr.rewards.size()) != T)
            throw DataError("trajectory '" + tr.id +
                            "' has mismatched rewards length");
        for (const auto& x : tr.states) {
            if (x.size() != state_dim)
                throw DataError("trajectory '" + tr.id +
                                "' has a state of wrong dimension");
            if (!x.allFinite())
                throw DataError("trajectory '" + tr.id + "' has non-finite state");
        }
        for (int a : tr.actions) {
            if (a < 1 || a > num_actions)
                throw DataError("trajectory '" + tr.id + "' has action " +
                                std::to_string(a) + " outside {1.." +
                                std::to_string(num_actions) + "}");
        }
        for (double r : tr.rewards) {
            if (!std::isfinite(r))
                throw DataError("trajectory '" + tr.id + "' has non-finite reward");
        }
    }
}

} // namespace hetrl
