#pragma once

#include "meter/planner.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace meter::oracle {

/// Exhaustive enumeration caps m^T (summed over tenants) at this many histories.
inline constexpr std::uint64_t kHistoryCap = 10'000'000;

/// Node tallies of an enumerated dependency tree.
struct TreeTally {
    int signals = 0;
    int depth = 0;
    /// nodes[k-1][t-1] = h(k, t): distinct submissions at depth t whose own signal is k.
    std::vector<std::vector<std::uint64_t>> nodes;
    std::uint64_t total = 0;

    std::uint64_t at(int signal, int step) const { return nodes.at(signal - 1).at(step - 1); }
    std::vector<std::uint64_t> per_signal() const;
};

struct EnumerateOptions {
    std::vector<int> revert_steps;     // absolute steps t₁ ≤ … ≤ t_B at which the latest submission is reverted
    std::optional<std::vector<int>> tenancy;
};

/// Walks every reachable signal history and counts distinct submissions.
/// Throws Error{validation, "cap_exceeded"} past kHistoryCap.
TreeTally enumerate(int signals, int steps, MeterMode mode, const EnumerateOptions& options = {});

} // namespace meter::oracle
