#include "meter/oracle.hpp"

#include "meter/error.hpp"

#include <cmath>
#include <unordered_map>

namespace meter::oracle {

namespace {

struct Walker {
    int signals;
    MeterMode mode;
    TreeTally& tally;

    int first_child_signal(int parent_signal) const {
        return mode == MeterMode::incremental ? std::max(parent_signal, 1) : 1;
    }

    void record(int signal, int depth) {
        ++tally.nodes[static_cast<std::size_t>(signal - 1)][static_cast<std::size_t>(depth - 1)];
        ++tally.total;
    }

    // Plain tree: every path prefix is its own node.
    void walk(int depth, int max_depth, int parent_signal) {
        if (depth > max_depth) {
            return;
        }
        for (int k = first_child_signal(parent_signal); k <= signals; ++k) {
            record(k, depth);
            walk(depth + 1, max_depth, k);
        }
    }
};

// Replays the step-by-step process with the latest submission popped at each
// scheduled revert step. A node is identified by its retained parent, the
// number of reverts already taken, and its own signal; histories that differ
// only in a reverted signal therefore reach the same later nodes.
class RevertWalker {
public:
    RevertWalker(int signals, int steps, MeterMode mode, const std::vector<int>& reverts, TreeTally& tally)
        : signals_(signals), steps_(steps), mode_(mode), tally_(tally), reverts_at_(static_cast<std::size_t>(steps) + 1, 0) {
        for (int t : reverts) {
            ++reverts_at_[static_cast<std::size_t>(t)];
        }
    }

    void run() { step(1, 0); }

private:
    struct Frame {
        std::uint64_t id;
        int signal;
    };

    std::uint64_t intern(std::uint64_t parent, int epoch, int signal, int depth) {
        const std::uint64_t key = (parent << 24) | (static_cast<std::uint64_t>(epoch) << 16) | static_cast<std::uint64_t>(signal);
        auto [it, inserted] = ids_.try_emplace(key, ids_.size() + 1);
        if (inserted) {
            ++tally_.nodes[static_cast<std::size_t>(signal - 1)][static_cast<std::size_t>(depth - 1)];
            ++tally_.total;
        }
        return it->second;
    }

    void step(int s, int epoch) {
        if (s > steps_) {
            return;
        }
        const std::uint64_t parent = stack_.empty() ? 0 : stack_.back().id;
        const int parent_signal = stack_.empty() ? 0 : stack_.back().signal;
        const int depth = static_cast<int>(stack_.size()) + 1;
        const int first = mode_ == MeterMode::incremental ? std::max(parent_signal, 1) : 1;
        for (int k = first; k <= signals_; ++k) {
            stack_.push_back({intern(parent, epoch, k, depth), k});
            const int pops = reverts_at_[static_cast<std::size_t>(s)];
            std::vector<Frame> popped;
            for (int i = 0; i < pops; ++i) {
                popped.push_back(stack_.back());
                stack_.pop_back();
            }
            step(s + 1, epoch + pops);
            for (auto it = popped.rbegin(); it != popped.rend(); ++it) {
                stack_.push_back(*it);
            }
            stack_.pop_back();
        }
    }

    int signals_;
    int steps_;
    MeterMode mode_;
    TreeTally& tally_;
    std::vector<int> reverts_at_;
    std::vector<Frame> stack_;
    std::unordered_map<std::uint64_t, std::uint64_t> ids_;
};

} // namespace

std::vector<std::uint64_t> TreeTally::per_signal() const {
    std::vector<std::uint64_t> out;
    for (const auto& row : nodes) {
        std::uint64_t sum = 0;
        for (auto v : row) {
            sum += v;
        }
        out.push_back(sum);
    }
    return out;
}

TreeTally enumerate(int signals, int steps, MeterMode mode, const EnumerateOptions& options) {
    if (signals < 1 || steps < 1) {
        invalid("parameter_out_of_range", "enumeration needs m >= 1 and T >= 1");
    }
    if (std::pow(static_cast<long double>(signals), steps) > static_cast<long double>(kHistoryCap)) {
        invalid("cap_exceeded", "enumeration refused: m^T = " + std::to_string(signals) + "^" + std::to_string(steps) +
                                    " exceeds the limit of " + std::to_string(kHistoryCap) + " histories");
    }
    const auto& reverts = options.revert_steps;
    const bool multi_tenant = options.tenancy && options.tenancy->size() > 1;
    if (multi_tenant && !reverts.empty()) {
        invalid("incompatible_options", "reverts cannot be combined with more than one tenant");
    }
    if (!reverts.empty()) {
        // Same schedule rules as the closed forms.
        (void)count_time_travel(signals, steps, reverts, mode);
    }

    TreeTally tally;
    tally.signals = signals;
    tally.depth = steps;
    tally.nodes.assign(static_cast<std::size_t>(signals), std::vector<std::uint64_t>(static_cast<std::size_t>(steps), 0));

    if (!reverts.empty()) {
        RevertWalker(signals, steps, mode, reverts, tally).run();
        return tally;
    }
    Walker walker{signals, mode, tally};
    if (options.tenancy) {
        long sum = 0;
        for (int t : *options.tenancy) {
            if (t < 1) {
                invalid("invalid_spec", "tenant step counts must be positive");
            }
            sum += t;
        }
        if (options.tenancy->empty() || sum != steps) {
            invalid("invalid_spec", "tenant step counts must be nonempty and sum to T");
        }
        // Each tenant starts from a fresh history, so its subtree never shares nodes with another tenant's.
        for (int t : *options.tenancy) {
            walker.walk(1, t, 0);
        }
        return tally;
    }
    walker.walk(1, steps, 0);
    return tally;
}

} // namespace meter::oracle
