#pragma once

#include "meter/planner.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meter::sim {

enum class StrategyKind { oblivious, signal_branching, worst_case_tree };

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view text);

/// How the simulated developer picks the true loss p_t of its next model.
/// - oblivious: p_t = profile[t-1] (0.5 when the profile is empty), signals ignored
/// - signal_branching: p_t = branches[observed signals so far], keys like "" or "1,2"
/// - worst_case_tree: a fresh model with loss `loss` at every node of the signal tree
struct AdversaryStrategy {
    StrategyKind kind = StrategyKind::worst_case_tree;
    std::vector<double> profile;
    std::map<std::string, double> branches;
    double loss = 0.5;
};

/// Throws Error{validation} on out-of-range losses or a branch table that does
/// not cover every reachable signal history ("missing_branch").
void validate(const AdversaryStrategy& strategy, const MeterSpec& spec);

struct TrialOutcome {
    bool violated = false;
    double max_deviation = 0.0;
    std::vector<double> deviations;  // |test loss − p_t| per step
    std::vector<int> signals;        // what the developer observed
};

struct SimulationOptions {
    int trials = 1000;
    std::uint64_t seed = 0;
    std::optional<std::int64_t> test_size;  // defaults to the planned size
    std::optional<std::int64_t> val_size;   // defaults to the test size
    unsigned threads = 0;                   // 0: hardware concurrency
};

struct SimulationReport {
    int trials = 0;
    int violations = 0;
    double rate = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double mean_max_deviation = 0.0;
    std::int64_t required_size = 0;
    std::int64_t test_size = 0;
    std::int64_t val_size = 0;
};

constexpr double kMaxSampledLosses = 1e9;

/// Exact two-sided binomial interval.
std::pair<double, double> clopper_pearson(int successes, int trials, double confidence = 0.95);

/// Uniform in [0, 1) from (seed, stream, model, index); the same key always
/// gives the same draw.
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t model, std::uint64_t index);

TrialOutcome run_trial(const MeterSpec& spec, const AdversaryStrategy& strategy, std::int64_t test_size,
                       std::int64_t val_size, std::uint64_t seed, std::uint64_t trial);

SimulationReport run_trials(const MeterSpec& spec, const AdversaryStrategy& strategy, const SimulationOptions& options);

struct TraceReplay {
    std::vector<double> overfitting;
    std::vector<int> regular;
    std::vector<int> incremental;
};

/// Signals a meter would have shown for recorded per-step accuracies.
TraceReplay replay_trace(const MeterSpec& spec, std::span<const double> val_accuracy,
                         std::span<const double> test_accuracy);
/// Same, from overfitting values directly.
TraceReplay replay_overfitting(const MeterSpec& spec, std::span<const double> overfitting);

AdversaryStrategy strategy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdversaryStrategy& strategy);
nlohmann::json to_json(const SimulationReport& report);
nlohmann::json to_json(const TraceReplay& replay);

} // namespace meter::sim
