#include "meter/simulator.hpp"

#include "meter/engine.hpp"
#include "meter/error.hpp"

#include <boost/math/distributions/beta.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

namespace meter::sim {

namespace {

constexpr std::uint64_t kTestStream = 1;
constexpr std::uint64_t kValStream = 2;

// SplitMix64 finalizer.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string history_key(const std::vector<int>& history) {
    std::string key;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i > 0) {
            key += ',';
        }
        key += std::to_string(history[i]);
    }
    return key;
}

void require_loss(double p, const std::string& where) {
    if (!(p >= 0.0 && p <= 1.0)) {
        invalid("invalid_strategy", where + ": true loss must lie in [0, 1]");
    }
}

std::int64_t count_errors(std::uint64_t seed, std::uint64_t stream, std::uint64_t model, std::int64_t n, double p) {
    std::int64_t errors = 0;
    for (std::int64_t j = 0; j < n; ++j) {
        errors += counter_uniform(seed, stream, model, static_cast<std::uint64_t>(j)) < p ? 1 : 0;
    }
    return errors;
}

} // namespace

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
    case StrategyKind::oblivious: return "oblivious";
    case StrategyKind::signal_branching: return "signal-branching";
    case StrategyKind::worst_case_tree: return "worst-case-tree";
    }
    return "worst-case-tree";
}

StrategyKind parse_strategy_kind(std::string_view text) {
    std::string t(text);
    std::replace(t.begin(), t.end(), '_', '-');
    if (t == "oblivious") return StrategyKind::oblivious;
    if (t == "signal-branching") return StrategyKind::signal_branching;
    if (t == "worst-case-tree") return StrategyKind::worst_case_tree;
    invalid("invalid_strategy", "unknown strategy kind '" + std::string(text) +
                                    "' (expected oblivious, signal-branching or worst-case-tree)");
}

void validate(const AdversaryStrategy& strategy, const MeterSpec& spec) {
    meter::validate(spec);
    switch (strategy.kind) {
    case StrategyKind::oblivious:
        if (!strategy.profile.empty() && strategy.profile.size() != static_cast<std::size_t>(spec.steps)) {
            invalid("invalid_strategy", "oblivious profile has " + std::to_string(strategy.profile.size()) +
                                            " entries, expected T = " + std::to_string(spec.steps));
        }
        for (std::size_t t = 0; t < strategy.profile.size(); ++t) {
            require_loss(strategy.profile[t], "profile step " + std::to_string(t + 1));
        }
        return;
    case StrategyKind::worst_case_tree:
        require_loss(strategy.loss, "worst-case-tree");
        return;
    case StrategyKind::signal_branching:
        break;
    }
    for (const auto& [key, p] : strategy.branches) {
        require_loss(p, "branch '" + key + "'");
    }
    // Walk every history the developer can observe before its last submission.
    const bool incremental = spec.mode == MeterMode::incremental;
    std::size_t visited = 0;
    std::vector<int> history;
    std::function<void()> walk = [&]() {
        if (++visited > 1000000) {
            invalid("invalid_strategy", "branch table would need more than 10^6 entries");
        }
        const auto key = history_key(history);
        if (strategy.branches.find(key) == strategy.branches.end()) {
            invalid("missing_branch", "branch table has no entry for signal history '" + key + "'");
        }
        if (history.size() + 1 >= static_cast<std::size_t>(spec.steps)) {
            return;
        }
        const int first = incremental && !history.empty() ? history.back() : 1;
        for (int k = first; k <= spec.signals; ++k) {
            history.push_back(k);
            walk();
            history.pop_back();
        }
    };
    walk();
}

std::pair<double, double> clopper_pearson(int successes, int trials, double confidence) {
    if (trials <= 0 || successes < 0 || successes > trials) {
        invalid("parameter_out_of_range", "binomial interval needs 0 <= k <= n and n > 0");
    }
    const double alpha = 1.0 - confidence;
    using boost::math::beta_distribution;
    using boost::math::quantile;
    const double k = successes;
    const double n = trials;
    const double lower = successes == 0 ? 0.0 : quantile(beta_distribution<>(k, n - k + 1), alpha / 2);
    const double upper = successes == trials ? 1.0 : quantile(beta_distribution<>(k + 1, n - k), 1 - alpha / 2);
    return {lower, upper};
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t model, std::uint64_t index) {
    const std::uint64_t x = mix(mix(mix(mix(seed) ^ stream) ^ model) ^ index);
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

TrialOutcome run_trial(const MeterSpec& spec, const AdversaryStrategy& strategy, std::int64_t test_size,
                       std::int64_t val_size, std::uint64_t seed, std::uint64_t trial) {
    const std::uint64_t trial_seed = mix(seed ^ mix(trial));
    TrialOutcome out;
    std::vector<int> observed;
    int high_water = 0;
    std::uint64_t node = 0;
    for (int t = 1; t <= spec.steps; ++t) {
        double p = strategy.loss;
        switch (strategy.kind) {
        case StrategyKind::oblivious:
            p = strategy.profile.empty() ? 0.5 : strategy.profile[static_cast<std::size_t>(t - 1)];
            break;
        case StrategyKind::signal_branching:
            p = strategy.branches.at(history_key(observed));
            break;
        case StrategyKind::worst_case_tree:
            break;
        }
        // Oblivious developers submit the same model sequence whatever they see.
        const std::uint64_t model = strategy.kind == StrategyKind::oblivious ? static_cast<std::uint64_t>(t) : node;
        const std::int64_t test_errors = count_errors(trial_seed, kTestStream, model, test_size, p);
        const std::int64_t val_errors = count_errors(trial_seed, kValStream, model, val_size, p);
        const double delta = overfitting_from_counts(val_errors, val_size, test_errors, test_size);
        const int signal = band_for(spec.bands, delta);
        high_water = std::max(high_water, signal);
        const int shown = spec.mode == MeterMode::regular ? signal : high_water;
        const double eps = spec.schedule[static_cast<std::size_t>(shown - 1)];
        const double deviation = std::abs(static_cast<double>(test_errors) / static_cast<double>(test_size) - p);
        out.deviations.push_back(deviation);
        out.signals.push_back(shown);
        out.max_deviation = std::max(out.max_deviation, deviation);
        out.violated = out.violated || deviation > eps;
        observed.push_back(shown);
        node = mix(node * 131 + static_cast<std::uint64_t>(shown) + 1);
    }
    return out;
}

SimulationReport run_trials(const MeterSpec& spec, const AdversaryStrategy& strategy,
                            const SimulationOptions& options) {
    validate(strategy, spec);
    if (options.trials < 1) {
        invalid("parameter_out_of_range", "trials must be positive");
    }
    SimulationReport report;
    report.required_size = plan(spec).required_size;
    report.test_size = options.test_size.value_or(report.required_size);
    report.val_size = options.val_size.value_or(report.test_size);
    if (report.test_size < 1 || report.val_size < 1) {
        invalid("parameter_out_of_range", "simulated datasets must be nonempty");
    }
    const double sampled = static_cast<double>(report.test_size) * options.trials;
    if (sampled > kMaxSampledLosses) {
        invalid("scale_cap", "test size " + std::to_string(report.test_size) + " x " + std::to_string(options.trials) +
                                 " trials exceeds the limit of 10^9 sampled losses");
    }
    report.trials = options.trials;

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(options.trials));
    unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(options.trials));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next++; i < options.trials; i = next++) {
            outcomes[static_cast<std::size_t>(i)] = run_trial(spec, strategy, report.test_size, report.val_size,
                                                              options.seed, static_cast<std::uint64_t>(i));
        }
    };
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < threads; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    double deviation_sum = 0.0;
    for (const auto& o : outcomes) {
        report.violations += o.violated ? 1 : 0;
        deviation_sum += o.max_deviation;
    }
    report.rate = static_cast<double>(report.violations) / report.trials;
    std::tie(report.ci_lower, report.ci_upper) = clopper_pearson(report.violations, report.trials);
    report.mean_max_deviation = deviation_sum / report.trials;
    return report;
}

TraceReplay replay_overfitting(const MeterSpec& spec, std::span<const double> overfitting) {
    TraceReplay out;
    int high_water = 0;
    for (std::size_t i = 0; i < overfitting.size(); ++i) {
        const double d = quantize_overfitting(overfitting[i]);
        if (!(d >= 0.0 && d <= 1.0)) {
            invalid("parameter_out_of_range", "overfitting at step " + std::to_string(i + 1) + " lies outside [0, 1]");
        }
        const int signal = band_for(spec.bands, d);
        high_water = std::max(high_water, signal);
        out.overfitting.push_back(d);
        out.regular.push_back(signal);
        out.incremental.push_back(high_water);
    }
    return out;
}

TraceReplay replay_trace(const MeterSpec& spec, std::span<const double> val_accuracy,
                         std::span<const double> test_accuracy) {
    if (val_accuracy.size() != test_accuracy.size()) {
        invalid("invalid_trace", "validation and test accuracy sequences differ in length");
    }
    std::vector<double> overfitting;
    for (std::size_t i = 0; i < val_accuracy.size(); ++i) {
        const double v = val_accuracy[i];
        const double t = test_accuracy[i];
        if (!(v >= 0.0 && v <= 1.0) || !(t >= 0.0 && t <= 1.0)) {
            invalid("parameter_out_of_range", "accuracy at step " + std::to_string(i + 1) + " lies outside [0, 1]");
        }
        overfitting.push_back(std::abs(v - t));
    }
    return replay_overfitting(spec, overfitting);
}

AdversaryStrategy strategy_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        invalid("invalid_strategy", "strategy must be a JSON object");
    }
    AdversaryStrategy s;
    try {
        s.kind = parse_strategy_kind(j.value("kind", std::string("worst-case-tree")));
        if (j.contains("profile")) {
            s.profile = j.at("profile").get<std::vector<double>>();
        }
        if (j.contains("branches")) {
            s.branches = j.at("branches").get<std::map<std::string, double>>();
        }
        if (j.contains("loss")) {
            s.loss = j.at("loss").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        invalid("invalid_strategy", std::string("malformed strategy: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const AdversaryStrategy& s) {
    return {{"kind", std::string(to_string(s.kind))}, {"profile", s.profile}, {"branches", s.branches}, {"loss", s.loss}};
}

nlohmann::json to_json(const SimulationReport& r) {
    return {{"trials", r.trials},
            {"violations", r.violations},
            {"rate", r.rate},
            {"ci_lower", r.ci_lower},
            {"ci_upper", r.ci_upper},
            {"confidence", 0.95},
            {"mean_max_deviation", r.mean_max_deviation},
            {"required_size", r.required_size},
            {"test_size", r.test_size},
            {"val_size", r.val_size}};
}

nlohmann::json to_json(const TraceReplay& r) {
    return {{"overfitting", r.overfitting}, {"regular", r.regular}, {"incremental", r.incremental}};
}

} // namespace meter::sim
