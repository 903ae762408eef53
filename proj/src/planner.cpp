#include "meter/planner.hpp"

#include "meter/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace meter {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Largest size the solver will report; beyond this ε is unreasonably small.
constexpr double kMaxSize = 1e15;

// Strict "< ln δ" that treats a rounding-level tie as equality, so exact ties
// resolve to the larger (safe) size.
bool strictly_below(double value, double log_delta) {
    const double margin = 8.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(value), std::abs(log_delta)});
    return value < log_delta - margin;
}

void require_epsilon(double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
        std::ostringstream os;
        os << "epsilon must lie in (0, 1], got " << epsilon;
        invalid("parameter_out_of_range", os.str());
    }
}

void require_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) {
        std::ostringstream os;
        os << "delta must lie in (0, 1), got " << delta;
        invalid("parameter_out_of_range", os.str());
    }
}

void require_positive(int value, const char* name) {
    if (value < 1) {
        std::ostringstream os;
        os << name << " must be at least 1, got " << value;
        invalid("parameter_out_of_range", os.str());
    }
}

// Least n ≥ 1 with log_mass − 2nε² < ln δ.
std::int64_t minimal_size(double log_mass, double epsilon, double delta) {
    const double log_delta = std::log(delta);
    const double rate = 2.0 * epsilon * epsilon;
    const double threshold = (log_mass - log_delta) / rate;
    if (threshold > kMaxSize) {
        invalid("parameter_out_of_range", "required size exceeds the supported range; epsilon too small");
    }
    auto holds = [&](std::int64_t n) { return strictly_below(log_mass - rate * static_cast<double>(n), log_delta); };
    auto n = static_cast<std::int64_t>(std::floor(std::max(threshold, 0.0))) + 1;
    while (n > 1 && holds(n - 1)) {
        --n;
    }
    while (!holds(n)) {
        ++n;
    }
    return n;
}

// (m^t − 1)/(m − 1), or t when m = 1.
BigInt geometric_count(int signals, int steps) {
    if (steps <= 0) {
        return 0;
    }
    if (signals == 1) {
        return steps;
    }
    return (ipow(signals, steps) - 1) / (signals - 1);
}

// Incremental per-signal count C(k + t − 1, k) for a tree of depth t.
BigInt incremental_count(int signal, int steps) {
    if (steps <= 0) {
        return 0;
    }
    return binomial(static_cast<unsigned>(signal + steps - 1), static_cast<unsigned>(signal));
}

SubmissionCounts single_tenant_counts(int signals, int steps, MeterMode mode) {
    return mode == MeterMode::regular ? count_regular(signals, steps) : count_incremental(signals, steps);
}

std::vector<double> log_counts(const SubmissionCounts& counts) {
    std::vector<double> logs;
    logs.reserve(counts.size());
    for (const auto& c : counts.per_signal) {
        if (c < 0) {
            invalid("invalid_counts", "submission counts must be nonnegative");
        }
        logs.push_back(c == 0 ? kNegInf : log_of(c));
    }
    return logs;
}

double log_sum_exp_survival(std::int64_t n, std::span<const double> log_counts, std::span<const double> epsilons) {
    const double nd = static_cast<double>(n);
    double peak = kNegInf;
    std::vector<double> terms(log_counts.size(), kNegInf);
    for (std::size_t k = 0; k < log_counts.size(); ++k) {
        if (log_counts[k] == kNegInf) {
            continue;
        }
        terms[k] = std::numbers::ln2 + log_counts[k] - 2.0 * nd * epsilons[k] * epsilons[k];
        peak = std::max(peak, terms[k]);
    }
    if (peak == kNegInf) {
        return kNegInf;
    }
    double sum = 0.0;
    for (double t : terms) {
        if (t != kNegInf) {
            sum += std::exp(t - peak);
        }
    }
    return peak + std::log(sum);
}

} // namespace

std::string_view to_string(MeterMode mode) {
    return mode == MeterMode::regular ? "regular" : "incremental";
}

MeterMode parse_mode(std::string_view text) {
    if (text == "regular") {
        return MeterMode::regular;
    }
    if (text == "incremental") {
        return MeterMode::incremental;
    }
    invalid("invalid_spec", "mode must be 'regular' or 'incremental', got '" + std::string(text) + "'");
}

EpsilonSchedule::EpsilonSchedule(std::vector<double> epsilons) : epsilons_(std::move(epsilons)) {
    if (epsilons_.empty()) {
        invalid("invalid_spec", "epsilon schedule must not be empty");
    }
    for (std::size_t k = 0; k < epsilons_.size(); ++k) {
        require_epsilon(epsilons_[k]);
        if (k > 0 && epsilons_[k] < epsilons_[k - 1]) {
            std::ostringstream os;
            os << "epsilon schedule must be nondecreasing; epsilon[" << k + 1 << "] = " << epsilons_[k]
               << " < epsilon[" << k << "] = " << epsilons_[k - 1];
            invalid("invalid_spec", os.str());
        }
    }
}

EpsilonSchedule EpsilonSchedule::uniform(double epsilon, int signals) {
    require_positive(signals, "m");
    return EpsilonSchedule(std::vector<double>(static_cast<std::size_t>(signals), epsilon));
}

bool EpsilonSchedule::is_uniform() const {
    return std::adjacent_find(epsilons_.begin(), epsilons_.end(), std::not_equal_to<>()) == epsilons_.end();
}

std::vector<Band> uniform_bands(int signals) {
    require_positive(signals, "m");
    std::vector<Band> bands;
    bands.reserve(static_cast<std::size_t>(signals));
    for (int i = 0; i < signals; ++i) {
        const double lower = i == 0 ? 0.0 : static_cast<double>(i) / signals;
        const double upper = i + 1 == signals ? 1.0 : static_cast<double>(i + 1) / signals;
        bands.push_back({lower, upper});
    }
    return bands;
}

std::vector<int> MeterSpec::tenant_steps() const {
    return tenancy.empty() ? std::vector<int>{steps} : tenancy;
}

MeterSpec make_spec(MeterMode mode, int signals, int steps, std::vector<double> epsilons, double delta) {
    MeterSpec spec;
    spec.signals = signals;
    spec.bands = uniform_bands(signals);
    spec.schedule = EpsilonSchedule(std::move(epsilons));
    spec.delta = delta;
    spec.steps = steps;
    spec.mode = mode;
    return spec;
}

MeterSpec make_spec(MeterMode mode, int signals, int steps, double epsilon, double delta) {
    return make_spec(mode, signals, steps, std::vector<double>(static_cast<std::size_t>(std::max(signals, 1)), epsilon),
                     delta);
}

void validate(const MeterSpec& spec) {
    auto reject = [](const std::string& why) { invalid("invalid_spec", why); };
    if (spec.signals < 1) {
        reject("m must be at least 1");
    }
    if (spec.steps < 1) {
        reject("T must be at least 1, got " + std::to_string(spec.steps));
    }
    if (!(spec.delta > 0.0 && spec.delta < 1.0)) {
        reject("delta must lie in (0, 1)");
    }
    const auto m = static_cast<std::size_t>(spec.signals);
    if (spec.bands.size() != m) {
        reject("band count " + std::to_string(spec.bands.size()) + " does not match m = " + std::to_string(m));
    }
    if (spec.schedule.size() != m) {
        reject("epsilon schedule length " + std::to_string(spec.schedule.size()) + " does not match m = " +
               std::to_string(m));
    }
    // Re-run the schedule invariants; a default-constructed schedule skips its constructor.
    [[maybe_unused]] const EpsilonSchedule recheck(
        std::vector<double>(spec.schedule.values().begin(), spec.schedule.values().end()));
    if (spec.bands.front().lower != 0.0) {
        reject("first band must start at 0");
    }
    if (spec.bands.back().upper != 1.0) {
        reject("last band must end at 1");
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& b = spec.bands[i];
        if (!(b.lower < b.upper)) {
            reject("band " + std::to_string(i + 1) + " is empty or inverted");
        }
        if (i + 1 < m && b.upper != spec.bands[i + 1].lower) {
            reject("bands " + std::to_string(i + 1) + " and " + std::to_string(i + 2) + " are not contiguous");
        }
    }
    if (!spec.tenancy.empty()) {
        long sum = 0;
        for (int t : spec.tenancy) {
            if (t < 1) {
                reject("tenant step counts must be positive");
            }
            sum += t;
        }
        if (sum != spec.steps) {
            reject("tenant step counts sum to " + std::to_string(sum) + ", expected T = " + std::to_string(spec.steps));
        }
    }
    const int budget = spec.revert_budget();
    if (budget >= spec.steps) {
        reject("revert budget B = " + std::to_string(budget) + " must be smaller than T = " + std::to_string(spec.steps));
    }
    for (int i = 0; i < budget; ++i) {
        const int t = spec.revert_steps[static_cast<std::size_t>(i)];
        if (t < 1 || t > spec.steps) {
            reject("revert step " + std::to_string(t) + " lies outside [1, T]");
        }
        if (i > 0 && t < spec.revert_steps[static_cast<std::size_t>(i - 1)]) {
            reject("revert steps must be nondecreasing");
        }
        if (t - i < 1) {
            reject("shifted revert step t'_" + std::to_string(i + 1) + " = " + std::to_string(t - i) + " is below 1");
        }
    }
    if (spec.tenancy.size() > 1 && budget > 0) {
        invalid("incompatible_options", "reverts cannot be combined with more than one tenant");
    }
}

BigInt SubmissionCounts::total() const {
    return std::accumulate(per_signal.begin(), per_signal.end(), BigInt(0));
}

std::int64_t size_single(double epsilon, double delta) {
    return size_independent(epsilon, delta, 1);
}

std::int64_t size_independent(double epsilon, double delta, int steps) {
    require_epsilon(epsilon);
    require_delta(delta);
    require_positive(steps, "T");
    return minimal_size(std::log(2.0 * steps), epsilon, delta);
}

std::int64_t size_resampling(double epsilon, double delta, int steps) {
    return static_cast<std::int64_t>(steps) * size_independent(epsilon, delta, steps);
}

SubmissionCounts count_regular(int signals, int steps) {
    require_positive(signals, "m");
    require_positive(steps, "T");
    return SubmissionCounts{std::vector<BigInt>(static_cast<std::size_t>(signals), geometric_count(signals, steps))};
}

SubmissionCounts count_incremental(int signals, int steps) {
    require_positive(signals, "m");
    require_positive(steps, "T");
    SubmissionCounts counts;
    for (int k = 1; k <= signals; ++k) {
        counts.per_signal.push_back(incremental_count(k, steps));
    }
    return counts;
}

SubmissionCounts count_time_travel(int signals, int steps, std::span<const int> revert_steps, MeterMode mode) {
    require_positive(signals, "m");
    require_positive(steps, "T");
    const int budget = static_cast<int>(revert_steps.size());
    if (budget >= steps) {
        invalid("invalid_revert_schedule",
                "revert budget B = " + std::to_string(budget) + " must be smaller than T = " + std::to_string(steps));
    }
    std::vector<int> shifted;
    for (int i = 0; i < budget; ++i) {
        const int t = revert_steps[static_cast<std::size_t>(i)];
        if (t < 1 || t > steps || (i > 0 && t < revert_steps[static_cast<std::size_t>(i - 1)])) {
            invalid("invalid_revert_schedule", "revert steps must be nondecreasing and lie in [1, T]");
        }
        if (t - i < 1) {
            invalid("invalid_revert_schedule",
                    "shifted revert step t'_" + std::to_string(i + 1) + " = " + std::to_string(t - i) + " is below 1");
        }
        shifted.push_back(t - i);
    }
    const int final_depth = steps - budget;
    SubmissionCounts counts;
    for (int k = 1; k <= signals; ++k) {
        BigInt c;
        if (mode == MeterMode::regular) {
            c = geometric_count(signals, final_depth);
            for (int s : shifted) {
                c += ipow(static_cast<unsigned>(signals), static_cast<unsigned>(s - 1));
            }
        } else {
            c = incremental_count(k, final_depth);
            for (int s : shifted) {
                c += binomial(static_cast<unsigned>(k + s - 2), static_cast<unsigned>(k - 1));
            }
        }
        counts.per_signal.push_back(std::move(c));
    }
    return counts;
}

SubmissionCounts count_multitenant(int signals, std::span<const int> tenancy, MeterMode mode, bool conservative) {
    require_positive(signals, "m");
    if (tenancy.empty()) {
        invalid("empty_tenancy", "tenancy list must name at least one tenant");
    }
    SubmissionCounts counts{std::vector<BigInt>(static_cast<std::size_t>(signals), BigInt(0))};
    for (int steps : tenancy) {
        require_positive(steps, "tenant step count");
        const auto tenant = single_tenant_counts(signals, steps, mode);
        for (std::size_t k = 0; k < counts.size(); ++k) {
            counts.per_signal[k] += tenant.per_signal[k];
        }
    }
    if (conservative && mode == MeterMode::regular) {
        for (auto& c : counts.per_signal) {
            c *= signals;
        }
    }
    return counts;
}

double log_regular_per_signal(int signals, int steps) {
    require_positive(signals, "m");
    require_positive(steps, "T");
    if (signals == 1) {
        return std::log(static_cast<double>(steps));
    }
    const double lm = std::log(static_cast<double>(signals));
    return steps * lm + std::log1p(-std::exp(-steps * lm)) - std::log(static_cast<double>(signals - 1));
}

double log_incremental_per_signal(int signal, int steps) {
    require_positive(signal, "k");
    require_positive(steps, "T");
    return std::lgamma(signal + steps) - std::lgamma(signal + 1.0) - std::lgamma(static_cast<double>(steps));
}

double log_survival(std::int64_t n, const SubmissionCounts& counts, const EpsilonSchedule& schedule) {
    if (n < 0) {
        invalid("parameter_out_of_range", "candidate size must be nonnegative");
    }
    if (counts.size() != schedule.size() || counts.size() == 0) {
        invalid("invalid_counts", "counts and epsilon schedule must have the same nonzero length");
    }
    const auto logs = log_counts(counts);
    return log_sum_exp_survival(n, logs, schedule.values());
}

PlanReport solve_size(const SubmissionCounts& counts, const EpsilonSchedule& schedule, double delta, int steps) {
    require_delta(delta);
    require_positive(steps, "T");
    if (counts.size() != schedule.size() || counts.size() == 0) {
        invalid("invalid_counts", "counts and epsilon schedule must have the same nonzero length");
    }
    const auto logs = log_counts(counts);
    if (std::all_of(logs.begin(), logs.end(), [](double v) { return v == kNegInf; })) {
        invalid("invalid_counts", "at least one submission count must be positive");
    }
    const double log_delta = std::log(delta);
    auto survival = [&](std::int64_t n) { return log_sum_exp_survival(n, logs, schedule.values()); };
    auto holds = [&](std::int64_t n) { return strictly_below(survival(n), log_delta); };

    // Bracket from the smallest-tolerance term alone, doubled for slack.
    std::size_t lead = 0;
    while (logs[lead] == kNegInf) {
        ++lead;
    }
    const double eps_lead = schedule[lead];
    const double dominance = (std::numbers::ln2 + logs[lead] - log_delta) / (2.0 * eps_lead * eps_lead);
    if (dominance > kMaxSize) {
        invalid("parameter_out_of_range", "required size exceeds the supported range; epsilon too small");
    }
    std::int64_t hi = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(2.0 * dominance)));
    while (!holds(hi)) {
        hi *= 2;
    }
    // ln 2 + ln C ≥ ln 2 > ln δ at n = 0 whenever some count is positive.
    std::int64_t lo = 0;
    while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (holds(mid) ? hi : lo) = mid;
    }

    PlanReport report;
    report.required_size = hi;
    report.counts = counts;
    report.log_survival_at_n = survival(hi);
    report.log_survival_below_n = survival(hi - 1);
    report.log_delta = log_delta;
    const double eps1 = schedule.smallest();
    report.baselines = {size_single(eps1, delta), size_independent(eps1, delta, steps),
                        size_resampling(eps1, delta, steps)};
    return report;
}

SubmissionCounts counts_for(const MeterSpec& spec) {
    validate(spec);
    if (spec.tenancy.size() > 1) {
        return count_multitenant(spec.signals, spec.tenancy, spec.mode, spec.conservative_multitenant);
    }
    if (spec.revert_budget() > 0) {
        return count_time_travel(spec.signals, spec.steps, spec.revert_steps, spec.mode);
    }
    return single_tenant_counts(spec.signals, spec.steps, spec.mode);
}

PlanReport plan(const MeterSpec& spec) {
    return solve_size(counts_for(spec), spec.schedule, spec.delta, spec.steps);
}

} // namespace meter
