#pragma once

#include "meter/bigint.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace meter {

enum class MeterMode { regular, incremental };

std::string_view to_string(MeterMode mode);
MeterMode parse_mode(std::string_view text);

/// Per-signal tolerances ε₁ ≤ … ≤ ε_m, each in (0, 1].
class EpsilonSchedule {
public:
    EpsilonSchedule() = default;
    explicit EpsilonSchedule(std::vector<double> epsilons);

    static EpsilonSchedule uniform(double epsilon, int signals);

    std::span<const double> values() const noexcept { return epsilons_; }
    std::size_t size() const noexcept { return epsilons_.size(); }
    double operator[](std::size_t k) const { return epsilons_.at(k); }
    double smallest() const { return epsilons_.front(); }
    bool is_uniform() const;

    friend bool operator==(const EpsilonSchedule&, const EpsilonSchedule&) = default;

private:
    std::vector<double> epsilons_;
};

/// Empirical-overfitting range covered by one signal. Half-open [lower, upper)
/// except the last band of a meter, which is closed at 1.
struct Band {
    double lower = 0.0;
    double upper = 1.0;

    friend bool operator==(const Band&, const Band&) = default;
};

/// m equal-width bands covering [0, 1].
std::vector<Band> uniform_bands(int signals);

struct MeterSpec {
    int signals = 1;                   // m
    std::vector<Band> bands;
    EpsilonSchedule schedule;
    double delta = 0.05;
    int steps = 1;                     // T
    MeterMode mode = MeterMode::regular;
    std::vector<int> tenancy;          // T₁..T_l; empty means a single tenant owning all T steps
    std::vector<int> revert_steps;     // t₁ ≤ … ≤ t_B
    bool conservative_multitenant = false;

    int revert_budget() const { return static_cast<int>(revert_steps.size()); }
    std::vector<int> tenant_steps() const;

    friend bool operator==(const MeterSpec&, const MeterSpec&) = default;
};

/// Convenience constructor with uniform bands.
MeterSpec make_spec(MeterMode mode, int signals, int steps, std::vector<double> epsilons, double delta);
MeterSpec make_spec(MeterMode mode, int signals, int steps, double epsilon, double delta);

/// Throws Error{validation, "invalid_spec"} naming the first violated constraint.
void validate(const MeterSpec& spec);

/// Number of possible submissions per signal value k (dependency-tree nodes
/// whose own signal is k).
struct SubmissionCounts {
    std::vector<BigInt> per_signal;

    BigInt total() const;
    std::size_t size() const noexcept { return per_signal.size(); }

    friend bool operator==(const SubmissionCounts&, const SubmissionCounts&) = default;
};

struct BaselineSizes {
    std::int64_t single = 0;
    std::int64_t independent = 0;
    std::int64_t resampling = 0;

    friend bool operator==(const BaselineSizes&, const BaselineSizes&) = default;
};

struct PlanReport {
    std::int64_t required_size = 0;
    SubmissionCounts counts;
    double log_survival_at_n = 0.0;
    double log_survival_below_n = 0.0;  // same evaluation at n − 1
    double log_delta = 0.0;
    BaselineSizes baselines;

    friend bool operator==(const PlanReport&, const PlanReport&) = default;
};

// Single-hypothesis and baseline sizes. Minimal n with 2·T·exp(−2nε²) < δ.
std::int64_t size_single(double epsilon, double delta);
std::int64_t size_independent(double epsilon, double delta, int steps);
std::int64_t size_resampling(double epsilon, double delta, int steps);

SubmissionCounts count_regular(int signals, int steps);
SubmissionCounts count_incremental(int signals, int steps);
SubmissionCounts count_time_travel(int signals, int steps, std::span<const int> revert_steps, MeterMode mode);
SubmissionCounts count_multitenant(int signals, std::span<const int> tenancy, MeterMode mode,
                                   bool conservative = false);

/// Log-space routes to the same counts, used for cross-checking the exact ones.
double log_regular_per_signal(int signals, int steps);
double log_incremental_per_signal(int signal, int steps);

/// ln Σₖ 2·Cₖ·exp(−2nεₖ²), accumulated with log-sum-exp.
double log_survival(std::int64_t n, const SubmissionCounts& counts, const EpsilonSchedule& schedule);

/// Least n with log_survival(n) < ln δ. `steps` only feeds the baseline sizes.
PlanReport solve_size(const SubmissionCounts& counts, const EpsilonSchedule& schedule, double delta, int steps);

SubmissionCounts counts_for(const MeterSpec& spec);
PlanReport plan(const MeterSpec& spec);

} // namespace meter
