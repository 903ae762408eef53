#include "meter/error.hpp"
#include "meter/simulator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace meter;
using namespace meter::sim;
using meter::testing::gauge_spec;

namespace {

template <class F>
std::string error_code(F f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

MeterSpec desk_spec() { return make_spec(MeterMode::regular, 2, 5, 0.1, 0.1); }

} // namespace

TEST(Replay, WorkedTrace) {
    const auto spec = gauge_spec(MeterMode::regular, 8, 0.1);
    const std::vector<double> d = {0.01, 0.03, 0.02, 0.06, 0.04, 0.02, 0.07, 0.05};
    const auto out = replay_overfitting(spec, d);
    EXPECT_EQ(out.regular, (std::vector<int>{1, 1, 1, 2, 1, 1, 2, 2}));
    EXPECT_EQ(out.incremental, (std::vector<int>{1, 1, 1, 2, 2, 2, 2, 2}));
}

TEST(Replay, EdgeTraces) {
    const auto spec = gauge_spec(MeterMode::regular, 3, 0.1);
    const std::vector<double> zeros(5, 0.0);
    EXPECT_EQ(replay_overfitting(spec, zeros).regular, std::vector<int>(5, 1));
    const std::vector<double> top = {0.0, 1.0, 0.0};
    const auto out = replay_overfitting(spec, top);
    EXPECT_EQ(out.regular, (std::vector<int>{1, 4, 1}));
    EXPECT_EQ(out.incremental, (std::vector<int>{1, 4, 4}));
}

TEST(Replay, AccuraciesSnapToDecimalEdges) {
    const auto spec = gauge_spec(MeterMode::regular, 2, 0.1);
    const std::vector<double> val = {0.95, 0.80};
    const std::vector<double> test = {0.90, 0.77};
    const auto out = replay_trace(spec, val, test);
    EXPECT_EQ(out.regular, (std::vector<int>{2, 1}));
    const std::vector<double> bad = {1.2, 0.5};
    EXPECT_EQ(error_code([&] { replay_trace(spec, bad, test); }), "parameter_out_of_range");
    const std::vector<double> short_test = {0.5};
    EXPECT_EQ(error_code([&] { replay_trace(spec, val, short_test); }), "invalid_trace");
}

TEST(ClopperPearson, KnownIntervals) {
    // k = 0: upper end has the closed form 1 − (α/2)^(1/n).
    auto [lo0, hi0] = clopper_pearson(0, 10);
    EXPECT_EQ(lo0, 0.0);
    EXPECT_NEAR(hi0, 1.0 - std::pow(0.025, 0.1), 1e-12);
    auto [lon, hin] = clopper_pearson(10, 10);
    EXPECT_NEAR(lon, std::pow(0.025, 0.1), 1e-12);
    EXPECT_EQ(hin, 1.0);
    auto [lo, hi] = clopper_pearson(5, 10);
    EXPECT_NEAR(lo, 0.187086028, 1e-8);
    EXPECT_NEAR(hi, 0.812913972, 1e-8);
    EXPECT_THROW(clopper_pearson(3, 2), Error);
}

TEST(CounterRng, DeterministicAndRoughlyUniform) {
    EXPECT_EQ(counter_uniform(1, 2, 3, 4), counter_uniform(1, 2, 3, 4));
    EXPECT_NE(counter_uniform(1, 2, 3, 4), counter_uniform(1, 2, 3, 5));
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = counter_uniform(9, 1, 0, static_cast<std::uint64_t>(i));
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Strategy, Validation) {
    const auto spec = desk_spec();
    AdversaryStrategy s;
    s.kind = StrategyKind::signal_branching;
    s.branches = {{"", 0.5}, {"1", 0.5}, {"2", 0.5}};
    EXPECT_EQ(error_code([&] { validate(s, spec); }), "missing_branch");
    s.kind = StrategyKind::oblivious;
    s.profile = {0.1, 0.2};
    EXPECT_EQ(error_code([&] { validate(s, spec); }), "invalid_strategy");
    s.profile = {0.1, 0.2, 0.3, 0.4, 1.5};
    EXPECT_EQ(error_code([&] { validate(s, spec); }), "invalid_strategy");
    s.kind = StrategyKind::worst_case_tree;
    EXPECT_NO_THROW(validate(s, spec));
    EXPECT_EQ(error_code([] { parse_strategy_kind("greedy"); }), "invalid_strategy");
    EXPECT_EQ(parse_strategy_kind("worst_case_tree"), StrategyKind::worst_case_tree);
}

TEST(Strategy, IncrementalTablesOnlyNeedReachableHistories) {
    auto spec = make_spec(MeterMode::incremental, 2, 3, 0.1, 0.1);
    AdversaryStrategy s;
    s.kind = StrategyKind::signal_branching;
    s.branches = {{"", 0.5}, {"1", 0.5}, {"2", 0.5}, {"1,1", 0.5}, {"1,2", 0.5}, {"2,2", 0.5}};
    EXPECT_NO_THROW(validate(s, spec));
    s.branches.erase("1,2");
    EXPECT_EQ(error_code([&] { validate(s, spec); }), "missing_branch");
}

TEST(Simulation, ScaleCap) {
    const auto spec = desk_spec();
    SimulationOptions o;
    o.trials = 10'000'000;
    EXPECT_EQ(error_code([&] { run_trials(spec, {}, o); }), "scale_cap");
}

TEST(Simulation, SeedDeterminismAcrossThreadCounts) {
    const auto spec = desk_spec();
    SimulationOptions o;
    o.trials = 500;
    o.seed = 42;
    o.test_size = 120;
    o.threads = 1;
    const auto a = run_trials(spec, {}, o);
    o.threads = 4;
    const auto b = run_trials(spec, {}, o);
    EXPECT_EQ(a.violations, b.violations);
    EXPECT_EQ(a.mean_max_deviation, b.mean_max_deviation);
    o.seed = 43;
    const auto c = run_trials(spec, {}, o);
    EXPECT_NE(a.mean_max_deviation, c.mean_max_deviation);
}

TEST(Simulation, TrialOutcomeConsistency) {
    const auto spec = desk_spec();
    AdversaryStrategy s;
    for (std::uint64_t t = 0; t < 50; ++t) {
        const auto out = run_trial(spec, s, 60, 60, 7, t);
        ASSERT_EQ(out.deviations.size(), 5u);
        bool any = false;
        for (std::size_t i = 0; i < out.deviations.size(); ++i) {
            any = any || out.deviations[i] > spec.schedule[static_cast<std::size_t>(out.signals[i] - 1)];
        }
        EXPECT_EQ(out.violated, any);
    }
}

TEST(Simulation, ObliviousDeskSpecWithinDelta) {
    const auto spec = desk_spec();
    AdversaryStrategy s;
    s.kind = StrategyKind::oblivious;
    SimulationOptions o;
    o.trials = 2000;
    o.seed = 3;
    const auto r = run_trials(spec, s, o);
    EXPECT_EQ(r.test_size, plan(spec).required_size);
    EXPECT_LE(r.ci_upper, 0.1);
}

TEST(Simulation, AdaptivityDoesNotBeatWorstCaseTree) {
    const auto spec = desk_spec();
    SimulationOptions o;
    o.trials = 3000;
    o.seed = 5;
    o.test_size = 150;
    AdversaryStrategy oblivious;
    oblivious.kind = StrategyKind::oblivious;
    const auto a = run_trials(spec, oblivious, o);
    const auto b = run_trials(spec, AdversaryStrategy{}, o);
    EXPECT_LE(a.ci_lower, b.ci_upper);
}

TEST(Simulation, UndersizedTestSetViolatesMoreOften) {
    const auto spec = desk_spec();
    AdversaryStrategy aggressive;
    aggressive.kind = StrategyKind::signal_branching;
    // Stay at maximal variance whatever the meter says.
    std::vector<std::string> keys = {""};
    for (int depth = 1; depth < spec.steps; ++depth) {
        std::vector<std::string> next;
        for (const auto& k : keys) {
            for (int s = 1; s <= spec.signals; ++s) {
                next.push_back(k.empty() ? std::to_string(s) : k + "," + std::to_string(s));
            }
        }
        for (const auto& k : keys) {
            aggressive.branches[k] = 0.5;
        }
        keys = next;
    }
    for (const auto& k : keys) {
        aggressive.branches[k] = 0.5;
    }
    SimulationOptions o;
    o.trials = 4000;
    o.seed = 17;
    const auto full = run_trials(spec, aggressive, o);
    o.test_size = full.required_size / 2;
    const auto half = run_trials(spec, aggressive, o);
    EXPECT_GT(half.rate, full.rate);
    EXPECT_GT(half.ci_lower, full.ci_upper);
}
