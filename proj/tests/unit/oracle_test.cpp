#include "meter/error.hpp"
#include "meter/oracle.hpp"

#include <gtest/gtest.h>

using namespace meter;
using meter::oracle::enumerate;

namespace {

std::vector<std::uint64_t> exact_per_signal(const SubmissionCounts& counts) {
    std::vector<std::uint64_t> out;
    for (const auto& c : counts.per_signal) {
        out.push_back(c.convert_to<std::uint64_t>());
    }
    return out;
}

} // namespace

TEST(Enumerate, RegularTwoByTwo) {
    const auto tally = enumerate(2, 2, MeterMode::regular);
    EXPECT_EQ(tally.nodes, (std::vector<std::vector<std::uint64_t>>{{1, 2}, {1, 2}}));
    EXPECT_EQ(tally.total, 6u);
}

TEST(Enumerate, IncrementalPrunesOneNode) {
    const auto tally = enumerate(2, 2, MeterMode::incremental);
    EXPECT_EQ(tally.total, 5u);
    EXPECT_EQ(tally.at(1, 2), 1u);
}

TEST(Enumerate, IncrementalCellsAreBinomials) {
    const auto tally = enumerate(3, 3, MeterMode::incremental);
    for (int k = 1; k <= 3; ++k) {
        for (int t = 1; t <= 3; ++t) {
            EXPECT_EQ(BigInt(tally.at(k, t)), binomial(k + t - 2, t - 1)) << "k=" << k << " t=" << t;
        }
    }
    EXPECT_EQ(tally.at(2, 3), 3u);
}

TEST(Enumerate, MatchesClosedFormsOnSmallGrid) {
    for (int m = 1; m <= 4; ++m) {
        for (int t = 1; t <= 6; ++t) {
            const auto reg = enumerate(m, t, MeterMode::regular);
            EXPECT_EQ(reg.per_signal(), exact_per_signal(count_regular(m, t)));
            const auto inc = enumerate(m, t, MeterMode::incremental);
            EXPECT_EQ(inc.per_signal(), exact_per_signal(count_incremental(m, t)));
            for (int k = 1; k <= m; ++k) {
                for (int d = 1; d <= t; ++d) {
                    EXPECT_EQ(BigInt(reg.at(k, d)), ipow(m, d - 1));
                    EXPECT_EQ(BigInt(inc.at(k, d)), binomial(k + d - 2, d - 1));
                }
            }
        }
    }
}

TEST(Enumerate, RevertSchedulesMatchClosedForms) {
    for (int m = 1; m <= 3; ++m) {
        for (int t = 2; t <= 5; ++t) {
            for (int a = 1; a <= t; ++a) {
                for (int b = 0; b <= t; ++b) {
                    std::vector<int> reverts{a};
                    if (b > 0) {
                        if (b < a) {
                            continue;
                        }
                        reverts.push_back(b);
                    }
                    if (static_cast<int>(reverts.size()) >= t || (reverts.size() == 2 && reverts[1] - 1 < 1)) {
                        continue;
                    }
                    for (auto mode : {MeterMode::regular, MeterMode::incremental}) {
                        oracle::EnumerateOptions options;
                        options.revert_steps = reverts;
                        const auto tally = enumerate(m, t, mode, options);
                        EXPECT_EQ(tally.per_signal(), exact_per_signal(count_time_travel(m, t, reverts, mode)))
                            << "m=" << m << " T=" << t << " reverts=" << a << "," << b << " mode=" << to_string(mode);
                    }
                }
            }
        }
    }
}

TEST(Enumerate, HandRolledRevertHistory) {
    // m = 2, T = 3, revert at step 1: two reverted roots, two fresh roots, and
    // three depth-2 children under the fresh roots.
    oracle::EnumerateOptions options;
    options.revert_steps = {1};
    const auto tally = enumerate(2, 3, MeterMode::incremental, options);
    EXPECT_EQ(tally.per_signal(), (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(tally.at(1, 1), 2u);
    EXPECT_EQ(tally.at(2, 2), 2u);
}

TEST(Enumerate, TenantsForgetEachOther) {
    oracle::EnumerateOptions options;
    options.tenancy = std::vector<int>{2, 3};
    for (auto mode : {MeterMode::regular, MeterMode::incremental}) {
        const auto tally = enumerate(3, 5, mode, options);
        EXPECT_EQ(tally.per_signal(), exact_per_signal(count_multitenant(3, *options.tenancy, mode)));
    }
}

TEST(Enumerate, Deterministic) {
    oracle::EnumerateOptions options;
    options.revert_steps = {2, 4};
    const auto a = enumerate(3, 5, MeterMode::regular, options);
    const auto b = enumerate(3, 5, MeterMode::regular, options);
    EXPECT_EQ(a.nodes, b.nodes);
    EXPECT_EQ(a.total, b.total);
}

TEST(Enumerate, RefusesPastCap) {
    try {
        enumerate(10, 8, MeterMode::regular);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "cap_exceeded");
        EXPECT_NE(std::string(e.what()).find("10000000"), std::string::npos);
    }
    EXPECT_NO_THROW(enumerate(10, 7, MeterMode::incremental));
}
