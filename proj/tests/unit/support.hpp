#pragma once

#include "meter/engine.hpp"
#include "meter/registry.hpp"

#include <cstdio>
#include <string>

namespace meter::testing {

inline const Principal kDeveloper{"dana", Role::developer, "dev-token"};
inline const Principal kLabeler{"lee", Role::labeler, "lab-token"};
inline const Principal kAdmin{"ada", Role::admin, "admin-token"};

inline std::string example_id(const std::string& prefix, std::int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%07lld", prefix.c_str(), static_cast<long long>(i));
    return buf;
}

/// n items labelled 0, ids prefix0000000...
inline LabeledItems zero_items(const std::string& prefix, std::int64_t n) {
    LabeledItems items;
    items.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        items.emplace_back(example_id(prefix, i), 0);
    }
    return items;
}

/// Predictions over zero-labelled val/test sets with the first k of each wrong.
inline Predictions predictions_with_errors(const std::string& val_prefix, std::int64_t val_n, std::int64_t val_errors,
                                           const std::string& test_prefix, std::int64_t test_n,
                                           std::int64_t test_errors) {
    Predictions p;
    p.reserve(static_cast<std::size_t>(val_n + test_n));
    for (std::int64_t i = 0; i < val_n; ++i) {
        p.emplace_back(example_id(val_prefix, i), i < val_errors ? 1 : 0);
    }
    for (std::int64_t i = 0; i < test_n; ++i) {
        p.emplace_back(example_id(test_prefix, i), i < test_errors ? 1 : 0);
    }
    return p;
}

/// Four-band meter: [0,.05) [.05,.1) [.1,.2) [.2,1] with tolerances .01 .02 .03 .05.
inline MeterSpec gauge_spec(MeterMode mode, int steps, double delta) {
    MeterSpec spec = make_spec(mode, 4, steps, std::vector<double>{0.01, 0.02, 0.03, 0.05}, delta);
    spec.bands = {{0.0, 0.05}, {0.05, 0.1}, {0.1, 0.2}, {0.2, 1.0}};
    return spec;
}

} // namespace meter::testing
