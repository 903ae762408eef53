#pragma once

#include "meter/engine.hpp"
#include "meter/oracle.hpp"
#include "meter/planner.hpp"
#include "meter/registry.hpp"

#include <json.hpp>

#include <istream>

namespace meter {

using nlohmann::json;

// Request-side spec parsing. Accepts {mode, m, T, delta, epsilon | epsilons,
// bands, tenancy, reverts, revert_budget, conservative_multitenant} and names
// the offending field on rejection.
MeterSpec spec_from_request(const json& request);

void to_json(json& j, const Band& band);
void to_json(json& j, const Interval& interval);
void to_json(json& j, const MeterSpec& spec);
void to_json(json& j, const SubmissionCounts& counts);
void to_json(json& j, const BaselineSizes& sizes);
void to_json(json& j, const PlanReport& report);
void to_json(json& j, const SignalReport& report);
void to_json(json& j, const SubmissionRecord& record);
void to_json(json& j, const TestEpoch& epoch);
void to_json(json& j, const Session& session);
void to_json(json& j, const DatasetView& view);

void from_json(const json& j, Band& band);
void from_json(const json& j, MeterSpec& spec);
void from_json(const json& j, Interval& interval);
void from_json(const json& j, SubmissionCounts& counts);
void from_json(const json& j, BaselineSizes& sizes);
void from_json(const json& j, PlanReport& report);
void from_json(const json& j, SignalReport& report);
void from_json(const json& j, SubmissionRecord& record);
void from_json(const json& j, TestEpoch& epoch);
void from_json(const json& j, Session& session);

/// Session status as shown to `role`: developers see signals and budgets but
/// never losses or overfitting values.
json session_view(const Session& session, Role role);

/// Full dataset record for the store. Sealed items are kept as an opaque blob.
json dataset_record(const LabeledDataset& dataset);
LabeledDataset dataset_from_record(const json& record);

/// JSON-lines uploads: {"id": str, "label": int} and {"id": str, "pred": int}.
/// Errors carry the 1-based line number.
LabeledItems parse_label_lines(std::istream& in);
Predictions parse_prediction_lines(std::istream& in);

namespace oracle {
void to_json(nlohmann::json& j, const TreeTally& tally);
}

} // namespace meter
