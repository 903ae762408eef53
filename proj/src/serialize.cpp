#include "meter/serialize.hpp"

#include "meter/digest.hpp"
#include "meter/error.hpp"

#include <set>
#include <string>

namespace meter {

namespace {

const std::set<std::string, std::less<>> kSpecFields = {"mode",    "m",       "T",       "delta",
                                                        "epsilon", "epsilons", "bands",  "tenancy",
                                                        "reverts", "revert_budget", "conservative_multitenant"};

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    invalid("invalid_spec", "field '" + field + "': " + why);
}

int int_field(const json& j, const char* name) {
    const auto& v = j.at(name);
    if (!v.is_number_integer()) {
        bad_field(name, "expected an integer");
    }
    const auto x = v.get<std::int64_t>();
    if (x < -1000000000 || x > 1000000000) {
        bad_field(name, "out of range");
    }
    return static_cast<int>(x);
}

double number_field(const json& j, const char* name) {
    const auto& v = j.at(name);
    if (!v.is_number()) {
        bad_field(name, "expected a number");
    }
    return v.get<double>();
}

std::vector<int> int_list(const json& j, const char* name) {
    const auto& v = j.at(name);
    if (!v.is_array()) {
        bad_field(name, "expected an array of integers");
    }
    std::vector<int> out;
    for (const auto& x : v) {
        if (!x.is_number_integer() || x.get<std::int64_t>() < -1000000000 || x.get<std::int64_t>() > 1000000000) {
            bad_field(name, "expected an array of integers");
        }
        out.push_back(x.get<int>());
    }
    return out;
}

std::string big_decimal(const BigInt& v) { return to_decimal(v); }

template <class T>
std::optional<T> opt(const json& j, const char* name) {
    if (!j.contains(name) || j.at(name).is_null()) {
        return std::nullopt;
    }
    return j.at(name).get<T>();
}

template <class T>
void put(json& j, const char* name, const std::optional<T>& v) {
    if (v) {
        j[name] = *v;
    } else {
        j[name] = nullptr;
    }
}

} // namespace

MeterSpec spec_from_request(const json& request) {
    if (!request.is_object()) {
        invalid("invalid_spec", "plan request must be a JSON object");
    }
    for (const auto& [key, value] : request.items()) {
        if (kSpecFields.find(key) == kSpecFields.end()) {
            bad_field(key, "unknown field");
        }
    }
    MeterSpec spec;
    if (request.contains("mode")) {
        if (!request["mode"].is_string()) {
            bad_field("mode", "expected 'regular' or 'incremental'");
        }
        spec.mode = parse_mode(request["mode"].get<std::string>());
    }
    if (!request.contains("T")) {
        bad_field("T", "required");
    }
    spec.steps = int_field(request, "T");
    if (!request.contains("delta")) {
        bad_field("delta", "required");
    }
    spec.delta = number_field(request, "delta");

    std::vector<double> epsilons;
    if (request.contains("epsilons")) {
        if (request.contains("epsilon")) {
            bad_field("epsilon", "give either 'epsilon' or 'epsilons', not both");
        }
        const auto& v = request["epsilons"];
        if (!v.is_array() || v.empty()) {
            bad_field("epsilons", "expected a nonempty array of numbers");
        }
        for (const auto& x : v) {
            if (!x.is_number()) {
                bad_field("epsilons", "expected a nonempty array of numbers");
            }
            epsilons.push_back(x.get<double>());
        }
    }
    std::vector<Band> bands;
    if (request.contains("bands")) {
        const auto& v = request["bands"];
        if (!v.is_array() || v.empty()) {
            bad_field("bands", "expected a nonempty array of [lower, upper] pairs");
        }
        for (const auto& b : v) {
            if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
                bad_field("bands", "expected a nonempty array of [lower, upper] pairs");
            }
            bands.push_back({b[0].get<double>(), b[1].get<double>()});
        }
    }
    if (request.contains("m")) {
        spec.signals = int_field(request, "m");
    } else if (!epsilons.empty()) {
        spec.signals = static_cast<int>(epsilons.size());
    } else if (!bands.empty()) {
        spec.signals = static_cast<int>(bands.size());
    } else {
        bad_field("m", "required unless 'epsilons' or 'bands' fix it");
    }
    if (spec.signals < 1 || spec.signals > 64) {
        bad_field("m", "must lie in [1, 64]");
    }
    if (epsilons.empty()) {
        if (!request.contains("epsilon")) {
            bad_field("epsilon", "required ('epsilon' or 'epsilons')");
        }
        epsilons.assign(static_cast<std::size_t>(spec.signals), number_field(request, "epsilon"));
    }
    if (epsilons.size() != static_cast<std::size_t>(spec.signals)) {
        bad_field("epsilons", "length " + std::to_string(epsilons.size()) + " does not match m = " +
                                  std::to_string(spec.signals));
    }
    try {
        spec.schedule = EpsilonSchedule(std::move(epsilons));
    } catch (const Error& e) {
        bad_field("epsilons", e.what());
    }
    spec.bands = bands.empty() ? uniform_bands(spec.signals) : std::move(bands);

    if (request.contains("tenancy")) {
        spec.tenancy = int_list(request, "tenancy");
        if (spec.tenancy.empty()) {
            bad_field("tenancy", "must name at least one tenant");
        }
    }
    if (request.contains("reverts")) {
        spec.revert_steps = int_list(request, "reverts");
    }
    if (request.contains("revert_budget")) {
        const int budget = int_field(request, "revert_budget");
        if (budget < 0) {
            bad_field("revert_budget", "must be nonnegative");
        }
        if (request.contains("reverts")) {
            if (static_cast<std::size_t>(budget) != spec.revert_steps.size()) {
                bad_field("revert_budget", "does not match the number of revert steps");
            }
        } else {
            // No schedule given: allow each revert as late as the final step.
            spec.revert_steps.assign(static_cast<std::size_t>(budget), spec.steps);
        }
    }
    if (request.contains("conservative_multitenant")) {
        if (!request["conservative_multitenant"].is_boolean()) {
            bad_field("conservative_multitenant", "expected a boolean");
        }
        spec.conservative_multitenant = request["conservative_multitenant"].get<bool>();
    }
    validate(spec);
    return spec;
}

void to_json(json& j, const Band& band) { j = json::array({band.lower, band.upper}); }
void from_json(const json& j, Band& band) {
    band.lower = j.at(0).get<double>();
    band.upper = j.at(1).get<double>();
}

void to_json(json& j, const Interval& interval) { j = json::array({interval.lower, interval.upper}); }
void from_json(const json& j, Interval& interval) {
    interval.lower = j.at(0).get<double>();
    interval.upper = j.at(1).get<double>();
}

void to_json(json& j, const MeterSpec& spec) {
    j = json::object();
    j["mode"] = std::string(to_string(spec.mode));
    j["m"] = spec.signals;
    j["T"] = spec.steps;
    j["delta"] = spec.delta;
    j["epsilons"] = std::vector<double>(spec.schedule.values().begin(), spec.schedule.values().end());
    j["bands"] = spec.bands;
    if (!spec.tenancy.empty()) {
        j["tenancy"] = spec.tenancy;
    }
    j["reverts"] = spec.revert_steps;
    j["conservative_multitenant"] = spec.conservative_multitenant;
}

void from_json(const json& j, MeterSpec& spec) { spec = spec_from_request(j); }

void to_json(json& j, const SubmissionCounts& counts) {
    json per = json::array();
    for (const auto& c : counts.per_signal) {
        per.push_back(big_decimal(c));
    }
    j = {{"per_signal", per}, {"total", big_decimal(counts.total())}};
}

void from_json(const json& j, SubmissionCounts& counts) {
    counts.per_signal.clear();
    for (const auto& c : j.at("per_signal")) {
        counts.per_signal.emplace_back(c.get<std::string>());
    }
}

void to_json(json& j, const BaselineSizes& sizes) {
    j = {{"single", sizes.single}, {"independent", sizes.independent}, {"resampling", sizes.resampling}};
}

void from_json(const json& j, BaselineSizes& sizes) {
    sizes.single = j.at("single").get<std::int64_t>();
    sizes.independent = j.at("independent").get<std::int64_t>();
    sizes.resampling = j.at("resampling").get<std::int64_t>();
}

void to_json(json& j, const PlanReport& report) {
    j = json::object();
    j["required_size"] = report.required_size;
    j["counts"] = report.counts;
    j["log_survival_at_n"] = report.log_survival_at_n;
    j["log_survival_below_n"] = report.log_survival_below_n;
    j["log_delta"] = report.log_delta;
    j["baselines"] = report.baselines;
}

void from_json(const json& j, PlanReport& report) {
    report.required_size = j.at("required_size").get<std::int64_t>();
    report.counts = j.at("counts").get<SubmissionCounts>();
    report.log_survival_at_n = j.at("log_survival_at_n").get<double>();
    report.log_survival_below_n = j.at("log_survival_below_n").get<double>();
    report.log_delta = j.at("log_delta").get<double>();
    report.baselines = j.at("baselines").get<BaselineSizes>();
}

void to_json(json& j, const SignalReport& r) {
    j = json::object();
    j["session"] = r.session_id;
    j["seq"] = r.seq;
    j["mode"] = std::string(to_string(r.mode));
    j["state"] = std::string(to_string(r.state));
    j["step"] = r.step;
    if (r.mode == MeterMode::regular) {
        put(j, "signal", r.signal);
    }
    j["incremental_signal"] = r.incremental_signal;
    put(j, "band", r.band);
    put(j, "epsilon_bound", r.epsilon_bound);
    put(j, "derived_ovft_interval", r.derived_ovft_interval);
    j["delta"] = r.delta;
    if (r.empirical_overfitting) {
        j["empirical_overfitting"] = *r.empirical_overfitting;
    }
    j["remaining_submissions"] = r.remaining_submissions;
    j["remaining_reverts"] = r.remaining_reverts;
    j["tenant"] = r.tenant;
    j["tenant_remaining"] = r.tenant_remaining;
    put(j, "digest", r.digest);
}

void from_json(const json& j, SignalReport& r) {
    r.session_id = j.at("session").get<std::string>();
    r.seq = j.at("seq").get<std::uint64_t>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.state = parse_session_state(j.at("state").get<std::string>());
    r.step = j.at("step").get<int>();
    r.signal = opt<int>(j, "signal");
    r.incremental_signal = j.at("incremental_signal").get<int>();
    r.band = opt<Band>(j, "band");
    r.epsilon_bound = opt<double>(j, "epsilon_bound");
    r.derived_ovft_interval = opt<Interval>(j, "derived_ovft_interval");
    r.delta = j.at("delta").get<double>();
    r.empirical_overfitting = opt<double>(j, "empirical_overfitting");
    r.remaining_submissions = j.at("remaining_submissions").get<int>();
    r.remaining_reverts = j.at("remaining_reverts").get<int>();
    r.tenant = j.at("tenant").get<int>();
    r.tenant_remaining = j.at("tenant_remaining").get<int>();
    r.digest = opt<std::string>(j, "digest");
}

void to_json(json& j, const SubmissionRecord& r) {
    j = json::object();
    j["step"] = r.step;
    j["tenant"] = r.tenant;
    j["digest"] = r.digest;
    j["val_errors"] = r.val_errors;
    j["val_count"] = r.val_count;
    j["test_errors"] = r.test_errors;
    j["test_count"] = r.test_count;
    j["val_loss"] = r.val_loss;
    j["test_loss"] = r.test_loss;
    j["empirical_overfitting"] = r.empirical_overfitting;
    j["signal"] = r.signal;
    j["timestamp"] = r.timestamp;
}

void from_json(const json& j, SubmissionRecord& r) {
    r.step = j.at("step").get<int>();
    r.tenant = j.at("tenant").get<int>();
    r.digest = j.at("digest").get<std::string>();
    r.val_errors = j.at("val_errors").get<std::int64_t>();
    r.val_count = j.at("val_count").get<std::int64_t>();
    r.test_errors = j.at("test_errors").get<std::int64_t>();
    r.test_count = j.at("test_count").get<std::int64_t>();
    r.val_loss = j.at("val_loss").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.empirical_overfitting = j.at("empirical_overfitting").get<double>();
    r.signal = j.at("signal").get<int>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
}

void to_json(json& j, const TestEpoch& e) {
    j = {{"test", e.test_ref}, {"history", e.history}, {"reverted", e.reverted}};
}

void from_json(const json& j, TestEpoch& e) {
    e.test_ref = j.at("test").get<std::string>();
    e.history = j.at("history").get<std::vector<SubmissionRecord>>();
    e.reverted = j.at("reverted").get<std::vector<SubmissionRecord>>();
}

void to_json(json& j, const Session& s) {
    j = json::object();
    j["id"] = s.id;
    j["owner"] = s.owner;
    j["spec"] = s.spec;
    j["plan"] = s.plan;
    j["val"] = s.val_ref;
    j["test"] = s.test_ref;
    j["history"] = s.history;
    j["reverted"] = s.reverted;
    j["archive"] = s.archive;
    j["high_water"] = s.high_water;
    j["remaining_submissions"] = s.remaining_submissions;
    j["remaining_reverts"] = s.remaining_reverts;
    j["tenant_cursor"] = s.tenant_cursor;
    j["tenant_used"] = s.tenant_used;
    j["state"] = std::string(to_string(s.state));
    j["seq"] = s.seq;
    j["created_at"] = s.created_at;
    j["creation_key"] = s.creation_key;
    json replies = json::object();
    for (const auto& [key, reply] : s.replies) {
        replies[key] = {{"op", reply.first}, {"report", reply.second}};
    }
    j["replies"] = replies;
}

void from_json(const json& j, Session& s) {
    s.id = j.at("id").get<std::string>();
    s.owner = j.at("owner").get<std::string>();
    s.spec = j.at("spec").get<MeterSpec>();
    s.plan = j.at("plan").get<PlanReport>();
    s.val_ref = j.at("val").get<std::string>();
    s.test_ref = j.at("test").get<std::string>();
    s.history = j.at("history").get<std::vector<SubmissionRecord>>();
    s.reverted = j.at("reverted").get<std::vector<SubmissionRecord>>();
    s.archive = j.at("archive").get<std::vector<TestEpoch>>();
    s.high_water = j.at("high_water").get<int>();
    s.remaining_submissions = j.at("remaining_submissions").get<int>();
    s.remaining_reverts = j.at("remaining_reverts").get<int>();
    s.tenant_cursor = j.at("tenant_cursor").get<int>();
    s.tenant_used = j.at("tenant_used").get<int>();
    s.state = parse_session_state(j.at("state").get<std::string>());
    s.seq = j.at("seq").get<std::uint64_t>();
    s.created_at = j.at("created_at").get<std::int64_t>();
    s.creation_key = j.at("creation_key").get<std::string>();
    s.replies.clear();
    for (const auto& [key, reply] : j.at("replies").items()) {
        s.replies[key] = {reply.at("op").get<std::string>(), reply.at("report").get<SignalReport>()};
    }
}

namespace {

json public_record(const SubmissionRecord& r, MeterMode mode) {
    json j = {{"step", r.step}, {"tenant", r.tenant}, {"digest", r.digest}, {"timestamp", r.timestamp}};
    if (mode == MeterMode::regular) {
        j["signal"] = r.signal;
    }
    return j;
}

json records_for(const std::vector<SubmissionRecord>& records, const Session& s, bool full) {
    if (full) {
        return records;
    }
    // Incremental meters only ever disclose the running maximum.
    json out = json::array();
    int running = 0;
    int tenant = -1;
    for (const auto& r : records) {
        json j = public_record(r, s.spec.mode);
        if (s.spec.mode == MeterMode::incremental) {
            if (r.tenant != tenant) {
                running = 0;
                tenant = r.tenant;
            }
            running = std::max(running, r.signal);
            j["incremental_signal"] = running;
        }
        out.push_back(std::move(j));
    }
    return out;
}

} // namespace

json session_view(const Session& s, Role role) {
    const bool full = role != Role::developer;
    json j = json::object();
    j["id"] = s.id;
    j["owner"] = s.owner;
    j["spec"] = s.spec;
    j["required_size"] = s.plan.required_size;
    j["plan"] = s.plan;
    j["val"] = s.val_ref;
    j["test"] = s.test_ref;
    j["state"] = std::string(to_string(s.state));
    j["seq"] = s.seq;
    j["created_at"] = s.created_at;
    j["high_water"] = s.high_water;
    j["remaining_submissions"] = s.remaining_submissions;
    j["remaining_reverts"] = s.remaining_reverts;
    j["tenant_cursor"] = s.tenant_cursor;
    j["tenant_used"] = s.tenant_used;
    j["history"] = records_for(s.history, s, full);
    if (full) {
        j["reverted"] = s.reverted;
    } else {
        j["reverted_count"] = s.reverted.size();
    }
    json archive = json::array();
    for (const auto& e : s.archive) {
        archive.push_back({{"test", e.test_ref}, {"history", records_for(e.history, s, full)}});
    }
    j["archive"] = archive;
    return j;
}

void to_json(json& j, const DatasetView& v) {
    j = json::object();
    j["id"] = v.id;
    j["sealed"] = v.sealed;
    j["released"] = v.released;
    j["owner_role"] = std::string(to_string(v.owner_role));
    j["created_at"] = v.created_at;
    j["size"] = v.ids.size();
    if (v.labels) {
        json items = json::array();
        for (std::size_t i = 0; i < v.ids.size(); ++i) {
            items.push_back({{"id", v.ids[i]}, {"label", (*v.labels)[i]}});
        }
        j["items"] = items;
    } else {
        j["ids"] = v.ids;
    }
}

void oracle::to_json(json& j, const oracle::TreeTally& t) {
    j = json::object();
    j["m"] = t.signals;
    j["T"] = t.depth;
    j["nodes"] = t.nodes;
    j["per_signal"] = t.per_signal();
    j["total"] = t.total;
}

json dataset_record(const LabeledDataset& d) {
    json items = json::array();
    for (const auto& [id, label] : d.items) {
        items.push_back(json::array({id, label}));
    }
    json j = json::object();
    j["id"] = d.id;
    j["sealed"] = d.sealed;
    j["released"] = d.released;
    j["owner_role"] = std::string(to_string(d.owner_role));
    j["owner"] = d.owner;
    j["created_at"] = d.created_at;
    if (d.sealed) {
        j["blob"] = base64_encode(items.dump());
    } else {
        j["items"] = std::move(items);
    }
    return j;
}

LabeledDataset dataset_from_record(const json& j) {
    LabeledDataset d;
    d.id = j.at("id").get<std::string>();
    d.sealed = j.at("sealed").get<bool>();
    d.released = j.at("released").get<bool>();
    d.owner_role = parse_role(j.at("owner_role").get<std::string>());
    d.owner = j.at("owner").get<std::string>();
    d.created_at = j.at("created_at").get<std::int64_t>();
    const json items = j.contains("blob") ? json::parse(base64_decode(j.at("blob").get<std::string>())) : j.at("items");
    for (const auto& item : items) {
        d.items.emplace_back(item.at(0).get<std::string>(), item.at(1).get<Label>());
    }
    return d;
}

namespace {

template <class Out>
Out parse_lines(std::istream& in, const char* value_field) {
    Out out;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t number = 0;
    auto reject = [&](const std::string& why) {
        invalid("invalid_upload", "line " + std::to_string(number) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            reject("not a JSON object");
        }
        if (!j.is_object() || !j.contains("id") || !j.contains(value_field)) {
            reject(std::string("expected an object with fields \"id\" and \"") + value_field + "\"");
        }
        if (!j["id"].is_string() || j["id"].get<std::string>().empty()) {
            reject("\"id\" must be a nonempty string");
        }
        if (!j[value_field].is_number_integer()) {
            reject(std::string("\"") + value_field + "\" must be an integer");
        }
        auto id = j["id"].get<std::string>();
        auto [it, inserted] = seen.emplace(id, number);
        if (!inserted) {
            invalid("duplicate_example_id", "line " + std::to_string(number) + ": id '" + id +
                                                "' already appeared on line " + std::to_string(it->second));
        }
        out.emplace_back(std::move(id), j[value_field].get<Label>());
    }
    if (out.empty()) {
        invalid("empty_dataset", "upload contains no records");
    }
    return out;
}

} // namespace

LabeledItems parse_label_lines(std::istream& in) { return parse_lines<LabeledItems>(in, "label"); }

Predictions parse_prediction_lines(std::istream& in) { return parse_lines<Predictions>(in, "pred"); }

} // namespace meter
