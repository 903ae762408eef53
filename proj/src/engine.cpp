#include "meter/engine.hpp"

#include "meter/digest.hpp"
#include "meter/error.hpp"
#include "meter/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace meter {

std::string_view to_string(SessionState state) {
    switch (state) {
    case SessionState::active: return "active";
    case SessionState::exhausted: return "exhausted";
    case SessionState::closed: return "closed";
    }
    return "active";
}

SessionState parse_session_state(std::string_view text) {
    if (text == "active") return SessionState::active;
    if (text == "exhausted") return SessionState::exhausted;
    if (text == "closed") return SessionState::closed;
    fail(ErrorKind::storage, "corrupt_record", "unknown session state '" + std::string(text) + "'");
}

int band_for(std::span<const Band> bands, double value) {
    if (bands.empty()) {
        invalid("invalid_spec", "meter has no bands");
    }
    if (!(value >= bands.front().lower && value <= bands.back().upper)) {
        invalid("parameter_out_of_range", "overfitting value " + std::to_string(value) + " lies outside the meter");
    }
    for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
        if (value < bands[i].upper) {
            return static_cast<int>(i) + 1;
        }
    }
    return static_cast<int>(bands.size());
}

double quantize_overfitting(double value) { return std::round(value * 1e12) / 1e12; }

double overfitting_from_counts(std::int64_t val_errors, std::int64_t val_count, std::int64_t test_errors,
                               std::int64_t test_count) {
    if (val_count <= 0 || test_count <= 0) {
        invalid("empty_dataset", "losses need nonempty datasets");
    }
    const __int128 num = static_cast<__int128>(val_errors) * test_count - static_cast<__int128>(test_errors) * val_count;
    const __int128 den = static_cast<__int128>(val_count) * test_count;
    const __int128 mag = num < 0 ? -num : num;
    return static_cast<double>(mag) / static_cast<double>(den);
}

Interval derived_interval(const Band& band, double epsilon) {
    return {std::max(0.0, band.lower - epsilon), band.upper + epsilon};
}

std::string predictions_digest(Predictions predictions) {
    std::sort(predictions.begin(), predictions.end());
    std::string text;
    for (const auto& [id, pred] : predictions) {
        text += id;
        text += '\t';
        text += std::to_string(pred);
        text += '\n';
    }
    return sha256_hex(text);
}

SignalReport visible_to(SignalReport report, Role role) {
    if (role == Role::developer) {
        report.empirical_overfitting.reset();
    }
    return report;
}

namespace {

void require_mutator(const Principal& who) {
    if (who.role == Role::labeler) {
        fail(ErrorKind::authorization, "role_violation", "labelers cannot drive metering sessions");
    }
}

void require_open(const Session& s) {
    if (s.state == SessionState::closed) {
        fail(ErrorKind::state, "session_closed", "session " + s.id + " is closed");
    }
}

int tenant_budget(const Session& s) {
    return s.spec.tenant_steps().at(static_cast<std::size_t>(s.tenant_cursor));
}

int recompute_high_water(const Session& s) {
    int best = 0;
    for (const auto& r : s.history) {
        if (r.tenant == s.tenant_cursor) {
            best = std::max(best, r.signal);
        }
    }
    return best;
}

} // namespace

Engine::Engine(Registry& registry, Clock clock) : registry_(registry), clock_(std::move(clock)) {}

void Engine::set_sink(Sink sink) {
    std::lock_guard lock(map_mutex_);
    sink_ = std::move(sink);
}

std::int64_t Engine::now() const {
    if (clock_) {
        return clock_();
    }
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void Engine::emit(const nlohmann::json& event) const {
    Sink sink;
    {
        std::lock_guard lock(map_mutex_);
        sink = sink_;
    }
    if (sink) {
        sink(event);
    }
}

std::shared_ptr<Engine::Slot> Engine::slot(const std::string& id) const {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        fail(ErrorKind::not_found, "session_not_found", "no session with id '" + id + "'");
    }
    return it->second;
}

void Engine::check_test_set(const MeterSpec&, const PlanReport& plan, const std::string& test_ref,
                            const std::string& val_ref) const {
    if (test_ref == val_ref) {
        invalid("identity_reuse", "validation and test set must be different datasets");
    }
    auto test = registry_.labels(Registry::TrustedKey{}, test_ref);
    if (!test->sealed) {
        fail(ErrorKind::state, "unsealed_test_set", "test dataset '" + test_ref + "' is not sealed");
    }
    const auto supplied = static_cast<std::int64_t>(test->size());
    if (supplied < plan.required_size) {
        invalid("undersized_test_set", "test set '" + test_ref + "' has " + std::to_string(supplied) +
                                           " labels but the plan requires " + std::to_string(plan.required_size) +
                                           " (deficit " + std::to_string(plan.required_size - supplied) + ")");
    }
}

SignalReport Engine::report(const Session& s, const std::optional<std::string>& digest) const {
    SignalReport r;
    r.session_id = s.id;
    r.seq = s.seq;
    r.mode = s.spec.mode;
    r.state = s.state;
    r.step = s.consumed();
    r.delta = s.spec.delta;
    r.remaining_submissions = s.remaining_submissions;
    r.remaining_reverts = s.remaining_reverts;
    r.tenant = s.tenant_cursor;
    r.tenant_remaining = tenant_budget(s) - s.tenant_used;
    r.incremental_signal = s.high_water;
    r.digest = digest;

    const SubmissionRecord* last =
        !s.history.empty() && s.history.back().tenant == s.tenant_cursor ? &s.history.back() : nullptr;
    int shown = 0;
    if (s.spec.mode == MeterMode::regular) {
        if (last != nullptr) {
            r.signal = last->signal;
            shown = last->signal;
        }
    } else {
        shown = s.high_water;
    }
    if (shown > 0) {
        const auto& band = s.spec.bands[static_cast<std::size_t>(shown - 1)];
        const double eps = s.spec.schedule[static_cast<std::size_t>(shown - 1)];
        r.band = band;
        r.epsilon_bound = eps;
        r.derived_ovft_interval = derived_interval(band, eps);
    }
    if (last != nullptr) {
        r.empirical_overfitting = last->empirical_overfitting;
    }
    return r;
}

Engine::Evaluation Engine::evaluate(const Session& s, const Predictions& predictions) const {
    Predictions sorted = predictions;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].first == sorted[i - 1].first) {
            invalid("duplicate_example_id", "prediction for id '" + sorted[i].first + "' given more than once");
        }
    }
    std::vector<char> used(sorted.size(), 0);
    std::int64_t missing = 0;
    // Both item lists and predictions are sorted by id: a merge walk counts errors.
    auto score = [&](const LabeledDataset& ds, std::int64_t& errors) {
        std::size_t p = 0;
        for (const auto& [id, label] : ds.items) {
            while (p < sorted.size() && sorted[p].first < id) {
                ++p;
            }
            if (p == sorted.size() || sorted[p].first != id) {
                ++missing;
                continue;
            }
            used[p] = 1;
            if (sorted[p].second != label) {
                ++errors;
            }
        }
    };
    Evaluation e;
    auto val = registry_.labels(Registry::TrustedKey{}, s.val_ref);
    auto test = registry_.labels(Registry::TrustedKey{}, s.test_ref);
    score(*val, e.val_errors);
    score(*test, e.test_errors);
    const auto extra = static_cast<std::int64_t>(std::count(used.begin(), used.end(), 0));
    if (missing > 0 || extra > 0) {
        invalid("coverage_mismatch", "predictions must cover the validation and test ids exactly once: " +
                                         std::to_string(missing) + " missing, " + std::to_string(extra) + " extra");
    }
    e.val_count = static_cast<std::int64_t>(val->size());
    e.test_count = static_cast<std::int64_t>(test->size());
    e.digest = predictions_digest(std::move(sorted));
    return e;
}

void Engine::do_create(Session& s, std::int64_t at) {
    s.remaining_submissions = s.spec.steps;
    s.remaining_reverts = s.spec.revert_budget();
    s.state = SessionState::active;
    s.created_at = at;
    s.seq = 1;
}

SignalReport Engine::do_submit(Session& s, const Evaluation& e, std::int64_t at) {
    SubmissionRecord r;
    r.step = s.consumed() + 1;
    r.tenant = s.tenant_cursor;
    r.digest = e.digest;
    r.val_errors = e.val_errors;
    r.val_count = e.val_count;
    r.test_errors = e.test_errors;
    r.test_count = e.test_count;
    r.val_loss = static_cast<double>(e.val_errors) / static_cast<double>(e.val_count);
    r.test_loss = static_cast<double>(e.test_errors) / static_cast<double>(e.test_count);
    r.empirical_overfitting = overfitting_from_counts(e.val_errors, e.val_count, e.test_errors, e.test_count);
    r.signal = band_for(s.spec.bands, r.empirical_overfitting);
    r.timestamp = at;
    s.history.push_back(r);
    s.high_water = std::max(s.high_water, r.signal);
    --s.remaining_submissions;
    ++s.tenant_used;
    if (s.remaining_submissions == 0) {
        s.state = SessionState::exhausted;
    }
    ++s.seq;
    return report(s, r.digest);
}

void Engine::check_revert(const Session& s) const {
    require_open(s);
    if (s.remaining_reverts < 1) {
        fail(ErrorKind::state, "no_revert_budget", "session " + s.id + " has no reverts left");
    }
    if (s.history.empty() || s.history.back().tenant != s.tenant_cursor) {
        fail(ErrorKind::state, "empty_history", "session " + s.id + " has no submission to revert");
    }
    // The size was planned for reverts no later than the scheduled steps.
    const int index = s.spec.revert_budget() - s.remaining_reverts;
    const int latest = s.spec.revert_steps.at(static_cast<std::size_t>(index));
    if (s.consumed() > latest) {
        fail(ErrorKind::state, "revert_outside_schedule",
             "revert " + std::to_string(index + 1) + " was planned for step " + std::to_string(latest) +
                 " or earlier, but " + std::to_string(s.consumed()) + " submissions have been made");
    }
}

SignalReport Engine::do_revert(Session& s) {
    s.reverted.push_back(s.history.back());
    s.history.pop_back();
    --s.remaining_reverts;
    s.high_water = recompute_high_water(s);
    ++s.seq;
    return report(s);
}

void Engine::check_handoff(const Session& s) const {
    require_open(s);
    const auto tenants = s.spec.tenant_steps();
    if (static_cast<std::size_t>(s.tenant_cursor) + 1 >= tenants.size()) {
        fail(ErrorKind::state, "no_remaining_tenant", "session " + s.id + " has no further tenant to hand off to");
    }
    if (s.tenant_used < tenant_budget(s)) {
        fail(ErrorKind::state, "premature_handoff",
             "tenant " + std::to_string(s.tenant_cursor) + " has used " + std::to_string(s.tenant_used) + " of " +
                 std::to_string(tenant_budget(s)) + " submissions");
    }
}

SignalReport Engine::do_handoff(Session& s) {
    ++s.tenant_cursor;
    s.tenant_used = 0;
    s.high_water = 0;
    ++s.seq;
    return report(s);
}

void Engine::check_rotate(const Session& s, const std::string& new_test_ref) const {
    require_open(s);
    if (s.state != SessionState::exhausted) {
        fail(ErrorKind::state, "not_exhausted",
             "session " + s.id + " still has " + std::to_string(s.remaining_submissions) + " submissions left");
    }
    bool reused = new_test_ref == s.test_ref;
    for (const auto& e : s.archive) {
        reused = reused || e.test_ref == new_test_ref;
    }
    if (reused) {
        invalid("identity_reuse", "dataset '" + new_test_ref + "' has already served as this session's test set");
    }
    check_test_set(s.spec, s.plan, new_test_ref, s.val_ref);
}

SignalReport Engine::do_rotate(Session& s, const std::string& new_test_ref) {
    registry_.release(Registry::TrustedKey{}, s.test_ref);
    s.archive.push_back({s.test_ref, std::move(s.history), std::move(s.reverted)});
    s.history.clear();
    s.reverted.clear();
    s.test_ref = new_test_ref;
    s.remaining_submissions = s.spec.steps;
    s.remaining_reverts = s.spec.revert_budget();
    s.tenant_cursor = 0;
    s.tenant_used = 0;
    s.high_water = 0;
    s.state = SessionState::active;
    ++s.seq;
    return report(s);
}

SignalReport Engine::do_close(Session& s) {
    s.state = SessionState::closed;
    ++s.seq;
    return report(s);
}

SignalReport Engine::create_session(const Principal& who, const MeterSpec& spec, const std::string& val_ref,
                                    const std::string& test_ref, const Mutation& options) {
    require_mutator(who);
    if (options.idempotency_key) {
        std::string existing;
        {
            std::lock_guard lock(map_mutex_);
            auto it = creation_keys_.find(*options.idempotency_key);
            if (it != creation_keys_.end()) {
                existing = it->second;
            }
        }
        if (!existing.empty()) {
            auto sl = slot(existing);
            std::lock_guard lock(sl->mutex);
            return visible_to(sl->session.replies.at(*options.idempotency_key).second, who.role);
        }
    }
    validate(spec);
    if (!registry_.contains(val_ref)) {
        fail(ErrorKind::not_found, "dataset_not_found", "no dataset with id '" + val_ref + "'");
    }
    Session s;
    s.spec = spec;
    s.owner = who.name;
    s.val_ref = val_ref;
    s.test_ref = test_ref;
    s.plan = plan(spec);
    check_test_set(spec, s.plan, test_ref, val_ref);

    auto sl = std::make_shared<Slot>();
    std::lock_guard session_lock(sl->mutex);
    {
        std::lock_guard lock(map_mutex_);
        if (options.idempotency_key && creation_keys_.count(*options.idempotency_key) != 0) {
            fail(ErrorKind::conflict, "idempotency_in_flight", "a session with this idempotency key is being created");
        }
        char buf[32];
        do {
            std::snprintf(buf, sizeof buf, "s-%06llu", static_cast<unsigned long long>(next_session_++));
        } while (sessions_.count(buf) != 0);
        s.id = buf;
        sessions_[s.id] = sl;
        if (options.idempotency_key) {
            creation_keys_[*options.idempotency_key] = s.id;
        }
    }
    const std::int64_t at = now();
    nlohmann::json event = {{"type", "session_created"}, {"session", s.id}, {"owner", s.owner}, {"spec", spec},
                            {"val", val_ref},           {"test", test_ref}, {"at", at}};
    if (options.idempotency_key) {
        event["key"] = *options.idempotency_key;
    }
    try {
        emit(event);
    } catch (...) {
        std::lock_guard lock(map_mutex_);
        sessions_.erase(s.id);
        if (options.idempotency_key) {
            creation_keys_.erase(*options.idempotency_key);
        }
        throw;
    }
    do_create(s, at);
    auto r = report(s);
    if (options.idempotency_key) {
        s.creation_key = *options.idempotency_key;
        s.replies[*options.idempotency_key] = {"create", r};
    }
    sl->session = std::move(s);
    return visible_to(r, who.role);
}

template <class Check, class Apply>
SignalReport Engine::mutate(const Principal& who, const std::string& id, const std::string& op,
                            const Mutation& options, Check check, Apply apply, nlohmann::json& event) {
    require_mutator(who);
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    Session& s = sl->session;
    if (options.idempotency_key) {
        auto it = s.replies.find(*options.idempotency_key);
        if (it != s.replies.end()) {
            if (it->second.first != op) {
                fail(ErrorKind::conflict, "idempotency_key_reused",
                     "idempotency key was already used for a " + it->second.first + " request");
            }
            return visible_to(it->second.second, who.role);
        }
    }
    if (options.expected_seq && *options.expected_seq != s.seq) {
        fail(ErrorKind::conflict, "seq_conflict",
             "session " + id + " is at sequence " + std::to_string(s.seq) + ", request expected " +
                 std::to_string(*options.expected_seq));
    }
    check(s);
    event["session"] = id;
    if (options.idempotency_key) {
        event["key"] = *options.idempotency_key;
    }
    emit(event);
    SignalReport r = apply(s);
    if (options.idempotency_key) {
        s.replies[*options.idempotency_key] = {op, r};
    }
    return visible_to(r, who.role);
}

SignalReport Engine::submit(const Principal& who, const std::string& id, const Predictions& predictions,
                            const Mutation& options) {
    Evaluation e;
    const std::int64_t at = now();
    nlohmann::json event = {{"type", "submitted"}, {"at", at}};
    auto check = [&](const Session& s) {
        require_open(s);
        if (s.state == SessionState::exhausted) {
            fail(ErrorKind::state, "session_exhausted",
                 "session " + s.id + " has used all " + std::to_string(s.spec.steps) +
                     " submissions; rotate in a fresh test set of at least " + std::to_string(s.plan.required_size) +
                     " labels");
        }
        if (s.tenant_used >= tenant_budget(s)) {
            fail(ErrorKind::state, "tenant_budget_exhausted",
                 "tenant " + std::to_string(s.tenant_cursor) + " has used its submissions; hand off to the next tenant");
        }
        e = evaluate(s, predictions);
        event["digest"] = e.digest;
        event["val_errors"] = e.val_errors;
        event["val_count"] = e.val_count;
        event["test_errors"] = e.test_errors;
        event["test_count"] = e.test_count;
    };
    return mutate(who, id, "submit", options, check, [&](Session& s) { return do_submit(s, e, at); }, event);
}

SignalReport Engine::revert(const Principal& who, const std::string& id, const Mutation& options) {
    nlohmann::json event = {{"type", "reverted"}};
    return mutate(
        who, id, "revert", options, [&](const Session& s) { check_revert(s); },
        [&](Session& s) { return do_revert(s); }, event);
}

SignalReport Engine::handoff_tenant(const Principal& who, const std::string& id, const Mutation& options) {
    nlohmann::json event = {{"type", "handed_off"}};
    return mutate(
        who, id, "handoff", options, [&](const Session& s) { check_handoff(s); },
        [&](Session& s) { return do_handoff(s); }, event);
}

SignalReport Engine::rotate_test_set(const Principal& who, const std::string& id, const std::string& new_test_ref,
                                     const Mutation& options) {
    nlohmann::json event = {{"type", "rotated"}, {"test", new_test_ref}};
    return mutate(
        who, id, "rotate", options, [&](const Session& s) { check_rotate(s, new_test_ref); },
        [&](Session& s) { return do_rotate(s, new_test_ref); }, event);
}

SignalReport Engine::close_session(const Principal& who, const std::string& id, const Mutation& options) {
    nlohmann::json event = {{"type", "closed"}};
    return mutate(
        who, id, "close", options, [&](const Session& s) { require_open(s); },
        [&](Session& s) { return do_close(s); }, event);
}

SignalReport Engine::status(const Principal& who, const std::string& id) const {
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    return visible_to(report(sl->session), who.role);
}

Session Engine::session(const std::string& id) const {
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    return sl->session;
}

std::vector<std::string> Engine::session_ids() const {
    std::lock_guard lock(map_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, sl] : sessions_) {
        out.push_back(id);
    }
    return out;
}

void Engine::restore(Session session) {
    auto sl = std::make_shared<Slot>();
    std::lock_guard lock(map_mutex_);
    if (!session.creation_key.empty()) {
        creation_keys_[session.creation_key] = session.id;
    }
    const std::string id = session.id;
    sl->session = std::move(session);
    sessions_[id] = std::move(sl);
}

void Engine::apply(const nlohmann::json& event) {
    const auto type = event.at("type").get<std::string>();
    const auto id = event.at("session").get<std::string>();
    const auto key = event.contains("key") ? std::optional<std::string>(event["key"].get<std::string>()) : std::nullopt;
    if (type == "session_created") {
        Session s;
        s.id = id;
        s.owner = event.at("owner").get<std::string>();
        s.spec = event.at("spec").get<MeterSpec>();
        s.val_ref = event.at("val").get<std::string>();
        s.test_ref = event.at("test").get<std::string>();
        s.plan = plan(s.spec);
        do_create(s, event.at("at").get<std::int64_t>());
        if (key) {
            s.creation_key = *key;
            s.replies[*key] = {"create", report(s)};
        }
        restore(std::move(s));
        return;
    }
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    Session& s = sl->session;
    SignalReport r;
    std::string op;
    if (type == "submitted") {
        Evaluation e;
        e.digest = event.at("digest").get<std::string>();
        e.val_errors = event.at("val_errors").get<std::int64_t>();
        e.val_count = event.at("val_count").get<std::int64_t>();
        e.test_errors = event.at("test_errors").get<std::int64_t>();
        e.test_count = event.at("test_count").get<std::int64_t>();
        if (s.state != SessionState::active) {
            fail(ErrorKind::storage, "corrupt_record", "logged submission to inactive session " + id);
        }
        r = do_submit(s, e, event.at("at").get<std::int64_t>());
        op = "submit";
    } else if (type == "reverted") {
        check_revert(s);
        r = do_revert(s);
        op = "revert";
    } else if (type == "handed_off") {
        check_handoff(s);
        r = do_handoff(s);
        op = "handoff";
    } else if (type == "rotated") {
        const auto test = event.at("test").get<std::string>();
        // The released flag may already be persisted with the dataset.
        r = do_rotate(s, test);
        op = "rotate";
    } else if (type == "closed") {
        r = do_close(s);
        op = "close";
    } else {
        fail(ErrorKind::storage, "corrupt_record", "unknown event type '" + type + "'");
    }
    if (key) {
        s.replies[*key] = {op, r};
    }
}

} // namespace meter
