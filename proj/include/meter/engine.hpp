#pragma once

#include "meter/planner.hpp"
#include "meter/registry.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meter {

enum class SessionState { active, exhausted, closed };

std::string_view to_string(SessionState state);
SessionState parse_session_state(std::string_view text);

/// 1-based index of the band holding `value`. Bands are half-open except the
/// last, which also takes its upper end.
int band_for(std::span<const Band> bands, double value);

/// Snaps a floating overfitting value to a 1e-12 grid so that values computed
/// as differences of decimal accuracies land on the intended band edge.
double quantize_overfitting(double value);

/// |a/n₁ − b/n₂| as a single correctly rounded division.
double overfitting_from_counts(std::int64_t val_errors, std::int64_t val_count, std::int64_t test_errors,
                               std::int64_t test_count);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// [max(0, r̲ − ε), r̄ + ε]
Interval derived_interval(const Band& band, double epsilon);

using Predictions = std::vector<std::pair<std::string, Label>>;

/// Hex SHA-256 over the predictions sorted by id.
std::string predictions_digest(Predictions predictions);

struct SubmissionRecord {
    int step = 0;    // 1-based position among the submissions charged to this test set
    int tenant = 0;  // 0-based
    std::string digest;
    std::int64_t val_errors = 0;
    std::int64_t val_count = 0;
    std::int64_t test_errors = 0;
    std::int64_t test_count = 0;
    double val_loss = 0.0;
    double test_loss = 0.0;
    double empirical_overfitting = 0.0;
    int signal = 0;
    std::int64_t timestamp = 0;

    friend bool operator==(const SubmissionRecord&, const SubmissionRecord&) = default;
};

/// A rotated-out test set with what was charged against it.
struct TestEpoch {
    std::string test_ref;
    std::vector<SubmissionRecord> history;
    std::vector<SubmissionRecord> reverted;

    friend bool operator==(const TestEpoch&, const TestEpoch&) = default;
};

struct SignalReport {
    std::string session_id;
    std::uint64_t seq = 0;
    MeterMode mode = MeterMode::regular;
    SessionState state = SessionState::active;
    int step = 0;
    std::optional<int> signal;   // regular meters only
    int incremental_signal = 0;  // 0 before the first submission of the current tenant
    std::optional<Band> band;
    std::optional<double> epsilon_bound;
    std::optional<Interval> derived_ovft_interval;
    double delta = 0.0;
    std::optional<double> empirical_overfitting;  // withheld from developers
    int remaining_submissions = 0;
    int remaining_reverts = 0;
    int tenant = 0;
    int tenant_remaining = 0;
    std::optional<std::string> digest;

    friend bool operator==(const SignalReport&, const SignalReport&) = default;
};

/// Drops everything a developer must not learn beyond the signal.
SignalReport visible_to(SignalReport report, Role role);

struct Session {
    std::string id;
    std::string owner;
    MeterSpec spec;
    PlanReport plan;
    std::string val_ref;
    std::string test_ref;
    std::vector<SubmissionRecord> history;   // retained
    std::vector<SubmissionRecord> reverted;  // popped by revert, kept for audit
    std::vector<TestEpoch> archive;
    int high_water = 0;
    int remaining_submissions = 0;
    int remaining_reverts = 0;
    int tenant_cursor = 0;
    int tenant_used = 0;
    SessionState state = SessionState::active;
    std::uint64_t seq = 0;
    std::int64_t created_at = 0;
    std::string creation_key;
    std::map<std::string, std::pair<std::string, SignalReport>> replies;  // idempotency key -> (op, report)

    int consumed() const { return spec.steps - remaining_submissions; }

    friend bool operator==(const Session&, const Session&) = default;
};

/// Optional guards on a mutation.
struct Mutation {
    std::optional<std::uint64_t> expected_seq;
    std::optional<std::string> idempotency_key;
};

/// Metering sessions. Each session is mutated under its own lock; the sink
/// sees one event per applied mutation, in session order.
class Engine {
public:
    using Clock = std::function<std::int64_t()>;
    using Sink = std::function<void(const nlohmann::json&)>;

    explicit Engine(Registry& registry, Clock clock = {});

    void set_sink(Sink sink);

    SignalReport create_session(const Principal& who, const MeterSpec& spec, const std::string& val_ref,
                                const std::string& test_ref, const Mutation& options = {});
    SignalReport submit(const Principal& who, const std::string& id, const Predictions& predictions,
                        const Mutation& options = {});
    SignalReport revert(const Principal& who, const std::string& id, const Mutation& options = {});
    SignalReport handoff_tenant(const Principal& who, const std::string& id, const Mutation& options = {});
    SignalReport rotate_test_set(const Principal& who, const std::string& id, const std::string& new_test_ref,
                                 const Mutation& options = {});
    SignalReport close_session(const Principal& who, const std::string& id, const Mutation& options = {});

    SignalReport status(const Principal& who, const std::string& id) const;
    Session session(const std::string& id) const;
    std::vector<std::string> session_ids() const;

    /// Replays one logged event without emitting it again.
    void apply(const nlohmann::json& event);
    void restore(Session session);

private:
    struct Slot {
        std::mutex mutex;
        Session session;
    };
    struct Evaluation {
        std::string digest;
        std::int64_t val_errors = 0, val_count = 0, test_errors = 0, test_count = 0;
    };

    std::shared_ptr<Slot> slot(const std::string& id) const;
    Evaluation evaluate(const Session& s, const Predictions& predictions) const;
    void check_test_set(const MeterSpec& spec, const PlanReport& plan, const std::string& test_ref,
                        const std::string& val_ref) const;

    SignalReport report(const Session& s, const std::optional<std::string>& digest = std::nullopt) const;

    void do_create(Session& s, std::int64_t now);
    SignalReport do_submit(Session& s, const Evaluation& e, std::int64_t now);
    SignalReport do_revert(Session& s);
    SignalReport do_handoff(Session& s);
    SignalReport do_rotate(Session& s, const std::string& new_test_ref);
    SignalReport do_close(Session& s);

    void check_revert(const Session& s) const;
    void check_handoff(const Session& s) const;
    void check_rotate(const Session& s, const std::string& new_test_ref) const;

    template <class Check, class Apply>
    SignalReport mutate(const Principal& who, const std::string& id, const std::string& op, const Mutation& options,
                        Check check, Apply apply, nlohmann::json& event);

    std::int64_t now() const;
    void emit(const nlohmann::json& event) const;

    Registry& registry_;
    Clock clock_;
    Sink sink_;
    mutable std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::map<std::string, std::string> creation_keys_;
    std::uint64_t next_session_ = 1;
};

} // namespace meter
