#pragma once

#include "meter/engine.hpp"
#include "meter/registry.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace meter {

/// Append-only JSON-lines file. Each line is "<crc32 hex> <json>".
class EventLog {
public:
    explicit EventLog(std::filesystem::path file);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    /// Stamps `event` with the next sequence number and writes it through.
    std::uint64_t append(nlohmann::json event);
    std::uint64_t last_seq() const;

    /// All records in order; throws Error{storage, "corrupt_record"} naming the
    /// record number and byte offset of the first bad line.
    static std::vector<nlohmann::json> read(const std::filesystem::path& file);

    void resume_from(std::uint64_t seq);

private:
    std::filesystem::path file_;
    std::FILE* out_ = nullptr;
    mutable std::mutex mutex_;
    std::uint64_t seq_ = 0;
};

/// Registry + engine with optional on-disk persistence (events.jsonl and
/// snapshot.json under one directory).
class Workspace {
public:
    struct Options {
        std::optional<std::filesystem::path> directory;
        std::size_t snapshot_every = 1000;
        Engine::Clock clock;
    };

    explicit Workspace(Options options);
    Workspace() : Workspace(Options{}) {}
    ~Workspace();
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    Registry& registry() { return registry_; }
    Engine& engine() { return engine_; }
    const Registry& registry() const { return registry_; }
    const Engine& engine() const { return engine_; }

    /// Runs a mutation while holding off snapshots; may take one afterwards.
    template <class F>
    auto mutate(F&& f) {
        struct After {
            Workspace* w;
            ~After() { w->maybe_snapshot(); }
        } after{this};
        std::shared_lock gate(gate_);
        return f();
    }

    /// Canonical JSON of every dataset and session.
    nlohmann::json state() const;
    std::string state_digest() const;

    void snapshot();
    std::uint64_t last_seq() const;
    std::int64_t now() const;

private:
    void restore_from_disk();
    void maybe_snapshot();
    void record(nlohmann::json event);

    Options options_;
    Registry registry_;
    Engine engine_;
    std::unique_ptr<EventLog> log_;
    mutable std::shared_mutex gate_;
    std::mutex snapshot_mutex_;
    std::uint64_t snapshot_seq_ = 0;
    std::uint64_t last_replayed_ = 0;
};

} // namespace meter
