#include "meter/store.hpp"

#include "meter/digest.hpp"
#include "meter/error.hpp"
#include "meter/serialize.hpp"

#include <chrono>
#include <cinttypes>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace meter {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLogName = "events.jsonl";
constexpr const char* kSnapshotName = "snapshot.json";

[[noreturn]] void corrupt(std::size_t record, std::uint64_t offset, const std::string& why) {
    fail(ErrorKind::storage, "corrupt_record",
         "event log record " + std::to_string(record) + " at byte offset " + std::to_string(offset) +
             " is corrupt: " + why);
}

std::string frame(const nlohmann::json& event) {
    const std::string body = event.dump();
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08" PRIx32, crc32(body));
    return std::string(crc) + " " + body + "\n";
}

} // namespace

EventLog::EventLog(fs::path file) : file_(std::move(file)) {
    out_ = std::fopen(file_.c_str(), "ab");
    if (out_ == nullptr) {
        fail(ErrorKind::storage, "store_unwritable", "cannot open event log " + file_.string() + " for appending");
    }
}

EventLog::~EventLog() {
    if (out_ != nullptr) {
        std::fclose(out_);
    }
}

void EventLog::resume_from(std::uint64_t seq) {
    std::lock_guard lock(mutex_);
    seq_ = seq;
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return seq_;
}

std::uint64_t EventLog::append(nlohmann::json event) {
    std::lock_guard lock(mutex_);
    event["seq"] = seq_ + 1;
    const std::string line = frame(event);
    if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0 ||
        ::fsync(fileno(out_)) != 0) {
        fail(ErrorKind::storage, "store_write_failed", "could not append to event log " + file_.string());
    }
    return ++seq_;
}

std::vector<nlohmann::json> EventLog::read(const fs::path& file) {
    std::vector<nlohmann::json> out;
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        return out;
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t record = 0;
    std::uint64_t last = 0;
    while (pos < data.size()) {
        ++record;
        const std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) {
            corrupt(record, pos, "truncated (no line terminator)");
        }
        const std::string_view line(data.data() + pos, end - pos);
        if (line.size() < 10 || line[8] != ' ') {
            corrupt(record, pos, "malformed frame");
        }
        const std::string_view body = line.substr(9);
        std::uint32_t expected = 0;
        try {
            expected = static_cast<std::uint32_t>(std::stoul(std::string(line.substr(0, 8)), nullptr, 16));
        } catch (const std::exception&) {
            corrupt(record, pos, "malformed checksum");
        }
        if (crc32(body) != expected) {
            corrupt(record, pos, "checksum mismatch");
        }
        nlohmann::json event;
        try {
            event = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception&) {
            corrupt(record, pos, "unparseable payload");
        }
        if (!event.is_object() || !event.contains("seq") || !event["seq"].is_number_unsigned() ||
            event["seq"].get<std::uint64_t>() <= last) {
            corrupt(record, pos, "missing or out-of-order sequence number");
        }
        last = event["seq"].get<std::uint64_t>();
        out.push_back(std::move(event));
        pos = end + 1;
    }
    return out;
}

Workspace::Workspace(Options options) : options_(std::move(options)), engine_(registry_, options_.clock) {
    if (!options_.directory) {
        return;
    }
    std::error_code ec;
    fs::create_directories(*options_.directory, ec);
    if (ec) {
        fail(ErrorKind::storage, "store_unwritable", "cannot create store directory " + options_.directory->string());
    }
    restore_from_disk();
    log_ = std::make_unique<EventLog>(*options_.directory / kLogName);
    log_->resume_from(std::max(snapshot_seq_, last_replayed_));
    registry_.on_register([this](const LabeledDataset& d) {
        record({{"type", "dataset_registered"}, {"dataset", dataset_record(d)}});
    });
    engine_.set_sink([this](const nlohmann::json& e) { record(e); });
}

Workspace::~Workspace() {
    registry_.on_register({});
    engine_.set_sink({});
}

void Workspace::record(nlohmann::json event) { log_->append(std::move(event)); }

void Workspace::restore_from_disk() {
    const fs::path dir = *options_.directory;
    if (fs::exists(dir / kSnapshotName)) {
        std::ifstream in(dir / kSnapshotName, std::ios::binary);
        nlohmann::json snap;
        try {
            snap = nlohmann::json::parse(in);
            snapshot_seq_ = snap.at("seq").get<std::uint64_t>();
            for (const auto& d : snap.at("datasets")) {
                registry_.restore(Registry::TrustedKey{}, dataset_from_record(d));
            }
            for (const auto& s : snap.at("sessions")) {
                engine_.restore(s.get<Session>());
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::storage, "corrupt_record", std::string("snapshot is unreadable: ") + e.what());
        }
    }
    const auto events = EventLog::read(dir / kLogName);
    std::size_t record = 0;
    for (const auto& event : events) {
        ++record;
        const auto seq = event.at("seq").get<std::uint64_t>();
        last_replayed_ = seq;
        if (seq <= snapshot_seq_) {
            continue;
        }
        try {
            if (event.at("type") == "dataset_registered") {
                registry_.restore(Registry::TrustedKey{}, dataset_from_record(event.at("dataset")));
            } else {
                engine_.apply(event);
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::storage, "corrupt_record",
                 "event log record " + std::to_string(record) + " (seq " + std::to_string(seq) +
                     ") cannot be applied: " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::storage) {
                throw;
            }
            fail(ErrorKind::storage, "corrupt_record",
                 "event log record " + std::to_string(record) + " (seq " + std::to_string(seq) +
                     ") cannot be applied: " + e.what());
        }
    }
}

nlohmann::json Workspace::state() const {
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& id : registry_.dataset_ids()) {
        datasets.push_back(dataset_record(*registry_.labels(Registry::TrustedKey{}, id)));
    }
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& id : engine_.session_ids()) {
        sessions.push_back(engine_.session(id));
    }
    return {{"datasets", datasets}, {"sessions", sessions}};
}

std::string Workspace::state_digest() const { return sha256_hex(state().dump()); }

std::int64_t Workspace::now() const {
    if (options_.clock) {
        return options_.clock();
    }
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::uint64_t Workspace::last_seq() const { return log_ ? log_->last_seq() : 0; }

void Workspace::snapshot() {
    if (!log_) {
        return;
    }
    std::lock_guard one(snapshot_mutex_);
    std::unique_lock gate(gate_);
    nlohmann::json snap = state();
    snap["seq"] = log_->last_seq();
    const fs::path dir = *options_.directory;
    const fs::path tmp = dir / (std::string(kSnapshotName) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << snap.dump() << '\n';
        out.flush();
        if (!out) {
            fail(ErrorKind::storage, "store_write_failed", "could not write snapshot " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, dir / kSnapshotName, ec);
    if (ec) {
        fail(ErrorKind::storage, "store_write_failed", "could not install snapshot: " + ec.message());
    }
    snapshot_seq_ = snap["seq"].get<std::uint64_t>();
}

void Workspace::maybe_snapshot() {
    if (!log_ || options_.snapshot_every == 0) {
        return;
    }
    std::uint64_t since = 0;
    {
        std::lock_guard one(snapshot_mutex_);
        since = log_->last_seq() - snapshot_seq_;
    }
    if (since < options_.snapshot_every) {
        return;
    }
    try {
        snapshot();
    } catch (const Error& e) {
        // The log alone is enough to recover; a failed snapshot only costs replay time.
        std::cerr << "snapshot skipped: " << e.what() << '\n';
    }
}

} // namespace meter
