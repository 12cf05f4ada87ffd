#pragma once

#include "vlab/service/state.hpp"

#include <filesystem>
#include <optional>

namespace vlab::service {

/// Append-only JSON-lines log (events.jsonl) plus snapshot.json in a data
/// directory. Each append is written and flushed to disk before returning.
class EventLog {
public:
    /// With durable = false appends skip fsync.
    explicit EventLog(std::filesystem::path dir, bool durable = true);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    struct Loaded {
        State state;
        std::uint64_t events_read = 0;
        /// A partially written last line was dropped.
        bool torn_tail = false;
    };

    /// Rebuilds the state from the snapshot (if any) and the log tail.
    /// A torn final line is truncated away so later appends stay parseable.
    Loaded load();

    /// Full replay from an empty state, ignoring the snapshot.
    State replay_all() const;

    void append(const nlohmann::json& event);

    /// Atomically replaces snapshot.json with the canonical state.
    void write_snapshot(const State& state);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path log_path() const { return dir_ / "events.jsonl"; }
    std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

private:
    std::filesystem::path dir_;
    bool durable_;
    int fd_ = -1;

    void open_for_append();
};

} // namespace vlab::service
