#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dxdialog/dialogue.hpp"

namespace dxdialog {

struct CreatedEvent {
    std::string session_id;
    UtcSeconds created_at{};
    std::string medical_history;
    EngineConfig config;
};

/// One accepted next_turn call.
struct MessageEvent {
    PatientMessage message;
    UtcSeconds timestamp{};
};

struct SessionLogContents {
    CreatedEvent created;
    std::vector<MessageEvent> messages;
};

struct SessionSnapshot {
    /// Message events folded into `state`; equals state.round.
    std::size_t events = 0;
    UtcSeconds created_at{};
    DialogueState state;
};

/// Per-session directory holding an append-only events.jsonl and a periodically rewritten snapshot.json.
class SessionLog {
public:
    explicit SessionLog(std::filesystem::path dir);

    void write_created(const CreatedEvent& e);
    void append(const MessageEvent& e);
    void write_snapshot(const SessionSnapshot& s);

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

/// A torn final line (crash mid-append) is dropped with a warning; any other malformed line is a ValidationError.
SessionLogContents read_session_log(const std::filesystem::path& dir);
std::optional<SessionSnapshot> read_snapshot(const std::filesystem::path& dir);

/// Rewrites events.jsonl without a torn final line so later appends stay well-formed. Returns true if it trimmed.
bool repair_torn_tail(const std::filesystem::path& dir);

/// Re-runs every logged message through the engine from a fresh session.
DialogueState replay(const DialogueEngine& engine, const SessionLogContents& log);

/// Snapshot plus the events logged after it; full replay when there is no usable snapshot.
DialogueState recover_session(const DialogueEngine& engine, const std::filesystem::path& dir);

/// Session directories under `root`, sorted.
std::vector<std::filesystem::path> list_session_dirs(const std::filesystem::path& root);

}  // namespace dxdialog
