#include "dxdialog/persistence.hpp"

#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kEventsFile = "events.jsonl";
constexpr const char* kSnapshotFile = "snapshot.json";

void append_line(const fs::path& path, const std::string& line) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for append");
    out << line << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

ojson message_json(const MessageEvent& e) {
    ojson j;
    j["type"] = "message";
    j["timestamp"] = format_utc(e.timestamp);
    j["text"] = e.message.text;
    if (e.message.image) {
        ojson img;
        img["ref"] = e.message.image->ref;
        if (e.message.image->embedding) img["embedding"] = *e.message.image->embedding;
        j["image"] = img;
    }
    return j;
}

MessageEvent message_from(const json& j) {
    MessageEvent e;
    e.timestamp = parse_utc(j.at("timestamp").get<std::string>());
    e.message.text = j.at("text").get<std::string>();
    if (j.contains("image")) {
        const auto& img = j.at("image");
        ImageInput in{img.at("ref").get<std::string>(), std::nullopt};
        if (img.contains("embedding")) in.embedding = img.at("embedding").get<std::vector<double>>();
        e.message.image = std::move(in);
    }
    return e;
}

}  // namespace

SessionLog::SessionLog(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
}

void SessionLog::write_created(const CreatedEvent& e) {
    ojson j;
    j["type"] = "created";
    j["session_id"] = e.session_id;
    j["created_at"] = format_utc(e.created_at);
    j["medical_history"] = e.medical_history;
    j["config"] = config_to_json(e.config);
    append_line(dir_ / kEventsFile, j.dump());
}

void SessionLog::append(const MessageEvent& e) { append_line(dir_ / kEventsFile, message_json(e).dump()); }

void SessionLog::write_snapshot(const SessionSnapshot& s) {
    ojson j;
    j["events"] = s.events;
    j["created_at"] = format_utc(s.created_at);
    j["state"] = state_to_json(s.state);
    write_file_atomic(dir_ / kSnapshotFile, j.dump() + "\n");
}

SessionLogContents read_session_log(const fs::path& dir) {
    auto path = dir / kEventsFile;
    if (!fs::exists(path)) throw IoError("missing event log " + path.string());
    auto lines = read_lines(path);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();

    SessionLogContents out;
    bool have_created = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::parse_error& e) {
            if (i + 1 == lines.size()) {
                spdlog::warn("{}: dropping torn final event", path.string());
                break;
            }
            throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
        try {
            auto type = j.at("type").get<std::string>();
            if (type == "created") {
                if (have_created) throw ValidationError(path.string() + ": second created event");
                out.created.session_id = j.at("session_id").get<std::string>();
                out.created.created_at = parse_utc(j.at("created_at").get<std::string>());
                out.created.medical_history = j.at("medical_history").get<std::string>();
                out.created.config = apply_config_overrides(EngineConfig{}, j.at("config"));
                have_created = true;
            } else if (type == "message") {
                if (!have_created) throw ValidationError(path.string() + ": message before created event");
                out.messages.push_back(message_from(j));
            } else {
                throw ValidationError(path.string() + ": unknown event type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    if (!have_created) throw ValidationError(path.string() + ": no created event");
    return out;
}

std::optional<SessionSnapshot> read_snapshot(const fs::path& dir) {
    auto path = dir / kSnapshotFile;
    if (!fs::exists(path)) return std::nullopt;
    try {
        auto j = json::parse(read_file(path));
        SessionSnapshot s;
        s.events = j.at("events").get<std::size_t>();
        s.created_at = parse_utc(j.at("created_at").get<std::string>());
        s.state = state_from_json(j.at("state"));
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

bool repair_torn_tail(const fs::path& dir) {
    auto path = dir / kEventsFile;
    if (!fs::exists(path)) return false;
    auto lines = read_lines(path);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty() || json::accept(lines.back())) return false;
    lines.pop_back();
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_file_atomic(path, text);
    return true;
}

DialogueState replay(const DialogueEngine& engine, const SessionLogContents& log) {
    auto state = engine.begin(log.created.medical_history, log.created.config, log.created.session_id);
    for (const auto& m : log.messages) engine.next_turn(state, m.message, m.timestamp);
    return state;
}

DialogueState recover_session(const DialogueEngine& engine, const fs::path& dir) {
    auto log = read_session_log(dir);
    std::optional<SessionSnapshot> snap;
    try {
        snap = read_snapshot(dir);
    } catch (const ValidationError& e) {
        spdlog::warn("ignoring unreadable snapshot: {}", e.what());
    }
    if (!snap || snap->events > log.messages.size() || snap->state.session_id != log.created.session_id) {
        return replay(engine, log);
    }
    auto state = std::move(snap->state);
    for (std::size_t i = snap->events; i < log.messages.size(); ++i) {
        engine.next_turn(state, log.messages[i].message, log.messages[i].timestamp);
    }
    return state;
}

std::vector<fs::path> list_session_dirs(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::exists(root)) return out;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / kEventsFile)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dxdialog
