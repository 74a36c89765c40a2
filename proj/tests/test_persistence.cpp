#include <gtest/gtest.h>

#include <fstream>

#include "dxdialog/error.hpp"
#include "dxdialog/persistence.hpp"
#include "dxdialog/simulation.hpp"
#include "support.hpp"

using namespace dxdialog;
using testing_support::TempDir;

namespace {

DialogueEngine stub_engine() {
    return DialogueEngine(testing_support::fixture_graph(), std::make_shared<StubBackend>());
}

const std::vector<PatientMessage>& script() {
    static const std::vector<PatientMessage> m = {
        {"I have a cough", std::nullopt},
        {"No fever.", std::nullopt},
        {"I feel tired all the time", std::nullopt},
        {"Some chest pain too", std::nullopt},
    };
    return m;
}

/// Writes a session log the way the service does and returns the live state.
DialogueState logged_session(const DialogueEngine& engine, const std::filesystem::path& dir, std::size_t snapshot_after) {
    SessionLog log(dir);
    auto state = engine.begin("asthma", EngineConfig{}, "sess");
    log.write_created({"sess", logical_time(0), "asthma", state.config});
    for (std::size_t i = 0; i < script().size(); ++i) {
        auto ts = logical_time(static_cast<long>(i + 1));
        engine.next_turn(state, script()[i], ts);
        log.append({script()[i], ts});
        if (i + 1 == snapshot_after) log.write_snapshot({i + 1, logical_time(0), state});
    }
    return state;
}

}  // namespace

TEST(Persistence, ReplayReproducesState) {
    TempDir dir;
    auto engine = stub_engine();
    auto live = logged_session(engine, dir.path(), 0);
    auto log = read_session_log(dir.path());
    EXPECT_EQ(log.messages.size(), script().size());
    EXPECT_EQ(replay(engine, log), live);
}

TEST(Persistence, SnapshotPlusTail) {
    TempDir dir;
    auto engine = stub_engine();
    auto live = logged_session(engine, dir.path(), 2);
    auto snap = read_snapshot(dir.path());
    ASSERT_TRUE(snap.has_value());
    EXPECT_EQ(snap->events, 2u);
    EXPECT_EQ(recover_session(engine, dir.path()), live);
}

TEST(Persistence, SnapshotEqualsReplayOfPrefix) {
    TempDir dir;
    auto engine = stub_engine();
    logged_session(engine, dir.path(), 3);
    auto log = read_session_log(dir.path());
    log.messages.resize(3);
    EXPECT_EQ(replay(engine, log), read_snapshot(dir.path())->state);
}

TEST(Persistence, TornTailDropped) {
    TempDir dir;
    auto engine = stub_engine();
    logged_session(engine, dir.path(), 0);
    {
        std::ofstream out(dir / "events.jsonl", std::ios::app);
        out << R"({"type":"message","mess)";
    }
    EXPECT_EQ(read_session_log(dir.path()).messages.size(), script().size());
    EXPECT_TRUE(repair_torn_tail(dir.path()));
    EXPECT_FALSE(repair_torn_tail(dir.path()));
    SessionLog(dir.path()).append({{"More cough", std::nullopt}, logical_time(9)});
    EXPECT_EQ(read_session_log(dir.path()).messages.size(), script().size() + 1);
}

TEST(Persistence, CorruptMiddleLineIsError) {
    TempDir dir;
    auto engine = stub_engine();
    logged_session(engine, dir.path(), 0);
    auto lines = read_lines(dir / "events.jsonl");
    lines[1] = "{garbage";
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_file_atomic(dir / "events.jsonl", text);
    EXPECT_THROW(read_session_log(dir.path()), ValidationError);
}

TEST(Persistence, MissingLogIsIoError) {
    TempDir dir;
    EXPECT_THROW(read_session_log(dir.path()), IoError);
}

TEST(Persistence, ListsSessionDirs) {
    TempDir dir;
    auto engine = stub_engine();
    logged_session(engine, dir / "b", 0);
    logged_session(engine, dir / "a", 0);
    std::filesystem::create_directories(dir / "empty");
    auto dirs = list_session_dirs(dir.path());
    ASSERT_EQ(dirs.size(), 2u);
    EXPECT_EQ(dirs[0].filename(), "a");
}
