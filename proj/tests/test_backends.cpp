#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dxdialog/backends.hpp"
#include "dxdialog/error.hpp"

using namespace dxdialog;

namespace {

Prompt question_prompt(const std::string& symptom, std::int64_t seed) {
    Prompt p;
    p.system_text = "Ask about one symptom.";
    p.messages.push_back({"user", "Patient said: I have a cough."});
    p.slots["symptom"] = symptom;
    p.seed = seed;
    return p;
}

/// Local chat-completions server that answers with a fixed status and content.
class MockServer {
public:
    MockServer(int status, std::string content) {
        server_.Post("/v1/chat/completions", [this, status, content](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            last_auth_ = req.get_header_value("Authorization");
            res.status = status;
            nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    int hits() const { return hits_; }
    std::string last_auth() const { return last_auth_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::string last_auth_;
};

BackendConfig remote_config(const std::string& endpoint) {
    BackendConfig c;
    c.kind = BackendKind::remote;
    c.endpoint = endpoint;
    c.model_name = "test-model";
    c.timeout = std::chrono::milliseconds(500);
    c.backoff_base = std::chrono::milliseconds(1);
    c.max_retries = 2;
    return c;
}

int free_port() {
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST(StubBackend, Deterministic) {
    StubBackend a;
    StubBackend b;
    auto p = question_prompt("fever", 42);
    EXPECT_EQ(a.complete(p), a.complete(p));
    EXPECT_EQ(a.complete(p), b.complete(p));
    EXPECT_NE(a.complete(p).find("fever"), std::string::npos);
}

TEST(StubBackend, SeedSelectsPhrasing) {
    StubBackend s;
    std::set<std::string> seen;
    for (int seed = 0; seed < 40; ++seed) seen.insert(s.complete(question_prompt("fever", seed)));
    EXPECT_GT(seen.size(), 1u);
}

TEST(TemplateBackend, FixedPhrasing) {
    TemplateBackend t;
    EXPECT_EQ(t.complete(question_prompt("fever", 0)), "Have you experienced fever recently?");
    EXPECT_EQ(template_question("fever"), "Have you experienced fever recently?");
}

TEST(Relevance, FallbackRoundsWeight) {
    StubBackend s;
    EXPECT_EQ(s.score_relevance("q", "pneumonia", 0.9), 9);
    EXPECT_EQ(s.score_relevance("q", "pneumonia", 0.0), 0);
    EXPECT_EQ(fallback_relevance(0.25), 3);
    EXPECT_EQ(fallback_relevance(1.0), 10);
}

TEST(Relevance, ParseReply) {
    EXPECT_EQ(parse_relevance_reply("Score: 7"), 7);
    EXPECT_EQ(parse_relevance_reply("42"), 10);
    EXPECT_EQ(parse_relevance_reply("-3"), 0);
    EXPECT_FALSE(parse_relevance_reply("no idea").has_value());
}

TEST(BackendConfig, Validation) {
    BackendConfig c;
    c.kind = BackendKind::remote;
    EXPECT_THROW(c.validate(), ConfigError);
    c = BackendConfig{};
    c.max_retries = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(backend_kind_from_string("gpt"), ConfigError);
    EXPECT_EQ(backend_kind_from_string("template"), BackendKind::template_);
}

TEST(RemoteBackend, UnreachableAfterThreeAttempts) {
    RemoteBackend r(remote_config("http://127.0.0.1:" + std::to_string(free_port()) + "/v1/chat/completions"));
    EXPECT_THROW(r.complete(question_prompt("fever", 0)), BackendUnavailableError);
    EXPECT_EQ(r.attempts(), 3u);
}

TEST(RemoteBackend, ServerErrorsRetried) {
    MockServer server(500, "oops");
    RemoteBackend r(remote_config(server.endpoint()));
    EXPECT_THROW(r.complete(question_prompt("fever", 0)), BackendUnavailableError);
    EXPECT_EQ(server.hits(), 3);
}

TEST(RemoteBackend, ParsesScoreReply) {
    MockServer server(200, "Score: 7");
    RemoteBackend r(remote_config(server.endpoint()));
    EXPECT_EQ(r.score_relevance("Do you have fever?", "pneumonia", 0.1), 7);
    EXPECT_EQ(r.complete(question_prompt("fever", 0)), "Score: 7");
}

TEST(RemoteBackend, RankerFallsBackToGraphWeight) {
    RemoteBackend r(remote_config("http://127.0.0.1:" + std::to_string(free_port()) + "/x"));
    EXPECT_EQ(r.score_relevance("q", "pneumonia", 0.8), 8);
}

TEST(RemoteBackend, SendsBearerFromEnv) {
    MockServer server(200, "ok");
    ::setenv("DXDIALOG_TEST_TOKEN", "secret", 1);
    auto c = remote_config(server.endpoint());
    c.auth_env = "DXDIALOG_TEST_TOKEN";
    RemoteBackend r(c);
    r.complete(question_prompt("fever", 0));
    EXPECT_EQ(server.last_auth(), "Bearer secret");
}
