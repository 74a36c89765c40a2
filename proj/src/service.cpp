#include "dxdialog/service.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dxdialog/error.hpp"
#include "dxdialog/persistence.hpp"
#include "dxdialog/simulation.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

void ServiceConfig::validate() const {
    if (port < 0 || port > 65535) throw ConfigError("port must be in [0, 65535]");
    if (snapshot_every < 1) throw ConfigError("snapshot_every must be >= 1");
    if (worker_threads < 1) throw ConfigError("worker_threads must be >= 1");
    backend.validate();
    engine.validate();
}

namespace {

void apply_listen(ServiceConfig& c, const std::string& listen) {
    auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("listen must be host:port, got '" + listen + "'");
    c.host = listen.substr(0, colon);
    try {
        c.port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad port in listen address '" + listen + "'");
    }
}

void apply_backend_json(BackendConfig& b, const json& doc) {
    if (!doc.is_object()) throw ConfigError("backend must be an object");
    for (const auto& [key, value] : doc.items()) {
        if (key == "kind") b.kind = backend_kind_from_string(value.get<std::string>());
        else if (key == "endpoint") b.endpoint = value.get<std::string>();
        else if (key == "model_name") b.model_name = value.get<std::string>();
        else if (key == "timeout_ms") b.timeout = std::chrono::milliseconds(value.get<long>());
        else if (key == "max_retries") b.max_retries = value.get<int>();
        else if (key == "auth_env") b.auth_env = value.get<std::string>();
        else if (key == "max_in_flight") b.max_in_flight = value.get<int>();
        else throw ConfigError("unknown backend key '" + key + "'");
    }
}

bool parse_bool(const std::string& s) {
    auto v = to_lower(trim(s));
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
    throw ConfigError("expected a boolean, got '" + s + "'");
}

ApiResponse json_response(int status, const ojson& body) { return {status, body.dump(), "application/json"}; }

ApiResponse error_response(int status, const std::string& message) {
    ojson j;
    j["error"] = message;
    return json_response(status, j);
}

UtcSeconds wall_now() { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); }

}  // namespace

void apply_service_json(ServiceConfig& c, const json& doc) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("service config must be a JSON object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "listen") apply_listen(c, value.get<std::string>());
            else if (key == "host") c.host = value.get<std::string>();
            else if (key == "port") c.port = value.get<int>();
            else if (key == "graph") c.graph_path = value.get<std::string>();
            else if (key == "data_dir") c.data_dir = value.get<std::string>();
            else if (key == "fusion_checkpoint") c.fusion_checkpoint = value.get<std::string>();
            else if (key == "backend") apply_backend_json(c.backend, value);
            else if (key == "engine") c.engine = apply_config_overrides(c.engine, value);
            else if (key == "cors_origin") c.cors_origin = value.get<std::string>();
            else if (key == "snapshot_every") c.snapshot_every = value.get<int>();
            else if (key == "logical_clock") c.logical_clock = value.get<bool>();
            else if (key == "worker_threads") c.worker_threads = value.get<std::size_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("service config: ") + e.what());
    }
}

EnvLookup process_env() {
    return [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

ServiceConfig resolve_service_config(const std::optional<fs::path>& file, const EnvLookup& env,
                                     const json& overrides) {
    ServiceConfig c;
    if (file) {
        json doc;
        try {
            doc = json::parse(read_file(*file));
        } catch (const json::parse_error& e) {
            throw ConfigError(file->string() + ": " + e.what());
        }
        apply_service_json(c, doc);
    }

    json from_env = json::object();
    auto set = [&](const char* name, auto&& apply) {
        if (auto v = env(name)) apply(*v);
    };
    set("DXDIALOG_LISTEN", [&](const std::string& v) { from_env["listen"] = v; });
    set("DXDIALOG_GRAPH", [&](const std::string& v) { from_env["graph"] = v; });
    set("DXDIALOG_DATA_DIR", [&](const std::string& v) { from_env["data_dir"] = v; });
    set("DXDIALOG_FUSION_CHECKPOINT", [&](const std::string& v) { from_env["fusion_checkpoint"] = v; });
    set("DXDIALOG_CORS_ORIGIN", [&](const std::string& v) { from_env["cors_origin"] = v; });
    set("DXDIALOG_LOGICAL_CLOCK", [&](const std::string& v) { from_env["logical_clock"] = parse_bool(v); });
    set("DXDIALOG_BACKEND", [&](const std::string& v) { from_env["backend"]["kind"] = v; });
    set("DXDIALOG_BACKEND_ENDPOINT", [&](const std::string& v) { from_env["backend"]["endpoint"] = v; });
    set("DXDIALOG_MODEL", [&](const std::string& v) { from_env["backend"]["model_name"] = v; });
    set("DXDIALOG_SEED", [&](const std::string& v) {
        try {
            from_env["engine"]["seed"] = std::stoll(v);
        } catch (const std::exception&) {
            throw ConfigError("DXDIALOG_SEED must be an integer");
        }
    });
    apply_service_json(c, from_env);
    apply_service_json(c, overrides);
    c.validate();
    return c;
}

namespace {

struct Session {
    std::mutex mutex;
    std::condition_variable cv;
    std::uint64_t next_ticket = 0;
    std::uint64_t serving = 0;

    DialogueState state;
    UtcSeconds created_at{};
    std::optional<SessionLog> log;
    int since_snapshot = 0;
};

/// FIFO admission: turns for one session run one at a time in the order their requests arrived.
class Ticket {
public:
    explicit Ticket(Session& s) : session_(s), lock_(s.mutex) {
        auto mine = s.next_ticket++;
        s.cv.wait(lock_, [&] { return s.serving == mine; });
    }
    ~Ticket() {
        ++session_.serving;
        lock_.unlock();
        session_.cv.notify_all();
    }
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;

private:
    Session& session_;
    std::unique_lock<std::mutex> lock_;
};

}  // namespace

struct DialogueService::Impl {
    ServiceConfig config;
    DialogueEngine engine;
    mutable std::shared_mutex sessions_mutex;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions;
    httplib::Server server;

    Impl(ServiceConfig c, std::shared_ptr<const KnowledgeGraph> graph, std::shared_ptr<ModelBackend> backend,
         std::shared_ptr<const fusion::FusionParams> fusion)
        : config(std::move(c)), engine(std::move(graph), std::move(backend), std::move(fusion)) {}

    fs::path sessions_root() const { return config.data_dir / "sessions"; }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::shared_lock lock(sessions_mutex);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    UtcSeconds now_for(const DialogueState& state) const {
        return config.logical_clock ? logical_time(state.round) : wall_now();
    }

    void snapshot(Session& s) {
        if (!s.log) return;
        s.log->write_snapshot(SessionSnapshot{static_cast<std::size_t>(s.state.round), s.created_at, s.state});
        s.since_snapshot = 0;
    }

    void install_routes();
};

DialogueService::DialogueService(ServiceConfig config, std::shared_ptr<const KnowledgeGraph> graph,
                                 std::shared_ptr<ModelBackend> backend,
                                 std::shared_ptr<const fusion::FusionParams> fusion)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(graph), std::move(backend), std::move(fusion))) {
    impl_->config.validate();
    impl_->install_routes();
}

DialogueService::~DialogueService() { stop(); }

const DialogueEngine& DialogueService::engine() const { return impl_->engine; }

fs::path DialogueService::session_dir(const std::string& session_id) const {
    if (impl_->config.data_dir.empty()) return {};
    return impl_->sessions_root() / session_id;
}

std::size_t DialogueService::recover() {
    if (impl_->config.data_dir.empty()) return 0;
    std::size_t restored = 0;
    for (const auto& dir : list_session_dirs(impl_->sessions_root())) {
        try {
            if (repair_torn_tail(dir)) spdlog::warn("{}: trimmed torn final event", dir.string());
            auto log = read_session_log(dir);
            auto s = std::make_shared<Session>();
            s->state = recover_session(impl_->engine, dir);
            s->created_at = log.created.created_at;
            s->log.emplace(dir);
            std::unique_lock lock(impl_->sessions_mutex);
            impl_->sessions[s->state.session_id] = s;
            ++restored;
        } catch (const std::exception& e) {
            spdlog::error("cannot restore session in {}: {}", dir.string(), e.what());
        }
    }
    spdlog::info("restored {} session(s) from {}", restored, impl_->sessions_root().string());
    return restored;
}

ApiResponse DialogueService::create_session(std::string_view body) {
    json doc = json::object();
    if (!trim(body).empty()) {
        try {
            doc = json::parse(body);
        } catch (const json::parse_error& e) {
            return error_response(400, std::string("invalid JSON: ") + e.what());
        }
    }
    if (!doc.is_object()) return error_response(400, "body must be a JSON object");

    std::string history;
    EngineConfig config = impl_->config.engine;
    try {
        if (doc.contains("medical_history")) history = doc.at("medical_history").get<std::string>();
        if (doc.contains("config")) config = apply_config_overrides(config, doc.at("config"));
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    } catch (const json::exception& e) {
        return error_response(400, e.what());
    }

    auto s = std::make_shared<Session>();
    {
        std::unique_lock lock(impl_->sessions_mutex);
        do {
            s->state = impl_->engine.begin(history, config);
        } while (impl_->sessions.contains(s->state.session_id));
        s->created_at = impl_->config.logical_clock ? logical_time(0) : wall_now();
        if (!impl_->config.data_dir.empty()) {
            s->log.emplace(impl_->sessions_root() / s->state.session_id);
            s->log->write_created(CreatedEvent{s->state.session_id, s->created_at, history, config});
            impl_->snapshot(*s);
        }
        impl_->sessions.emplace(s->state.session_id, s);
    }
    spdlog::info("session {} created", s->state.session_id);

    ojson out;
    out["session_id"] = s->state.session_id;
    out["created_at"] = format_utc(s->created_at);
    out["phase"] = to_string(s->state.phase);
    out["config"] = config_to_json(config);
    return json_response(201, out);
}

ApiResponse DialogueService::post_message(const std::string& session_id, std::string_view body) {
    auto s = impl_->find(session_id);
    if (!s) return error_response(404, "unknown session '" + session_id + "'");

    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        return error_response(400, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) return error_response(400, "body must be a JSON object");

    PatientMessage message;
    try {
        message.text = doc.value("text", "");
        if (doc.contains("image_embedding") && !doc.at("image_embedding").is_null()) {
            auto embedding = doc.at("image_embedding").get<std::vector<double>>();
            if (embedding.size() != fusion::kVisualDim) {
                return error_response(422, "image_embedding must have " + std::to_string(fusion::kVisualDim) +
                                               " values");
            }
            message.image = ImageInput{doc.value("image_ref", "upload"), std::move(embedding)};
        } else if (doc.contains("image_ref") && !doc.at("image_ref").is_null()) {
            message.image = ImageInput{doc.at("image_ref").get<std::string>(), std::nullopt};
        }
    } catch (const json::exception& e) {
        return error_response(422, e.what());
    }
    if (trim(message.text).empty()) return error_response(422, "text must not be empty");

    Ticket ticket(*s);
    if (s->state.phase == Phase::terminated) return error_response(409, "session is terminated");
    auto now = impl_->now_for(s->state);
    EngineAction action;
    try {
        action = impl_->engine.next_turn(s->state, message, now);
    } catch (const SessionClosedError& e) {
        return error_response(409, e.what());
    }
    if (s->log) {
        s->log->append(MessageEvent{message, now});
        if (++s->since_snapshot >= impl_->config.snapshot_every || s->state.phase == Phase::terminated) {
            impl_->snapshot(*s);
        }
    }
    return json_response(200, action_to_json(action, s->state));
}

ApiResponse DialogueService::get_session(const std::string& session_id) {
    auto s = impl_->find(session_id);
    if (!s) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(s->mutex);
    ojson out;
    out["session_id"] = s->state.session_id;
    out["created_at"] = format_utc(s->created_at);
    out["events"] = s->state.round;
    out["state"] = state_to_json(s->state);
    return json_response(200, out);
}

ApiResponse DialogueService::get_candidates(const std::string& session_id) {
    auto s = impl_->find(session_id);
    if (!s) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(s->mutex);
    ojson list = ojson::array();
    for (const auto& c : s->state.last_candidates) list.push_back(candidate_to_json(c));
    ojson out;
    out["session_id"] = s->state.session_id;
    out["round"] = s->state.round;
    out["candidates"] = list;
    return json_response(200, out);
}

ApiResponse DialogueService::get_report(const std::string& session_id) {
    auto s = impl_->find(session_id);
    if (!s) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(s->mutex);
    if (s->state.phase != Phase::terminated || !s->state.report) {
        return error_response(409, "session has not produced a report yet");
    }
    ojson probs;
    for (std::size_t i = 0; i < kLabelCount; ++i) probs[std::string(kLabelNames[i])] = s->state.report->probabilities[i];
    ojson out;
    out["session_id"] = s->state.session_id;
    out["report"] = s->state.report->text;
    out["label_probabilities"] = probs;
    out["termination_reason"] = to_string(s->state.termination.reason);
    return json_response(200, out);
}

ApiResponse DialogueService::get_transcript(const std::string& session_id) {
    auto s = impl_->find(session_id);
    if (!s) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(s->mutex);
    return {200, transcript_jsonl(s->state), "application/x-ndjson"};
}

ApiResponse DialogueService::get_graph() const { return json_response(200, graph_to_json(impl_->engine.graph())); }

ApiResponse DialogueService::health() const {
    ojson out;
    out["status"] = "ok";
    {
        std::shared_lock lock(impl_->sessions_mutex);
        out["sessions"] = impl_->sessions.size();
    }
    out["backend"] = to_string(impl_->engine.backend().kind());
    return json_response(200, out);
}

std::optional<DialogueState> DialogueService::state(const std::string& session_id) const {
    auto s = impl_->find(session_id);
    if (!s) return std::nullopt;
    std::lock_guard lock(s->mutex);
    return s->state;
}

void DialogueService::Impl::install_routes() {
    auto threads = config.worker_threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    const std::string origin = config.cors_origin;
    server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("{} {}: {}", req.method, req.path, what);
        auto r = error_response(500, what);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
}

int DialogueService::bind(const std::string& host, int port) {
    auto* self = this;
    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    auto& server = impl_->server;
    server.Post("/v1/sessions", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->create_session(req.body));
    });
    server.Post(R"(/v1/sessions/([^/]+)/messages)", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->post_message(req.matches[1], req.body));
    });
    server.Get(R"(/v1/sessions/([^/]+))", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->get_session(req.matches[1]));
    });
    server.Get(R"(/v1/sessions/([^/]+)/candidates)", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->get_candidates(req.matches[1]));
    });
    server.Get(R"(/v1/sessions/([^/]+)/report)", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->get_report(req.matches[1]));
    });
    server.Get(R"(/v1/sessions/([^/]+)/transcript)", [=](const httplib::Request& req, httplib::Response& res) {
        send(res, self->get_transcript(req.matches[1]));
    });
    server.Get("/v1/graph", [=](const httplib::Request&, httplib::Response& res) { send(res, self->get_graph()); });
    server.Get("/healthz", [=](const httplib::Request&, httplib::Response& res) { send(res, self->health()); });

    if (port == 0) {
        int bound = server.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void DialogueService::run() { impl_->server.listen_after_bind(); }

void DialogueService::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace dxdialog
