#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dxdialog/backends.hpp"
#include "dxdialog/dialogue.hpp"
#include "dxdialog/fusion.hpp"
#include "dxdialog/knowledge_graph.hpp"

namespace dxdialog {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path graph_path;
    /// Session logs live under data_dir/sessions. Empty keeps sessions in memory only.
    std::filesystem::path data_dir;
    std::filesystem::path fusion_checkpoint;
    BackendConfig backend;
    /// Defaults for new sessions; each create request may override them.
    EngineConfig engine;
    std::string cors_origin = "*";
    /// Rewrite snapshot.json every N accepted messages (and always on termination).
    int snapshot_every = 5;
    /// Stamp turns with the simulator's logical clock instead of wall time.
    bool logical_clock = false;
    std::size_t worker_threads = 8;

    void validate() const;
};

/// Applies a JSON document with the config-file schema. Unknown keys are a ConfigError.
void apply_service_json(ServiceConfig& config, const nlohmann::json& doc);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
EnvLookup process_env();

/// defaults < config file < environment < overrides.
ServiceConfig resolve_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                                     const nlohmann::json& overrides);

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Session registry plus HTTP front end. Handlers are transport-independent so they can be tested directly.
class DialogueService {
public:
    DialogueService(ServiceConfig config, std::shared_ptr<const KnowledgeGraph> graph,
                    std::shared_ptr<ModelBackend> backend, std::shared_ptr<const fusion::FusionParams> fusion = nullptr);
    ~DialogueService();

    DialogueService(const DialogueService&) = delete;
    DialogueService& operator=(const DialogueService&) = delete;

    /// Loads every persisted session from data_dir. Returns how many were restored.
    std::size_t recover();

    ApiResponse create_session(std::string_view body);
    ApiResponse post_message(const std::string& session_id, std::string_view body);
    ApiResponse get_session(const std::string& session_id);
    ApiResponse get_candidates(const std::string& session_id);
    ApiResponse get_report(const std::string& session_id);
    ApiResponse get_transcript(const std::string& session_id);
    ApiResponse get_graph() const;
    ApiResponse health() const;

    std::optional<DialogueState> state(const std::string& session_id) const;
    std::filesystem::path session_dir(const std::string& session_id) const;
    const DialogueEngine& engine() const;

    /// Binds the listening socket; port 0 picks a free one. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(). Call bind first.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dxdialog
