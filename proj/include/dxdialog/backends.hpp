#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dxdialog {

struct PromptMessage {
    std::string role;  // "user" | "assistant"
    std::string text;
};

struct Prompt {
    std::string system_text;
    std::vector<PromptMessage> messages;
    int max_tokens = 128;
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    /// Structured fill-ins for the offline backends, e.g. {"symptom": "fever"}.
    std::map<std::string, std::string> slots;
};

enum class BackendKind { stub, template_, remote };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendConfig {
    BackendKind kind = BackendKind::stub;
    std::string endpoint;  // remote only, e.g. http://localhost:8000/v1/chat/completions
    std::string model_name;
    std::chrono::milliseconds timeout{10'000};
    int max_retries = 2;
    /// Name of the environment variable that holds the bearer token.
    std::string auth_env;
    std::chrono::milliseconds backoff_base{250};
    double backoff_factor = 2.0;
    double backoff_jitter = 0.2;
    int max_in_flight = 8;

    /// Throws ConfigError.
    void validate() const;
};

/// Fallback relevance used whenever a model score is unavailable: round(10 * w), clamped to [0, 10].
int fallback_relevance(double graph_weight);

/// Extracts the first integer from a model reply and clamps it to [0, 10].
std::optional<int> parse_relevance_reply(std::string_view reply);

/// The fixed question phrasing used by the template backend and as fallback text.
std::string template_question(std::string_view symptom);

class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    /// Throws BackendUnavailableError when the model cannot be reached.
    virtual std::string complete(const Prompt& prompt) = 0;

    /// Always returns a value in [0, 10]; never throws.
    virtual int score_relevance(std::string_view candidate_text, std::string_view disease_name,
                                double graph_weight) = 0;

    virtual BackendKind kind() const = 0;
};

/// Deterministic: picks a phrasing from a fixed bank by hashing (seed, messages).
class StubBackend final : public ModelBackend {
public:
    std::string complete(const Prompt& prompt) override;
    int score_relevance(std::string_view, std::string_view, double graph_weight) override;
    BackendKind kind() const override { return BackendKind::stub; }
};

class TemplateBackend final : public ModelBackend {
public:
    std::string complete(const Prompt& prompt) override;
    int score_relevance(std::string_view, std::string_view, double graph_weight) override;
    BackendKind kind() const override { return BackendKind::template_; }
};

/// Chat-completions client over HTTP with bounded retries and exponential backoff.
class RemoteBackend final : public ModelBackend {
public:
    explicit RemoteBackend(BackendConfig config);
    ~RemoteBackend() override;

    std::string complete(const Prompt& prompt) override;
    int score_relevance(std::string_view candidate_text, std::string_view disease_name,
                        double graph_weight) override;
    BackendKind kind() const override { return BackendKind::remote; }

    /// HTTP attempts made so far, including retries.
    std::size_t attempts() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config);

}  // namespace dxdialog
