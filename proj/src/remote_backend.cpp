#include <atomic>
#include <cstdlib>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dxdialog/backends.hpp"
#include "dxdialog/error.hpp"

namespace dxdialog {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host:port
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http") {
        throw ConfigError("endpoint scheme '" + scheme + "' not supported (plain http only)");
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

struct RemoteBackend::Impl {
    explicit Impl(BackendConfig c)
        : config(std::move(c)), url(parse_url(config.endpoint)), slots(config.max_in_flight),
          rng(std::random_device{}()) {}

    BackendConfig config;
    ParsedUrl url;
    std::counting_semaphore<1024> slots;
    std::atomic<std::size_t> attempts{0};
    std::mutex rng_mutex;
    std::mt19937 rng;

    std::chrono::milliseconds backoff(int retry) {
        double base = static_cast<double>(config.backoff_base.count()) * std::pow(config.backoff_factor, retry);
        std::lock_guard lock(rng_mutex);
        std::uniform_real_distribution<double> jitter(1.0 - config.backoff_jitter, 1.0 + config.backoff_jitter);
        return std::chrono::milliseconds(static_cast<long>(base * jitter(rng)));
    }

    std::string round_trip(const Prompt& prompt) {
        nlohmann::json body;
        body["model"] = config.model_name;
        body["messages"] = nlohmann::json::array();
        if (!prompt.system_text.empty()) {
            body["messages"].push_back({{"role", "system"}, {"content", prompt.system_text}});
        }
        for (const auto& m : prompt.messages) {
            body["messages"].push_back({{"role", m.role}, {"content", m.text}});
        }
        body["max_tokens"] = prompt.max_tokens;
        body["temperature"] = prompt.temperature;
        if (prompt.seed) body["seed"] = *prompt.seed;
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (!config.auth_env.empty()) {
            if (const char* key = std::getenv(config.auth_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + key);
            }
        }

        slots.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{slots};

        std::string last_error;
        for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(backoff(attempt - 1));
            ++attempts;
            httplib::Client client(url.origin);
            auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
            auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
            client.set_connection_timeout(secs.count(), usecs.count());
            client.set_read_timeout(secs.count(), usecs.count());
            client.set_write_timeout(secs.count(), usecs.count());
            auto res = client.Post(url.path, headers, payload, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            try {
                auto reply = nlohmann::json::parse(res->body);
                return reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("malformed reply: ") + e.what();
            }
        }
        throw BackendUnavailableError("remote backend unavailable after " +
                                      std::to_string(config.max_retries + 1) + " attempts: " + last_error);
    }
};

RemoteBackend::RemoteBackend(BackendConfig config) {
    config.validate();
    impl_ = std::make_unique<Impl>(std::move(config));
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::complete(const Prompt& prompt) {
    if (prompt.messages.empty()) throw ValidationError("completion prompt needs at least one message");
    return impl_->round_trip(prompt);
}

int RemoteBackend::score_relevance(std::string_view candidate_text, std::string_view disease_name,
                                   double graph_weight) {
    Prompt p;
    p.system_text =
        "You rank candidate follow-up questions for a diagnostic interview. Reply with one integer "
        "from 0 to 10: 10 means the question is highly relevant to the suspected disease, 0 means "
        "it is not relevant.";
    p.messages.push_back({"user", "Suspected disease: " + std::string(disease_name) +
                                      "\nCandidate question: " + std::string(candidate_text) + "\nScore:"});
    p.max_tokens = 8;
    try {
        auto reply = impl_->round_trip(p);
        if (auto score = parse_relevance_reply(reply)) return *score;
        spdlog::warn("remote ranker reply '{}' has no integer; using graph fallback", reply);
    } catch (const BackendUnavailableError& e) {
        spdlog::warn("remote ranker failed ({}); using graph fallback", e.what());
    }
    return fallback_relevance(graph_weight);
}

std::size_t RemoteBackend::attempts() const {
    return impl_->attempts.load();
}

}  // namespace dxdialog
