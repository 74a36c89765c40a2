#include "dxdialog/backends.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::stub: return "stub";
        case BackendKind::template_: return "template";
        case BackendKind::remote: return "remote";
    }
    return "?";
}

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "stub") return BackendKind::stub;
    if (s == "template") return BackendKind::template_;
    if (s == "remote") return BackendKind::remote;
    throw ConfigError("unknown backend '" + std::string(s) + "' (expected stub|template|remote)");
}

void BackendConfig::validate() const {
    if (timeout.count() <= 0) throw ConfigError("backend timeout must be > 0");
    if (max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("backend max_in_flight must be >= 1");
    if (kind == BackendKind::remote) {
        if (endpoint.empty()) throw ConfigError("remote backend requires an endpoint");
        if (model_name.empty()) throw ConfigError("remote backend requires a model_name");
    }
}

int fallback_relevance(double graph_weight) {
    if (!std::isfinite(graph_weight)) return 0;
    return static_cast<int>(std::clamp(std::lround(10.0 * graph_weight), 0L, 10L));
}

std::optional<int> parse_relevance_reply(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size() && !std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
    if (i == reply.size()) return std::nullopt;
    bool negative = i > 0 && reply[i - 1] == '-';
    long value = 0;
    while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) {
        value = std::min(value * 10 + (reply[i] - '0'), 1000L);
        ++i;
    }
    if (negative) value = -value;
    return static_cast<int>(std::clamp(value, 0L, 10L));
}

std::string template_question(std::string_view symptom) {
    return "Have you experienced " + std::string(symptom) + " recently?";
}

namespace {

constexpr std::array<std::string_view, 6> kStubBank = {
    "Have you experienced {symptom} recently?",
    "Do you have any {symptom}?",
    "Have you noticed {symptom} in the past few days?",
    "Could you tell me whether you have had {symptom}?",
    "Has {symptom} been bothering you lately?",
    "Are you currently experiencing {symptom}?",
};

std::string fill(std::string_view pattern, const std::map<std::string, std::string>& slots) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size();) {
        if (pattern[i] == '{') {
            auto close = pattern.find('}', i);
            if (close != std::string_view::npos) {
                std::string key(pattern.substr(i + 1, close - i - 1));
                auto it = slots.find(key);
                out += it != slots.end() ? it->second : key;
                i = close + 1;
                continue;
            }
        }
        out += pattern[i++];
    }
    return out;
}

std::string slot_or_last_message(const Prompt& prompt) {
    auto it = prompt.slots.find("symptom");
    if (it != prompt.slots.end()) return it->second;
    return prompt.messages.empty() ? std::string("your symptoms") : prompt.messages.back().text;
}

}  // namespace

std::string StubBackend::complete(const Prompt& prompt) {
    std::uint64_t h = fnv1a(std::to_string(prompt.seed.value_or(0)));
    h = fnv1a(prompt.system_text, h);
    for (const auto& m : prompt.messages) {
        h = fnv1a(m.role, h);
        h = fnv1a(m.text, h);
    }
    auto slots = prompt.slots;
    if (!slots.count("symptom")) slots["symptom"] = slot_or_last_message(prompt);
    if (auto it = prompt.slots.find("pattern"); it != prompt.slots.end()) return fill(it->second, slots);
    return fill(kStubBank[h % kStubBank.size()], slots);
}

int StubBackend::score_relevance(std::string_view, std::string_view, double graph_weight) {
    return fallback_relevance(graph_weight);
}

std::string TemplateBackend::complete(const Prompt& prompt) {
    if (auto it = prompt.slots.find("pattern"); it != prompt.slots.end()) {
        auto slots = prompt.slots;
        if (!slots.count("symptom")) slots["symptom"] = slot_or_last_message(prompt);
        return fill(it->second, slots);
    }
    return template_question(slot_or_last_message(prompt));
}

int TemplateBackend::score_relevance(std::string_view, std::string_view, double graph_weight) {
    return fallback_relevance(graph_weight);
}

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config) {
    config.validate();
    switch (config.kind) {
        case BackendKind::stub: return std::make_shared<StubBackend>();
        case BackendKind::template_: return std::make_shared<TemplateBackend>();
        case BackendKind::remote: return std::make_shared<RemoteBackend>(config);
    }
    throw ConfigError("unknown backend kind");
}

}  // namespace dxdialog
