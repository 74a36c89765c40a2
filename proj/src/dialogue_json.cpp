#include <nlohmann/json.hpp>

#include "dxdialog/dialogue.hpp"
#include "dxdialog/error.hpp"

namespace dxdialog {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const Enum (&values)[N], const char* what) {
    for (auto v : values) {
        if (to_string(v) == text) return v;
    }
    throw ValidationError(std::string("unknown ") + what + " '" + std::string(text) + "'");
}

constexpr Role kRoles[] = {Role::patient, Role::system};
constexpr TurnKind kTurnKinds[] = {TurnKind::utterance, TurnKind::question, TurnKind::image_request,
                                   TurnKind::report};
constexpr Phase kPhases[] = {Phase::collecting, Phase::awaiting_visual, Phase::diagnosing, Phase::terminated};
constexpr TerminationReason kReasons[] = {TerminationReason::none, TerminationReason::confidence_reached,
                                          TerminationReason::symptoms_exhausted, TerminationReason::max_rounds,
                                          TerminationReason::patient_ended};
constexpr CandidateSource kSources[] = {CandidateSource::backend, CandidateSource::template_};

ojson candidate_json(const QueryCandidate& c) {
    ojson j;
    j["text"] = c.text;
    j["target_symptom"] = c.target_symptom;
    j["score"] = c.score;
    j["source"] = to_string(c.source);
    return j;
}

QueryCandidate candidate_from(const json& j) {
    QueryCandidate c;
    c.text = j.at("text").get<std::string>();
    c.target_symptom = j.at("target_symptom").get<std::string>();
    c.score = j.at("score").get<int>();
    c.source = parse_enum(j.at("source").get<std::string>(), kSources, "candidate source");
    return c;
}

ojson probabilities_json(const LabelProbabilities& probs) {
    ojson j;
    for (std::size_t i = 0; i < kLabelCount; ++i) j[std::string(kLabelNames[i])] = probs[i];
    return j;
}

LabelProbabilities probabilities_from(const json& j) {
    LabelProbabilities p{};
    for (std::size_t i = 0; i < kLabelCount; ++i) p[i] = j.at(std::string(kLabelNames[i])).get<double>();
    return p;
}

}  // namespace

ojson config_to_json(const EngineConfig& c) {
    ojson j;
    j["n_candidates"] = c.n_candidates;
    j["max_rounds"] = c.max_rounds;
    j["confidence_threshold"] = c.confidence_threshold;
    j["top_k_symptoms"] = c.top_k_symptoms;
    j["min_score"] = c.min_score;
    j["denied_penalty"] = c.denied_penalty;
    j["report_threshold"] = c.report_threshold;
    j["seed"] = c.seed;
    return j;
}

EngineConfig apply_config_overrides(EngineConfig c, const json& overrides) {
    if (overrides.is_null()) return c;
    if (!overrides.is_object()) throw ConfigError("config overrides must be a JSON object");
    try {
        for (const auto& [key, value] : overrides.items()) {
            if (key == "n_candidates") c.n_candidates = value.get<int>();
            else if (key == "max_rounds") c.max_rounds = value.get<int>();
            else if (key == "confidence_threshold") c.confidence_threshold = value.get<double>();
            else if (key == "top_k_symptoms") c.top_k_symptoms = value.get<int>();
            else if (key == "min_score") c.min_score = value.get<int>();
            else if (key == "denied_penalty") c.denied_penalty = value.get<double>();
            else if (key == "report_threshold") c.report_threshold = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::int64_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ojson candidate_to_json(const ConsideredCandidate& c) {
    ojson j = candidate_json(c.candidate);
    j["rejected"] = c.rejected;
    if (c.rejected) j["reject_reason"] = c.reject_reason;
    return j;
}

ojson state_to_json(const DialogueState& s) {
    ojson j;
    j["session_id"] = s.session_id;
    j["round"] = s.round;
    j["phase"] = to_string(s.phase);
    j["medical_history"] = s.medical_history;
    j["confidence"] = s.confidence;
    j["target_disease"] = s.target_disease ? ojson(*s.target_disease) : ojson(nullptr);
    j["exhausted_diseases"] = s.exhausted_diseases;
    ojson base = ojson::object();
    for (const auto& [id, status] : s.base.entries()) base[id] = to_string(status);
    j["symptom_base"] = base;
    j["config"] = config_to_json(s.config);
    j["asked_symptoms"] = s.asked_symptoms;

    ojson history = ojson::array();
    for (const auto& t : s.history) {
        history.push_back({{"role", to_string(t.role)},
                           {"kind", to_string(t.kind)},
                           {"text", t.text},
                           {"timestamp", format_utc(t.timestamp)},
                           {"round", t.round}});
    }
    j["history"] = history;

    ojson images = ojson::array();
    for (const auto& img : s.images) {
        ojson ji;
        ji["ref"] = img.ref;
        if (img.embedding) ji["embedding"] = *img.embedding;
        images.push_back(ji);
    }
    j["images"] = images;

    ojson pending = ojson::array();
    for (const auto& c : s.pending_candidates) pending.push_back(candidate_json(c));
    j["pending_candidates"] = pending;
    ojson last = ojson::array();
    for (const auto& c : s.last_candidates) last.push_back(candidate_to_json(c));
    j["last_candidates"] = last;

    j["termination"] = {{"terminate", s.termination.terminate},
                        {"reason", to_string(s.termination.reason)},
                        {"confidence", s.termination.confidence},
                        {"round", s.termination.round}};
    if (s.report) {
        j["report"] = {{"text", s.report->text}, {"label_probabilities", probabilities_json(s.report->probabilities)}};
    } else {
        j["report"] = nullptr;
    }
    return j;
}

DialogueState state_from_json(const json& j) {
    DialogueState s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.round = j.at("round").get<int>();
        s.phase = parse_enum(j.at("phase").get<std::string>(), kPhases, "phase");
        s.medical_history = j.at("medical_history").get<std::string>();
        s.confidence = j.at("confidence").get<double>();
        if (!j.at("target_disease").is_null()) s.target_disease = j.at("target_disease").get<std::string>();
        for (const auto& d : j.at("exhausted_diseases")) s.exhausted_diseases.insert(d.get<std::string>());
        for (const auto& [id, status] : j.at("symptom_base").items()) {
            s.base.set_raw(id, symptom_status_from_string(status.get<std::string>()));
        }
        s.config = apply_config_overrides(EngineConfig{}, j.at("config"));
        s.asked_symptoms = j.at("asked_symptoms").get<std::vector<std::string>>();
        for (const auto& t : j.at("history")) {
            s.history.push_back(Turn{parse_enum(t.at("role").get<std::string>(), kRoles, "role"),
                                     parse_enum(t.at("kind").get<std::string>(), kTurnKinds, "turn kind"),
                                     t.at("text").get<std::string>(), parse_utc(t.at("timestamp").get<std::string>()),
                                     t.at("round").get<int>()});
        }
        for (const auto& ji : j.at("images")) {
            ImageInput img{ji.at("ref").get<std::string>(), std::nullopt};
            if (ji.contains("embedding")) img.embedding = ji.at("embedding").get<std::vector<double>>();
            s.images.push_back(std::move(img));
        }
        for (const auto& c : j.at("pending_candidates")) s.pending_candidates.push_back(candidate_from(c));
        for (const auto& c : j.at("last_candidates")) {
            ConsideredCandidate cc{candidate_from(c), c.at("rejected").get<bool>(), {}};
            if (cc.rejected) cc.reject_reason = c.at("reject_reason").get<std::string>();
            s.last_candidates.push_back(std::move(cc));
        }
        const auto& t = j.at("termination");
        s.termination = TerminationDecision{t.at("terminate").get<bool>(),
                                            parse_enum(t.at("reason").get<std::string>(), kReasons, "reason"),
                                            t.at("confidence").get<double>(), t.at("round").get<int>()};
        if (!j.at("report").is_null()) {
            const auto& r = j.at("report");
            s.report = DiagnosticReport{r.at("text").get<std::string>(),
                                        probabilities_from(r.at("label_probabilities"))};
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("session snapshot: ") + e.what());
    }
    return s;
}

ojson action_to_json(const EngineAction& action, const DialogueState& state) {
    ojson j;
    j["action"] = to_string(action.kind);
    switch (action.kind) {
        case ActionKind::ask:
            j["question"] = action.text;
            if (action.target_symptom) j["target_symptom"] = *action.target_symptom;
            break;
        case ActionKind::request_image: j["message"] = action.text; break;
        case ActionKind::emit_report:
            j["report"] = action.text;
            if (action.report) j["label_probabilities"] = probabilities_json(action.report->probabilities);
            break;
    }
    j["round"] = state.round;
    j["phase"] = to_string(state.phase);
    j["confidence"] = state.confidence;
    j["target_disease"] = state.target_disease ? ojson(*state.target_disease) : ojson(nullptr);
    if (state.phase == Phase::terminated || state.phase == Phase::awaiting_visual) {
        j["termination_reason"] = to_string(state.termination.reason);
    }
    return j;
}

}  // namespace dxdialog
