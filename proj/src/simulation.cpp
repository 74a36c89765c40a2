#include "dxdialog/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

using nlohmann::json;

Persona persona_from_json(const json& j) {
    Persona p;
    try {
        p.persona_id = j.at("persona_id").get<std::string>();
        p.utterances = j.at("utterances").get<std::vector<std::string>>();
        if (j.contains("labels")) {
            const auto& labels = j.at("labels");
            if (!labels.is_array() || labels.size() != kLabelCount) {
                throw ValidationError("persona " + p.persona_id + ": labels must have 14 entries");
            }
            for (std::size_t i = 0; i < kLabelCount; ++i) {
                p.labels[i] = labels[i].is_boolean() ? labels[i].get<bool>() : labels[i].get<int>() != 0;
            }
        }
        if (j.contains("symptoms")) p.symptoms = j.at("symptoms").get<std::set<std::string>>();
        if (j.contains("image_ref") && !j.at("image_ref").is_null()) p.image_ref = j.at("image_ref").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("persona: ") + e.what());
    }
    if (p.utterances.empty()) throw ValidationError("persona " + p.persona_id + " has no utterances");
    return p;
}

std::vector<Persona> load_personas(const std::filesystem::path& path) {
    std::vector<Persona> out;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        auto p = persona_from_json(j);
        if (!ids.insert(p.persona_id).second) throw ValidationError("duplicate persona_id '" + p.persona_id + "'");
        out.push_back(std::move(p));
    }
    return out;
}

UtcSeconds logical_time(long tick) {
    static const UtcSeconds epoch = parse_utc("2024-01-01T00:00:00Z");
    return epoch + std::chrono::seconds(tick);
}

PatientAgent::PatientAgent(const Persona& persona, const KnowledgeGraph& graph) : persona_(persona), graph_(graph) {}

PatientMessage PatientAgent::next_scripted() {
    if (next_line_ < persona_.utterances.size()) return {persona_.utterances[next_line_++], std::nullopt};
    return {"I am not sure.", std::nullopt};
}

PatientMessage PatientAgent::opening() { return next_scripted(); }

PatientMessage PatientAgent::respond(ActionKind kind, const std::optional<std::string>& target_symptom) {
    if (kind == ActionKind::request_image) {
        return {"Here is my chest X-ray.", ImageInput{persona_.image_ref.value_or("xray-" + persona_.persona_id), std::nullopt}};
    }
    if (kind == ActionKind::ask && target_symptom && !persona_.symptoms.empty()) {
        const auto* c = graph_.find(*target_symptom);
        std::string name = c ? to_lower(c->display_name) : *target_symptom;
        if (persona_.symptoms.contains(*target_symptom)) return {"Yes, I have " + name + ".", std::nullopt};
        return {"No, I do not have " + name + ".", std::nullopt};
    }
    return next_scripted();
}

bool termination_consistent(const DialogueState& state) {
    if (state.phase != Phase::terminated) return false;
    const auto& t = state.termination;
    const auto& c = state.config;
    switch (t.reason) {
        case TerminationReason::none: return false;
        case TerminationReason::confidence_reached: return t.terminate && t.confidence >= c.confidence_threshold;
        case TerminationReason::max_rounds:
            return t.terminate && t.confidence < c.confidence_threshold && t.round >= c.max_rounds;
        case TerminationReason::symptoms_exhausted:
            return t.terminate && t.confidence < c.confidence_threshold && t.round < c.max_rounds;
        case TerminationReason::patient_ended: {
            auto it = std::find_if(state.history.rbegin(), state.history.rend(),
                                   [](const Turn& turn) { return turn.role == Role::patient; });
            return it != state.history.rend() && is_end_of_conversation(it->text);
        }
    }
    return false;
}

std::size_t repeated_questions(const DialogueState& state) {
    std::set<std::string> seen;
    std::size_t repeats = 0;
    for (const auto& s : state.asked_symptoms) repeats += seen.insert(s).second ? 0 : 1;
    return repeats;
}

SessionOutcome run_persona(const DialogueEngine& engine, const Persona& persona, const EngineConfig& config) {
    SessionOutcome out;
    out.persona_id = persona.persona_id;
    out.state = engine.begin("", config, persona.persona_id);
    PatientAgent agent(persona, engine.graph());
    auto message = agent.opening();
    // The engine guarantees termination within max_rounds; the extra margin only catches regressions.
    while (out.state.phase != Phase::terminated && out.state.round <= config.max_rounds) {
        auto action = engine.next_turn(out.state, message, logical_time(out.state.round));
        if (out.state.phase == Phase::terminated) break;
        message = agent.respond(action.kind, action.target_symptom);
    }
    out.repeats = repeated_questions(out.state);
    out.terminated_in_time = out.state.phase == Phase::terminated && out.state.round <= config.max_rounds;
    out.consistent = termination_consistent(out.state);
    return out;
}

SimulationSummary summarize(const std::vector<SessionOutcome>& outcomes) {
    SimulationSummary s;
    s.sessions = outcomes.size();
    for (const auto& o : outcomes) {
        s.repeat_questions += o.repeats;
        s.not_terminated += o.terminated_in_time ? 0 : 1;
        s.inconsistent += o.consistent ? 0 : 1;
        s.reasons[std::string(to_string(o.state.termination.reason))] += 1;
        s.rounds_used[o.state.round] += 1;
    }
    return s;
}

nlohmann::ordered_json summary_to_json(const SimulationSummary& s) {
    nlohmann::ordered_json j;
    j["sessions"] = s.sessions;
    j["repeat_questions"] = s.repeat_questions;
    j["not_terminated"] = s.not_terminated;
    j["inconsistent_terminations"] = s.inconsistent;
    j["termination_reasons"] = s.reasons;
    nlohmann::ordered_json rounds = nlohmann::ordered_json::object();
    for (const auto& [r, n] : s.rounds_used) rounds[std::to_string(r)] = n;
    j["rounds_used"] = rounds;
    j["ok"] = s.ok();
    return j;
}

std::vector<SessionOutcome> simulate_all(const DialogueEngine& engine, const std::vector<Persona>& personas,
                                         const EngineConfig& config, int jobs) {
    std::vector<SessionOutcome> out(personas.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        try {
            for (std::size_t i = next++; i < personas.size(); i = next++) {
                out[i] = run_persona(engine, personas[i], config);
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = personas.size();
        }
    };
    auto n = static_cast<std::size_t>(std::max(1, jobs));
    n = std::min(n, std::max<std::size_t>(1, personas.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace dxdialog
