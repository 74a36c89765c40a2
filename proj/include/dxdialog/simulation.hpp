#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxdialog/dialogue.hpp"

namespace dxdialog {

/// Scripted stand-in for the patient agent.
struct Persona {
    std::string persona_id;
    std::vector<std::string> utterances;
    BoolLabels labels{};
    /// Symptom ids the persona actually has; questions about others are denied.
    std::set<std::string> symptoms;
    std::optional<std::string> image_ref;
};

Persona persona_from_json(const nlohmann::json& j);
std::vector<Persona> load_personas(const std::filesystem::path& path);

/// Logical clock shared by the simulator and the service's parity mode: 2024-01-01T00:00:00Z + tick seconds.
UtcSeconds logical_time(long tick);

class PatientAgent {
public:
    PatientAgent(const Persona& persona, const KnowledgeGraph& graph);

    PatientMessage opening();
    /// Reply to an ask or request_image action.
    PatientMessage respond(ActionKind kind, const std::optional<std::string>& target_symptom);

private:
    PatientMessage next_scripted();

    const Persona& persona_;
    const KnowledgeGraph& graph_;
    std::size_t next_line_ = 0;
};

/// Checks the recorded termination reason against the state it was taken in.
bool termination_consistent(const DialogueState& state);

/// Questions whose target symptom had already been asked earlier in the session.
std::size_t repeated_questions(const DialogueState& state);

struct SessionOutcome {
    std::string persona_id;
    DialogueState state;
    std::size_t repeats = 0;
    bool terminated_in_time = false;
    bool consistent = false;
};

/// Drives one session to termination on the logical clock.
SessionOutcome run_persona(const DialogueEngine& engine, const Persona& persona, const EngineConfig& config);

struct SimulationSummary {
    std::size_t sessions = 0;
    std::size_t repeat_questions = 0;
    std::size_t not_terminated = 0;
    std::size_t inconsistent = 0;
    std::map<std::string, std::size_t> reasons;
    std::map<int, std::size_t> rounds_used;

    bool ok() const { return repeat_questions == 0 && not_terminated == 0 && inconsistent == 0; }
};

SimulationSummary summarize(const std::vector<SessionOutcome>& outcomes);
nlohmann::ordered_json summary_to_json(const SimulationSummary& s);

/// Runs every persona with up to `jobs` worker threads; results keep persona order.
std::vector<SessionOutcome> simulate_all(const DialogueEngine& engine, const std::vector<Persona>& personas,
                                         const EngineConfig& config, int jobs);

}  // namespace dxdialog
