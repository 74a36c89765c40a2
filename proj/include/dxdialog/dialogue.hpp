#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxdialog/backends.hpp"
#include "dxdialog/fusion.hpp"
#include "dxdialog/knowledge_graph.hpp"
#include "dxdialog/labels.hpp"
#include "dxdialog/symptom_base.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

enum class Role { patient, system };
enum class TurnKind { utterance, question, image_request, report };
enum class Phase { collecting, awaiting_visual, diagnosing, terminated };
enum class TerminationReason { none, confidence_reached, symptoms_exhausted, max_rounds, patient_ended };
enum class CandidateSource { backend, template_ };
enum class ActionKind { ask, request_image, emit_report };

std::string_view to_string(Role r);
std::string_view to_string(TurnKind k);
std::string_view to_string(Phase p);
std::string_view to_string(TerminationReason r);
std::string_view to_string(CandidateSource s);
std::string_view to_string(ActionKind k);

struct Turn {
    Role role = Role::patient;
    TurnKind kind = TurnKind::utterance;
    std::string text;
    UtcSeconds timestamp{};
    int round = 0;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct EngineConfig {
    int n_candidates = 5;
    int max_rounds = 10;
    double confidence_threshold = 0.7;
    int top_k_symptoms = 3;
    int min_score = 3;
    /// Negative evidence from denied symptoms; 0 disables it.
    double denied_penalty = 0.0;
    /// Probability at which a category is listed in the report.
    double report_threshold = 0.5;
    /// Seeds backend prompts so stub transcripts are reproducible.
    std::int64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;

    friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

struct QueryCandidate {
    std::string text;
    std::string target_symptom;
    int score = 0;
    CandidateSource source = CandidateSource::backend;

    friend bool operator==(const QueryCandidate&, const QueryCandidate&) = default;
};

/// A candidate as the ranking stage saw it, kept for inspection.
struct ConsideredCandidate {
    QueryCandidate candidate;
    bool rejected = false;
    std::string reject_reason;  // "repeat" | "below_min_score"

    friend bool operator==(const ConsideredCandidate&, const ConsideredCandidate&) = default;
};

struct RankOutcome {
    /// Accepted candidates, best first.
    std::vector<QueryCandidate> ranked;
    /// ranked followed by rejected entries in input order.
    std::vector<ConsideredCandidate> considered;
};

struct TerminationDecision {
    bool terminate = false;
    TerminationReason reason = TerminationReason::none;
    /// Confidence and round at the moment the decision was taken.
    double confidence = 0.0;
    int round = 0;

    friend bool operator==(const TerminationDecision&, const TerminationDecision&) = default;
};

/// An image supplied by the caller: an opaque reference, optionally with a precomputed 1024-d embedding.
struct ImageInput {
    std::string ref;
    std::optional<std::vector<double>> embedding;

    friend bool operator==(const ImageInput&, const ImageInput&) = default;
};

struct DiagnosticReport {
    std::string text;
    LabelProbabilities probabilities{};

    friend bool operator==(const DiagnosticReport&, const DiagnosticReport&) = default;
};

struct DialogueState {
    std::string session_id;
    std::vector<Turn> history;
    SymptomBase base;
    std::optional<std::string> target_disease;
    std::set<std::string, std::less<>> exhausted_diseases;
    int round = 0;
    Phase phase = Phase::collecting;
    std::string medical_history;
    double confidence = 0.0;
    EngineConfig config;

    /// Target symptom of every ask action, in order.
    std::vector<std::string> asked_symptoms;
    std::vector<ImageInput> images;
    /// Ranked but not asked; re-enters ranking next turn while the target is unchanged.
    std::vector<QueryCandidate> pending_candidates;
    std::vector<ConsideredCandidate> last_candidates;
    TerminationDecision termination;
    std::optional<DiagnosticReport> report;

    friend bool operator==(const DialogueState&, const DialogueState&) = default;
};

struct EngineAction {
    ActionKind kind = ActionKind::ask;
    std::string text;
    std::optional<std::string> target_symptom;
    std::optional<DiagnosticReport> report;
};

struct PatientMessage {
    std::string text;
    std::optional<ImageInput> image;
};

struct ExtractedSymptom {
    std::string symptom_id;
    Polarity polarity = Polarity::present;

    friend bool operator==(const ExtractedSymptom&, const ExtractedSymptom&) = default;
};

inline constexpr std::size_t kNegationWindow = 3;

/// Alias matching over symptom aliases with a three-token negation window. Each symptom appears
/// once, at its first position, carrying the polarity of its last mention.
std::vector<ExtractedSymptom> extract_symptoms(std::string_view utterance, const KnowledgeGraph& graph);

/// Fresh session; the patient speaks first. Generates a random id when `session_id` is empty.
DialogueState begin_session(std::string medical_history, EngineConfig config, std::string session_id = {});

/// True when every one of the disease's top-k symptoms already has a status in the base.
bool top_symptoms_checked(const SymptomBase& base, const KnowledgeGraph& graph, std::string_view disease_id,
                          int top_k);

/// Highest-ranked disease outside exhausted_diseases, if any.
std::optional<std::string> leading_disease(const DialogueState& state, const KnowledgeGraph& graph);

/// One candidate per unchecked top-k symptom of the target disease (at most n), best weight first.
/// Backend failures fall back to the template phrasing.
std::vector<QueryCandidate> generate_candidates(const DialogueState& state, const KnowledgeGraph& graph,
                                                ModelBackend& backend, int n);

/// Drops repeats (already present/absent) and low scores, sorts by score, weight, then symptom id.
RankOutcome rank_candidates(std::span<const QueryCandidate> candidates, const DialogueState& state,
                            const KnowledgeGraph& graph, ModelBackend& ranker);

TerminationDecision should_terminate(const DialogueState& state, const KnowledgeGraph& graph,
                                     const EngineConfig& config);

/// Marks the current target exhausted and moves to the next-ranked disease (none when all are spent).
void advance_target_disease(DialogueState& state, const KnowledgeGraph& graph, const EngineConfig& config);

/// score(target) / sum of scores, 0 when no disease has evidence.
double evidence_confidence(const DialogueState& state, const KnowledgeGraph& graph);

/// Share of the summed score per report category, from the graph ranking.
LabelProbabilities evidence_probabilities(const DialogueState& state, const KnowledgeGraph& graph);

bool is_end_of_conversation(std::string_view utterance);

inline constexpr std::string_view kImageRequestText =
    "To complete the assessment, please upload a chest X-ray image.";

/// Runs the proactive dialogue loop for many concurrent sessions. Stateless apart from the shared,
/// read-only graph, backend and optional fusion parameters.
class DialogueEngine {
public:
    DialogueEngine(std::shared_ptr<const KnowledgeGraph> graph, std::shared_ptr<ModelBackend> backend,
                   std::shared_ptr<const fusion::FusionParams> fusion = nullptr);

    /// Throws ConfigError for an invalid config.
    DialogueState begin(std::string medical_history, EngineConfig config, std::string session_id = {}) const;

    /// One round. Throws SessionClosedError on a terminated session.
    EngineAction next_turn(DialogueState& state, const PatientMessage& message, UtcSeconds now) const;

    const KnowledgeGraph& graph() const { return *graph_; }
    const std::shared_ptr<const KnowledgeGraph>& graph_ptr() const { return graph_; }
    ModelBackend& backend() const { return *backend_; }

private:
    void refresh_target(DialogueState& state) const;
    void update_confidence(DialogueState& state) const;
    std::optional<LabelProbabilities> image_probabilities(const DialogueState& state) const;
    EngineAction finish(DialogueState& state, UtcSeconds now) const;

    std::shared_ptr<const KnowledgeGraph> graph_;
    std::shared_ptr<ModelBackend> backend_;
    std::shared_ptr<const fusion::FusionParams> fusion_;
};

/// Line-delimited JSON, one {role, kind, text, timestamp, round} record per turn.
std::string transcript_jsonl(const DialogueState& state);

nlohmann::ordered_json config_to_json(const EngineConfig& config);
/// Applies the keys present in `overrides`; unknown keys are a ConfigError.
EngineConfig apply_config_overrides(EngineConfig base, const nlohmann::json& overrides);

nlohmann::ordered_json state_to_json(const DialogueState& state);
DialogueState state_from_json(const nlohmann::json& doc);
nlohmann::ordered_json candidate_to_json(const ConsideredCandidate& c);
nlohmann::ordered_json action_to_json(const EngineAction& action, const DialogueState& state);

}  // namespace dxdialog
