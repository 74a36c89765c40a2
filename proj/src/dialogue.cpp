#include "dxdialog/dialogue.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <sstream>

#include "dxdialog/error.hpp"

namespace dxdialog {

std::string_view to_string(Role r) {
    return r == Role::patient ? "patient" : "system";
}

std::string_view to_string(TurnKind k) {
    switch (k) {
        case TurnKind::utterance: return "utterance";
        case TurnKind::question: return "question";
        case TurnKind::image_request: return "image_request";
        case TurnKind::report: return "report";
    }
    return "?";
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::collecting: return "collecting";
        case Phase::awaiting_visual: return "awaiting_visual";
        case Phase::diagnosing: return "diagnosing";
        case Phase::terminated: return "terminated";
    }
    return "?";
}

std::string_view to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::none: return "none";
        case TerminationReason::confidence_reached: return "confidence_reached";
        case TerminationReason::symptoms_exhausted: return "symptoms_exhausted";
        case TerminationReason::max_rounds: return "max_rounds";
        case TerminationReason::patient_ended: return "patient_ended";
    }
    return "?";
}

std::string_view to_string(CandidateSource s) {
    return s == CandidateSource::backend ? "backend" : "template";
}

std::string_view to_string(ActionKind k) {
    switch (k) {
        case ActionKind::ask: return "ask";
        case ActionKind::request_image: return "request_image";
        case ActionKind::emit_report: return "emit_report";
    }
    return "?";
}

void EngineConfig::validate() const {
    if (n_candidates < 1) throw ConfigError("n_candidates must be >= 1");
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0)) {
        throw ConfigError("confidence_threshold must be in (0, 1]");
    }
    if (top_k_symptoms < 1) throw ConfigError("top_k_symptoms must be >= 1");
    if (min_score < 0 || min_score > 10) throw ConfigError("min_score must be in [0, 10]");
    if (denied_penalty < 0.0) throw ConfigError("denied_penalty must be >= 0");
    if (!(report_threshold >= 0.0 && report_threshold <= 1.0)) {
        throw ConfigError("report_threshold must be in [0, 1]");
    }
}

namespace {

constexpr std::array<std::string_view, 5> kNegationCues = {"no", "not", "never", "denies", "without"};

constexpr std::array<std::string_view, 10> kEndCues = {
    "bye", "goodbye", "stop", "quit", "exit", "end", "that's all", "that is all", "no more questions", "done",
};

std::string symptom_phrase(const KnowledgeGraph& graph, std::string_view id) {
    return to_lower(graph.at(id).display_name);
}

std::string random_session_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                            (static_cast<std::uint64_t>(std::random_device{}()) << 32)};
    std::ostringstream out;
    out << std::hex;
    for (int i = 0; i < 2; ++i) {
        auto v = rng();
        for (int b = 0; b < 16; ++b) out << ((v >> (60 - 4 * b)) & 0xf);
    }
    return out.str();
}

std::vector<double> positive_scores(const std::vector<ScoredId>& ranked) {
    std::vector<double> out;
    for (const auto& r : ranked) out.push_back(std::max(r.score, 0.0));
    return out;
}

}  // namespace

std::vector<ExtractedSymptom> extract_symptoms(std::string_view utterance, const KnowledgeGraph& graph) {
    auto tokens = tokenize(utterance);
    std::vector<ExtractedSymptom> out;
    for (const auto& m : graph.find_mentions(tokens, ConceptKind::symptom)) {
        std::size_t from = m.token_begin > kNegationWindow ? m.token_begin - kNegationWindow : 0;
        bool negated = false;
        for (std::size_t i = from; i < m.token_begin; ++i) {
            if (std::find(kNegationCues.begin(), kNegationCues.end(), tokens[i]) != kNegationCues.end()) {
                negated = true;
            }
        }
        auto polarity = negated ? Polarity::absent : Polarity::present;
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.symptom_id == m.concept_id; });
        if (it != out.end()) it->polarity = polarity;
        else out.push_back(ExtractedSymptom{m.concept_id, polarity});
    }
    return out;
}

DialogueState begin_session(std::string medical_history, EngineConfig config, std::string session_id) {
    config.validate();
    DialogueState s;
    s.session_id = session_id.empty() ? random_session_id() : std::move(session_id);
    s.medical_history = std::move(medical_history);
    s.config = config;
    return s;
}

bool top_symptoms_checked(const SymptomBase& base, const KnowledgeGraph& graph, std::string_view disease_id,
                          int top_k) {
    auto adj = graph.adjacency(disease_id);
    auto k = std::min<std::size_t>(adj.size(), static_cast<std::size_t>(std::max(top_k, 0)));
    return std::all_of(adj.begin(), adj.begin() + static_cast<std::ptrdiff_t>(k),
                       [&](const ScoredId& s) { return base.contains(s.id); });
}

std::optional<std::string> leading_disease(const DialogueState& state, const KnowledgeGraph& graph) {
    for (const auto& r : graph.rank_diseases(state.base, RankOptions{state.config.denied_penalty})) {
        if (!state.exhausted_diseases.count(r.id)) return r.id;
    }
    return std::nullopt;
}

std::vector<QueryCandidate> generate_candidates(const DialogueState& state, const KnowledgeGraph& graph,
                                                ModelBackend& backend, int n) {
    if (n < 1) throw ConfigError("generate_candidates: n must be >= 1");
    auto target = state.target_disease ? state.target_disease : leading_disease(state, graph);
    if (!target) return {};

    auto adj = graph.adjacency(*target);
    auto k = std::min<std::size_t>(adj.size(), static_cast<std::size_t>(state.config.top_k_symptoms));
    std::vector<ScoredId> open;
    for (std::size_t i = 0; i < k; ++i) {
        if (!state.base.contains(adj[i].id)) open.push_back(adj[i]);
    }
    if (open.size() > static_cast<std::size_t>(n)) open.resize(static_cast<std::size_t>(n));

    const auto& disease = graph.at(*target);
    std::vector<QueryCandidate> out;
    for (std::size_t i = 0; i < open.size(); ++i) {
        auto phrase = symptom_phrase(graph, open[i].id);
        Prompt p;
        p.system_text =
            "You are a physician conducting a proactive diagnostic interview. Ask the patient one short, "
            "plain-language question about the named symptom.";
        if (!state.medical_history.empty()) p.messages.push_back({"user", "Medical history: " + state.medical_history});
        auto from = state.history.size() > 4 ? state.history.size() - 4 : 0;
        for (auto t = from; t < state.history.size(); ++t) {
            const auto& turn = state.history[t];
            p.messages.push_back({turn.role == Role::patient ? "user" : "assistant", turn.text});
        }
        p.messages.push_back({"user", "Ask about: " + phrase + " (suspected condition: " +
                                          to_lower(disease.display_name) + ")"});
        p.max_tokens = 48;
        p.seed = state.config.seed + static_cast<std::int64_t>(state.round) * 1000 + static_cast<std::int64_t>(i);
        p.slots = {{"symptom", phrase}, {"disease", to_lower(disease.display_name)}};

        QueryCandidate c;
        c.target_symptom = open[i].id;
        try {
            c.text = trim(backend.complete(p));
            c.source = backend.kind() == BackendKind::template_ ? CandidateSource::template_ : CandidateSource::backend;
        } catch (const BackendUnavailableError&) {
            c.text.clear();
        }
        if (c.text.empty()) {
            c.text = template_question(phrase);
            c.source = CandidateSource::template_;
        }
        out.push_back(std::move(c));
    }
    return out;
}

RankOutcome rank_candidates(std::span<const QueryCandidate> candidates, const DialogueState& state,
                            const KnowledgeGraph& graph, ModelBackend& ranker) {
    RankOutcome outcome;
    std::vector<ConsideredCandidate> rejected;
    std::vector<std::pair<QueryCandidate, double>> accepted;
    const auto target = state.target_disease ? state.target_disease : leading_disease(state, graph);

    for (const auto& cand : candidates) {
        if (state.base.is_checked(cand.target_symptom)) {
            rejected.push_back(ConsideredCandidate{cand, true, "repeat"});
            continue;
        }
        double weight = target ? graph.correlation(*target, cand.target_symptom) : 0.0;
        QueryCandidate scored = cand;
        std::string disease = target ? to_lower(graph.at(*target).display_name) : std::string("unknown");
        scored.score = std::clamp(ranker.score_relevance(cand.text, disease, weight), 0, 10);
        if (scored.score < state.config.min_score) {
            rejected.push_back(ConsideredCandidate{std::move(scored), true, "below_min_score"});
            continue;
        }
        accepted.emplace_back(std::move(scored), weight);
    }
    std::stable_sort(accepted.begin(), accepted.end(), [](const auto& a, const auto& b) {
        if (a.first.score != b.first.score) return a.first.score > b.first.score;
        if (a.second != b.second) return a.second > b.second;
        return a.first.target_symptom < b.first.target_symptom;
    });
    for (auto& [c, w] : accepted) {
        outcome.considered.push_back(ConsideredCandidate{c, false, {}});
        outcome.ranked.push_back(std::move(c));
    }
    for (auto& r : rejected) outcome.considered.push_back(std::move(r));
    return outcome;
}

TerminationDecision should_terminate(const DialogueState& state, const KnowledgeGraph& graph,
                                     const EngineConfig& config) {
    TerminationDecision d;
    d.confidence = state.confidence;
    d.round = state.round;
    if (state.confidence >= config.confidence_threshold) {
        d.terminate = true;
        d.reason = TerminationReason::confidence_reached;
        return d;
    }
    if (state.round >= config.max_rounds) {
        d.terminate = true;
        d.reason = TerminationReason::max_rounds;
        return d;
    }
    bool all_spent = std::all_of(graph.disease_ids().begin(), graph.disease_ids().end(), [&](const std::string& id) {
        return state.exhausted_diseases.count(id) || top_symptoms_checked(state.base, graph, id, config.top_k_symptoms);
    });
    if (all_spent) {
        d.terminate = true;
        d.reason = TerminationReason::symptoms_exhausted;
    }
    return d;
}

void advance_target_disease(DialogueState& state, const KnowledgeGraph& graph, const EngineConfig& config) {
    if (state.target_disease) state.exhausted_diseases.insert(*state.target_disease);
    state.target_disease.reset();
    for (const auto& r : graph.rank_diseases(state.base, RankOptions{config.denied_penalty})) {
        if (!state.exhausted_diseases.count(r.id)) {
            state.target_disease = r.id;
            break;
        }
    }
    state.pending_candidates.clear();
}

double evidence_confidence(const DialogueState& state, const KnowledgeGraph& graph) {
    if (!state.target_disease) return 0.0;
    auto ranked = graph.rank_diseases(state.base, RankOptions{state.config.denied_penalty});
    double total = 0.0;
    double target = 0.0;
    for (const auto& r : ranked) {
        double s = std::max(r.score, 0.0);
        total += s;
        if (r.id == *state.target_disease) target = s;
    }
    return total > 0.0 ? target / total : 0.0;
}

LabelProbabilities evidence_probabilities(const DialogueState& state, const KnowledgeGraph& graph) {
    LabelProbabilities probs{};
    auto ranked = graph.rank_diseases(state.base, RankOptions{state.config.denied_penalty});
    auto scores = positive_scores(ranked);
    double total = 0.0;
    for (double s : scores) total += s;
    if (total <= 0.0) return probs;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (auto idx = label_index(ranked[i].id)) probs[*idx] = std::max(probs[*idx], scores[i] / total);
    }
    return probs;
}

bool is_end_of_conversation(std::string_view utterance) {
    auto t = join(tokenize(utterance), " ");
    for (auto cue : kEndCues) {
        if (join(tokenize(cue), " ") == t) return true;
    }
    return false;
}

DialogueEngine::DialogueEngine(std::shared_ptr<const KnowledgeGraph> graph, std::shared_ptr<ModelBackend> backend,
                               std::shared_ptr<const fusion::FusionParams> fusion)
    : graph_(std::move(graph)), backend_(std::move(backend)), fusion_(std::move(fusion)) {
    if (!graph_) throw ConfigError("engine needs a knowledge graph");
    if (!backend_) throw ConfigError("engine needs a model backend");
    if (fusion_) {
        fusion_->validate();
        if (fusion_->alignment.d_in() != static_cast<Eigen::Index>(fusion::kVisualDim + fusion::kTextDim)) {
            throw ConfigError("fusion checkpoint must take 1408-d fused inputs (1024 visual + 384 text)");
        }
    }
}

DialogueState DialogueEngine::begin(std::string medical_history, EngineConfig config, std::string session_id) const {
    return begin_session(std::move(medical_history), config, std::move(session_id));
}

void DialogueEngine::refresh_target(DialogueState& state) const {
    auto before = state.target_disease;
    for (;;) {
        auto next = leading_disease(state, *graph_);
        if (next && top_symptoms_checked(state.base, *graph_, *next, state.config.top_k_symptoms)) {
            state.exhausted_diseases.insert(*next);
            continue;
        }
        state.target_disease = next;
        break;
    }
    if (state.target_disease != before) state.pending_candidates.clear();
}

std::optional<LabelProbabilities> DialogueEngine::image_probabilities(const DialogueState& state) const {
    if (!fusion_ || state.images.empty()) return std::nullopt;
    std::vector<fusion::Vector> views;
    for (const auto& img : state.images) {
        if (img.embedding && img.embedding->size() == fusion::kVisualDim) {
            views.push_back(Eigen::Map<const fusion::Vector>(img.embedding->data(),
                                                             static_cast<Eigen::Index>(img.embedding->size())));
        } else {
            views.push_back(fusion::hash_embedding(img.ref, fusion::kVisualDim));
        }
    }
    std::vector<fusion::Vector> sentences;
    if (!state.medical_history.empty()) sentences.push_back(fusion::hash_embedding(state.medical_history, fusion::kTextDim));
    for (const auto& t : state.history) {
        if (t.role == Role::patient) sentences.push_back(fusion::hash_embedding(t.text, fusion::kTextDim));
    }
    auto fused = fusion::fuse_inputs(views, sentences);
    return fusion::classify(fusion::align(fused, fusion_->alignment), fusion_->classifier);
}

void DialogueEngine::update_confidence(DialogueState& state) const {
    if (auto probs = image_probabilities(state)) {
        state.confidence = *std::max_element(probs->begin(), probs->end());
    } else {
        state.confidence = evidence_confidence(state, *graph_);
    }
}

EngineAction DialogueEngine::finish(DialogueState& state, UtcSeconds now) const {
    state.phase = Phase::diagnosing;
    std::vector<std::string> present;
    std::vector<std::string> denied;
    for (const auto& [id, status] : state.base.entries()) {
        if (!graph_->find(id)) continue;
        if (status == SymptomStatus::present) present.push_back(symptom_phrase(*graph_, id));
        if (status == SymptomStatus::absent) denied.push_back(symptom_phrase(*graph_, id));
    }
    std::string findings;
    findings += "Reported symptoms: " + (present.empty() ? std::string("none") : join(present, ", ")) + ".\n";
    findings += "Denied symptoms: " + (denied.empty() ? std::string("none") : join(denied, ", ")) + ".\n";
    if (!state.medical_history.empty()) findings += "Medical history: " + trim(state.medical_history) + "\n";
    findings += "Images reviewed: " + std::to_string(state.images.size()) + ".";

    DiagnosticReport report;
    report.probabilities = image_probabilities(state).value_or(evidence_probabilities(state, *graph_));
    report.text = fusion::assemble_report(findings, report.probabilities, state.config.report_threshold);

    state.history.push_back(Turn{Role::system, TurnKind::report, report.text, now, state.round});
    state.report = report;
    state.pending_candidates.clear();
    state.phase = Phase::terminated;
    return EngineAction{ActionKind::emit_report, report.text, std::nullopt, report};
}

EngineAction DialogueEngine::next_turn(DialogueState& state, const PatientMessage& message, UtcSeconds now) const {
    if (state.phase == Phase::terminated) {
        throw SessionClosedError("session " + state.session_id + " is terminated");
    }
    const auto& config = state.config;
    state.round += 1;
    state.history.push_back(Turn{Role::patient, TurnKind::utterance, message.text, now, state.round});
    if (message.image) state.images.push_back(*message.image);
    for (const auto& e : extract_symptoms(message.text, *graph_)) state.base.record(e.symptom_id, e.polarity);

    refresh_target(state);
    update_confidence(state);

    if (state.phase == Phase::awaiting_visual) return finish(state, now);
    if (is_end_of_conversation(message.text)) {
        state.termination = TerminationDecision{true, TerminationReason::patient_ended, state.confidence, state.round};
        return finish(state, now);
    }

    for (;;) {
        auto decision = should_terminate(state, *graph_, config);
        if (decision.terminate) {
            state.termination = decision;
            bool can_wait = state.round < config.max_rounds;
            bool wants_visual = decision.reason == TerminationReason::confidence_reached ||
                                decision.reason == TerminationReason::symptoms_exhausted;
            if (state.images.empty() && wants_visual && can_wait) {
                state.phase = Phase::awaiting_visual;
                state.pending_candidates.clear();
                state.history.push_back(
                    Turn{Role::system, TurnKind::image_request, std::string(kImageRequestText), now, state.round});
                return EngineAction{ActionKind::request_image, std::string(kImageRequestText), std::nullopt, std::nullopt};
            }
            return finish(state, now);
        }

        auto fresh = generate_candidates(state, *graph_, *backend_, config.n_candidates);
        std::vector<QueryCandidate> pool;
        for (const auto& c : state.pending_candidates) {
            bool superseded = std::any_of(fresh.begin(), fresh.end(),
                                          [&](const auto& f) { return f.target_symptom == c.target_symptom; });
            if (!superseded) pool.push_back(c);
        }
        pool.insert(pool.end(), fresh.begin(), fresh.end());

        auto outcome = rank_candidates(pool, state, *graph_, *backend_);
        state.last_candidates = outcome.considered;
        if (outcome.ranked.empty()) {
            advance_target_disease(state, *graph_, config);
            refresh_target(state);
            update_confidence(state);
            continue;
        }

        const auto& best = outcome.ranked.front();
        state.asked_symptoms.push_back(best.target_symptom);
        state.base.mark_asked(best.target_symptom);
        state.pending_candidates.assign(outcome.ranked.begin() + 1, outcome.ranked.end());
        state.history.push_back(Turn{Role::system, TurnKind::question, best.text, now, state.round});
        return EngineAction{ActionKind::ask, best.text, best.target_symptom, std::nullopt};
    }
}

std::string transcript_jsonl(const DialogueState& state) {
    std::string out;
    for (const auto& t : state.history) {
        nlohmann::ordered_json j;
        j["role"] = to_string(t.role);
        j["kind"] = to_string(t.kind);
        j["text"] = t.text;
        j["timestamp"] = format_utc(t.timestamp);
        j["round"] = t.round;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace dxdialog
