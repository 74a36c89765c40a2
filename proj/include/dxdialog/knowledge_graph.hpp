#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxdialog/symptom_base.hpp"

namespace dxdialog {

enum class ConceptKind { disease, symptom };

std::string_view to_string(ConceptKind k);

struct ClinicalConcept {
    std::string id;
    std::string display_name;
    ConceptKind kind = ConceptKind::symptom;
    std::vector<std::string> aliases;
};

/// disease -> symptom, weight in (0, 1].
struct ConceptEdge {
    std::string disease_id;
    std::string symptom_id;
    double weight = 0.0;
};

/// A concept id paired with a weight or score; used for adjacency and rankings.
struct ScoredId {
    std::string id;
    double score = 0.0;

    friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// One alias occurrence in a token sequence, [token_begin, token_end).
struct ConceptMention {
    std::string concept_id;
    std::size_t token_begin = 0;
    std::size_t token_end = 0;
};

/// Hook for how denied symptoms affect disease scores. The default leaves them at zero.
struct RankOptions {
    /// Each absent symptom subtracts penalty * correlation.
    double denied_penalty = 0.0;
};

/// Weighted bipartite disease/symptom graph. Immutable once built; every query is a pure read.
class KnowledgeGraph {
public:
    /// Validates ids, kinds, endpoint existence, duplicate pairs and weight range.
    /// Throws GraphError naming the offending field.
    static KnowledgeGraph build(std::vector<ClinicalConcept> concepts, std::vector<ConceptEdge> edges);

    const ClinicalConcept* find(std::string_view id) const;
    const ClinicalConcept& at(std::string_view id) const;

    /// Sorted by id.
    std::span<const ClinicalConcept> concepts() const { return concepts_; }
    std::span<const ConceptEdge> edges() const { return edges_; }
    const std::vector<std::string>& disease_ids() const { return disease_ids_; }
    const std::vector<std::string>& symptom_ids() const { return symptom_ids_; }

    /// Symptoms of a disease, weight descending then id ascending.
    std::span<const ScoredId> adjacency(std::string_view disease_id) const;

    /// Edge weight, or 0.0 when the pair is not connected.
    double correlation(std::string_view disease_id, std::string_view symptom_id) const;

    /// Every disease scored by summed correlation over present symptoms in `base`,
    /// score descending then id ascending. Unknown symptoms are skipped with a warning.
    std::vector<ScoredId> rank_diseases(const SymptomBase& base, RankOptions options = {}) const;

    /// Up to k adjacent symptoms not in `exclude`, in adjacency order.
    std::vector<ScoredId> top_symptoms(std::string_view disease_id,
                                       const std::set<std::string, std::less<>>& exclude,
                                       std::size_t k) const;

    /// Greedy left-to-right, longest-alias-first matching over already tokenized text.
    std::vector<ConceptMention> find_mentions(std::span<const std::string> tokens,
                                              std::optional<ConceptKind> kind = std::nullopt) const;
    /// Distinct concept ids mentioned anywhere in free text.
    std::set<std::string> concepts_in_text(std::string_view text,
                                           std::optional<ConceptKind> kind = std::nullopt) const;

private:
    struct AliasEntry {
        std::vector<std::string> tokens;
        std::size_t concept_index;
    };

    std::vector<ClinicalConcept> concepts_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<ConceptEdge> edges_;
    std::map<std::string, std::vector<ScoredId>, std::less<>> adjacency_;
    std::map<std::pair<std::string, std::string>, double> weights_;
    std::vector<std::string> disease_ids_;
    std::vector<std::string> symptom_ids_;
    // first alias token -> candidate aliases, longest first
    std::map<std::string, std::vector<AliasEntry>, std::less<>> alias_heads_;
};

/// Reads the JSON graph document: {"concepts":[{id,display_name,kind,aliases}],
/// "edges":[{disease,symptom,weight}]}.
KnowledgeGraph load_graph(std::istream& source);
KnowledgeGraph load_graph_file(const std::filesystem::path& path);
nlohmann::ordered_json graph_to_json(const KnowledgeGraph& graph);

/// Parses only the `concepts` array of a graph document.
std::vector<ClinicalConcept> parse_concepts(const nlohmann::json& concepts);

struct CooccurrenceRecord {
    std::set<std::string> diseases;
    std::set<std::string> symptoms;
};

/// weight(d, s) = #records containing both / #records containing d. Pairs that never
/// co-occur get no edge. Labels outside `vocabulary` are a ValidationError.
KnowledgeGraph build_graph_from_cooccurrence(std::span<const CooccurrenceRecord> records,
                                             std::vector<ClinicalConcept> vocabulary);

}  // namespace dxdialog
