#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxdialog/backends.hpp"
#include "dxdialog/knowledge_graph.hpp"
#include "dxdialog/labels.hpp"

namespace dxdialog {

struct HistoryRecord {
    std::string record_id;
    std::string medical_history;
    std::string findings;
    BoolLabels labels{};
};

enum class DialogueSource { synthetic, real };
std::string_view to_string(DialogueSource s);

struct DialogueTurn {
    std::string role;  // "patient" | "doctor"
    std::string text;

    friend bool operator==(const DialogueTurn&, const DialogueTurn&) = default;
};

struct DialogueRecord {
    std::string dialogue_id;
    DialogueSource source = DialogueSource::synthetic;
    std::vector<DialogueTurn> turns;
    std::set<std::string> concept_tags;
    std::optional<std::string> origin_record;

    friend bool operator==(const DialogueRecord&, const DialogueRecord&) = default;
};

inline constexpr double kDefaultConsistencyThreshold = 0.6;
inline constexpr std::size_t kReferenceSynthetic = 66149;
inline constexpr std::size_t kReferenceReal = 12250;

/// Graph concepts mentioned in the record's history and findings.
std::set<std::string> record_concepts(const HistoryRecord& rec, const KnowledgeGraph& graph);

/// Patient-initiated dialogue of 2 * rounds turns. Backend failures fall back to template questions.
DialogueRecord generate_dialogue(const HistoryRecord& rec, ModelBackend& backend, const KnowledgeGraph& graph,
                                 int rounds, std::int64_t seed = 0);

/// Fraction of record concepts that appear in the dialogue's tags; 1.0 when the record has none.
double validate_consistency(const DialogueRecord& d, const HistoryRecord& rec, const KnowledgeGraph& graph);

/// Concatenation shuffled deterministically by seed. Duplicate ids are a ValidationError.
std::vector<DialogueRecord> mix_hybrid(std::vector<DialogueRecord> synthetic, std::vector<DialogueRecord> real,
                                       std::uint64_t seed);

nlohmann::ordered_json record_to_json(const DialogueRecord& d);
DialogueRecord record_from_json(const nlohmann::json& j);

/// One JSON object per line: {record_id, medical_history, findings, labels: [14 x bool]}.
std::vector<HistoryRecord> load_history_records(const std::filesystem::path& path);
HistoryRecord history_from_json(const nlohmann::json& j);

/// Leading metadata line followed by one record per line.
std::string corpus_jsonl(const nlohmann::ordered_json& metadata, std::span<const DialogueRecord> records);
/// Skips a leading metadata line if present.
std::vector<DialogueRecord> load_corpus(const std::filesystem::path& path);

}  // namespace dxdialog
