#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxdialog/labels.hpp"

namespace dxdialog::metrics {

using Tokens = std::vector<std::string>;

inline constexpr double kBleuSmoothing = 1e-9;

/// Sentence BLEU with k-grams 1..n, brevity penalty exp(min(0, 1 - r/c)), and zero clipped
/// counts replaced by kBleuSmoothing. An empty candidate scores 0.
double bleu(const Tokens& candidate, const Tokens& reference, int n);

/// Corpus BLEU: clipped k-gram counts and lengths are summed over all pairs before the ratios.
double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, int n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// ROUGE-L F1 (beta = 1).
double rouge_l(const Tokens& candidate, const Tokens& reference);

enum class Mention { positive, negative, unmentioned };

std::string_view to_string(Mention m);

using LabelVector = std::array<Mention, kLabelCount>;

struct LabelerRules {
    std::array<std::vector<std::string>, kLabelCount> phrases;
    std::vector<std::string> negation_cues;
    std::vector<std::string> uncertainty_cues;
    /// Cues after which earlier negations no longer apply ("but", "however").
    std::vector<std::string> scope_breaks;
    /// U-ones convention: uncertain mentions count as positive. When false they are negative.
    bool uncertain_positive = true;

    static const LabelerRules& defaults();
    /// Reads the editable phrase resource (JSON: {"categories": {name: [phrases]}, "negation_cues": [...], ...}).
    static LabelerRules from_json(const nlohmann::json& doc);
    static LabelerRules load(const std::filesystem::path& path);
};

/// Rule-based CheXpert-style labeling, sentence by sentence. The "IDENTIFIED CONDITIONS:" section
/// appended by report assembly is read as explicit positives.
LabelVector label_report(std::string_view report, const LabelerRules& rules = LabelerRules::defaults());

struct EfficacyScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::array<double, kLabelCount> per_label_recall{};
    /// True when the corresponding denominator was zero and the value was defined as 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
    std::array<bool, kLabelCount> per_label_recall_undefined{};
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

/// Micro-averaged positive-vs-rest scores over all 14 x N decisions.
EfficacyScores clinical_efficacy(std::span<const LabelVector> preds, std::span<const LabelVector> truths);

struct ReportPair {
    std::string id;
    std::string candidate;
    std::string reference;
};

struct EvaluationSummary {
    std::array<double, 4> bleu{};
    double rouge_l = 0.0;
    EfficacyScores efficacy;
    std::size_t pairs = 0;
};

EvaluationSummary evaluate_corpus(std::span<const ReportPair> pairs,
                                  const LabelerRules& rules = LabelerRules::defaults());
nlohmann::ordered_json summary_to_json(const EvaluationSummary& summary);
/// One header row plus one data row: Approaches,BLEU1..BLEU4,ROUGE,F1,Recall,Precision.
std::string summary_to_csv(const EvaluationSummary& summary, std::string_view approach);

}  // namespace dxdialog::metrics
