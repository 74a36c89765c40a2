#include "dxdialog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t k) {
    NgramCounts counts;
    if (tokens.size() < k) return counts;
    for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + k))];
    }
    return counts;
}

std::size_t clipped_matches(const Tokens& candidate, const Tokens& reference, std::size_t k) {
    auto cand = count_ngrams(candidate, k);
    auto ref = count_ngrams(reference, k);
    std::size_t matches = 0;
    for (const auto& [gram, count] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) matches += std::min(count, it->second);
    }
    return matches;
}

struct BleuStats {
    std::array<double, 4> matches{};
    std::array<double, 4> totals{};
    double candidate_length = 0;
    double reference_length = 0;

    void add(const Tokens& candidate, const Tokens& reference, int n) {
        for (int k = 1; k <= n; ++k) {
            auto kk = static_cast<std::size_t>(k);
            matches[kk - 1] += static_cast<double>(clipped_matches(candidate, reference, kk));
            totals[kk - 1] += candidate.size() >= kk ? static_cast<double>(candidate.size() - kk + 1) : 0.0;
        }
        candidate_length += static_cast<double>(candidate.size());
        reference_length += static_cast<double>(reference.size());
    }

    double score(int n) const {
        if (candidate_length == 0) return 0.0;
        double log_sum = 0.0;
        for (int k = 0; k < n; ++k) {
            double num = matches[static_cast<std::size_t>(k)] > 0 ? matches[static_cast<std::size_t>(k)] : kBleuSmoothing;
            double den = totals[static_cast<std::size_t>(k)] > 0 ? totals[static_cast<std::size_t>(k)] : 1.0;
            log_sum += std::log(num / den);
        }
        double bp = std::exp(std::min(0.0, 1.0 - reference_length / candidate_length));
        return bp * std::exp(log_sum / n);
    }
};

void check_order(int n) {
    if (n < 1 || n > 4) throw ValidationError("bleu: n must be in 1..4");
}

}  // namespace

double bleu(const Tokens& candidate, const Tokens& reference, int n) {
    check_order(n);
    if (reference.empty()) throw ValidationError("bleu: empty reference");
    BleuStats stats;
    stats.add(candidate, reference, n);
    return stats.score(n);
}

double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, int n) {
    check_order(n);
    if (candidates.size() != references.size()) throw ValidationError("corpus_bleu: length mismatch");
    BleuStats stats;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (references[i].empty()) throw ValidationError("corpus_bleu: empty reference");
        stats.add(candidates[i], references[i], n);
    }
    return stats.score(n);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
    if (reference.empty()) throw ValidationError("rouge_l: empty reference");
    if (candidate.empty()) return 0.0;
    auto lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0) return 0.0;
    double p = lcs / static_cast<double>(candidate.size());
    double r = lcs / static_cast<double>(reference.size());
    return 2 * p * r / (p + r);
}

std::string_view to_string(Mention m) {
    switch (m) {
        case Mention::positive: return "positive";
        case Mention::negative: return "negative";
        case Mention::unmentioned: return "unmentioned";
    }
    return "?";
}

const LabelerRules& LabelerRules::defaults() {
    static const LabelerRules rules = [] {
        LabelerRules r;
        r.phrases = {{
            {"atelectasis", "atelectases", "atelectatic", "collapsed lung", "lung collapse"},
            {"cardiomegaly", "enlarged heart", "enlarged cardiac silhouette", "cardiac enlargement",
             "heart size is enlarged"},
            {"consolidation", "consolidations", "consolidative"},
            {"edema", "oedema", "vascular congestion"},
            {"enlarged cardiomediastinum", "widened mediastinum", "mediastinal widening",
             "enlarged mediastinum", "cardiomediastinal enlargement"},
            {"fracture", "fractures", "fractured"},
            {"lung lesion", "nodule", "nodules", "mass", "masses", "lesion", "lesions"},
            {"lung opacity", "opacity", "opacities", "opacification", "infiltrate", "infiltrates"},
            {"no finding", "no findings", "no acute cardiopulmonary process",
             "no acute cardiopulmonary abnormality", "no acute cardiopulmonary disease",
             "normal chest radiograph"},
            {"pleural effusion", "pleural effusions", "effusion", "effusions"},
            {"pleural other", "pleural thickening", "pleural scarring", "pleural plaque", "pleural plaques",
             "fibrothorax"},
            {"pneumonia", "pneumonias", "infectious process"},
            {"pneumothorax", "pneumothoraces"},
            {"support devices", "support device", "endotracheal tube", "nasogastric tube", "pacemaker",
             "central line", "central venous catheter", "picc line", "sternotomy wires"},
        }};
        r.negation_cues = {"no", "without", "negative for", "free of", "resolved"};
        r.uncertainty_cues = {"possible", "possibly", "may", "might", "questionable", "suspicious for",
                              "concern for", "cannot exclude", "cannot be excluded", "suggestive of"};
        r.scope_breaks = {"but", "however", "although"};
        return r;
    }();
    return rules;
}

LabelerRules LabelerRules::from_json(const nlohmann::json& doc) {
    LabelerRules r = defaults();
    try {
        if (doc.contains("categories")) {
            for (auto& p : r.phrases) p.clear();
            for (const auto& [name, phrases] : doc.at("categories").items()) {
                auto idx = label_index(name);
                if (!idx) throw ValidationError("label phrases: unknown category '" + name + "'");
                r.phrases[*idx] = phrases.get<std::vector<std::string>>();
            }
        }
        if (doc.contains("negation_cues")) r.negation_cues = doc.at("negation_cues").get<std::vector<std::string>>();
        if (doc.contains("uncertainty_cues")) {
            r.uncertainty_cues = doc.at("uncertainty_cues").get<std::vector<std::string>>();
        }
        if (doc.contains("scope_breaks")) r.scope_breaks = doc.at("scope_breaks").get<std::vector<std::string>>();
        if (doc.contains("uncertain_positive")) r.uncertain_positive = doc.at("uncertain_positive").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("label phrases: ") + e.what());
    }
    return r;
}

LabelerRules LabelerRules::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("label phrases " + path.string() + ": " + e.what());
    }
}

namespace {

struct Phrase {
    Tokens tokens;
    std::size_t label;
};

bool matches_at(const Tokens& tokens, std::size_t pos, const Tokens& phrase) {
    return pos + phrase.size() <= tokens.size() &&
           std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

// Any cue phrase fully inside tokens[begin, end).
bool cue_in_range(const Tokens& tokens, std::size_t begin, std::size_t end, const std::vector<Tokens>& cues) {
    for (std::size_t i = begin; i < end; ++i) {
        for (const auto& cue : cues) {
            if (!cue.empty() && i + cue.size() <= end && matches_at(tokens, i, cue)) return true;
        }
    }
    return false;
}

std::vector<Tokens> tokenize_all(const std::vector<std::string>& phrases) {
    std::vector<Tokens> out;
    for (const auto& p : phrases) out.push_back(tokenize(p));
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
            if (!trim(cur).empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(cur);
    return out;
}

// positive beats negative beats unmentioned
void merge(Mention& slot, Mention m) {
    if (m == Mention::positive) slot = m;
    else if (m == Mention::negative && slot == Mention::unmentioned) slot = m;
}

}  // namespace

LabelVector label_report(std::string_view report, const LabelerRules& rules) {
    LabelVector out;
    out.fill(Mention::unmentioned);

    std::string_view body = report;
    std::string_view sentinel_section;
    if (auto at = report.find(kConditionsSentinel); at != std::string_view::npos) {
        body = report.substr(0, at);
        sentinel_section = report.substr(at + kConditionsSentinel.size());
        if (auto nl = sentinel_section.find('\n'); nl != std::string_view::npos) {
            sentinel_section = sentinel_section.substr(0, nl);
        }
    }

    std::vector<Phrase> phrases;
    for (std::size_t j = 0; j < kLabelCount; ++j) {
        for (const auto& p : rules.phrases[j]) {
            auto t = tokenize(p);
            if (!t.empty()) phrases.push_back(Phrase{std::move(t), j});
        }
    }
    std::stable_sort(phrases.begin(), phrases.end(),
                     [](const Phrase& a, const Phrase& b) { return a.tokens.size() > b.tokens.size(); });
    const auto negations = tokenize_all(rules.negation_cues);
    const auto uncertain = tokenize_all(rules.uncertainty_cues);
    const auto breaks = tokenize_all(rules.scope_breaks);

    for (const auto& sentence : split_sentences(body)) {
        auto tokens = tokenize(sentence);
        std::size_t scope_start = 0;
        std::size_t pos = 0;
        while (pos < tokens.size()) {
            const Phrase* hit = nullptr;
            for (const auto& p : phrases) {
                if (matches_at(tokens, pos, p.tokens)) {
                    hit = &p;
                    break;
                }
            }
            if (!hit) {
                for (const auto& b : breaks) {
                    if (!b.empty() && matches_at(tokens, pos, b)) scope_start = pos + b.size();
                }
                ++pos;
                continue;
            }
            Mention m = Mention::positive;
            if (cue_in_range(tokens, scope_start, pos, negations)) {
                m = Mention::negative;
            } else if (!rules.uncertain_positive && cue_in_range(tokens, scope_start, pos, uncertain)) {
                m = Mention::negative;
            }
            merge(out[hit->label], m);
            pos += hit->tokens.size();
        }
    }

    if (!sentinel_section.empty()) {
        std::string item;
        auto flush = [&] {
            auto name = trim(item);
            while (!name.empty() && (name.back() == '.' || name.back() == ',')) name.pop_back();
            if (auto idx = label_index(name)) out[*idx] = Mention::positive;
            item.clear();
        };
        for (char c : sentinel_section) {
            if (c == ',') flush();
            else item.push_back(c);
        }
        flush();
    }
    return out;
}

EfficacyScores clinical_efficacy(std::span<const LabelVector> preds, std::span<const LabelVector> truths) {
    if (preds.size() != truths.size()) throw ValidationError("clinical_efficacy: length mismatch");
    if (preds.empty()) throw ValidationError("clinical_efficacy: empty input");
    EfficacyScores s;
    std::array<std::size_t, kLabelCount> label_tp{};
    std::array<std::size_t, kLabelCount> label_pos{};
    for (std::size_t n = 0; n < preds.size(); ++n) {
        for (std::size_t j = 0; j < kLabelCount; ++j) {
            bool p = preds[n][j] == Mention::positive;
            bool t = truths[n][j] == Mention::positive;
            if (p && t) ++s.true_positives;
            if (p && !t) ++s.false_positives;
            if (!p && t) ++s.false_negatives;
            if (t) {
                ++label_pos[j];
                if (p) ++label_tp[j];
            }
        }
    }
    auto tp = static_cast<double>(s.true_positives);
    auto pred_pos = static_cast<double>(s.true_positives + s.false_positives);
    auto true_pos = static_cast<double>(s.true_positives + s.false_negatives);
    s.precision_undefined = pred_pos == 0;
    s.recall_undefined = true_pos == 0;
    s.precision = s.precision_undefined ? 0.0 : tp / pred_pos;
    s.recall = s.recall_undefined ? 0.0 : tp / true_pos;
    s.f1 = (s.precision > 0 && s.recall > 0) ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    for (std::size_t j = 0; j < kLabelCount; ++j) {
        s.per_label_recall_undefined[j] = label_pos[j] == 0;
        s.per_label_recall[j] =
            label_pos[j] == 0 ? 0.0 : static_cast<double>(label_tp[j]) / static_cast<double>(label_pos[j]);
    }
    return s;
}

EvaluationSummary evaluate_corpus(std::span<const ReportPair> pairs, const LabelerRules& rules) {
    if (pairs.empty()) throw ValidationError("evaluate: no report pairs");
    std::vector<Tokens> cands;
    std::vector<Tokens> refs;
    std::vector<LabelVector> pred_labels;
    std::vector<LabelVector> true_labels;
    EvaluationSummary summary;
    summary.pairs = pairs.size();
    double rouge_sum = 0.0;
    for (const auto& p : pairs) {
        cands.push_back(tokenize(p.candidate));
        refs.push_back(tokenize(p.reference));
        if (refs.back().empty()) throw ValidationError("evaluate: empty reference for id '" + p.id + "'");
        rouge_sum += rouge_l(cands.back(), refs.back());
        pred_labels.push_back(label_report(p.candidate, rules));
        true_labels.push_back(label_report(p.reference, rules));
    }
    for (int n = 1; n <= 4; ++n) summary.bleu[static_cast<std::size_t>(n - 1)] = corpus_bleu(cands, refs, n);
    summary.rouge_l = rouge_sum / static_cast<double>(pairs.size());
    summary.efficacy = clinical_efficacy(pred_labels, true_labels);
    return summary;
}

nlohmann::ordered_json summary_to_json(const EvaluationSummary& s) {
    nlohmann::ordered_json j;
    for (std::size_t k = 0; k < 4; ++k) j["bleu" + std::to_string(k + 1)] = s.bleu[k];
    j["rougeL"] = s.rouge_l;
    j["precision"] = s.efficacy.precision;
    j["recall"] = s.efficacy.recall;
    j["f1"] = s.efficacy.f1;
    nlohmann::ordered_json per_label;
    for (std::size_t i = 0; i < kLabelCount; ++i) per_label[std::string(kLabelNames[i])] = s.efficacy.per_label_recall[i];
    j["per_label_recall"] = per_label;
    j["precision_undefined"] = s.efficacy.precision_undefined;
    j["recall_undefined"] = s.efficacy.recall_undefined;
    j["pairs"] = s.pairs;
    return j;
}

std::string summary_to_csv(const EvaluationSummary& s, std::string_view approach) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(3);
    out << "Approaches,BLEU1,BLEU2,BLEU3,BLEU4,ROUGE,F1,Recall,Precision\n";
    out << approach;
    for (double b : s.bleu) out << ',' << b;
    out << ',' << s.rouge_l << ',' << s.efficacy.f1 << ',' << s.efficacy.recall << ',' << s.efficacy.precision << '\n';
    return out.str();
}

}  // namespace dxdialog::metrics
