#include "dxdialog/prodial.hpp"

#include <random>
#include <sstream>
#include <unordered_set>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

namespace {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

std::vector<std::string> mentions_in_order(const HistoryRecord& rec, const KnowledgeGraph& graph) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const std::string* text : {&rec.medical_history, &rec.findings}) {
        auto tokens = tokenize(*text);
        for (const auto& m : graph.find_mentions(tokens)) {
            if (seen.insert(m.concept_id).second) out.push_back(m.concept_id);
        }
    }
    return out;
}

std::string phrase(const KnowledgeGraph& graph, const std::string& id) { return to_lower(graph.at(id).display_name); }

std::string reveal_sentence(const KnowledgeGraph& graph, const std::string& id) {
    if (graph.at(id).kind == ConceptKind::disease) return "I was told I might have " + phrase(graph, id) + ".";
    return "I have " + phrase(graph, id) + ".";
}

std::optional<std::string> next_question_target(const SymptomBase& base, const KnowledgeGraph& graph) {
    std::set<std::string, std::less<>> exclude;
    for (const auto& [id, _] : base.entries()) exclude.insert(id);
    for (const auto& d : graph.rank_diseases(base)) {
        auto top = graph.top_symptoms(d.id, exclude, 1);
        if (!top.empty()) return top.front().id;
    }
    return std::nullopt;
}

std::string closing_line(const HistoryRecord& rec) {
    std::vector<std::string> named;
    for (std::size_t i = 0; i < kLabelCount; ++i) {
        if (rec.labels[i] && kLabelNames[i] != "no finding") named.emplace_back(kLabelNames[i]);
    }
    if (named.empty()) return "Thank you. Based on what you told me and your images, I see no specific condition.";
    return "Thank you. Based on what you told me and your images, this looks consistent with " + join(named, " and ") +
           ".";
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    // Rejection sampling keeps the result identical across standard libraries.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace

std::string_view to_string(DialogueSource s) { return s == DialogueSource::synthetic ? "synthetic" : "real"; }

std::set<std::string> record_concepts(const HistoryRecord& rec, const KnowledgeGraph& graph) {
    auto ids = mentions_in_order(rec, graph);
    return {ids.begin(), ids.end()};
}

DialogueRecord generate_dialogue(const HistoryRecord& rec, ModelBackend& backend, const KnowledgeGraph& graph,
                                 int rounds, std::int64_t seed) {
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    const auto concepts = mentions_in_order(rec, graph);
    const std::set<std::string> in_record(concepts.begin(), concepts.end());
    std::set<std::string> revealed;
    SymptomBase base;
    std::optional<std::string> last_question;

    DialogueRecord d;
    d.dialogue_id = "syn-" + rec.record_id;
    d.source = DialogueSource::synthetic;
    d.origin_record = rec.record_id;

    auto reveal = [&](const std::string& id) {
        revealed.insert(id);
        if (graph.at(id).kind == ConceptKind::symptom) base.record(id, Polarity::present);
    };

    for (int r = 0; r < rounds; ++r) {
        std::vector<std::string> sentences;
        int budget = 2;
        if (last_question) {
            if (in_record.contains(*last_question)) {
                sentences.push_back("Yes, I have " + phrase(graph, *last_question) + ".");
                if (!revealed.contains(*last_question)) {
                    reveal(*last_question);
                    --budget;
                }
            } else {
                sentences.push_back("No, I do not have " + phrase(graph, *last_question) + ".");
                base.record(*last_question, Polarity::absent);
            }
        }
        for (const auto& id : concepts) {
            if (budget == 0) break;
            if (revealed.contains(id)) continue;
            sentences.push_back(reveal_sentence(graph, id));
            reveal(id);
            --budget;
        }
        if (sentences.empty()) sentences.emplace_back(r == 0 ? "I do not feel well." : "Nothing else comes to mind.");
        d.turns.push_back({"patient", join(sentences, " ")});

        if (r + 1 == rounds) {
            d.turns.push_back({"doctor", closing_line(rec)});
            break;
        }
        last_question = next_question_target(base, graph);
        if (!last_question) {
            d.turns.push_back({"doctor", "Is there anything else you would like to tell me?"});
            continue;
        }
        base.mark_asked(*last_question);
        const auto symptom = phrase(graph, *last_question);
        Prompt p;
        p.system_text = "You are a doctor asking a patient one short question about a symptom.";
        for (const auto& t : d.turns) p.messages.push_back({t.role == "patient" ? "user" : "assistant", t.text});
        p.seed = seed ^ static_cast<std::int64_t>(fnv1a(rec.record_id));
        p.slots = {{"symptom", symptom}};
        std::string question;
        try {
            question = trim(backend.complete(p));
        } catch (const BackendUnavailableError&) {
        }
        if (question.empty()) question = template_question(symptom);
        d.turns.push_back({"doctor", question});
    }

    for (const auto& t : d.turns) {
        auto ids = graph.concepts_in_text(t.text);
        d.concept_tags.insert(ids.begin(), ids.end());
    }
    return d;
}

double validate_consistency(const DialogueRecord& d, const HistoryRecord& rec, const KnowledgeGraph& graph) {
    if (d.origin_record != rec.record_id) {
        throw ValidationError("dialogue " + d.dialogue_id + " does not originate from record " + rec.record_id);
    }
    auto concepts = record_concepts(rec, graph);
    if (concepts.empty()) return 1.0;
    std::size_t hit = 0;
    for (const auto& c : concepts) hit += d.concept_tags.contains(c) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(concepts.size());
}

std::vector<DialogueRecord> mix_hybrid(std::vector<DialogueRecord> synthetic, std::vector<DialogueRecord> real,
                                       std::uint64_t seed) {
    std::vector<DialogueRecord> out = std::move(synthetic);
    out.reserve(out.size() + real.size());
    for (auto& r : real) out.push_back(std::move(r));

    std::unordered_set<std::string> ids;
    ids.reserve(out.size());
    for (const auto& r : out) {
        if (!ids.insert(r.dialogue_id).second) throw ValidationError("duplicate dialogue_id '" + r.dialogue_id + "'");
    }

    std::mt19937_64 rng(seed);
    for (std::size_t i = out.size(); i > 1; --i) {
        std::size_t j = uniform_below(rng, i);
        std::swap(out[i - 1], out[j]);
    }
    return out;
}

nlohmann::ordered_json record_to_json(const DialogueRecord& d) {
    ojson j;
    j["dialogue_id"] = d.dialogue_id;
    j["source"] = to_string(d.source);
    ojson turns = ojson::array();
    for (const auto& t : d.turns) turns.push_back({{"role", t.role}, {"text", t.text}});
    j["turns"] = turns;
    j["concept_tags"] = d.concept_tags;
    j["origin_record"] = d.origin_record ? ojson(*d.origin_record) : ojson(nullptr);
    return j;
}

DialogueRecord record_from_json(const json& j) {
    DialogueRecord d;
    try {
        d.dialogue_id = j.at("dialogue_id").get<std::string>();
        auto source = j.at("source").get<std::string>();
        if (source == "synthetic") d.source = DialogueSource::synthetic;
        else if (source == "real") d.source = DialogueSource::real;
        else throw ValidationError("unknown dialogue source '" + source + "'");
        for (const auto& t : j.at("turns")) {
            d.turns.push_back({t.at("role").get<std::string>(), t.at("text").get<std::string>()});
        }
        if (j.contains("concept_tags")) d.concept_tags = j.at("concept_tags").get<std::set<std::string>>();
        if (j.contains("origin_record") && !j.at("origin_record").is_null()) {
            d.origin_record = j.at("origin_record").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("dialogue record: ") + e.what());
    }
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const char* expected = i % 2 == 0 ? "patient" : "doctor";
        if (d.turns[i].role != expected) {
            throw ValidationError("dialogue " + d.dialogue_id + ": turn " + std::to_string(i) + " should be " + expected);
        }
    }
    if (d.source == DialogueSource::synthetic && !d.origin_record) {
        throw ValidationError("synthetic dialogue " + d.dialogue_id + " lacks origin_record");
    }
    return d;
}

HistoryRecord history_from_json(const json& j) {
    HistoryRecord rec;
    try {
        rec.record_id = j.at("record_id").get<std::string>();
        rec.medical_history = j.value("medical_history", "");
        rec.findings = j.value("findings", "");
        const auto& labels = j.at("labels");
        if (!labels.is_array() || labels.size() != kLabelCount) {
            throw ValidationError("record " + rec.record_id + ": labels must have " + std::to_string(kLabelCount) +
                                  " entries");
        }
        for (std::size_t i = 0; i < kLabelCount; ++i) {
            rec.labels[i] = labels[i].is_boolean() ? labels[i].get<bool>() : labels[i].get<int>() != 0;
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("history record: ") + e.what());
    }
    bool any = false;
    for (bool b : rec.labels) any = any || b;
    if (trim(rec.findings).empty() && any) {
        throw ValidationError("record " + rec.record_id + ": empty findings with positive labels");
    }
    return rec;
}

std::vector<HistoryRecord> load_history_records(const std::filesystem::path& path) {
    std::vector<HistoryRecord> out;
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
        auto rec = history_from_json(j);
        if (!ids.insert(rec.record_id).second) throw ValidationError("duplicate record_id '" + rec.record_id + "'");
        out.push_back(std::move(rec));
    }
    return out;
}

std::string corpus_jsonl(const ojson& metadata, std::span<const DialogueRecord> records) {
    std::ostringstream out;
    out << metadata.dump() << '\n';
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    return out.str();
}

std::vector<DialogueRecord> load_corpus(const std::filesystem::path& path) {
    std::vector<DialogueRecord> out;
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
        if (j.contains("prodial_version")) continue;
        out.push_back(record_from_json(j));
    }
    return out;
}

}  // namespace dxdialog
