#include "dxdialog/knowledge_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

using nlohmann::json;

std::string_view to_string(ConceptKind k) {
    return k == ConceptKind::disease ? "disease" : "symptom";
}

namespace {

bool valid_id(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

bool adjacency_order(const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

std::string edge_context(std::size_t i) {
    return "edges[" + std::to_string(i) + "]";
}

}  // namespace

KnowledgeGraph KnowledgeGraph::build(std::vector<ClinicalConcept> concepts,
                                     std::vector<ConceptEdge> edges) {
    KnowledgeGraph g;
    std::sort(concepts.begin(), concepts.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    g.concepts_ = std::move(concepts);

    std::map<std::string, std::string, std::less<>> alias_owner;
    for (std::size_t i = 0; i < g.concepts_.size(); ++i) {
        auto& c = g.concepts_[i];
        if (!valid_id(c.id)) {
            throw GraphError("concept '" + c.id + "': id must match [a-z0-9_]+");
        }
        if (!g.index_.emplace(c.id, i).second) {
            throw GraphError("concept '" + c.id + "': duplicate concept id");
        }
        if (c.display_name.empty()) c.display_name = c.id;

        std::vector<std::string> phrases;
        for (auto& alias : c.aliases) {
            alias = to_lower(trim(alias));
            if (alias.empty()) throw GraphError("concept '" + c.id + "': empty alias");
            phrases.push_back(alias);
        }
        // display name and the id itself always resolve to the concept
        phrases.push_back(to_lower(c.display_name));
        std::string spaced = c.id;
        std::replace(spaced.begin(), spaced.end(), '_', ' ');
        phrases.push_back(spaced);

        std::set<std::string> seen;
        for (const auto& phrase : phrases) {
            auto tokens = tokenize(phrase);
            if (tokens.empty()) continue;
            std::string key = join(tokens, " ");
            if (!seen.insert(key).second) continue;
            auto [it, inserted] = alias_owner.emplace(key, c.id);
            if (!inserted && it->second != c.id) {
                throw GraphError("concept '" + c.id + "': alias '" + key +
                                 "' already belongs to '" + it->second + "'");
            }
            g.alias_heads_[tokens.front()].push_back(AliasEntry{std::move(tokens), i});
        }
        (c.kind == ConceptKind::disease ? g.disease_ids_ : g.symptom_ids_).push_back(c.id);
    }
    for (auto& [head, entries] : g.alias_heads_) {
        std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return a.tokens.size() > b.tokens.size();
        });
    }

    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& e = edges[i];
        const auto* d = g.find(e.disease_id);
        const auto* s = g.find(e.symptom_id);
        if (!d) throw GraphError(edge_context(i) + ".disease: dangling endpoint '" + e.disease_id + "'");
        if (!s) throw GraphError(edge_context(i) + ".symptom: dangling endpoint '" + e.symptom_id + "'");
        if (d->kind != ConceptKind::disease || s->kind != ConceptKind::symptom) {
            throw GraphError(edge_context(i) + ": kind mismatch, edges run disease -> symptom");
        }
        if (!std::isfinite(e.weight) || e.weight <= 0.0 || e.weight > 1.0) {
            std::ostringstream msg;
            msg << edge_context(i) << ".weight: weight out of range (0, 1]: " << e.weight;
            throw GraphError(msg.str());
        }
        if (!g.weights_.emplace(std::make_pair(e.disease_id, e.symptom_id), e.weight).second) {
            throw GraphError(edge_context(i) + ": duplicate edge " + e.disease_id + " -> " + e.symptom_id);
        }
        g.adjacency_[e.disease_id].push_back(ScoredId{e.symptom_id, e.weight});
    }
    for (auto& [disease, adj] : g.adjacency_) std::sort(adj.begin(), adj.end(), adjacency_order);
    g.edges_ = std::move(edges);
    return g;
}

const ClinicalConcept* KnowledgeGraph::find(std::string_view id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &concepts_[it->second];
}

const ClinicalConcept& KnowledgeGraph::at(std::string_view id) const {
    const auto* c = find(id);
    if (!c) throw ConceptError("unknown concept id '" + std::string(id) + "'");
    return *c;
}

std::span<const ScoredId> KnowledgeGraph::adjacency(std::string_view disease_id) const {
    const auto& d = at(disease_id);
    if (d.kind != ConceptKind::disease) {
        throw ConceptError("kind mismatch: '" + d.id + "' is not a disease");
    }
    auto it = adjacency_.find(disease_id);
    if (it == adjacency_.end()) return {};
    return it->second;
}

double KnowledgeGraph::correlation(std::string_view disease_id, std::string_view symptom_id) const {
    const auto& d = at(disease_id);
    const auto& s = at(symptom_id);
    if (d.kind != ConceptKind::disease || s.kind != ConceptKind::symptom) {
        throw ConceptError("kind mismatch: correlation takes (disease, symptom), got ('" + d.id +
                           "', '" + s.id + "')");
    }
    auto it = weights_.find(std::make_pair(d.id, s.id));
    return it == weights_.end() ? 0.0 : it->second;
}

std::vector<ScoredId> KnowledgeGraph::rank_diseases(const SymptomBase& base, RankOptions options) const {
    std::map<std::string, double, std::less<>> scores;
    for (const auto& d : disease_ids_) scores[d] = 0.0;

    for (const auto& [symptom, status] : base.entries()) {
        const auto* s = find(symptom);
        if (!s || s->kind != ConceptKind::symptom) {
            spdlog::warn("rank_diseases: ignoring unknown symptom '{}'", symptom);
            continue;
        }
        double sign = 0.0;
        if (status == SymptomStatus::present) sign = 1.0;
        else if (status == SymptomStatus::absent) sign = -options.denied_penalty;
        if (sign == 0.0) continue;
        for (const auto& d : disease_ids_) {
            auto it = weights_.find(std::make_pair(d, symptom));
            if (it != weights_.end()) scores[d] += sign * it->second;
        }
    }

    std::vector<ScoredId> ranked;
    ranked.reserve(scores.size());
    for (auto& [id, score] : scores) ranked.push_back(ScoredId{id, score});
    std::stable_sort(ranked.begin(), ranked.end(), adjacency_order);
    return ranked;
}

std::vector<ScoredId> KnowledgeGraph::top_symptoms(std::string_view disease_id,
                                                   const std::set<std::string, std::less<>>& exclude,
                                                   std::size_t k) const {
    if (k == 0) throw ConceptError("top_symptoms: k must be >= 1");
    std::vector<ScoredId> out;
    for (const auto& entry : adjacency(disease_id)) {
        if (out.size() == k) break;
        if (exclude.count(entry.id)) continue;
        out.push_back(entry);
    }
    return out;
}

std::vector<ConceptMention> KnowledgeGraph::find_mentions(std::span<const std::string> tokens,
                                                          std::optional<ConceptKind> kind) const {
    std::vector<ConceptMention> mentions;
    std::size_t pos = 0;
    while (pos < tokens.size()) {
        const AliasEntry* best = nullptr;
        auto it = alias_heads_.find(tokens[pos]);
        if (it != alias_heads_.end()) {
            for (const auto& entry : it->second) {
                if (kind && concepts_[entry.concept_index].kind != *kind) continue;
                if (pos + entry.tokens.size() > tokens.size()) continue;
                if (std::equal(entry.tokens.begin(), entry.tokens.end(), tokens.begin() + pos)) {
                    best = &entry;
                    break;
                }
            }
        }
        if (best) {
            mentions.push_back(ConceptMention{concepts_[best->concept_index].id, pos,
                                              pos + best->tokens.size()});
            pos += best->tokens.size();
        } else {
            ++pos;
        }
    }
    return mentions;
}

std::set<std::string> KnowledgeGraph::concepts_in_text(std::string_view text,
                                                       std::optional<ConceptKind> kind) const {
    std::set<std::string> out;
    auto tokens = tokenize(text);
    for (auto& m : find_mentions(tokens, kind)) out.insert(std::move(m.concept_id));
    return out;
}

std::vector<ClinicalConcept> parse_concepts(const json& concepts) {
    if (!concepts.is_array()) throw GraphError("concepts: expected an array");
    std::vector<ClinicalConcept> out;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        const auto& c = concepts[i];
        std::string ctx = "concepts[" + std::to_string(i) + "]";
        if (!c.is_object()) throw GraphError(ctx + ": expected an object");
        ClinicalConcept concept_;
        try {
            concept_.id = c.at("id").get<std::string>();
            concept_.display_name = c.value("display_name", concept_.id);
            auto kind = c.at("kind").get<std::string>();
            if (kind == "disease") concept_.kind = ConceptKind::disease;
            else if (kind == "symptom") concept_.kind = ConceptKind::symptom;
            else throw GraphError(ctx + ".kind: expected disease|symptom, got '" + kind + "'");
            if (c.contains("aliases")) concept_.aliases = c.at("aliases").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw GraphError(ctx + ": " + e.what());
        }
        out.push_back(std::move(concept_));
    }
    return out;
}

KnowledgeGraph load_graph(std::istream& source) {
    std::string text{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw GraphError("parse failure at line " + std::to_string(line) + " column " +
                         std::to_string(col) + ": " + e.what());
    }
    if (!doc.is_object()) throw GraphError("graph document must be a JSON object");
    if (!doc.contains("concepts")) throw GraphError("missing field 'concepts'");
    if (!doc.contains("edges") || !doc["edges"].is_array()) throw GraphError("missing array 'edges'");

    auto concepts = parse_concepts(doc["concepts"]);
    std::vector<ConceptEdge> edges;
    const auto& arr = doc["edges"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& e = arr[i];
        try {
            edges.push_back(ConceptEdge{e.at("disease").get<std::string>(),
                                        e.at("symptom").get<std::string>(),
                                        e.at("weight").get<double>()});
        } catch (const json::exception& ex) {
            throw GraphError(edge_context(i) + ": " + ex.what());
        }
    }
    return KnowledgeGraph::build(std::move(concepts), std::move(edges));
}

KnowledgeGraph load_graph_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graph " + path.string());
    return load_graph(in);
}

nlohmann::ordered_json graph_to_json(const KnowledgeGraph& graph) {
    nlohmann::ordered_json doc;
    doc["concepts"] = nlohmann::ordered_json::array();
    for (const auto& c : graph.concepts()) {
        nlohmann::ordered_json jc;
        jc["id"] = c.id;
        jc["display_name"] = c.display_name;
        jc["kind"] = to_string(c.kind);
        jc["aliases"] = c.aliases;
        doc["concepts"].push_back(std::move(jc));
    }
    doc["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : graph.edges()) {
        doc["edges"].push_back({{"disease", e.disease_id}, {"symptom", e.symptom_id}, {"weight", e.weight}});
    }
    return doc;
}

KnowledgeGraph build_graph_from_cooccurrence(std::span<const CooccurrenceRecord> records,
                                             std::vector<ClinicalConcept> vocabulary) {
    if (records.empty()) throw ValidationError("build_graph_from_cooccurrence: empty record list");
    if (vocabulary.empty()) throw ValidationError("build_graph_from_cooccurrence: empty vocabulary");

    std::map<std::string, ConceptKind, std::less<>> kinds;
    for (const auto& c : vocabulary) kinds[c.id] = c.kind;
    auto check = [&](const std::string& id, ConceptKind want, std::size_t row) {
        auto it = kinds.find(id);
        if (it == kinds.end() || it->second != want) {
            throw ValidationError("records[" + std::to_string(row) + "]: '" + id + "' is not a declared " +
                                  std::string(to_string(want)));
        }
    };

    std::map<std::string, std::size_t> disease_count;
    std::map<std::pair<std::string, std::string>, std::size_t> pair_count;
    for (std::size_t row = 0; row < records.size(); ++row) {
        const auto& r = records[row];
        for (const auto& d : r.diseases) {
            check(d, ConceptKind::disease, row);
            ++disease_count[d];
        }
        for (const auto& s : r.symptoms) check(s, ConceptKind::symptom, row);
        for (const auto& d : r.diseases) {
            for (const auto& s : r.symptoms) ++pair_count[{d, s}];
        }
    }

    std::vector<ConceptEdge> edges;
    for (const auto& [pair, count] : pair_count) {
        double w = static_cast<double>(count) / static_cast<double>(disease_count[pair.first]);
        edges.push_back(ConceptEdge{pair.first, pair.second, std::clamp(w, 0.0, 1.0)});
    }
    return KnowledgeGraph::build(std::move(vocabulary), std::move(edges));
}

}  // namespace dxdialog
