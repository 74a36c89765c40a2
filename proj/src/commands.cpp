#include "dxdialog/commands.hpp"

#include <csignal>
#include <iostream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dxdialog/error.hpp"
#include "dxdialog/metrics.hpp"
#include "dxdialog/prodial.hpp"
#include "dxdialog/service.hpp"
#include "dxdialog/simulation.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}

namespace {

/// defaults < --config file < explicit flags.
ServiceConfig base_config(const CommonOptions& common) {
    ServiceConfig c;
    if (common.config) {
        json doc;
        try {
            doc = json::parse(read_file(*common.config));
        } catch (const json::parse_error& e) {
            throw ConfigError(common.config->string() + ": " + e.what());
        }
        apply_service_json(c, doc);
    }
    if (common.backend) c.backend.kind = backend_kind_from_string(*common.backend);
    if (common.seed) c.engine.seed = *common.seed;
    c.backend.validate();
    c.engine.validate();
    return c;
}

std::map<std::string, std::string> load_reports(const fs::path& path) {
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            auto id = j.at("id").get<std::string>();
            const auto& text = j.contains("text") ? j.at("text") : j.at("report");
            if (!out.emplace(id, text.get<std::string>()).second) {
                throw ValidationError(path.string() + ": duplicate id '" + id + "'");
            }
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string ids_list(const std::vector<std::string>& ids) {
    constexpr std::size_t kShown = 20;
    std::vector<std::string> shown(ids.begin(), ids.begin() + static_cast<long>(std::min(ids.size(), kShown)));
    auto s = join(shown, ", ");
    if (ids.size() > kShown) s += ", ... (" + std::to_string(ids.size()) + " total)";
    return s;
}

DialogueService* g_running = nullptr;

void on_signal(int) {
    if (g_running) g_running->stop();
}

}  // namespace

int run_simulate(const CommonOptions& common, const SimulateOptions& opts) {
    auto cfg = base_config(common);
    if (opts.max_rounds) cfg.engine = apply_config_overrides(cfg.engine, json{{"max_rounds", *opts.max_rounds}});
    auto graph = std::make_shared<const KnowledgeGraph>(load_graph_file(opts.graph));
    auto personas = load_personas(opts.personas);
    DialogueEngine engine(graph, make_backend(cfg.backend));

    auto outcomes = simulate_all(engine, personas, cfg.engine, opts.jobs);

    auto transcripts = opts.out_dir / "transcripts";
    std::error_code ec;
    fs::create_directories(transcripts, ec);
    if (ec) throw IoError("cannot create " + transcripts.string() + ": " + ec.message());
    for (const auto& o : outcomes) write_file_atomic(transcripts / (o.persona_id + ".jsonl"), transcript_jsonl(o.state));

    auto summary = summarize(outcomes);
    auto doc = summary_to_json(summary);
    doc["seed"] = cfg.engine.seed;
    doc["backend"] = to_string(cfg.backend.kind);
    write_file_atomic(opts.out_dir / "summary.json", doc.dump(2) + "\n");
    std::cout << doc.dump(2) << '\n';
    if (!summary.ok()) {
        std::cerr << "error: dialogue invariants violated\n";
        return kExitValidation;
    }
    return kExitOk;
}

int run_evaluate(const CommonOptions&, const EvaluateOptions& opts) {
    auto candidates = load_reports(opts.candidates);
    auto references = load_reports(opts.references);

    std::vector<std::string> missing;
    for (const auto& [id, _] : references) {
        if (!candidates.contains(id)) missing.push_back(id);
    }
    std::vector<std::string> extra;
    for (const auto& [id, _] : candidates) {
        if (!references.contains(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "unmatched ids.";
        if (!missing.empty()) msg += " missing candidates: " + ids_list(missing) + ".";
        if (!extra.empty()) msg += " missing references: " + ids_list(extra) + ".";
        throw ValidationError(msg);
    }

    std::vector<metrics::ReportPair> pairs;
    for (const auto& [id, ref] : references) pairs.push_back({id, candidates.at(id), ref});
    auto rules = opts.rules ? metrics::LabelerRules::load(*opts.rules) : metrics::LabelerRules::defaults();
    auto summary = metrics::evaluate_corpus(pairs, rules);

    auto doc = metrics::summary_to_json(summary);
    if (opts.out.extension() == ".csv") {
        write_file_atomic(opts.out, metrics::summary_to_csv(summary, opts.approach));
    } else {
        write_file_atomic(opts.out, doc.dump(2) + "\n");
    }
    std::cout << doc.dump(2) << '\n';
    return kExitOk;
}

int run_build_kg(const CommonOptions&, const BuildKgOptions& opts) {
    json doc;
    try {
        doc = json::parse(read_file(opts.records));
    } catch (const json::parse_error& e) {
        throw ValidationError(opts.records.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("concepts") || !doc.contains("records")) {
        throw ValidationError(opts.records.string() + ": expected {\"concepts\": [...], \"records\": [...]}");
    }
    auto vocabulary = parse_concepts(doc.at("concepts"));
    std::vector<CooccurrenceRecord> records;
    try {
        for (const auto& r : doc.at("records")) {
            records.push_back({r.at("diseases").get<std::set<std::string>>(), r.at("symptoms").get<std::set<std::string>>()});
        }
    } catch (const json::exception& e) {
        throw ValidationError(opts.records.string() + ": " + e.what());
    }
    auto graph = build_graph_from_cooccurrence(records, std::move(vocabulary));
    auto text = graph_to_json(graph).dump(2) + "\n";

    std::istringstream check(text);
    auto reloaded = load_graph(check);
    if (graph_to_json(reloaded) != graph_to_json(graph)) throw ValidationError("built graph does not round-trip");

    write_file_atomic(opts.out, text);
    std::cout << "wrote " << graph.disease_ids().size() << " diseases, " << graph.symptom_ids().size()
              << " symptoms, " << graph.edges().size() << " edges to " << opts.out.string() << '\n';
    return kExitOk;
}

int run_gen_prodial(const CommonOptions& common, const GenProdialOptions& opts) {
    if (!(opts.threshold >= 0.0 && opts.threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
    auto cfg = base_config(common);
    auto graph = load_graph_file(opts.graph);
    auto records = load_history_records(opts.records);
    auto backend = make_backend(cfg.backend);

    std::vector<DialogueRecord> accepted;
    std::size_t rejected = 0;
    double total = 0.0;
    for (const auto& rec : records) {
        auto d = generate_dialogue(rec, *backend, graph, opts.rounds, cfg.engine.seed);
        double c = validate_consistency(d, rec, graph);
        total += c;
        if (c >= opts.threshold) {
            accepted.push_back(std::move(d));
        } else {
            ++rejected;
            spdlog::debug("rejected {} (consistency {:.3f})", d.dialogue_id, c);
        }
    }
    std::size_t synthetic = accepted.size();
    std::size_t real = 0;
    std::vector<DialogueRecord> corpus;
    if (opts.real) {
        auto real_records = load_corpus(*opts.real);
        real = real_records.size();
        corpus = mix_hybrid(std::move(accepted), std::move(real_records), static_cast<std::uint64_t>(cfg.engine.seed));
    } else {
        corpus = std::move(accepted);
    }

    ojson meta;
    meta["prodial_version"] = 1;
    meta["backend"] = to_string(cfg.backend.kind);
    meta["seed"] = cfg.engine.seed;
    meta["rounds"] = opts.rounds;
    meta["threshold"] = opts.threshold;
    meta["records"] = records.size();
    meta["synthetic"] = synthetic;
    meta["rejected"] = rejected;
    meta["real"] = real;
    meta["total"] = corpus.size();
    meta["mean_consistency"] = records.empty() ? 0.0 : total / static_cast<double>(records.size());
    meta["reference_ratio"] = {{"synthetic", kReferenceSynthetic}, {"real", kReferenceReal}};
    write_file_atomic(opts.out, corpus_jsonl(meta, corpus));
    std::cout << meta.dump(2) << '\n';
    return kExitOk;
}

int run_serve(const CommonOptions& common, const ServeOptions& opts) {
    json overrides = json::object();
    if (opts.listen) overrides["listen"] = *opts.listen;
    if (opts.graph) overrides["graph"] = opts.graph->string();
    if (opts.data_dir) overrides["data_dir"] = opts.data_dir->string();
    if (opts.logical_clock) overrides["logical_clock"] = true;
    if (common.backend) overrides["backend"]["kind"] = *common.backend;
    if (common.seed) overrides["engine"]["seed"] = *common.seed;
    auto cfg = resolve_service_config(common.config, process_env(), overrides);
    if (cfg.graph_path.empty()) cfg.graph_path = "data/graph.json";

    auto graph = std::make_shared<const KnowledgeGraph>(load_graph_file(cfg.graph_path));
    std::shared_ptr<const fusion::FusionParams> params;
    if (!cfg.fusion_checkpoint.empty()) {
        params = std::make_shared<const fusion::FusionParams>(fusion::load_checkpoint(cfg.fusion_checkpoint));
    }
    DialogueService service(cfg, graph, make_backend(cfg.backend), params);
    service.recover();
    int port = service.bind(cfg.host, cfg.port);
    spdlog::info("listening on {}:{}", cfg.host, port);

    g_running = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.run();
    g_running = nullptr;
    return kExitOk;
}

}  // namespace dxdialog
