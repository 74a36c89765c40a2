#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dxdialog/commands.hpp"

namespace {

void add_common(CLI::App& cmd, dxdialog::CommonOptions& common) {
    cmd.add_option("--config", common.config, "JSON config file");
    cmd.add_option("--backend", common.backend, "stub | template | remote");
    cmd.add_option("--seed", common.seed, "Seed for backend prompts and shuffles");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Proactive diagnostic dialogue toolkit"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    dxdialog::CommonOptions common;

    dxdialog::SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Run scripted personas through the dialogue engine");
    add_common(*simulate, common);
    simulate->add_option("--graph", sim.graph, "Knowledge graph JSON")->required();
    simulate->add_option("--personas", sim.personas, "Persona JSONL")->required();
    simulate->add_option("--out", sim.out_dir, "Output directory")->required();
    simulate->add_option("--jobs", sim.jobs, "Worker threads")->check(CLI::PositiveNumber);
    simulate->add_option("--max-rounds", sim.max_rounds, "Override max_rounds");

    dxdialog::EvaluateOptions eval;
    auto* evaluate = app.add_subcommand("evaluate", "Score generated reports against references");
    add_common(*evaluate, common);
    evaluate->add_option("--candidates", eval.candidates, "Generated reports JSONL {id, text}")->required();
    evaluate->add_option("--references", eval.references, "Reference reports JSONL {id, text}")->required();
    evaluate->add_option("--out", eval.out, "Summary output (.json or .csv)")->required();
    evaluate->add_option("--rules", eval.rules, "Labeler phrase rules JSON");
    evaluate->add_option("--approach", eval.approach, "Row name for CSV output");

    dxdialog::BuildKgOptions kg;
    auto* build_kg = app.add_subcommand("build-kg", "Build a knowledge graph from co-occurrence records");
    add_common(*build_kg, common);
    build_kg->add_option("--records", kg.records, "Records JSON {concepts, records}")->required();
    build_kg->add_option("--out", kg.out, "Graph JSON output")->required();

    dxdialog::GenProdialOptions gen;
    auto* gen_prodial = app.add_subcommand("gen-prodial", "Generate a synthetic dialogue corpus");
    add_common(*gen_prodial, common);
    gen_prodial->add_option("--graph", gen.graph, "Knowledge graph JSON")->required();
    gen_prodial->add_option("--records", gen.records, "History records JSONL")->required();
    gen_prodial->add_option("--out", gen.out, "Corpus JSONL output")->required();
    gen_prodial->add_option("--rounds", gen.rounds, "Dialogue rounds")->check(CLI::PositiveNumber);
    gen_prodial->add_option("--threshold", gen.threshold, "Minimum consistency")->check(CLI::Range(0.0, 1.0));
    gen_prodial->add_option("--real", gen.real, "Real dialogue corpus to mix in");

    dxdialog::ServeOptions srv;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    add_common(*serve, common);
    serve->add_option("--listen", srv.listen, "host:port");
    serve->add_option("--graph", srv.graph, "Knowledge graph JSON");
    serve->add_option("--data-dir", srv.data_dir, "Session log directory");
    serve->add_flag("--logical-clock", srv.logical_clock, "Deterministic turn timestamps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : dxdialog::kExitValidation;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    return dxdialog::run_guarded([&] {
        if (*simulate) return dxdialog::run_simulate(common, sim);
        if (*evaluate) return dxdialog::run_evaluate(common, eval);
        if (*build_kg) return dxdialog::run_build_kg(common, kg);
        if (*gen_prodial) return dxdialog::run_gen_prodial(common, gen);
        return dxdialog::run_serve(common, srv);
    });
}
