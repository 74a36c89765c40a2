// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include <spdlog/spdlog.h>

#include "dxdialog/fusion.hpp"
#include "dxdialog/metrics.hpp"
#include "dxdialog/persistence.hpp"
#include "dxdialog/prodial.hpp"
#include "dxdialog/service.hpp"
#include "dxdialog/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a _res macro that collides with Eigen internals
#include <httplib.h>

using namespace dxdialog;
using nlohmann::json;
using testing_support::data_path;
using testing_support::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int precision = 3) {
    std::ostringstream s;
    s.precision(precision);
    s << x;
    return s.str();
}

std::shared_ptr<const KnowledgeGraph> graph() {
    return testing_support::fixture_graph();
}

// 1. BLEU-1..4 and ROUGE-L against the brute-force oracle.
Outcome metric_oracle() {
    auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t compared = 0;
    auto check = [&](const oracle::Tokens& c, const oracle::Tokens& r) {
        for (int n = 1; n <= 4; ++n) {
            worst = std::max(worst, std::abs(metrics::bleu(c, r, n) - oracle::bleu(c, r, n)));
        }
        worst = std::max(worst, std::abs(metrics::rouge_l(c, r) - oracle::rouge_l(c, r)));
        ++compared;
    };

    std::vector<oracle::Tokens> cands, refs;
    std::map<std::string, std::string> c_text, r_text;
    for (const auto& l : read_lines(data_path("eval/candidates.jsonl"))) {
        auto j = json::parse(l);
        c_text[j["id"]] = j["text"];
    }
    for (const auto& l : read_lines(data_path("eval/references.jsonl"))) {
        auto j = json::parse(l);
        r_text[j["id"]] = j["text"];
    }
    for (const auto& [id, r] : r_text) {
        cands.push_back(tokenize(c_text.at(id)));
        refs.push_back(tokenize(r));
        check(cands.back(), refs.back());
    }
    std::size_t fixtures = cands.size();
    for (int n = 1; n <= 4; ++n) {
        worst = std::max(worst, std::abs(metrics::corpus_bleu(cands, refs, n) - oracle::corpus_bleu(cands, refs, n)));
    }

    std::mt19937_64 rng(2024);
    const std::vector<std::string> vocab = {"the", "lung", "is", "clear", "no", "effusion", "mild", "edema"};
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    std::uniform_int_distribution<std::size_t> cand_len(0, 12), ref_len(1, 12);
    for (int i = 0; i < 1000; ++i) {
        oracle::Tokens c(cand_len(rng)), r(ref_len(rng));
        for (auto& w : c) w = vocab[word(rng)];
        for (auto& w : r) w = vocab[word(rng)];
        check(c, r);
    }
    double secs = seconds_since(t0);
    bool pass = fixtures >= 10 && worst <= 1e-9 && secs < 5.0;
    return {pass, std::to_string(fixtures) + " fixture + " + std::to_string(compared - fixtures) +
                      " random pairs, max abs err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

// 2. rank_diseases against the brute-force sum on random graphs.
Outcome kg_ranking() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    std::size_t mismatches = 0, ties = 0;
    for (int g = 0; g < 1000; ++g) {
        std::uniform_int_distribution<int> nd(1, 50), ns(1, 200);
        int diseases = nd(rng), symptoms = ns(rng);
        std::vector<ClinicalConcept> concepts;
        for (int i = 0; i < diseases; ++i) {
            auto id = "d" + std::to_string(i);
            concepts.push_back({id, id, ConceptKind::disease, {id}});
        }
        for (int i = 0; i < symptoms; ++i) {
            auto id = "s" + std::to_string(i);
            concepts.push_back({id, id, ConceptKind::symptom, {id}});
        }
        std::size_t max_edges = std::min<std::size_t>(2000, static_cast<std::size_t>(diseases * symptoms));
        std::uniform_int_distribution<std::size_t> ne(0, max_edges);
        std::size_t edges = ne(rng);
        std::set<std::pair<int, int>> used;
        std::vector<ConceptEdge> edge_list;
        std::uniform_int_distribution<int> pick_d(0, diseases - 1), pick_s(0, symptoms - 1), grid(1, 10);
        while (edge_list.size() < edges) {
            auto pair = std::make_pair(pick_d(rng), pick_s(rng));
            if (!used.insert(pair).second) continue;
            // coarse weights so equal scores, and therefore tie-breaks, are common
            edge_list.push_back({"d" + std::to_string(pair.first), "s" + std::to_string(pair.second), grid(rng) / 10.0});
        }
        auto kg = KnowledgeGraph::build(concepts, edge_list);

        SymptomBase base;
        std::uniform_int_distribution<int> status(0, 5);
        for (int i = 0; i < symptoms; ++i) {
            int s = status(rng);
            if (s == 0) base.record("s" + std::to_string(i), Polarity::present);
            else if (s == 1) base.record("s" + std::to_string(i), Polarity::absent);
            else if (s == 2) base.mark_asked("s" + std::to_string(i));
        }
        auto got = kg.rank_diseases(base);
        auto want = oracle::rank_diseases(kg, base);
        if (got != want) ++mismatches;
        for (std::size_t i = 1; i < want.size(); ++i) ties += want[i].score == want[i - 1].score;
    }
    double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 10.0, "1000 graphs, " + std::to_string(mismatches) + " mismatches, " +
                                                std::to_string(ties) + " tied neighbours, " + fmt(secs) + " s"};
}

// 3. Dialogue invariants over the persona fixture.
Outcome dialogue_invariants() {
    auto t0 = Clock::now();
    DialogueEngine engine(graph(), std::make_shared<StubBackend>());
    auto personas = load_personas(data_path("personas.jsonl"));
    EngineConfig config;
    config.max_rounds = 10;
    auto summary = summarize(simulate_all(engine, personas, config, 1));
    double secs = seconds_since(t0);
    bool pass = summary.sessions == 500 && summary.ok() && secs < 30.0;
    std::string reasons;
    for (const auto& [k, v] : summary.reasons) reasons += " " + k + "=" + std::to_string(v);
    return {pass, std::to_string(summary.sessions) + " sessions, repeats " + std::to_string(summary.repeat_questions) +
                      ", unterminated " + std::to_string(summary.not_terminated) + ", inconsistent " +
                      std::to_string(summary.inconsistent) + ";" + reasons + ", " + fmt(secs) + " s"};
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(DXDIALOG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 4. Two full simulate runs produce identical bytes.
Outcome determinism() {
    TempDir dir;
    auto base = "simulate --graph '" + data_path("graph.json").string() + "' --personas '" +
                data_path("personas.jsonl").string() + "' --backend stub --seed 1 --out ";
    int a = run_cli(base + "'" + (dir / "a").string() + "'");
    int b = run_cli(base + "'" + (dir / "b").string() + "'");
    if (a != 0 || b != 0) return {false, "simulate exited " + std::to_string(a) + "/" + std::to_string(b)};
    std::size_t files = 0, differing = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "a" / "transcripts")) {
        ++files;
        auto other = dir / "b" / "transcripts" / e.path().filename();
        if (!std::filesystem::exists(other) || read_file(e.path()) != read_file(other)) ++differing;
    }
    bool summary_same = read_file(dir / "a" / "summary.json") == read_file(dir / "b" / "summary.json");
    return {files == 500 && differing == 0 && summary_same,
            std::to_string(files) + " transcripts, " + std::to_string(differing) + " differ, summary " +
                (summary_same ? "identical" : "differs")};
}

std::vector<fusion::FusionExample> random_batch(std::mt19937_64& rng, Eigen::Index d_in, Eigen::Index vocab,
                                                std::size_t n, std::size_t len) {
    std::normal_distribution<double> dist;
    std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
    std::bernoulli_distribution coin;
    std::vector<fusion::FusionExample> batch(n);
    for (auto& ex : batch) {
        ex.input = fusion::Vector(d_in);
        for (auto& x : ex.input) x = dist(rng);
        for (auto& l : ex.labels) l = coin(rng);
        ex.reference.resize(len);
        for (auto& t : ex.reference) t = tok(rng);
    }
    return batch;
}

// 5. Analytic gradients against central differences.
Outcome gradients() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
        auto gen = fusion::FrozenGenerator::random(6, 4, rng(), 1.0);
        auto batch = random_batch(rng, 6, 6, 2, 3);
        auto params = fusion::FusionParams::random(6, 4, rng(), 0.5);
        for (auto obj : {fusion::Objective::classification, fusion::Objective::report, fusion::Objective::total}) {
            auto analytic = fusion::grad_total_loss(params, gen, batch, fusion::kDefaultAlpha, obj).grad.flatten();
            auto numeric = oracle::numeric_gradient(params, gen, batch, fusion::kDefaultAlpha, obj);
            worst = std::max(worst, oracle::relative_error(analytic, numeric));
        }
    }
    double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 10.0,
            "100 points x 3 objectives, max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

// 6. total - classification == alpha * report.
Outcome alpha_structure() {
    auto task = fusion::make_toy_task(3);
    auto params = fusion::FusionParams::random(16, 8, 4, 0.3);
    double worst = 0.0;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
        for (int i = 0; i < 100; ++i) {
            double lc = u(rng), lr = u(rng);
            worst = std::max(worst, std::abs((fusion::total_loss(lc, lr, alpha) - lc) - alpha * lr));
        }
        for (const auto& ex : task.batch) {
            auto r = fusion::forward(params, task.generator, ex);
            worst = std::max(worst, std::abs((fusion::total_loss(r.l_classification, r.l_report, alpha) - r.l_classification) -
                                             alpha * r.l_report));
        }
    }
    bool default_one = fusion::kDefaultAlpha == 1.0;
    return {worst <= 1e-12 && default_one,
            "alpha in {0, 0.5, 1, 2}, max abs err " + fmt(worst) + ", default alpha " + fmt(fusion::kDefaultAlpha)};
}

// 7. Toy training.
Outcome toy_training() {
    auto task = fusion::make_toy_task(7);
    auto params = fusion::FusionParams::random(16, 8, 11, 0.1);
    auto history = fusion::train(params, task.generator, task.batch, fusion::kDefaultAlpha, 0.1, 200);
    double reduction = 1.0 - history.back() / history.front();
    return {task.batch.size() == 32 && history.size() == 201 && reduction >= 0.5,
            std::to_string(task.batch.size()) + " examples, loss " + fmt(history.front(), 5) + " -> " +
                fmt(history.back(), 5) + " (" + fmt(100 * reduction, 4) + "% lower)"};
}

// 8. assemble_report then label_report recovers every thresholded category.
Outcome report_closure() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> findings = {""};
    for (const auto& l : read_lines(data_path("eval/references.jsonl"))) findings.push_back(json::parse(l)["text"]);
    std::size_t missed = 0, expected = 0;
    for (int i = 0; i < 200; ++i) {
        LabelProbabilities p;
        for (auto& x : p) x = u(rng);
        auto text = fusion::assemble_report(findings[static_cast<std::size_t>(i) % findings.size()], p, 0.5);
        auto labels = metrics::label_report(text);
        for (std::size_t j = 0; j < kLabelCount; ++j) {
            if (p[j] < 0.5) continue;
            ++expected;
            if (labels[j] != metrics::Mention::positive) ++missed;
        }
    }
    return {missed == 0, "200 vectors, " + std::to_string(expected - missed) + "/" + std::to_string(expected) +
                             " thresholded categories recovered"};
}

// 9. ProDial consistency and the hybrid mix size.
Outcome prodial() {
    StubBackend stub;
    auto records = load_history_records(data_path("history_records.jsonl"));
    std::size_t ok = 0;
    for (const auto& rec : records) {
        auto d = generate_dialogue(rec, stub, *graph(), 3);
        if (validate_consistency(d, rec, *graph()) >= kDefaultConsistencyThreshold) ++ok;
    }
    double share = records.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(records.size());
    std::vector<DialogueRecord> syn(kReferenceSynthetic), real(kReferenceReal);
    for (std::size_t i = 0; i < syn.size(); ++i) syn[i].dialogue_id = "syn-" + std::to_string(i);
    for (std::size_t i = 0; i < real.size(); ++i) {
        real[i].dialogue_id = "real-" + std::to_string(i);
        real[i].source = DialogueSource::real;
    }
    auto mixed = mix_hybrid(std::move(syn), std::move(real), 1);
    return {share >= 0.95 && mixed.size() == 78399,
            std::to_string(ok) + "/" + std::to_string(records.size()) + " dialogues at consistency >= 0.6, mix size " +
                std::to_string(mixed.size())};
}

json post(httplib::Client& cli, const std::string& path, const json& body, int* status = nullptr) {
    auto r = cli.Post(path, body.dump(), "application/json");
    if (!r) throw std::runtime_error("POST " + path + " failed");
    if (status) *status = r->status;
    return json::parse(r->body);
}

// 10. HTTP parity, replay against snapshots, ordering under concurrent posts.
Outcome service_parity() {
    TempDir dir;
    ServiceConfig cfg;
    cfg.data_dir = dir.path();
    cfg.logical_clock = true;
    cfg.snapshot_every = 3;
    cfg.worker_threads = 16;
    DialogueService svc(cfg, graph(), std::make_shared<StubBackend>());
    int port = svc.bind("127.0.0.1", 0);
    std::thread server([&] { svc.run(); });
    struct Stop {
        DialogueService& s;
        std::thread& t;
        ~Stop() {
            s.stop();
            t.join();
        }
    } stop{svc, server};
    httplib::Client cli("127.0.0.1", port);
    for (int i = 0; i < 200 && !cli.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    // parity
    DialogueEngine engine(graph(), std::make_shared<StubBackend>());
    auto personas = load_personas(data_path("personas.jsonl"));
    std::size_t parity_sessions = 25, parity_ok = 0;
    std::vector<std::string> ids;
    for (std::size_t p = 0; p < parity_sessions; ++p) {
        auto expected = transcript_jsonl(run_persona(engine, personas[p], EngineConfig{}).state);
        int status = 0;
        auto id = post(cli, "/v1/sessions", json::object(), &status)["session_id"].get<std::string>();
        ids.push_back(id);
        PatientAgent agent(personas[p], *graph());
        auto msg = agent.opening();
        for (int guard = 0; guard < 50; ++guard) {
            json body = {{"text", msg.text}};
            if (msg.image) body["image_ref"] = msg.image->ref;
            auto action = post(cli, "/v1/sessions/" + id + "/messages", body, &status);
            if (status != 200 || action["phase"] == "terminated") break;
            std::optional<std::string> target;
            if (action.contains("target_symptom")) target = action["target_symptom"].get<std::string>();
            auto kind = action["action"] == "ask" ? ActionKind::ask : ActionKind::request_image;
            msg = agent.respond(kind, target);
        }
        auto got = cli.Get("/v1/sessions/" + id + "/transcript");
        if (got && got->status == 200 && got->body == expected) ++parity_ok;
    }

    // replay reconstructs every snapshot and the live state
    std::size_t replay_ok = 0;
    for (const auto& id : ids) {
        auto sdir = svc.session_dir(id);
        auto log = read_session_log(sdir);
        auto snap = read_snapshot(sdir);
        auto prefix = log;
        bool good = snap.has_value();
        if (good) {
            prefix.messages.resize(snap->events);
            good = replay(engine, prefix) == snap->state && replay(engine, log) == *svc.state(id) &&
                   recover_session(engine, sdir) == *svc.state(id);
        }
        replay_ok += good;
    }

    // 50 concurrent posts to one session. A wide single-disease graph keeps the session open for all of them.
    std::vector<ClinicalConcept> wide_concepts{{"d0", "d0", ConceptKind::disease, {"d0"}}};
    std::vector<ConceptEdge> wide_edges;
    for (int i = 0; i < 60; ++i) {
        auto sid = "sym" + std::to_string(i);
        wide_concepts.push_back({sid, sid, ConceptKind::symptom, {sid}});
        wide_edges.push_back({"d0", sid, 0.3 + 0.01 * i});
    }
    auto wide = std::make_shared<const KnowledgeGraph>(KnowledgeGraph::build(wide_concepts, wide_edges));
    ServiceConfig wide_cfg = cfg;
    wide_cfg.data_dir = dir / "wide";
    DialogueService wide_svc(wide_cfg, wide, std::make_shared<StubBackend>());
    DialogueEngine wide_engine(wide, std::make_shared<StubBackend>());
    int wide_port = wide_svc.bind("127.0.0.1", 0);
    std::thread wide_server([&] { wide_svc.run(); });
    Stop wide_stop{wide_svc, wide_server};
    httplib::Client wide_cli("127.0.0.1", wide_port);
    for (int i = 0; i < 200 && !wide_cli.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    int status = 0;
    json create = {{"config", {{"max_rounds", 60}, {"top_k_symptoms", 60}}}};
    auto id = post(wide_cli, "/v1/sessions", create, &status)["session_id"].get<std::string>();
    std::vector<int> statuses(50), rounds(50, -1);
    std::vector<std::thread> workers;
    std::atomic<bool> go{false};
    for (int i = 0; i < 50; ++i) {
        workers.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", wide_port);
            while (!go) std::this_thread::yield();
            auto r = c.Post("/v1/sessions/" + id + "/messages", json{{"text", "message " + std::to_string(i)}}.dump(),
                            "application/json");
            statuses[i] = r ? r->status : -1;
            if (r && r->status == 200) rounds[i] = json::parse(r->body)["round"].get<int>();
        });
    }
    go = true;
    for (auto& w : workers) w.join();
    auto state = *wide_svc.state(id);
    std::set<int> seen;
    std::size_t accepted = 0, rejected = 0, other = 0;
    for (int i = 0; i < 50; ++i) {
        if (statuses[i] == 200) {
            ++accepted;
            seen.insert(rounds[i]);
        } else if (statuses[i] == 409) {
            ++rejected;
        } else {
            ++other;
        }
    }
    bool contiguous = seen.size() == accepted && (seen.empty() || (*seen.begin() == 1 && *seen.rbegin() == static_cast<int>(accepted)));
    // each patient turn is answered before the next one is read, and the log holds them in the same order
    auto log = read_session_log(wide_svc.session_dir(id));
    std::vector<std::string> patient_texts;
    int last_round = 0;
    bool interleaved_ok = true;
    for (std::size_t t = 0; t < state.history.size(); ++t) {
        const auto& turn = state.history[t];
        if (turn.role != Role::patient) continue;
        patient_texts.push_back(turn.text);
        interleaved_ok &= turn.round == last_round + 1;
        interleaved_ok &= t + 1 < state.history.size() && state.history[t + 1].role == Role::system &&
                          state.history[t + 1].round == turn.round;
        last_round = turn.round;
    }
    bool log_order = log.messages.size() == patient_texts.size();
    for (std::size_t i = 0; log_order && i < patient_texts.size(); ++i) log_order = log.messages[i].message.text == patient_texts[i];
    bool concurrent_ok = other == 0 && accepted == 50 && accepted == static_cast<std::size_t>(state.round) &&
                         contiguous && interleaved_ok && log_order && replay(wide_engine, log) == state;

    bool pass = parity_ok == parity_sessions && replay_ok == ids.size() && concurrent_ok;
    return {pass, std::to_string(parity_ok) + "/" + std::to_string(parity_sessions) + " transcripts byte-identical, " +
                      std::to_string(replay_ok) + "/" + std::to_string(ids.size()) + " snapshots match replay, 50 posts: " +
                      std::to_string(accepted) + " accepted in order, " + std::to_string(rejected) +
                      " rejected, " + std::to_string(other) + " failed" + (concurrent_ok ? "" : " (ordering violated)")};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric oracle equivalence", metric_oracle},
        {"knowledge-graph ranking equivalence", kg_ranking},
        {"dialogue invariants", dialogue_invariants},
        {"simulation determinism", determinism},
        {"gradient correctness", gradients},
        {"loss weighting structure", alpha_structure},
        {"toy training", toy_training},
        {"report assembly and labeler closure", report_closure},
        {"dialogue corpus generation", prodial},
        {"service parity", service_parity},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
