#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dxdialog/backends.hpp"
#include "dxdialog/fusion.hpp"
#include "dxdialog/knowledge_graph.hpp"
#include "dxdialog/metrics.hpp"
#include "dxdialog/prodial.hpp"
#include "dxdialog/text.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dxdialog;
using testing_support::fixture_graph;

namespace {

KnowledgeGraph random_graph(std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_int_distribution<int> nd(1, 8), ns(1, 20);
    int n_dis = nd(rng), n_sym = ns(rng);
    std::vector<ClinicalConcept> concepts;
    for (int i = 0; i < n_dis; ++i) {
        auto id = "d" + std::to_string(i);
        concepts.push_back({id, id, ConceptKind::disease, {id}});
    }
    for (int j = 0; j < n_sym; ++j) {
        auto id = "s" + std::to_string(j);
        concepts.push_back({id, id, ConceptKind::symptom, {id}});
    }
    std::bernoulli_distribution keep(0.4);
    std::uniform_int_distribution<int> w(1, 10);
    std::vector<ConceptEdge> edges;
    for (int i = 0; i < n_dis; ++i) {
        for (int j = 0; j < n_sym; ++j) {
            if (keep(rng)) edges.push_back({"d" + std::to_string(i), "s" + std::to_string(j), w(rng) / 10.0 * scale});
        }
    }
    return KnowledgeGraph::build(std::move(concepts), std::move(edges));
}

SymptomBase random_base(std::mt19937_64& rng, const KnowledgeGraph& g) {
    SymptomBase base;
    std::uniform_int_distribution<int> pick(0, 3);
    for (const auto& s : g.symptom_ids()) {
        int p = pick(rng);
        if (p == 1) base.record(s, Polarity::present);
        if (p == 2) base.record(s, Polarity::absent);
        if (p == 3) base.mark_asked(s);
    }
    return base;
}

metrics::Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t min_len = 0) {
    static const std::vector<std::string> words{"no", "acute", "effusion", "left", "lung", "clear", "mild", "edema"};
    std::uniform_int_distribution<std::size_t> len(min_len, max_len), w(0, words.size() - 1);
    metrics::Tokens t(len(rng));
    for (auto& tok : t) tok = words[w(rng)];
    return t;
}

}  // namespace

TEST(GraphProperty, CorrelationIsPure) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = random_graph(rng);
        auto before = graph_to_json(g);
        for (const auto& d : g.disease_ids()) {
            for (const auto& s : g.symptom_ids()) EXPECT_EQ(g.correlation(d, s), g.correlation(d, s));
        }
        EXPECT_EQ(graph_to_json(g), before);
    }
}

TEST(GraphProperty, TopSymptomsIsPrefixOfFilteredAdjacency) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = random_graph(rng);
        std::set<std::string, std::less<>> exclude;
        std::bernoulli_distribution ex(0.3);
        for (const auto& s : g.symptom_ids()) {
            if (ex(rng)) exclude.insert(s);
        }
        for (const auto& d : g.disease_ids()) {
            std::vector<ScoredId> full;
            for (const auto& a : g.adjacency(d)) {
                if (!exclude.contains(a.id)) full.push_back(a);
            }
            for (std::size_t k = 1; k <= full.size() + 1; ++k) {
                auto top = g.top_symptoms(d, exclude, k);
                ASSERT_EQ(top.size(), std::min(k, full.size()));
                EXPECT_TRUE(std::equal(top.begin(), top.end(), full.begin()));
            }
        }
    }
}

TEST(GraphProperty, ArgmaxInvariantUnderCommonRescale) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 a(seed), b(seed);
        auto g = random_graph(a);
        auto scaled = random_graph(b, 0.5);
        std::mt19937_64 base_rng(seed + 1000);
        auto base = random_base(base_rng, g);
        auto r1 = g.rank_diseases(base);
        auto r2 = scaled.rank_diseases(base);
        ASSERT_EQ(r1.size(), r2.size());
        for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i].id, r2[i].id);
        EXPECT_EQ(r1, oracle::rank_diseases(g, base));
    }
}

TEST(MetricProperty, BoundedAndStableUnderRetokenizing) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        auto c = random_tokens(rng, 12);
        auto r = random_tokens(rng, 12, 1);
        double b = metrics::bleu(c, r, 4);
        double l = metrics::rouge_l(c, r);
        EXPECT_GE(b, 0.0);
        EXPECT_LE(b, 1.0);
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, 1.0);

        auto c2 = tokenize(join(c, " "));
        auto r2 = tokenize(join(r, " "));
        EXPECT_EQ(metrics::bleu(c2, r2, 4), b);
        EXPECT_EQ(metrics::rouge_l(c2, r2), l);
    }
}

TEST(MetricProperty, SelfBleuIsOne) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = random_tokens(rng, 12, 1);
        for (int n = 1; n <= static_cast<int>(std::min<std::size_t>(x.size(), 4)); ++n) {
            EXPECT_DOUBLE_EQ(metrics::bleu(x, x, n), 1.0);
        }
    }
}

TEST(MetricProperty, RougeMatchesLcsOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        auto c = random_tokens(rng, 12);
        auto r = random_tokens(rng, 12, 1);
        EXPECT_NEAR(metrics::rouge_l(c, r), oracle::rouge_l(c, r), 1e-12);
    }
}

TEST(FusionProperty, AverageIsPermutationInvariantAndIdempotent) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<fusion::Vector> views;
        for (int i = 0; i < 4; ++i) views.push_back(fusion::Vector::Random(8));
        auto avg = fusion::average_views(views);
        std::shuffle(views.begin(), views.end(), rng);
        EXPECT_LT((fusion::average_views(views) - avg).norm(), 1e-12);

        std::vector<fusion::Vector> same(3, views.front());
        EXPECT_LT((fusion::average_views(same) - views.front()).norm(), 1e-12);
    }
}

TEST(FusionProperty, ClassifyStaysInsideOpenInterval) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto params = fusion::FusionParams::random(8, 8, seed, 50.0);
        fusion::Vector e = fusion::Vector::Random(8) * 100.0;
        auto p = fusion::classify(e, params.classifier);
        BoolLabels labels{};
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_GT(p[i], 0.0);
            EXPECT_LT(p[i], 1.0);
            labels[i] = i % 2 == 0;
        }
        EXPECT_TRUE(std::isfinite(fusion::loss_classification(p, labels)));
    }
}

TEST(FusionProperty, TotalLossIsAffineInAlpha) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (int trial = 0; trial < 200; ++trial) {
        double lc = u(rng), lr = u(rng), a = u(rng);
        double slope = (fusion::total_loss(lc, lr, a + 1.0) - fusion::total_loss(lc, lr, a));
        EXPECT_NEAR(slope, lr, 1e-12 * std::max(1.0, lc + lr * a));
        EXPECT_NEAR(fusion::total_loss(lc, lr, 0.0), lc, 1e-12);
    }
}

TEST(ProDialProperty, ConsistencyMonotoneInTags) {
    HistoryRecord rec{"r", "Cough, fever and fatigue.", "Findings of pneumonia and edema.", {}};
    auto concepts = record_concepts(rec, *fixture_graph());
    std::vector<std::string> order(concepts.begin(), concepts.end());
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(order.begin(), order.end(), rng);
        DialogueRecord d;
        d.origin_record = "r";
        double prev = validate_consistency(d, rec, *fixture_graph());
        for (const auto& c : order) {
            d.turns.push_back(DialogueTurn{"patient", "I also have " + fixture_graph()->at(c).display_name + "."});
            d.concept_tags.insert(c);
            double now = validate_consistency(d, rec, *fixture_graph());
            EXPECT_GE(now, prev);
            prev = now;
        }
        EXPECT_EQ(prev, 1.0);
    }
}

TEST(ProDialProperty, MixLengthIsSumOfInputs) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> n(0, 30);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<DialogueRecord> syn, real;
        int ns = n(rng), nr = n(rng);
        for (int i = 0; i < ns; ++i) syn.push_back({"s" + std::to_string(i), DialogueSource::synthetic, {}, {}, {}});
        for (int i = 0; i < nr; ++i) real.push_back({"r" + std::to_string(i), DialogueSource::real, {}, {}, {}});
        EXPECT_EQ(mix_hybrid(syn, real, rng()).size(), static_cast<std::size_t>(ns + nr));
    }
}

TEST(BackendProperty, OfflineBackendsArePureAndScoresBounded) {
    StubBackend stub;
    TemplateBackend tmpl;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> w(-1.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        double weight = w(rng);
        for (ModelBackend* b : {static_cast<ModelBackend*>(&stub), static_cast<ModelBackend*>(&tmpl)}) {
            int s = b->score_relevance("Do you have a fever?", "pneumonia", weight);
            EXPECT_GE(s, 0);
            EXPECT_LE(s, 10);
            EXPECT_EQ(b->score_relevance("Do you have a fever?", "pneumonia", weight), s);
        }
        Prompt p;
        p.messages = {{"user", "I have a cough"}};
        p.seed = static_cast<std::int64_t>(trial);
        p.slots = {{"symptom", "fever"}};
        EXPECT_EQ(stub.complete(p), stub.complete(p));
        EXPECT_EQ(tmpl.complete(p), tmpl.complete(p));
    }
}
