#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lexqa/evaluation.hpp"
#include "scripted_scorer.hpp"

using namespace lexqa;

TEST(Recall, Examples) {
    const std::vector<std::string> ranked{"a", "b", "c", "d"};
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, {"c", "z"}, 2), 0.0);
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, {"c", "z"}, 3), 0.5);
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, {"a"}, 100), 1.0);
    EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::string>{"a", "a"}, {"a", "b"}, 2), 0.5);
    EXPECT_THROW(recall_at_k(ranked, {"a"}, 0), Error);
    EXPECT_THROW(recall_at_k(ranked, {}, 1), Error);
}

TEST(Recall, MonotoneInK) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> id(0, 60);
    for (int t = 0; t < 1000; ++t) {
        std::vector<std::string> ranked;
        for (int i = 0; i < 40; ++i) ranked.push_back(std::to_string(id(rng)));
        std::set<std::string> gold{std::to_string(id(rng)), std::to_string(id(rng))};
        double previous = 0.0;
        for (std::size_t k = 1; k <= 45; ++k) {
            const double r = recall_at_k(ranked, gold, k);
            ASSERT_GE(r, previous);
            ASSERT_LE(r, 1.0);
            previous = r;
        }
    }
}

TEST(PrecisionRecall, Examples) {
    const auto pr = precision_recall(std::vector<std::string>{"a", "b", "c", "d"}, {"a", "x"});
    EXPECT_DOUBLE_EQ(pr.precision, 0.25);
    EXPECT_DOUBLE_EQ(pr.recall, 0.5);
    const auto empty = precision_recall(std::vector<std::string>{}, {"a"});
    EXPECT_EQ(empty.precision, 0.0);
    EXPECT_EQ(empty.recall, 0.0);
}

TEST(F2, PublishedRows) {
    EXPECT_NEAR(f2(0.2399, 0.4454), 0.3803, 1e-4);
    EXPECT_NEAR(f2(0.1461, 0.6165), 0.3750, 1e-4);
    EXPECT_NEAR(f2(0.4331, 0.6651), 0.6007, 1e-4);
}

TEST(F2, Identities) {
    for (double p : {0.1, 0.37, 0.9, 1.0}) EXPECT_NEAR(f2(p, p), p, 1e-15);
    EXPECT_EQ(f2(0.0, 0.0), 0.0);
    EXPECT_EQ(f2(0.0, 0.7), 0.0);
    EXPECT_GT(f2(0.2, 0.8), f2(0.8, 0.2));
}

TEST(Split, SizesAndDeterminism) {
    std::vector<GoldQuery> qs;
    for (int i = 0; i < 10; ++i) qs.push_back({"q" + std::to_string(i), "x", {"a"}});
    const auto [train, valid] = split_train_valid(qs, 0.9, 3);
    EXPECT_EQ(train.size(), 9u);
    EXPECT_EQ(valid.size(), 1u);
    const auto again = split_train_valid(qs, 0.9, 3);
    EXPECT_EQ(again.first, train);
    EXPECT_EQ(split_train_valid(qs, 0.01, 0).first.size(), 1u);
    EXPECT_EQ(split_train_valid(qs, 0.99, 0).second.size(), 1u);
    EXPECT_THROW(split_train_valid(std::span(qs).first(1), 0.5, 0), Error);
    EXPECT_THROW(split_train_valid(qs, 1.0, 0), Error);
}

TEST(RunEval, TitleQueriesOnHundredArticles) {
    const auto corpus = lexqa::testing::make_corpus(100, 42);
    const auto lex = LexIndex::build(corpus, {});
    const QuickviewRetriever qv(lex, {}, {});
    const auto queries = lexqa::testing::title_queries(corpus);
    EvalConfig cfg;
    cfg.k_values = {1, 10};
    cfg.end_to_end = false;
    const auto report = run_eval(queries, qv, nullptr, cfg);
    EXPECT_EQ(report.queries, 100u);
    EXPECT_EQ(report.failed, 0u);
    EXPECT_DOUBLE_EQ(report.recall_at_k.at(10), 1.0);
    EXPECT_FALSE(report.f2.has_value());
    EXPECT_EQ(report.to_json(false).dump(), run_eval(queries, qv, nullptr, cfg).to_json(false).dump());
}

TEST(RunEval, EndToEndAggregates) {
    const auto corpus = lexqa::testing::make_corpus(20, 1);
    const auto lex = LexIndex::build(corpus, {});
    const QuickviewRetriever qv(lex, {}, {});
    std::map<std::string, double> oracle;
    for (const auto& a : corpus) oracle[a.article_id] = 0.0;
    auto queries = lexqa::testing::title_queries(corpus);
    queries.resize(4);
    lexqa::testing::ScriptedScorer scorer(oracle, 0.0);
    EvalConfig cfg;
    cfg.k_values = {5};
    cfg.ensemble = EnsembleConfig::for_top_k(20);
    const auto report = run_eval(queries, qv, &scorer, cfg);
    ASSERT_TRUE(report.f2.has_value());
    EXPECT_NEAR(*report.f2, f2(*report.mean_precision, *report.mean_recall), 1e-15);
    for (const auto& q : report.per_query) {
        EXPECT_FALSE(q.returned.empty());
        EXPECT_TRUE(q.end_to_end.has_value());
    }
    EXPECT_THROW(run_eval(queries, qv, nullptr, cfg), Error);
}

TEST(RunEval, FailingQueryIsRecorded) {
    const auto corpus = lexqa::testing::make_corpus(20, 2);
    const auto lex = LexIndex::build(corpus, {});
    const QuickviewRetriever qv(lex, {}, {});
    std::vector<GoldQuery> queries{{"ok", *corpus[0].title, {corpus[0].article_id}},
                                   {"bad", *corpus[1].title, {corpus[1].article_id}}};
    EvalConfig cfg;
    cfg.k_values = {0};
    cfg.end_to_end = false;
    const auto report = run_eval(queries, qv, nullptr, cfg);
    EXPECT_EQ(report.failed, 2u);
    ASSERT_TRUE(report.per_query[1].error.has_value());
    EXPECT_TRUE(report.recall_at_k.empty());
}
