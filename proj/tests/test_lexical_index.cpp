#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bm25_oracle.hpp"
#include "fixtures.hpp"
#include "lexqa/lexical_index.hpp"

using namespace lexqa;
using lexqa::testing::Bm25Oracle;
using lexqa::testing::tokens_of;

namespace {

// Content lengths 9, 7, 9 tokens; titles 4 and 4 tokens, A2 untitled.
std::vector<Article> three_articles() {
    return {
        {"A1", "d", "Hợp đồng dân sự", "Hợp đồng là sự thỏa thuận giữa các bên."},
        {"A2", "d", std::nullopt, "Bên có nghĩa vụ phải bồi thường."},
        {"A3", "d", "Bồi thường thiệt hại", "Người gây thiệt hại phải bồi thường thiệt hại."},
    };
}

std::vector<std::string> q(const char* text) { return tokens_of(text); }

struct RandomCorpus {
    std::vector<Article> articles;
    std::vector<std::vector<std::string>> queries;
};

RandomCorpus random_corpus(std::mt19937_64& rng, std::size_t max_articles, std::size_t n_queries) {
    static const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
    std::uniform_int_distribution<std::size_t> n_articles(1, max_articles);
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    std::uniform_int_distribution<std::size_t> content_len(1, 30);
    std::uniform_int_distribution<std::size_t> title_len(0, 5);
    std::uniform_int_distribution<std::size_t> query_len(0, 6);
    RandomCorpus rc;
    const std::size_t n = n_articles(rng);
    for (std::size_t i = 0; i < n; ++i) {
        Article a{"art" + std::to_string(i), "d", std::nullopt, ""};
        for (std::size_t j = content_len(rng); j > 0; --j) a.content += vocab[word(rng)] + " ";
        if (const std::size_t tl = title_len(rng); tl > 0) {
            a.title = "";
            for (std::size_t j = 0; j < tl; ++j) *a.title += vocab[word(rng)] + " ";
        }
        rc.articles.push_back(std::move(a));
    }
    for (std::size_t i = 0; i < n_queries; ++i) {
        std::vector<std::string> query;
        for (std::size_t j = query_len(rng); j > 0; --j) query.push_back(j % 5 == 0 ? "zz" : vocab[word(rng)]);
        rc.queries.push_back(std::move(query));
    }
    return rc;
}

Bm25Oracle oracle_for(const std::vector<Article>& articles, Field f, Bm25Params p) {
    std::vector<std::optional<std::vector<std::string>>> docs;
    for (const auto& a : articles) {
        if (f == Field::content) {
            docs.emplace_back(tokens_of(a.content));
        } else if (a.title) {
            docs.emplace_back(tokens_of(*a.title));
        } else {
            docs.emplace_back(std::nullopt);
        }
    }
    return Bm25Oracle(std::move(docs), p.k1, p.b);
}

}  // namespace

TEST(LexIndex, FieldStatistics) {
    const auto index = LexIndex::build(three_articles(), {});
    const auto& content = index.field(Field::content);
    EXPECT_EQ(content.doc_count(), 3u);
    EXPECT_DOUBLE_EQ(content.avgdl(), 25.0 / 3.0);
    EXPECT_EQ(index.field(Field::title).doc_count(), 2u);
    EXPECT_DOUBLE_EQ(index.field(Field::title).avgdl(), 4.0);
    EXPECT_FALSE(index.doc_len(Field::title, "A2").has_value());
    EXPECT_EQ(index.doc_len(Field::content, "A2"), 7u);
    EXPECT_EQ(index.field(Field::content).term_freq("thiệt", *index.ordinal("A3")), 2u);
}

TEST(LexIndex, BuildErrors) {
    EXPECT_THROW(LexIndex::build(std::vector<Article>{}, {}), Error);
    auto dup = three_articles();
    dup[2].article_id = "A1";
    EXPECT_THROW(LexIndex::build(dup, {}), Error);
    EXPECT_THROW(LexIndex::build(three_articles(), {}, {1.2, 1.5}), Error);
}

TEST(LexIndex, Idf) {
    const auto two = LexIndex::build(std::vector<Article>{{"x", "d", std::nullopt, "a b"}, {"y", "d", std::nullopt, "a c"}}, {});
    EXPECT_NEAR(two.idf(Field::content, "a"), 0.182322, 1e-6);
    EXPECT_NEAR(two.idf(Field::content, "a"), std::log(1.2), 1e-15);
    EXPECT_NEAR(two.idf(Field::content, "zzz"), std::log(6.0), 1e-15);
    const auto one = LexIndex::build(std::vector<Article>{{"x", "d", std::nullopt, "a"}}, {});
    EXPECT_NEAR(one.idf(Field::content, "a"), 0.287682, 1e-6);
}

TEST(LexIndex, Bm25MatchesHandValues) {
    const auto index = LexIndex::build(three_articles(), {});
    // Title: each term has idf ln 2 and unit length norm, so the sum is 2 ln 2.
    EXPECT_NEAR(index.bm25(Field::title, q("bồi thường"), "A3"), 2.0 * std::log(2.0), 1e-12);
    // Content: both terms in 2 of 3 articles (idf ln 1.6), tf 1, length 9 of avg 25/3.
    const double content_term = std::log(1.6) * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 9.0 / (25.0 / 3.0)));
    EXPECT_NEAR(index.bm25(Field::content, q("bồi thường"), "A3"), 2.0 * content_term, 1e-12);
    EXPECT_NEAR(index.bm25(Field::content, q("bồi thường"), "A3"), 0.910218296074488, 1e-12);
    EXPECT_EQ(index.bm25(Field::content, q("xyz"), "A1"), 0.0);
    EXPECT_EQ(index.bm25(Field::content, {}, "A1"), 0.0);
    EXPECT_EQ(index.bm25(Field::title, q("bồi"), "A2"), 0.0);
    EXPECT_EQ(index.bm25(Field::content, q("bồi"), "missing"), 0.0);
}

TEST(LexIndex, Bm25MatchesOracleOnFixture) {
    const auto articles = three_articles();
    const Bm25Params p{1.2, 0.75};
    const auto index = LexIndex::build(articles, {}, p);
    for (Field f : {Field::title, Field::content}) {
        const auto oracle = oracle_for(articles, f, p);
        for (const auto* text : {"hợp đồng", "bồi thường thiệt hại", "phải phải bên", "dân sự hợp"}) {
            for (std::size_t i = 0; i < articles.size(); ++i) {
                EXPECT_NEAR(index.bm25(f, q(text), articles[i].article_id), oracle.score(q(text), i), 1e-9);
            }
        }
    }
}

TEST(LexIndex, DuplicateQueryTokensCountTwice) {
    const auto index = LexIndex::build(three_articles(), {});
    EXPECT_NEAR(index.bm25(Field::content, q("bồi bồi"), "A3"), 2.0 * index.bm25(Field::content, q("bồi"), "A3"), 1e-12);
}

TEST(LexIndex, OracleEquivalenceRandomCorpora) {
    std::mt19937_64 rng(2024);
    for (int round = 0; round < 20; ++round) {
        std::uniform_real_distribution<double> k1(0.0, 3.0), b(0.0, 1.0);
        const Bm25Params p{k1(rng), b(rng)};
        const auto rc = random_corpus(rng, 50, 20);
        const auto index = LexIndex::build(rc.articles, {}, p);
        for (Field f : {Field::title, Field::content}) {
            const auto oracle = oracle_for(rc.articles, f, p);
            for (const auto& query : rc.queries) {
                for (std::size_t i = 0; i < rc.articles.size(); ++i) {
                    ASSERT_NEAR(index.bm25(f, query, rc.articles[i].article_id), oracle.score(query, i), 1e-9);
                }
            }
        }
    }
}

TEST(Quickview, Composition) {
    const auto articles = three_articles();
    const auto index = LexIndex::build(articles, {});
    const auto query = q("bồi thường");
    EXPECT_EQ(index.quickview_score(query, "A3", {0.0, 1.0}), index.bm25(Field::content, query, "A3"));
    EXPECT_EQ(index.quickview_score(query, "A2", {1.0, 0.0}), 0.0);
    EXPECT_NEAR(index.quickview_score(query, "A3", {1.5, 1.0}), 1.5 * 2.0 * std::log(2.0) + 0.910218296074488, 1e-12);
    EXPECT_THROW((QuickviewConfig{0.0, 0.0}.validate()), Error);
    EXPECT_THROW((QuickviewConfig{-1.0, 2.0}.validate()), Error);
}

TEST(Quickview, RetrieveTopk) {
    const auto index = LexIndex::build(three_articles(), {});
    const auto top = index.retrieve_topk(q("Bồi thường thiệt hại"), 1, {});
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].article_id, "A3");

    const auto all = index.retrieve_topk(q("bồi thường"), 10, {});
    ASSERT_EQ(all.size(), 2u);  // A1 shares no term
    EXPECT_EQ(all[0].article_id, "A3");
    EXPECT_NEAR(all[0].score, index.quickview_score(q("bồi thường"), "A3", {}), 1e-12);
    EXPECT_TRUE(index.retrieve_topk(q("hôn nhân"), 5, {}).empty());
    EXPECT_THROW(index.retrieve_topk(q("bồi"), 0, {}), Error);
}

TEST(Quickview, TiesBrokenById) {
    const auto index = LexIndex::build(
        std::vector<Article>{{"b", "d", std::nullopt, "x y"}, {"a", "d", std::nullopt, "x y"}, {"c", "d", std::nullopt, "z w"}}, {});
    const auto top = index.retrieve_topk(q("x"), 5, {});
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0].score, top[1].score);
    EXPECT_EQ(top[0].article_id, "a");
    EXPECT_EQ(top[1].article_id, "b");
}

TEST(Quickview, RetrievalMatchesPointwiseScores) {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 20; ++round) {
        const auto rc = random_corpus(rng, 40, 10);
        const auto index = LexIndex::build(rc.articles, {});
        for (const auto& query : rc.queries) {
            const auto top = index.retrieve_topk(query, rc.articles.size(), {1.5, 1.0});
            for (const auto& c : top) ASSERT_EQ(c.score, index.quickview_score(query, c.article_id, {1.5, 1.0}));
            std::size_t positive = 0;
            for (const auto& a : rc.articles) positive += index.quickview_score(query, a.article_id, {1.5, 1.0}) > 0.0;
            ASSERT_EQ(top.size(), positive);
        }
    }
}

TEST(Quickview, PrefixProperty) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 30; ++round) {
        const auto rc = random_corpus(rng, 50, 10);
        const auto index = LexIndex::build(rc.articles, {});
        for (const auto& query : rc.queries) {
            const auto longer = index.retrieve_topk(query, 20, {});
            for (std::size_t k = 1; k <= 20; ++k) {
                const auto shorter = index.retrieve_topk(query, k, {});
                ASSERT_LE(shorter.size(), k);
                ASSERT_TRUE(std::equal(shorter.begin(), shorter.end(), longer.begin()));
            }
        }
    }
}

TEST(Quickview, ScalingDoublesScoresKeepsOrder) {
    std::mt19937_64 rng(6);
    for (int round = 0; round < 30; ++round) {
        const auto rc = random_corpus(rng, 50, 10);
        const auto index = LexIndex::build(rc.articles, {});
        std::uniform_real_distribution<double> w(0.1, 3.0);
        const QuickviewConfig base{w(rng), w(rng)};
        const QuickviewConfig doubled{2 * base.alpha, 2 * base.beta};
        for (const auto& query : rc.queries) {
            const auto a = index.retrieve_topk(query, 100, base);
            const auto b = index.retrieve_topk(query, 100, doubled);
            ASSERT_EQ(a.size(), b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                ASSERT_EQ(a[i].article_id, b[i].article_id);
                ASSERT_NEAR(b[i].score, 2.0 * a[i].score, 1e-12 * std::max(1.0, a[i].score));
            }
        }
    }
}

TEST(LexIndex, AddingQueryTermOccurrenceNeverLowersScore) {
    const auto base = three_articles();
    for (const char* term : {"bồi", "thiệt", "hợp", "bên"}) {
        for (std::size_t i = 0; i < base.size(); ++i) {
            auto grown = base;
            grown[i].content += std::string(" ") + term;
            const auto before = LexIndex::build(base, {});
            const auto after = LexIndex::build(grown, {});
            EXPECT_GE(after.bm25(Field::content, q(term), base[i].article_id),
                      before.bm25(Field::content, q(term), base[i].article_id))
                << term << " in " << base[i].article_id;
        }
    }
}

TEST(LexIndex, SaveLoadRoundTrip) {
    std::mt19937_64 rng(8);
    const auto rc = random_corpus(rng, 30, 10);
    const auto index = LexIndex::build(rc.articles, {});
    std::stringstream buf;
    index.save(buf);
    const std::string bytes = buf.str();
    const auto loaded = LexIndex::load(buf, TokenizerConfig{}.fingerprint());

    std::stringstream again;
    loaded.save(again);
    EXPECT_EQ(again.str(), bytes);
    for (const auto& query : rc.queries) EXPECT_EQ(index.retrieve_topk(query, 10, {}), loaded.retrieve_topk(query, 10, {}));

    std::stringstream mismatch(bytes);
    EXPECT_THROW(LexIndex::load(mismatch, "phrase_merge:0000"), Error);
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(LexIndex::load(truncated, TokenizerConfig{}.fingerprint()), Error);
}
