#pragma once

// Weakly labelled training pairs: every titled article yields its cleaned
// title as a question with the article as the positive answer, plus randomly
// sampled negative articles.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/error.hpp"
#include "lexqa/queries.hpp"

namespace lexqa {

enum class Origin { gold, weak };

inline const char* to_string(Origin o) { return o == Origin::gold ? "gold" : "weak"; }

struct TrainingExample {
    std::string question;
    std::string article_id;
    int label = 0;
    Origin origin = Origin::weak;

    friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

struct WeakGenConfig {
    std::size_t negative_ratio = 4;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (negative_ratio < 1) throw Error("negative_ratio must be >= 1");
    }
};

/// Draws `count` distinct article ordinals uniformly at random from
/// [0, pool), skipping the excluded ones. Draw order is kept.
inline std::vector<std::size_t> sample_negatives(std::size_t pool, const std::unordered_set<std::size_t>& excluded,
                                                 std::size_t count, std::mt19937_64& rng) {
    if (pool < excluded.size() + count) throw Error("not enough articles to sample negatives from");
    std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
    std::unordered_set<std::size_t> taken;
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        const std::size_t cand = pick(rng);
        if (excluded.contains(cand) || !taken.insert(cand).second) continue;
        out.push_back(cand);
    }
    return out;
}

inline std::vector<TrainingExample> generate_weak_dataset(std::span<const Article> articles, const WeakGenConfig& cfg) {
    cfg.validate();
    if (articles.size() < cfg.negative_ratio + 1) {
        throw Error("corpus has " + std::to_string(articles.size()) + " articles; need at least " +
                    std::to_string(cfg.negative_ratio + 1) + " for negative sampling");
    }
    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        const Article& a = articles[i];
        if (!a.title) continue;
        std::string question = clean_text(*a.title);
        if (question.empty()) continue;
        out.push_back({question, a.article_id, 1, Origin::weak});
        for (std::size_t j : sample_negatives(articles.size(), {i}, cfg.negative_ratio, rng)) {
            out.push_back({question, articles[j].article_id, 0, Origin::weak});
        }
    }
    return out;
}

/// Gold pairs: one positive per (question, relevant article) and
/// `negative_ratio` sampled negatives per positive, none of them relevant.
inline std::vector<TrainingExample> make_gold_dataset(std::span<const GoldQuery> queries,
                                                      std::span<const Article> articles, const WeakGenConfig& cfg) {
    cfg.validate();
    std::map<std::string_view, std::size_t> ordinal;
    for (std::size_t i = 0; i < articles.size(); ++i) ordinal.emplace(articles[i].article_id, i);

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<TrainingExample> out;
    for (const auto& q : queries) {
        std::unordered_set<std::size_t> relevant;
        for (const auto& id : q.gold_article_ids) {
            auto it = ordinal.find(id);
            if (it == ordinal.end()) throw Error("query '" + q.question_id + "' references unknown article '" + id + "'");
            relevant.insert(it->second);
            out.push_back({q.question, id, 1, Origin::gold});
        }
        const std::size_t wanted = cfg.negative_ratio * relevant.size();
        for (std::size_t j : sample_negatives(articles.size(), relevant, wanted, rng)) {
            out.push_back({q.question, articles[j].article_id, 0, Origin::gold});
        }
    }
    return out;
}

struct DatasetStats {
    std::size_t total = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    /// negatives / positives, 0 when there are no positives.
    double ratio = 0.0;
    /// Occurrences of a (question, article) pair beyond its first.
    std::size_t duplicate_pairs = 0;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

inline DatasetStats dataset_stats(std::span<const TrainingExample> examples) {
    DatasetStats s;
    std::map<std::pair<std::string_view, std::string_view>, std::size_t> seen;
    for (const auto& e : examples) {
        ++s.total;
        ++(e.label == 1 ? s.positives : s.negatives);
        if (seen[{e.question, e.article_id}]++ > 0) ++s.duplicate_pairs;
    }
    s.ratio = s.positives ? static_cast<double>(s.negatives) / static_cast<double>(s.positives) : 0.0;
    return s;
}

inline void write_dataset(std::ostream& out, std::span<const TrainingExample> examples) {
    for (const auto& e : examples) {
        out << nlohmann::json{{"question", e.question},
                              {"article_id", e.article_id},
                              {"label", e.label},
                              {"origin", to_string(e.origin)}}
                   .dump()
            << '\n';
    }
}

inline std::vector<TrainingExample> read_dataset(std::istream& in) {
    std::vector<TrainingExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            TrainingExample e;
            e.question = j.at("question").get<std::string>();
            e.article_id = j.at("article_id").get<std::string>();
            e.label = j.at("label").get<int>();
            if (e.label != 0 && e.label != 1) throw ParseError(line_no, "label must be 0 or 1");
            const auto origin = j.at("origin").get<std::string>();
            if (origin == "gold") {
                e.origin = Origin::gold;
            } else if (origin == "weak") {
                e.origin = Origin::weak;
            } else {
                throw ParseError(line_no, "origin must be \"gold\" or \"weak\"");
            }
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("malformed training example: ") + e.what());
        }
    }
    return out;
}

}  // namespace lexqa
