#pragma once

// Retrieval and end-to-end metrics plus the evaluation driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexqa/ensemble.hpp"
#include "lexqa/error.hpp"
#include "lexqa/queries.hpp"

namespace lexqa {

/// |top-k ∩ gold| / |gold| for one query.
inline double recall_at_k(std::span<const std::string> ranked, const std::set<std::string>& gold, std::size_t k) {
    if (k < 1) throw Error("recall_at_k: k must be >= 1");
    if (gold.empty()) throw Error("recall_at_k: empty gold set");
    std::set<std::string_view> seen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
        if (gold.contains(ranked[i]) && seen.insert(ranked[i]).second) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

inline PrecisionRecall precision_recall(std::span<const std::string> returned, const std::set<std::string>& gold) {
    if (gold.empty()) throw Error("precision_recall: empty gold set");
    const std::set<std::string> unique(returned.begin(), returned.end());
    std::size_t hits = 0;
    for (const auto& id : unique) hits += gold.contains(id);
    PrecisionRecall pr;
    pr.precision = unique.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(unique.size());
    pr.recall = static_cast<double>(hits) / static_cast<double>(gold.size());
    return pr;
}

inline PrecisionRecall precision_recall(const AnswerSet& answer, const std::set<std::string>& gold) {
    std::vector<std::string> ids;
    for (const auto& c : answer.returned) ids.push_back(c.article_id);
    return precision_recall(ids, gold);
}

/// F-beta with beta = 2, from dataset-mean precision and recall.
inline double f2(double mean_precision, double mean_recall) {
    const double denom = 4.0 * mean_precision + mean_recall;
    if (denom == 0.0) return 0.0;
    return 5.0 * mean_precision * mean_recall / denom;
}

/// Seeded shuffle, then the first round(ratio * n) queries (clamped to
/// [1, n - 1]) go to training.
inline std::pair<std::vector<GoldQuery>, std::vector<GoldQuery>> split_train_valid(std::span<const GoldQuery> queries,
                                                                                   double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must lie in (0, 1)");
    if (queries.size() < 2) throw Error("need at least 2 queries to split");
    std::vector<GoldQuery> shuffled(queries.begin(), queries.end());
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(shuffled.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, shuffled.size() - 1);
    std::vector<GoldQuery> valid(std::make_move_iterator(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train)),
                                 std::make_move_iterator(shuffled.end()));
    shuffled.resize(n_train);
    return {std::move(shuffled), std::move(valid)};
}

struct QueryOutcome {
    std::string question_id;
    std::map<std::size_t, double> recall_at_k;
    std::optional<PrecisionRecall> end_to_end;
    std::vector<std::string> returned;
    double latency_ms = 0.0;
    std::optional<std::string> error;
};

struct EvalReport {
    std::map<std::size_t, double> recall_at_k;
    std::optional<double> mean_precision;
    std::optional<double> mean_recall;
    std::optional<double> f2;
    double mean_latency_ms = 0.0;
    std::size_t queries = 0;
    std::size_t failed = 0;
    std::vector<QueryOutcome> per_query;

    nlohmann::json to_json(bool include_latency = true) const {
        using nlohmann::json;
        json recall = json::object();
        for (const auto& [k, r] : recall_at_k) recall[std::to_string(k)] = r;
        json rows = json::array();
        for (const auto& q : per_query) {
            json row{{"question_id", q.question_id}};
            json rk = json::object();
            for (const auto& [k, r] : q.recall_at_k) rk[std::to_string(k)] = r;
            row["recall_at_k"] = rk;
            if (q.end_to_end) {
                row["precision"] = q.end_to_end->precision;
                row["recall"] = q.end_to_end->recall;
                row["returned"] = q.returned;
            }
            if (include_latency) row["latency_ms"] = q.latency_ms;
            if (q.error) row["error"] = *q.error;
            rows.push_back(std::move(row));
        }
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        json out{{"queries", queries},
                 {"failed", failed},
                 {"recall_at_k", recall},
                 {"precision", opt(mean_precision)},
                 {"recall", opt(mean_recall)},
                 {"f2", opt(f2)},
                 {"per_query", rows}};
        if (include_latency) out["mean_latency_ms"] = mean_latency_ms;
        return out;
    }
};

struct EvalConfig {
    std::vector<std::size_t> k_values{50, 100, 200};
    bool quickview = true;
    /// Requires a scorer.
    bool end_to_end = true;
    EnsembleConfig ensemble;
};

/// Evaluates every query; a failing query is recorded and skipped in the
/// aggregates.
inline EvalReport run_eval(std::span<const GoldQuery> queries, const QuickviewRetriever& quickview,
                           const RelevanceScorer* scorer, const EvalConfig& cfg) {
    if (cfg.end_to_end && !scorer) throw Error("end-to-end evaluation needs a relevance scorer");
    if (cfg.quickview && cfg.k_values.empty()) throw Error("quickview evaluation needs at least one k");
    const std::size_t max_k =
        cfg.k_values.empty() ? 1 : *std::max_element(cfg.k_values.begin(), cfg.k_values.end());

    EvalReport report;
    report.queries = queries.size();
    double precision_sum = 0.0;
    double recall_sum = 0.0;
    double latency_sum = 0.0;
    std::map<std::size_t, double> recall_sums;

    for (const auto& q : queries) {
        QueryOutcome outcome;
        outcome.question_id = q.question_id;
        const auto start = std::chrono::steady_clock::now();
        try {
            if (cfg.quickview) {
                // Shorter lists are prefixes of the longest one.
                std::vector<std::string> ranked;
                for (const auto& c : quickview.retrieve(q.question, max_k)) ranked.push_back(c.article_id);
                for (std::size_t k : cfg.k_values) outcome.recall_at_k[k] = recall_at_k(ranked, q.gold_article_ids, k);
            }
            if (cfg.end_to_end) {
                const AnswerSet answer = rank_and_select(q.question_id, q.question, quickview, *scorer, cfg.ensemble);
                outcome.end_to_end = precision_recall(answer, q.gold_article_ids);
                for (const auto& c : answer.returned) outcome.returned.push_back(c.article_id);
            }
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        outcome.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        if (outcome.error) {
            ++report.failed;
        } else {
            for (const auto& [k, r] : outcome.recall_at_k) recall_sums[k] += r;
            if (outcome.end_to_end) {
                precision_sum += outcome.end_to_end->precision;
                recall_sum += outcome.end_to_end->recall;
            }
            latency_sum += outcome.latency_ms;
        }
        report.per_query.push_back(std::move(outcome));
    }

    const std::size_t ok = report.queries - report.failed;
    if (ok > 0) {
        const double n = static_cast<double>(ok);
        for (std::size_t k : cfg.k_values) {
            if (cfg.quickview) report.recall_at_k[k] = recall_sums[k] / n;
        }
        if (cfg.end_to_end) {
            report.mean_precision = precision_sum / n;
            report.mean_recall = recall_sum / n;
            report.f2 = f2(*report.mean_precision, *report.mean_recall);
        }
        report.mean_latency_ms = latency_sum / n;
    }
    return report;
}

}  // namespace lexqa
