#pragma once

// Retrieve-then-rerank answer selection: quickview candidates, supervised
// scores, per-query min-max normalization, gamma-weighted fusion and the
// threshold rule around the top candidate.

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/dense_index.hpp"
#include "lexqa/error.hpp"
#include "lexqa/lexical_index.hpp"
#include "lexqa/reranker.hpp"

namespace lexqa {

struct RankedCandidate {
    std::string article_id;
    double qs_raw = 0.0;
    double qs_norm = 0.0;
    double ss_raw = 0.0;
    double ss_norm = 0.0;
    double combined = 0.0;

    friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

struct EnsembleConfig {
    double gamma = 0.5;
    std::size_t top_k = 200;
    double threshold = 0.26;

    /// Tuned threshold per candidate-list size. Sizes between table entries
    /// use the entry of the next smaller size.
    static double default_threshold(std::size_t top_k) {
        static const std::map<std::size_t, double> table{
            {20, 0.38}, {50, 0.28}, {100, 0.26}, {200, 0.26}, {500, 0.25}, {1000, 0.2}};
        auto it = table.upper_bound(top_k);
        if (it == table.begin()) return table.begin()->second;
        return std::prev(it)->second;
    }

    static EnsembleConfig for_top_k(std::size_t top_k, double gamma = 0.5) {
        return {gamma, top_k, default_threshold(top_k)};
    }

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must lie in [0, 1]");
        if (!(threshold >= 0.0)) throw Error("threshold must be >= 0");
        if (top_k < 1) throw Error("top_k must be >= 1");
    }
};

struct AnswerSet {
    std::string question_id;
    /// Selected answers, combined score descending.
    std::vector<RankedCandidate> returned;
    /// Every fused candidate, combined score descending.
    std::vector<RankedCandidate> ranked;
    /// Quickview found nothing; distinct from a selection of size one.
    bool no_candidates = false;
};

/// (s - min) / (max - min); a constant list maps to all 1.0.
inline std::vector<double> minmax_normalize(std::span<const double> scores) {
    if (scores.empty()) throw Error("minmax_normalize: empty input");
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double min = *lo;
    const double range = *hi - min;
    std::vector<double> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(range > 0.0 ? (s - min) / range : 1.0);
    return out;
}

inline double combine(double qs_norm, double ss_norm, double gamma) {
    // Clamp absorbs a possible last-ulp overshoot of 1.0.
    return std::clamp(gamma * qs_norm + (1.0 - gamma) * ss_norm, 0.0, 1.0);
}

inline void sort_by_combined(std::vector<RankedCandidate>& c) {
    std::sort(c.begin(), c.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.combined != b.combined) return a.combined > b.combined;
        return a.article_id < b.article_id;
    });
}

/// Normalizes both score lists over the candidate list, fuses them and sorts.
inline std::vector<RankedCandidate> fuse(std::span<const std::string> ids, std::span<const double> qs,
                                         std::span<const double> ss, double gamma) {
    if (ids.size() != qs.size() || ids.size() != ss.size()) throw Error("fuse: length mismatch");
    if (ids.empty()) return {};
    const auto qn = minmax_normalize(qs);
    const auto sn = minmax_normalize(ss);
    std::vector<RankedCandidate> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], qs[i], qn[i], ss[i], sn[i], combine(qn[i], sn[i], gamma)});
    sort_by_combined(out);
    return out;
}

/// Keeps every candidate whose combined score is strictly within `threshold`
/// of the first (top) one. The top candidate is always kept.
inline std::vector<RankedCandidate> select_answers(std::span<const RankedCandidate> sorted, double threshold) {
    std::vector<RankedCandidate> out;
    if (sorted.empty()) return out;
    const double top = sorted.front().combined;
    out.push_back(sorted.front());
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (top - sorted[i].combined < threshold) out.push_back(sorted[i]);
    }
    return out;
}

/// First-stage retriever: fielded BM25 (default) or dense max-cosine.
class QuickviewRetriever {
public:
    struct Lexical {
        const LexIndex* index;
        QuickviewConfig weights;
    };
    struct Dense {
        const DenseIndex* index;
        const Embedder* embedder;
    };

    QuickviewRetriever(const LexIndex& index, QuickviewConfig weights, TokenizerConfig tok)
        : source_(Lexical{&index, weights}), tok_(std::move(tok)) {
        weights.validate();
    }

    QuickviewRetriever(const DenseIndex& index, const Embedder& embedder, TokenizerConfig tok)
        : source_(Dense{&index, &embedder}), tok_(std::move(tok)) {
        index.check_embedder(embedder);
    }

    std::vector<ScoredArticle> retrieve(std::string_view question, std::size_t k) const {
        const auto tokens = analyze(question, tok_);
        if (const auto* lex = std::get_if<Lexical>(&source_)) return lex->index->retrieve_topk(tokens, k, lex->weights);
        const auto& dense = std::get<Dense>(source_);
        return dense.index->retrieve_topk(dense.embedder->embed(tokens), k);
    }

private:
    std::variant<Lexical, Dense> source_;
    TokenizerConfig tok_;
};

inline AnswerSet rank_and_select(std::string_view question_id, std::string_view question,
                                 const QuickviewRetriever& quickview, const RelevanceScorer& scorer,
                                 const EnsembleConfig& cfg) {
    cfg.validate();
    AnswerSet answer;
    answer.question_id = question_id;
    const auto candidates = quickview.retrieve(question, cfg.top_k);
    if (candidates.empty()) {
        answer.no_candidates = true;
        return answer;
    }
    std::vector<std::string> ids;
    std::vector<double> qs;
    for (const auto& c : candidates) {
        ids.push_back(c.article_id);
        qs.push_back(c.score);
    }
    std::vector<double> ss;
    for (const auto& s : score_candidates(scorer, question, ids)) ss.push_back(s.score);

    answer.ranked = fuse(ids, qs, ss, cfg.gamma);
    answer.returned = select_answers(answer.ranked, cfg.threshold);
    return answer;
}

/// Query-result line: qs and ss are the normalized scores that enter the
/// combination.
inline nlohmann::json to_json(const AnswerSet& a) {
    nlohmann::json returned = nlohmann::json::array();
    for (const auto& c : a.returned) {
        returned.push_back({{"article_id", c.article_id}, {"qs", c.qs_norm}, {"ss", c.ss_norm}, {"combined", c.combined}});
    }
    return {{"question_id", a.question_id}, {"returned", std::move(returned)}};
}

}  // namespace lexqa
