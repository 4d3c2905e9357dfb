#pragma once

// Fielded inverted index (title, content) scored with Okapi BM25, and the
// boosted two-field "quickview" combination used for candidate retrieval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/error.hpp"
#include "lexqa/hashing.hpp"

namespace lexqa {

enum class Field { title, content };

inline const char* to_string(Field f) { return f == Field::title ? "title" : "content"; }

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    void validate() const {
        if (!(k1 >= 0.0) || !(b >= 0.0 && b <= 1.0)) throw Error("bm25: require k1 >= 0 and 0 <= b <= 1");
    }
};

/// Boosting weights for the title and content BM25 scores.
struct QuickviewConfig {
    double alpha = 1.5;
    double beta = 1.0;

    void validate() const {
        if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
            throw Error("quickview: require alpha, beta >= 0 and alpha + beta > 0");
        }
    }
};

struct ScoredArticle {
    std::string article_id;
    double score = 0.0;

    friend bool operator==(const ScoredArticle&, const ScoredArticle&) = default;
};

/// Descending score, ascending id on ties.
inline void sort_ranked(std::vector<ScoredArticle>& ranked) {
    std::sort(ranked.begin(), ranked.end(), [](const ScoredArticle& a, const ScoredArticle& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.article_id < b.article_id;
    });
}

struct Posting {
    std::uint32_t doc;  // article ordinal
    std::uint32_t tf;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// Postings and length statistics for one field. Lengths are indexed by
/// article ordinal; 0 means the article has no such field.
class FieldIndex {
public:
    std::size_t doc_count() const noexcept { return doc_count_; }
    double avgdl() const noexcept { return avgdl_; }
    std::uint32_t doc_len(std::uint32_t doc) const { return doc_len_.at(doc); }
    const std::map<std::string, std::vector<Posting>>& postings() const noexcept { return postings_; }

    const std::vector<Posting>* find(const std::string& term) const {
        auto it = postings_.find(term);
        return it == postings_.end() ? nullptr : &it->second;
    }

    /// Number of field-documents containing `term`.
    std::size_t doc_freq(const std::string& term) const {
        const auto* list = find(term);
        return list ? list->size() : 0;
    }

    std::uint32_t term_freq(const std::string& term, std::uint32_t doc) const {
        const auto* list = find(term);
        if (!list) return 0;
        auto it = std::lower_bound(list->begin(), list->end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        return it != list->end() && it->doc == doc ? it->tf : 0;
    }

private:
    friend class LexIndex;

    void add(std::uint32_t doc, const std::vector<std::string>& tokens) {
        doc_len_[doc] = static_cast<std::uint32_t>(tokens.size());
        std::map<std::string_view, std::uint32_t> counts;
        for (const auto& t : tokens) ++counts[t];
        for (const auto& [term, tf] : counts) postings_[std::string(term)].push_back({doc, tf});
    }

    void finish() {
        doc_count_ = 0;
        double total = 0.0;
        for (auto len : doc_len_) {
            if (len == 0) continue;
            ++doc_count_;
            total += len;
        }
        avgdl_ = doc_count_ ? total / static_cast<double>(doc_count_) : 0.0;
    }

    std::size_t doc_count_ = 0;
    double avgdl_ = 0.0;
    std::vector<std::uint32_t> doc_len_;
    std::map<std::string, std::vector<Posting>> postings_;
};

/// Immutable after build; safe for concurrent readers.
class LexIndex {
public:
    static constexpr int kFormatVersion = 1;

    static LexIndex build(std::span<const Article> articles, const TokenizerConfig& tok, Bm25Params params = {}) {
        tok.validate();
        params.validate();
        if (articles.empty()) throw Error("empty corpus");

        LexIndex index;
        index.params_ = params;
        index.tokenizer_ = tok.fingerprint();
        index.title_.doc_len_.assign(articles.size(), 0);
        index.content_.doc_len_.assign(articles.size(), 0);

        for (std::uint32_t ord = 0; ord < articles.size(); ++ord) {
            const Article& a = articles[ord];
            if (!index.ordinal_.emplace(a.article_id, ord).second) {
                throw Error("duplicate article id '" + a.article_id + "'");
            }
            index.ids_.push_back(a.article_id);
            if (a.title) {
                auto tokens = analyze(*a.title, tok);
                if (!tokens.empty()) index.title_.add(ord, tokens);
            }
            auto tokens = analyze(a.content, tok);
            if (tokens.empty()) throw Error("article '" + a.article_id + "' has no content tokens");
            index.content_.add(ord, tokens);
        }
        index.title_.finish();
        index.content_.finish();
        return index;
    }

    const Bm25Params& params() const noexcept { return params_; }
    const std::string& tokenizer_fingerprint() const noexcept { return tokenizer_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& article_ids() const noexcept { return ids_; }
    const FieldIndex& field(Field f) const noexcept { return f == Field::title ? title_ : content_; }

    std::optional<std::uint32_t> ordinal(std::string_view id) const {
        auto it = ordinal_.find(std::string(id));
        if (it == ordinal_.end()) return std::nullopt;
        return it->second;
    }

    /// Field length of an article in tokens, or nullopt when the article has
    /// no such field (untitled) or is unknown.
    std::optional<std::uint32_t> doc_len(Field f, std::string_view id) const {
        auto ord = ordinal(id);
        if (!ord) return std::nullopt;
        auto len = field(f).doc_len(*ord);
        if (len == 0) return std::nullopt;
        return len;
    }

    /// ln(1 + (N - n + 0.5) / (n + 0.5)) with per-field N and n.
    double idf(Field f, const std::string& term) const {
        const FieldIndex& fi = field(f);
        const double n = static_cast<double>(fi.doc_freq(term));
        const double big_n = static_cast<double>(fi.doc_count());
        return std::log(1.0 + (big_n - n + 0.5) / (n + 0.5));
    }

    double bm25(Field f, std::span<const std::string> query, std::string_view article_id) const {
        auto ord = ordinal(article_id);
        if (!ord) return 0.0;
        return bm25(f, query, *ord);
    }

    double bm25(Field f, std::span<const std::string> query, std::uint32_t ord) const {
        const FieldIndex& fi = field(f);
        const std::uint32_t len = fi.doc_len(ord);
        if (len == 0) return 0.0;
        const double norm = length_norm(fi, len);
        double score = 0.0;
        for (const auto& term : query) {
            const std::uint32_t tf = fi.term_freq(term, ord);
            if (tf == 0) continue;
            score += term_weight(f, term, tf, norm);
        }
        return score;
    }

    double quickview_score(std::span<const std::string> query, std::string_view article_id,
                           const QuickviewConfig& cfg) const {
        return cfg.alpha * bm25(Field::title, query, article_id) +
               cfg.beta * bm25(Field::content, query, article_id);
    }

    /// Top-k articles by quickview score; only positive scores are returned.
    std::vector<ScoredArticle> retrieve_topk(std::span<const std::string> query, std::size_t k,
                                             const QuickviewConfig& cfg) const {
        if (k == 0) throw Error("retrieve_topk: k must be >= 1");
        // Term-at-a-time accumulation in query order reproduces bm25() sums exactly.
        std::vector<double> title_acc(ids_.size(), 0.0);
        std::vector<double> content_acc(ids_.size(), 0.0);
        accumulate(Field::title, query, title_acc);
        accumulate(Field::content, query, content_acc);

        std::vector<ScoredArticle> ranked;
        for (std::uint32_t ord = 0; ord < ids_.size(); ++ord) {
            const double s = cfg.alpha * title_acc[ord] + cfg.beta * content_acc[ord];
            if (s > 0.0) ranked.push_back({ids_[ord], s});
        }
        const auto keep = std::min(k, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                          [](const ScoredArticle& a, const ScoredArticle& b) {
                              if (a.score != b.score) return a.score > b.score;
                              return a.article_id < b.article_id;
                          });
        ranked.resize(keep);
        return ranked;
    }

    void save(std::ostream& out) const {
        using nlohmann::json;
        out << json{{"format", "lexqa-lexindex"},
                    {"version", kFormatVersion},
                    {"tokenizer", tokenizer_},
                    {"k1", params_.k1},
                    {"b", params_.b},
                    {"articles", ids_.size()}}
                   .dump()
            << '\n';
        for (std::uint32_t ord = 0; ord < ids_.size(); ++ord) {
            out << json::array({ids_[ord], title_.doc_len_[ord], content_.doc_len_[ord]}).dump() << '\n';
        }
        for (Field f : {Field::title, Field::content}) {
            const FieldIndex& fi = field(f);
            out << json{{"field", to_string(f)}, {"terms", fi.postings_.size()}}.dump() << '\n';
            for (const auto& [term, list] : fi.postings_) {
                json flat = json::array();
                for (const auto& p : list) {
                    flat.push_back(p.doc);
                    flat.push_back(p.tf);
                }
                out << json::array({term, std::move(flat)}).dump() << '\n';
            }
        }
    }

    /// Loads a saved index. The stored tokenizer fingerprint must match the
    /// analyzer the caller will query with.
    static LexIndex load(std::istream& in, const std::string& expected_tokenizer) {
        using nlohmann::json;
        std::size_t line_no = 0;
        auto next = [&]() {
            std::string line;
            if (!std::getline(in, line)) throw ParseError(line_no + 1, "lexical index truncated");
            ++line_no;
            try {
                return json::parse(line);
            } catch (const json::exception& e) {
                throw ParseError(line_no, std::string("lexical index: ") + e.what());
            }
        };

        try {
            json header = next();
            if (header.value("format", "") != "lexqa-lexindex") throw ParseError(1, "not a lexical index file");
            if (header.value("version", 0) != kFormatVersion) throw ParseError(1, "unsupported lexical index version");
            LexIndex index;
            index.tokenizer_ = header.at("tokenizer").get<std::string>();
            if (index.tokenizer_ != expected_tokenizer) {
                throw Error("lexical index tokenizer fingerprint mismatch: index has '" + index.tokenizer_ +
                            "', configured '" + expected_tokenizer + "'");
            }
            index.params_ = {header.at("k1").get<double>(), header.at("b").get<double>()};
            const auto n = header.at("articles").get<std::size_t>();
            index.title_.doc_len_.resize(n);
            index.content_.doc_len_.resize(n);
            for (std::uint32_t ord = 0; ord < n; ++ord) {
                json row = next();
                index.ids_.push_back(row.at(0).get<std::string>());
                index.ordinal_.emplace(index.ids_.back(), ord);
                index.title_.doc_len_[ord] = row.at(1).get<std::uint32_t>();
                index.content_.doc_len_[ord] = row.at(2).get<std::uint32_t>();
            }
            for (Field f : {Field::title, Field::content}) {
                json section = next();
                if (section.at("field").get<std::string>() != to_string(f)) {
                    throw ParseError(line_no, "unexpected field section");
                }
                FieldIndex& fi = f == Field::title ? index.title_ : index.content_;
                const auto terms = section.at("terms").get<std::size_t>();
                for (std::size_t i = 0; i < terms; ++i) {
                    json row = next();
                    const json& flat = row.at(1);
                    std::vector<Posting> list;
                    for (std::size_t j = 0; j + 1 < flat.size(); j += 2) {
                        list.push_back({flat[j].get<std::uint32_t>(), flat[j + 1].get<std::uint32_t>()});
                    }
                    fi.postings_.emplace(row.at(0).get<std::string>(), std::move(list));
                }
                fi.finish();
            }
            return index;
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("lexical index: ") + e.what());
        }
    }

    /// Digest of the serialized index.
    std::string fingerprint() const {
        std::ostringstream buf;
        save(buf);
        return to_hex(fnv1a(buf.str()));
    }

private:
    double length_norm(const FieldIndex& fi, std::uint32_t len) const {
        return params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(len) / fi.avgdl());
    }

    double term_weight(Field f, const std::string& term, std::uint32_t tf, double norm) const {
        const double ftf = static_cast<double>(tf);
        return idf(f, term) * (ftf * (params_.k1 + 1.0)) / (ftf + norm);
    }

    void accumulate(Field f, std::span<const std::string> query, std::vector<double>& acc) const {
        const FieldIndex& fi = field(f);
        for (const auto& term : query) {
            const auto* list = fi.find(term);
            if (!list) continue;
            for (const Posting& p : *list) {
                acc[p.doc] += term_weight(f, term, p.tf, length_norm(fi, fi.doc_len(p.doc)));
            }
        }
    }

    Bm25Params params_;
    std::string tokenizer_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::uint32_t> ordinal_;
    FieldIndex title_;
    FieldIndex content_;
};

}  // namespace lexqa
