#pragma once

// Statute corpus model: documents, articles, text cleaning, tokenization and
// sentence segmentation.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <json.hpp>

#include "lexqa/error.hpp"
#include "lexqa/hashing.hpp"

namespace lexqa {

/// One numbered provision of a statute. `content` is kept raw so that
/// sentence splitting still sees the original punctuation.
struct Article {
    std::string article_id;
    std::string doc_id;
    std::optional<std::string> title;
    std::string content;
};

struct LegalDocument {
    std::string doc_id;
    std::vector<Article> articles;
};

enum class TokenizerMode { whitespace, whitespace_with_phrase_merge };

struct TokenizerConfig {
    TokenizerMode mode = TokenizerMode::whitespace;
    /// Cleaned, space separated phrases ("bộ luật"). Required in merge mode.
    std::optional<std::set<std::string>> phrase_lexicon;

    void validate() const {
        const bool merge = mode == TokenizerMode::whitespace_with_phrase_merge;
        if (merge != phrase_lexicon.has_value()) {
            throw Error("tokenizer: phrase lexicon is required exactly when phrase merging is enabled");
        }
    }

    /// Stable identity of the analyzer; persisted next to every index.
    std::string fingerprint() const {
        if (mode == TokenizerMode::whitespace) return "whitespace";
        std::uint64_t h = kFnvOffset;
        for (const auto& phrase : *phrase_lexicon) {
            h = fnv1a(phrase, h);
            h = fnv1a("\n", h);
        }
        return "phrase_merge:" + to_hex(h);
    }
};

/// Joins the tokens of a merged phrase. Never survives clean_text, so merged
/// tokens cannot collide with ordinary ones.
inline constexpr char kPhraseJoiner = '_';

/// NFC-normalizes, keeps letters (any script) and decimal digits lowercased,
/// and collapses every run of anything else into a single space.
inline std::string clean_text(std::string_view raw) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    icu::UnicodeString text = icu::UnicodeString::fromUTF8(
        icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
    if (U_SUCCESS(status)) {
        icu::UnicodeString normalized = nfc->normalize(text, status);
        if (U_SUCCESS(status)) text = std::move(normalized);
    }

    icu::UnicodeString out;
    bool pending_space = false;
    for (int32_t i = 0; i < text.length(); i = text.moveIndex32(i, 1)) {
        const UChar32 c = text.char32At(i);
        if (u_isalpha(c) || u_isdigit(c)) {
            if (pending_space && !out.isEmpty()) out.append(static_cast<UChar>(u' '));
            pending_space = false;
            out.append(u_tolower(c));
        } else {
            pending_space = true;
        }
    }
    std::string result;
    out.toUTF8String(result);
    return result;
}

namespace detail {

inline std::vector<std::string> split_spaces(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != ' ') ++pos;
        if (pos > start) out.emplace_back(text.substr(start, pos - start));
    }
    return out;
}

}  // namespace detail

/// Splits cleaned text on spaces. In phrase-merge mode adjacent tokens that
/// form a lexicon phrase are joined, greedy longest match from the left.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<std::string> tokens = detail::split_spaces(text);
    if (cfg.mode == TokenizerMode::whitespace || !cfg.phrase_lexicon || cfg.phrase_lexicon->empty()) {
        return tokens;
    }

    std::size_t longest = 0;
    for (const auto& phrase : *cfg.phrase_lexicon) {
        longest = std::max(longest, detail::split_spaces(phrase).size());
    }

    std::vector<std::string> merged;
    merged.reserve(tokens.size());
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::size_t taken = 1;
        for (std::size_t len = std::min(longest, tokens.size() - i); len >= 2; --len) {
            std::string candidate = tokens[i];
            for (std::size_t j = 1; j < len; ++j) candidate += ' ' + tokens[i + j];
            if (cfg.phrase_lexicon->contains(candidate)) {
                std::replace(candidate.begin(), candidate.end(), ' ', kPhraseJoiner);
                merged.push_back(std::move(candidate));
                taken = len;
                break;
            }
        }
        if (taken == 1) merged.push_back(std::move(tokens[i]));
        i += taken;
    }
    return merged;
}

inline std::vector<std::string> analyze(std::string_view raw, const TokenizerConfig& cfg) {
    return tokenize(clean_text(raw), cfg);
}

inline bool is_sentence_delimiter(char c) {
    return c == '.' || c == ';' || c == '?' || c == '!' || c == '\n';
}

/// Splits raw article content into trimmed, non-empty sentences.
inline std::vector<std::string> split_sentences(std::string_view content) {
    constexpr std::string_view kBlank = " \t\r\f\v";
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= content.size(); ++i) {
        if (i < content.size() && !is_sentence_delimiter(content[i])) continue;
        std::string_view segment = content.substr(start, i - start);
        const auto first = segment.find_first_not_of(kBlank);
        if (first != std::string_view::npos) {
            const auto last = segment.find_last_not_of(kBlank);
            out.emplace_back(segment.substr(first, last - first + 1));
        }
        start = i + 1;
    }
    return out;
}

struct ParseStats {
    std::size_t documents = 0;
    std::size_t articles = 0;
    std::size_t titled = 0;
    std::size_t missing_title = 0;
    /// Articles whose content cleaned to nothing.
    std::size_t dropped_articles = 0;
};

struct ParsedCorpus {
    std::vector<LegalDocument> documents;
    ParseStats stats;

    std::vector<Article> articles() const {
        std::vector<Article> out;
        for (const auto& doc : documents) out.insert(out.end(), doc.articles.begin(), doc.articles.end());
        return out;
    }
};

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw ParseError(line, std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
}

}  // namespace detail

/// Reads the JSON-lines corpus format. Blank lines are skipped.
inline ParsedCorpus parse_corpus(std::istream& in) {
    ParsedCorpus result;
    std::unordered_set<std::string> doc_ids;
    std::unordered_set<std::string> article_ids;
    std::string line;
    std::size_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!record.is_object()) throw ParseError(line_no, "record must be a JSON object");

        LegalDocument doc;
        doc.doc_id = detail::require_string(record, "doc_id", line_no);
        if (doc.doc_id.empty()) throw ParseError(line_no, "empty doc_id");
        if (!doc_ids.insert(doc.doc_id).second) {
            throw ParseError(line_no, "duplicate doc id '" + doc.doc_id + "'");
        }

        auto arts = record.find("articles");
        if (arts == record.end() || !arts->is_array()) throw ParseError(line_no, "field 'articles' must be an array");

        for (const auto& a : *arts) {
            if (!a.is_object()) throw ParseError(line_no, "article must be a JSON object");
            Article article;
            article.doc_id = doc.doc_id;
            article.article_id = detail::require_string(a, "article_id", line_no);
            if (article.article_id.empty()) throw ParseError(line_no, "empty article_id");
            article.content = detail::require_string(a, "content", line_no);
            if (auto t = a.find("title"); t != a.end() && !t->is_null()) {
                if (!t->is_string()) throw ParseError(line_no, "field 'title' must be a string or null");
                article.title = t->get<std::string>();
            }

            if (!article_ids.insert(article.article_id).second) {
                throw ParseError(line_no, "duplicate article id '" + article.article_id + "'");
            }
            if (clean_text(article.content).empty()) {
                ++result.stats.dropped_articles;
                continue;
            }
            if (article.title && clean_text(*article.title).empty()) article.title.reset();

            ++result.stats.articles;
            ++(article.title ? result.stats.titled : result.stats.missing_title);
            doc.articles.push_back(std::move(article));
        }
        result.documents.push_back(std::move(doc));
        ++result.stats.documents;
    }
    return result;
}

/// Id-keyed view over a flat article list.
class ArticleStore {
public:
    ArticleStore() = default;

    explicit ArticleStore(std::vector<Article> articles) : articles_(std::move(articles)) {
        for (std::size_t i = 0; i < articles_.size(); ++i) {
            if (!by_id_.emplace(articles_[i].article_id, i).second) {
                throw Error("duplicate article id '" + articles_[i].article_id + "'");
            }
        }
    }

    const std::vector<Article>& articles() const noexcept { return articles_; }
    std::size_t size() const noexcept { return articles_.size(); }

    const Article* find(std::string_view id) const {
        auto it = by_id_.find(std::string(id));
        return it == by_id_.end() ? nullptr : &articles_[it->second];
    }

    const Article& at(std::string_view id) const {
        if (const Article* a = find(id)) return *a;
        throw Error("unknown article id '" + std::string(id) + "'");
    }

private:
    std::vector<Article> articles_;
    std::map<std::string, std::size_t> by_id_;
};

}  // namespace lexqa
