#pragma once

// Sentence-level dense vectors. An article's dense quickview score is the
// best cosine between the question vector and any of its sentence vectors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/error.hpp"
#include "lexqa/hashing.hpp"
#include "lexqa/lexical_index.hpp"
#include "lexqa/subprocess.hpp"

namespace lexqa {

using Vector = std::vector<double>;

inline double dot(std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

/// Cosine similarity; 0 when either vector is all-zero.
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw Error("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
    }
    const double nu = std::sqrt(dot(u, u));
    const double nv = std::sqrt(dot(v, v));
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot(u, v) / (nu * nv);
}

/// Scales `v` to unit length in place; all-zero vectors stay zero.
inline void l2_normalize(Vector& v) {
    const double n = std::sqrt(dot(v, v));
    if (n == 0.0) return;
    for (double& x : v) x /= n;
}

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    /// Identifies the vector space; persisted with every dense index.
    virtual std::string fingerprint() const = 0;
    /// Returns an L2-normalized (or all-zero) vector.
    virtual Vector embed(std::span<const std::string> tokens) const = 0;

    virtual std::vector<Vector> embed_batch(const std::vector<std::vector<std::string>>& batch) const {
        std::vector<Vector> out;
        out.reserve(batch.size());
        for (const auto& tokens : batch) out.push_back(embed(tokens));
        return out;
    }
};

/// Feature-hashing embedder: every token becomes a signed unit basis vector
/// chosen by two seeded hashes; a text is the normalized mean of its tokens.
class HashedProjectionEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDefaultDimension = 300;

    explicit HashedProjectionEmbedder(std::size_t dimension = kDefaultDimension, std::uint64_t seed = 0)
        : dimension_(dimension), seed_(seed) {
        if (dimension_ == 0) throw Error("embedder dimension must be >= 1");
    }

    std::size_t dimension() const override { return dimension_; }

    std::string fingerprint() const override {
        return "hashed_projection:d=" + std::to_string(dimension_) + ":seed=" + std::to_string(seed_);
    }

    std::size_t coordinate(std::string_view token) const {
        return static_cast<std::size_t>(mix64(fnv1a(token) ^ mix64(seed_)) % dimension_);
    }

    double sign(std::string_view token) const {
        return (mix64(fnv1a(token) ^ mix64(~seed_)) >> 63) ? -1.0 : 1.0;
    }

    Vector embed(std::span<const std::string> tokens) const override {
        Vector v(dimension_, 0.0);
        if (tokens.empty()) return v;
        for (const auto& t : tokens) v[coordinate(t)] += sign(t);
        const double inv = 1.0 / static_cast<double>(tokens.size());
        for (double& x : v) x *= inv;
        l2_normalize(v);
        return v;
    }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Delegates to a child process speaking {"text": ...} -> {"vector": [...]}
/// JSON lines. The text sent is the analyzed token sequence joined by spaces.
class ExternalEmbedder final : public Embedder {
public:
    ExternalEmbedder(const std::string& command, std::size_t dimension,
                     std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : process_(std::make_unique<LineProcess>(command)), dimension_(dimension), timeout_(timeout) {
        if (dimension_ == 0) throw Error("embedder dimension must be >= 1");
    }

    std::size_t dimension() const override { return dimension_; }

    std::string fingerprint() const override {
        return "external:d=" + std::to_string(dimension_) + ":cmd=" + to_hex(fnv1a(process_->command()));
    }

    Vector embed(std::span<const std::string> tokens) const override {
        return embed_batch({std::vector<std::string>(tokens.begin(), tokens.end())}).front();
    }

    std::vector<Vector> embed_batch(const std::vector<std::vector<std::string>>& batch) const override {
        std::vector<std::string> requests;
        requests.reserve(batch.size());
        for (const auto& tokens : batch) {
            std::string text;
            for (const auto& t : tokens) {
                if (!text.empty()) text += ' ';
                text += t;
            }
            requests.push_back(nlohmann::json{{"text", text}}.dump());
        }
        const auto responses = process_->exchange(requests, timeout_);

        std::vector<Vector> out;
        out.reserve(responses.size());
        for (std::size_t i = 0; i < responses.size(); ++i) {
            try {
                auto reply = nlohmann::json::parse(responses[i]);
                Vector v = reply.at("vector").get<Vector>();
                if (v.size() != dimension_) {
                    throw ProtocolError("embedder returned " + std::to_string(v.size()) + " dims, expected " +
                                        std::to_string(dimension_));
                }
                for (double x : v) {
                    if (!std::isfinite(x)) throw ProtocolError("embedder returned a non-finite value");
                }
                l2_normalize(v);
                out.push_back(std::move(v));
            } catch (const nlohmann::json::exception& e) {
                throw ProtocolError("embedder response " + std::to_string(i) + " malformed: " + e.what());
            }
        }
        return out;
    }

private:
    std::unique_ptr<LineProcess> process_;
    std::size_t dimension_;
    std::chrono::milliseconds timeout_;
};

class DenseIndex {
public:
    static DenseIndex build(std::span<const Article> articles, const Embedder& embedder, const TokenizerConfig& tok) {
        tok.validate();
        if (articles.empty()) throw Error("empty corpus");
        DenseIndex index;
        index.fingerprint_ = embedder.fingerprint();
        index.dimension_ = embedder.dimension();
        index.offsets_.push_back(0);

        for (const Article& a : articles) {
            if (index.ordinal_.contains(a.article_id)) throw Error("duplicate article id '" + a.article_id + "'");
            std::vector<std::vector<std::string>> sentences;
            for (const auto& s : split_sentences(a.content)) {
                auto tokens = analyze(s, tok);
                if (!tokens.empty()) sentences.push_back(std::move(tokens));
            }
            if (sentences.empty()) {
                ++index.excluded_;
                continue;
            }
            for (auto& v : embedder.embed_batch(sentences)) {
                index.vectors_.insert(index.vectors_.end(), v.begin(), v.end());
            }
            index.ordinal_.emplace(a.article_id, index.ids_.size());
            index.ids_.push_back(a.article_id);
            index.offsets_.push_back(index.offsets_.back() + sentences.size());
        }
        return index;
    }

    const std::string& fingerprint() const noexcept { return fingerprint_; }
    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t excluded() const noexcept { return excluded_; }
    std::size_t vector_count() const noexcept { return offsets_.back(); }
    const std::vector<std::string>& article_ids() const noexcept { return ids_; }
    bool contains(std::string_view id) const { return ordinal_.contains(std::string(id)); }

    std::size_t sentence_count(std::string_view id) const { return sentence_count(ordinal_of(id)); }

    std::span<const double> sentence_vector(std::string_view id, std::size_t sentence) const {
        const std::size_t ord = ordinal_of(id);
        if (sentence >= sentence_count(ord)) throw Error("sentence index out of range");
        return row(offsets_[ord] + sentence);
    }

    /// Max cosine between `question` and the article's sentences.
    double score(std::span<const double> question, std::string_view article_id) const {
        return score_ordinal(question, ordinal_of(article_id));
    }

    /// Exhaustive scan; every indexed article is ranked, ties by id.
    std::vector<ScoredArticle> retrieve_topk(std::span<const double> question, std::size_t k) const {
        if (k == 0) throw Error("retrieve_topk: k must be >= 1");
        std::vector<ScoredArticle> ranked;
        ranked.reserve(ids_.size());
        for (std::size_t ord = 0; ord < ids_.size(); ++ord) ranked.push_back({ids_[ord], score_ordinal(question, ord)});
        sort_ranked(ranked);
        if (ranked.size() > k) ranked.resize(k);
        return ranked;
    }

    /// Embeds the question as one unit and ranks articles against it.
    std::vector<ScoredArticle> retrieve_topk(std::string_view question, const Embedder& embedder,
                                             const TokenizerConfig& tok, std::size_t k) const {
        check_embedder(embedder);
        const auto tokens = analyze(question, tok);
        return retrieve_topk(embedder.embed(tokens), k);
    }

    void check_embedder(const Embedder& embedder) const {
        if (embedder.fingerprint() != fingerprint_) {
            throw Error("dense index embedder fingerprint mismatch: index has '" + fingerprint_ + "', configured '" +
                        embedder.fingerprint() + "'");
        }
    }

    void save(std::ostream& out) const {
        out.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(out, kFormatVersion);
        put_string(out, fingerprint_);
        put<std::uint64_t>(out, dimension_);
        put<std::uint64_t>(out, excluded_);
        put<std::uint64_t>(out, ids_.size());
        for (std::size_t ord = 0; ord < ids_.size(); ++ord) {
            put_string(out, ids_[ord]);
            put<std::uint64_t>(out, sentence_count(ord));
        }
        out.write(reinterpret_cast<const char*>(vectors_.data()),
                  static_cast<std::streamsize>(vectors_.size() * sizeof(double)));
    }

    static DenseIndex load(std::istream& in, const std::string& expected_fingerprint) {
        char magic[sizeof kMagic];
        in.read(magic, sizeof magic);
        if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a dense index file");
        if (get<std::uint32_t>(in) != kFormatVersion) throw Error("unsupported dense index version");
        DenseIndex index;
        index.fingerprint_ = get_string(in);
        if (index.fingerprint_ != expected_fingerprint) {
            throw Error("dense index embedder fingerprint mismatch: index has '" + index.fingerprint_ +
                        "', configured '" + expected_fingerprint + "'");
        }
        index.dimension_ = get<std::uint64_t>(in);
        index.excluded_ = get<std::uint64_t>(in);
        const auto n = get<std::uint64_t>(in);
        index.offsets_.push_back(0);
        for (std::uint64_t ord = 0; ord < n; ++ord) {
            index.ids_.push_back(get_string(in));
            index.ordinal_.emplace(index.ids_.back(), ord);
            index.offsets_.push_back(index.offsets_.back() + get<std::uint64_t>(in));
        }
        index.vectors_.resize(index.offsets_.back() * index.dimension_);
        in.read(reinterpret_cast<char*>(index.vectors_.data()),
                static_cast<std::streamsize>(index.vectors_.size() * sizeof(double)));
        if (!in) throw Error("dense index truncated");
        return index;
    }

private:
    static constexpr char kMagic[8] = {'L', 'Q', 'A', 'D', 'E', 'N', 'S', 'E'};
    static constexpr std::uint32_t kFormatVersion = 1;

    std::size_t ordinal_of(std::string_view id) const {
        auto it = ordinal_.find(std::string(id));
        if (it == ordinal_.end()) throw Error("article '" + std::string(id) + "' is not in the dense index");
        return it->second;
    }

    std::size_t sentence_count(std::size_t ord) const { return offsets_[ord + 1] - offsets_[ord]; }

    std::span<const double> row(std::size_t r) const { return {vectors_.data() + r * dimension_, dimension_}; }

    double score_ordinal(std::span<const double> question, std::size_t ord) const {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t r = offsets_[ord]; r < offsets_[ord + 1]; ++r) best = std::max(best, cosine(question, row(r)));
        return best;
    }

    template <typename T>
    static void put(std::ostream& out, T v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void put_string(std::ostream& out, const std::string& s) {
        put<std::uint64_t>(out, s.size());
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    template <typename T>
    static T get(std::istream& in) {
        T v{};
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw Error("dense index truncated");
        return v;
    }
    static std::string get_string(std::istream& in) {
        const auto len = get<std::uint64_t>(in);
        if (len > (1u << 20)) throw Error("dense index corrupt string length");
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        if (!in) throw Error("dense index truncated");
        return s;
    }

    std::string fingerprint_;
    std::size_t dimension_ = 0;
    std::size_t excluded_ = 0;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> ordinal_;
    std::vector<std::size_t> offsets_;
    std::vector<double> vectors_;
};

}  // namespace lexqa
