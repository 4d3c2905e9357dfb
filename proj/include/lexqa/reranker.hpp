#pragma once

// Supervised relevance scorer. A logistic model over eight question/article
// features, trained with Adam on binary cross-entropy: first on weak labels,
// then fine-tuned on gold pairs. Scoring can also be delegated to an external
// process (for instance a fine-tuned cross-encoder).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/dense_index.hpp"
#include "lexqa/error.hpp"
#include "lexqa/lexical_index.hpp"
#include "lexqa/subprocess.hpp"
#include "lexqa/weak_label.hpp"

namespace lexqa {

inline constexpr std::size_t kFeatureCount = 8;

using Weights = std::array<double, kFeatureCount>;

/// f[0] saturated title BM25, f[1] saturated content BM25, f[2] dense max
/// cosine, f[3]/f[4] Jaccard with title/content tokens, f[5]/f[6] log
/// lengths of question/content, f[7] bias.
struct FeatureVector {
    enum Index : std::size_t {
        title_bm25,
        content_bm25,
        dense_cosine,
        title_jaccard,
        content_jaccard,
        question_length,
        content_length,
        bias,
    };
    std::array<double, kFeatureCount> values{};

    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
};

struct LabeledFeatures {
    FeatureVector x;
    double y = 0.0;
};

inline double saturate(double s) { return s / (1.0 + s); }

/// |a ∩ b| / |a ∪ b| over sorted unique token lists; 0 when both are empty.
inline double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++common;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

inline std::vector<std::string> unique_sorted(std::vector<std::string> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

/// Computes features against a fixed corpus and its indexes. The dense
/// index is optional; without it the dense feature is 0.
class FeatureSource {
public:
    FeatureSource(const ArticleStore& store, const LexIndex& lex, TokenizerConfig tok,
                  const DenseIndex* dense = nullptr, const Embedder* embedder = nullptr)
        : store_(store), lex_(lex), dense_(dense), embedder_(embedder), tok_(std::move(tok)) {
        if ((dense_ == nullptr) != (embedder_ == nullptr)) throw Error("dense index and embedder go together");
        if (dense_) dense_->check_embedder(*embedder_);
        for (const Article& a : store_.articles()) {
            ArticleTerms terms;
            if (a.title) terms.title = unique_sorted(analyze(*a.title, tok_));
            auto content = analyze(a.content, tok_);
            terms.content_length = content.size();
            terms.content = unique_sorted(std::move(content));
            terms_.emplace(a.article_id, std::move(terms));
        }
    }

    const ArticleStore& store() const noexcept { return store_; }

    std::vector<FeatureVector> extract(std::string_view question, std::span<const std::string> article_ids) const {
        const auto tokens = analyze(question, tok_);
        const auto question_set = unique_sorted(tokens);
        Vector question_vec;
        if (dense_) question_vec = embedder_->embed(tokens);

        std::vector<FeatureVector> out;
        out.reserve(article_ids.size());
        for (const auto& id : article_ids) {
            auto it = terms_.find(id);
            if (it == terms_.end() || !lex_.ordinal(id)) {
                throw Error("article '" + id + "' is not in the indexes");
            }
            const ArticleTerms& t = it->second;
            FeatureVector f;
            f[FeatureVector::title_bm25] = saturate(lex_.bm25(Field::title, tokens, id));
            f[FeatureVector::content_bm25] = saturate(lex_.bm25(Field::content, tokens, id));
            f[FeatureVector::dense_cosine] = dense_ ? dense_->score(question_vec, id) : 0.0;
            f[FeatureVector::title_jaccard] = jaccard(question_set, t.title);
            f[FeatureVector::content_jaccard] = jaccard(question_set, t.content);
            f[FeatureVector::question_length] = std::log1p(static_cast<double>(tokens.size()));
            f[FeatureVector::content_length] = std::log1p(static_cast<double>(t.content_length));
            f[FeatureVector::bias] = 1.0;
            out.push_back(f);
        }
        return out;
    }

    FeatureVector extract(std::string_view question, const std::string& article_id) const {
        return extract(question, std::span<const std::string>(&article_id, 1)).front();
    }

    /// Features for a labelled dataset; questions are embedded once per group.
    std::vector<LabeledFeatures> extract(std::span<const TrainingExample> examples) const {
        std::vector<LabeledFeatures> out;
        out.reserve(examples.size());
        std::size_t i = 0;
        while (i < examples.size()) {
            std::size_t j = i;
            std::vector<std::string> ids;
            while (j < examples.size() && examples[j].question == examples[i].question) ids.push_back(examples[j++].article_id);
            auto feats = extract(examples[i].question, ids);
            for (std::size_t k = 0; k < feats.size(); ++k) out.push_back({feats[k], static_cast<double>(examples[i + k].label)});
            i = j;
        }
        return out;
    }

private:
    struct ArticleTerms {
        std::vector<std::string> title;
        std::vector<std::string> content;
        std::size_t content_length = 0;
    };

    const ArticleStore& store_;
    const LexIndex& lex_;
    const DenseIndex* dense_;
    const Embedder* embedder_;
    TokenizerConfig tok_;
    std::unordered_map<std::string, ArticleTerms> terms_;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double logit(const Weights& w, const FeatureVector& f) {
    double z = 0.0;
    for (std::size_t i = 0; i < kFeatureCount; ++i) z += w[i] * f[i];
    return z;
}

struct StageRecord {
    std::string name;
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> valid_loss;
    Weights start_weights{};
    Weights best_weights{};
};

struct LinearModel {
    Weights weights{};
    std::vector<StageRecord> stages;

    /// Probability of relevance.
    double predict(const FeatureVector& f) const { return sigmoid(logit(weights, f)); }

    void save(std::ostream& out) const {
        using nlohmann::json;
        json stages_json = json::array();
        for (const auto& s : stages) {
            stages_json.push_back({{"name", s.name},
                                   {"seed", s.seed},
                                   {"epochs_run", s.epochs_run},
                                   {"best_epoch", s.best_epoch},
                                   {"train_loss", s.train_loss},
                                   {"valid_loss", s.valid_loss},
                                   {"start_weights", s.start_weights},
                                   {"best_weights", s.best_weights}});
        }
        out << json{{"format", "lexqa-linear-model"}, {"version", 1}, {"weights", weights}, {"stages", stages_json}}.dump(2)
            << '\n';
    }

    static LinearModel load(std::istream& in) {
        try {
            auto j = nlohmann::json::parse(in);
            if (j.value("format", "") != "lexqa-linear-model") throw Error("not a linear model file");
            LinearModel m;
            m.weights = j.at("weights").get<Weights>();
            for (const auto& s : j.at("stages")) {
                StageRecord r;
                r.name = s.at("name").get<std::string>();
                r.seed = s.at("seed").get<std::uint64_t>();
                r.epochs_run = s.at("epochs_run").get<std::size_t>();
                r.best_epoch = s.at("best_epoch").get<std::size_t>();
                r.train_loss = s.at("train_loss").get<std::vector<double>>();
                r.valid_loss = s.at("valid_loss").get<std::vector<double>>();
                r.start_weights = s.at("start_weights").get<Weights>();
                r.best_weights = s.at("best_weights").get<Weights>();
                m.stages.push_back(std::move(r));
            }
            for (double w : m.weights) {
                if (!std::isfinite(w)) throw Error("model weights must be finite");
            }
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("malformed model file: ") + e.what());
        }
    }
};

/// Mean binary cross-entropy of sigmoid(w·x) against the labels.
inline double cross_entropy(const Weights& w, std::span<const LabeledFeatures> data) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& d : data) {
        const double z = logit(w, d.x);
        total += softplus(z) - d.y * z;
    }
    return total / static_cast<double>(data.size());
}

inline Weights cross_entropy_gradient(const Weights& w, std::span<const LabeledFeatures> data) {
    Weights g{};
    if (data.empty()) return g;
    for (const auto& d : data) {
        const double residual = sigmoid(logit(w, d.x)) - d.y;
        for (std::size_t i = 0; i < kFeatureCount; ++i) g[i] += residual * d.x[i];
    }
    for (double& v : g) v /= static_cast<double>(data.size());
    return g;
}

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t rng_seed = 0;
    /// Stop after this many epochs without validation improvement; 0 disables.
    std::size_t patience = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
        if (epochs < 1) throw Error("epochs must be >= 1");
        if (batch_size < 1) throw Error("batch_size must be >= 1");
    }
};

/// One training stage starting from `model.weights`. Returns the weights with
/// the lowest validation loss (the final weights when `valid` is empty) and
/// appends a StageRecord.
inline LinearModel train_stage(LinearModel model, std::span<const LabeledFeatures> train,
                               std::span<const LabeledFeatures> valid, const TrainConfig& cfg,
                               std::string stage_name = "train") {
    cfg.validate();
    if (train.empty()) throw Error("training set is empty");

    StageRecord record;
    record.name = std::move(stage_name);
    record.seed = cfg.rng_seed;
    record.start_weights = model.weights;

    Weights w = model.weights;
    Weights m{};
    Weights v{};
    std::uint64_t step = 0;
    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    double best_valid = std::numeric_limits<double>::infinity();
    Weights best = w;
    std::size_t since_best = 0;
    std::vector<LabeledFeatures> batch;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(train[order[i]]);
            const Weights g = cross_entropy_gradient(w, batch);
            ++step;
            const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                w[i] -= cfg.learning_rate * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg.adam_epsilon);
            }
        }

        const double train_loss = cross_entropy(w, train);
        if (!std::isfinite(train_loss)) throw Error("diverged");
        record.train_loss.push_back(train_loss);
        record.epochs_run = epoch;

        if (valid.empty()) {
            best = w;
            record.best_epoch = epoch;
            continue;
        }
        const double valid_loss = cross_entropy(w, valid);
        if (!std::isfinite(valid_loss)) throw Error("diverged");
        record.valid_loss.push_back(valid_loss);
        if (valid_loss < best_valid) {
            best_valid = valid_loss;
            best = w;
            record.best_epoch = epoch;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }

    record.best_weights = best;
    model.weights = best;
    model.stages.push_back(std::move(record));
    return model;
}

inline LinearModel train_stage(LinearModel model, std::span<const TrainingExample> train,
                               std::span<const TrainingExample> valid, const TrainConfig& cfg,
                               const FeatureSource& features, std::string stage_name = "train") {
    if (train.empty()) throw Error("training set is empty");
    const auto train_x = features.extract(train);
    const auto valid_x = features.extract(valid);
    return train_stage(std::move(model), train_x, valid_x, cfg, std::move(stage_name));
}

/// Weak-label pretraining from zero weights, then gold fine-tuning from the
/// best pretraining weights.
inline LinearModel train_two_stage(std::span<const TrainingExample> weak, std::span<const TrainingExample> gold,
                                   std::span<const TrainingExample> valid, const TrainConfig& cfg,
                                   const FeatureSource& features) {
    if (weak.empty()) throw Error("weak-label dataset is empty");
    if (gold.empty()) throw Error("gold dataset is empty");
    LinearModel model = train_stage(LinearModel{}, weak, valid, cfg, features, "weak");
    return train_stage(std::move(model), gold, valid, cfg, features, "gold");
}

/// Produces SS(question, article) in [0, 1] for a batch of candidates.
class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;
    virtual std::vector<double> score(std::string_view question, std::span<const std::string> article_ids) const = 0;
    virtual std::string fingerprint() const = 0;
};

class LinearScorer final : public RelevanceScorer {
public:
    LinearScorer(LinearModel model, const FeatureSource& features) : model_(std::move(model)), features_(features) {}

    std::vector<double> score(std::string_view question, std::span<const std::string> article_ids) const override {
        std::vector<double> out;
        out.reserve(article_ids.size());
        for (const auto& f : features_.extract(question, article_ids)) out.push_back(model_.predict(f));
        return out;
    }

    std::string fingerprint() const override {
        std::string bytes;
        for (double w : model_.weights) bytes.append(reinterpret_cast<const char*>(&w), sizeof w);
        return "linear:" + to_hex(fnv1a(bytes));
    }

    const LinearModel& model() const noexcept { return model_; }

private:
    LinearModel model_;
    const FeatureSource& features_;
};

/// Child process speaking {"question", "title", "content"} -> {"score"}.
class ExternalScorer final : public RelevanceScorer {
public:
    ExternalScorer(const std::string& command, const ArticleStore& store,
                   std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : process_(std::make_unique<LineProcess>(command)), store_(store), timeout_(timeout) {}

    std::vector<double> score(std::string_view question, std::span<const std::string> article_ids) const override {
        std::vector<std::string> requests;
        requests.reserve(article_ids.size());
        for (const auto& id : article_ids) {
            const Article& a = store_.at(id);
            nlohmann::json req{{"question", question}, {"title", nullptr}, {"content", a.content}};
            if (a.title) req["title"] = *a.title;
            requests.push_back(req.dump());
        }
        try {
            const auto responses = process_->exchange(requests, timeout_);
            std::vector<double> out;
            out.reserve(responses.size());
            for (const auto& line : responses) {
                double s = 0.0;
                try {
                    s = nlohmann::json::parse(line).at("score").get<double>();
                } catch (const nlohmann::json::exception& e) {
                    throw ProtocolError(std::string("malformed response: ") + e.what());
                }
                if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError("score " + std::to_string(s) + " outside [0, 1]");
                out.push_back(s);
            }
            return out;
        } catch (const ProtocolError& e) {
            throw ProtocolError("external scorer failed for candidate batch " + describe(article_ids) + ": " + e.what());
        }
    }

    std::string fingerprint() const override { return "external:" + to_hex(fnv1a(process_->command())); }

private:
    static std::string describe(std::span<const std::string> ids) {
        std::string s = "[";
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i == 8) {
                s += ", ... (" + std::to_string(ids.size()) + " total)";
                break;
            }
            if (i) s += ", ";
            s += ids[i];
        }
        return s + "]";
    }

    std::unique_ptr<LineProcess> process_;
    const ArticleStore& store_;
    std::chrono::milliseconds timeout_;
};

/// One score per candidate, in candidate order.
inline std::vector<ScoredArticle> score_candidates(const RelevanceScorer& scorer, std::string_view question,
                                                   std::span<const std::string> candidates) {
    if (candidates.empty()) throw Error("score_candidates: no candidates");
    const auto scores = scorer.score(question, candidates);
    if (scores.size() != candidates.size()) throw ProtocolError("scorer returned the wrong number of scores");
    std::vector<ScoredArticle> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back({candidates[i], scores[i]});
    return out;
}

}  // namespace lexqa
