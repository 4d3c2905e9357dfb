#pragma once

// Declarative pipeline configuration and the loaded query engine shared by
// the CLI and the HTTP service.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "lexqa/corpus.hpp"
#include "lexqa/dense_index.hpp"
#include "lexqa/ensemble.hpp"
#include "lexqa/error.hpp"
#include "lexqa/lexical_index.hpp"
#include "lexqa/reranker.hpp"
#include "lexqa/weak_label.hpp"

namespace lexqa {

namespace fs = std::filesystem;

enum class EmbedderKind { hashed_projection, external };
enum class ScorerKind { linear, external };
enum class QuickviewSource { lexical, dense };

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::hashed_projection;
    std::size_t dimension = HashedProjectionEmbedder::kDefaultDimension;
    std::uint64_t seed = 0;
    std::string command;
    std::chrono::milliseconds timeout{30000};

    std::unique_ptr<Embedder> make() const {
        if (kind == EmbedderKind::hashed_projection) return std::make_unique<HashedProjectionEmbedder>(dimension, seed);
        if (command.empty()) throw Error("external embedder needs a command");
        return std::make_unique<ExternalEmbedder>(command, dimension, timeout);
    }
};

struct ScorerConfig {
    ScorerKind kind = ScorerKind::linear;
    std::string command;
    std::chrono::milliseconds timeout{30000};
};

struct PipelineConfig {
    fs::path corpus;
    fs::path index_dir = "index";
    fs::path model = "model.json";
    fs::path weak_dataset = "weak.jsonl";
    fs::path gold_queries;

    TokenizerConfig tokenizer;
    Bm25Params bm25;
    QuickviewConfig quickview;
    QuickviewSource quickview_source = QuickviewSource::lexical;
    /// Build and use the dense index (feature input, optional quickview source).
    bool dense = true;
    EmbedderConfig embedder;
    ScorerConfig scorer;

    double gamma = 0.5;
    std::size_t top_k = 200;
    /// Unset means the tuned default for top_k.
    std::optional<double> threshold;

    WeakGenConfig weak;
    TrainConfig train;
    double split_ratio = 0.9;
    std::uint64_t split_seed = 0;

    std::size_t max_question_bytes = 4096;

    fs::path lex_index_path() const { return index_dir / "lex.idx"; }
    fs::path dense_index_path() const { return index_dir / "dense.idx"; }

    EnsembleConfig ensemble(std::optional<std::size_t> k = std::nullopt) const {
        EnsembleConfig e;
        e.gamma = gamma;
        e.top_k = k.value_or(top_k);
        e.threshold = threshold.value_or(EnsembleConfig::default_threshold(e.top_k));
        return e;
    }

    void validate() const {
        tokenizer.validate();
        bm25.validate();
        quickview.validate();
        weak.validate();
        train.validate();
        ensemble().validate();
        if (quickview_source == QuickviewSource::dense && !dense) throw Error("dense quickview requires the dense index");
    }

    /// Overlays the keys present in `j`; absent keys keep their values.
    void merge(const nlohmann::json& j) {
        auto path = [&](const char* key, fs::path& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::string>();
        };
        path("corpus", corpus);
        path("index_dir", index_dir);
        path("model", model);
        path("weak_dataset", weak_dataset);
        path("gold_queries", gold_queries);

        if (auto t = j.find("tokenizer"); t != j.end()) {
            const auto mode = t->value("mode", std::string("whitespace"));
            if (mode == "whitespace") {
                tokenizer = {};
            } else if (mode == "phrase_merge") {
                tokenizer.mode = TokenizerMode::whitespace_with_phrase_merge;
                std::set<std::string> lexicon;
                for (const auto& p : t->value("phrase_lexicon", nlohmann::json::array())) lexicon.insert(clean_text(p.get<std::string>()));
                tokenizer.phrase_lexicon = std::move(lexicon);
            } else {
                throw Error("unknown tokenizer mode '" + mode + "'");
            }
        }
        if (auto b = j.find("bm25"); b != j.end()) {
            bm25.k1 = b->value("k1", bm25.k1);
            bm25.b = b->value("b", bm25.b);
        }
        if (auto q = j.find("quickview"); q != j.end()) {
            quickview.alpha = q->value("alpha", quickview.alpha);
            quickview.beta = q->value("beta", quickview.beta);
            const auto src = q->value("source", std::string("lexical"));
            if (src != "lexical" && src != "dense") throw Error("unknown quickview source '" + src + "'");
            quickview_source = src == "dense" ? QuickviewSource::dense : QuickviewSource::lexical;
        }
        if (j.contains("dense")) dense = j.at("dense").get<bool>();
        if (auto e = j.find("embedder"); e != j.end()) {
            const auto kind = e->value("kind", std::string("hashed_projection"));
            if (kind != "hashed_projection" && kind != "external") throw Error("unknown embedder kind '" + kind + "'");
            embedder.kind = kind == "external" ? EmbedderKind::external : EmbedderKind::hashed_projection;
            embedder.dimension = e->value("dimension", embedder.dimension);
            embedder.seed = e->value("seed", embedder.seed);
            embedder.command = e->value("command", embedder.command);
            embedder.timeout = std::chrono::milliseconds(e->value("timeout_ms", embedder.timeout.count()));
        }
        if (auto s = j.find("scorer"); s != j.end()) {
            const auto kind = s->value("kind", std::string("linear"));
            if (kind != "linear" && kind != "external") throw Error("unknown scorer kind '" + kind + "'");
            scorer.kind = kind == "external" ? ScorerKind::external : ScorerKind::linear;
            scorer.command = s->value("command", scorer.command);
            scorer.timeout = std::chrono::milliseconds(s->value("timeout_ms", scorer.timeout.count()));
        }
        if (auto e = j.find("ensemble"); e != j.end()) {
            gamma = e->value("gamma", gamma);
            top_k = e->value("top_k", top_k);
            if (e->contains("threshold") && !e->at("threshold").is_null()) threshold = e->at("threshold").get<double>();
        }
        if (auto w = j.find("weak"); w != j.end()) {
            weak.negative_ratio = w->value("negative_ratio", weak.negative_ratio);
            weak.rng_seed = w->value("seed", weak.rng_seed);
        }
        if (auto t = j.find("train"); t != j.end()) {
            train.learning_rate = t->value("learning_rate", train.learning_rate);
            train.epochs = t->value("epochs", train.epochs);
            train.batch_size = t->value("batch_size", train.batch_size);
            train.rng_seed = t->value("seed", train.rng_seed);
            train.patience = t->value("patience", train.patience);
        }
        if (auto s = j.find("split"); s != j.end()) {
            split_ratio = s->value("ratio", split_ratio);
            split_seed = s->value("seed", split_seed);
        }
        max_question_bytes = j.value("max_question_bytes", max_question_bytes);
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    static PipelineConfig from_file(const fs::path& file) {
        std::ifstream in(file);
        if (!in) throw Error("cannot open config '" + file.string() + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error("config '" + file.string() + "': " + e.what());
        }
        PipelineConfig cfg;
        try {
            cfg.merge(j);
        } catch (const nlohmann::json::exception& e) {
            throw Error("config '" + file.string() + "': " + e.what());
        }
        const fs::path base = file.parent_path();
        for (fs::path* p : {&cfg.corpus, &cfg.index_dir, &cfg.model, &cfg.weak_dataset, &cfg.gold_queries}) {
            if (!p->empty() && p->is_relative()) *p = base / *p;
        }
        return cfg;
    }
};

inline std::ifstream open_input(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open '" + p.string() + "'");
    return in;
}

inline std::ofstream open_output(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    return out;
}

/// Exclusive lock held for the lifetime of the object (O_EXCL lock file).
class LockFile {
public:
    explicit LockFile(fs::path path) : path_(std::move(path)) {
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw Error("'" + path_.string() + "' exists; another index/train run is in progress");
        ::close(fd);
    }
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;
    ~LockFile() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

inline ParsedCorpus load_corpus(const fs::path& p) {
    auto in = open_input(p);
    return parse_corpus(in);
}

struct IndexSummary {
    ParseStats parse;
    std::size_t lexical_articles = 0;
    std::size_t dense_articles = 0;
    std::size_t dense_vectors = 0;
    std::size_t dense_excluded = 0;
};

/// Parses the corpus and writes the lexical (and optionally dense) index.
inline IndexSummary build_indexes(const PipelineConfig& cfg) {
    cfg.validate();
    const ParsedCorpus corpus = load_corpus(cfg.corpus);
    const auto articles = corpus.articles();
    IndexSummary summary;
    summary.parse = corpus.stats;

    const LexIndex lex = LexIndex::build(articles, cfg.tokenizer, cfg.bm25);
    {
        auto out = open_output(cfg.lex_index_path());
        lex.save(out);
    }
    summary.lexical_articles = lex.size();

    if (cfg.dense) {
        const auto embedder = cfg.embedder.make();
        const DenseIndex dense = DenseIndex::build(articles, *embedder, cfg.tokenizer);
        auto out = open_output(cfg.dense_index_path());
        dense.save(out);
        summary.dense_articles = dense.size();
        summary.dense_vectors = dense.vector_count();
        summary.dense_excluded = dense.excluded();
    }
    return summary;
}

/// Corpus, indexes and scorer loaded for answering questions. Immutable
/// after open; safe to share between request threads.
class Engine {
public:
    static std::unique_ptr<Engine> open(const PipelineConfig& cfg, bool with_scorer = true) {
        cfg.validate();
        std::unique_ptr<Engine> e(new Engine(cfg));
        e->store_ = ArticleStore(load_corpus(cfg.corpus).articles());
        {
            auto in = open_input(cfg.lex_index_path());
            e->lex_ = LexIndex::load(in, cfg.tokenizer.fingerprint());
        }
        if (e->lex_.size() != e->store_.size()) throw Error("lexical index does not match the corpus; re-run index");
        e->lex_fingerprint_ = e->lex_.fingerprint();
        if (cfg.dense) {
            e->embedder_ = cfg.embedder.make();
            auto in = open_input(cfg.dense_index_path());
            e->dense_ = DenseIndex::load(in, e->embedder_->fingerprint());
        }
        e->features_ = std::make_unique<FeatureSource>(e->store_, e->lex_, cfg.tokenizer, e->dense_ ? &*e->dense_ : nullptr,
                                                       e->embedder_.get());
        if (cfg.quickview_source == QuickviewSource::dense) {
            e->quickview_ = std::make_unique<QuickviewRetriever>(*e->dense_, *e->embedder_, cfg.tokenizer);
        } else {
            e->quickview_ = std::make_unique<QuickviewRetriever>(e->lex_, cfg.quickview, cfg.tokenizer);
        }
        if (with_scorer) {
            if (cfg.scorer.kind == ScorerKind::external) {
                if (cfg.scorer.command.empty()) throw Error("external scorer needs a command");
                e->scorer_ = std::make_unique<ExternalScorer>(cfg.scorer.command, e->store_, cfg.scorer.timeout);
            } else {
                auto in = open_input(cfg.model);
                e->scorer_ = std::make_unique<LinearScorer>(LinearModel::load(in), *e->features_);
            }
        }
        return e;
    }

    const PipelineConfig& config() const noexcept { return cfg_; }
    const ArticleStore& store() const noexcept { return store_; }
    const LexIndex& lex() const noexcept { return lex_; }
    const DenseIndex* dense() const noexcept { return dense_ ? &*dense_ : nullptr; }
    const FeatureSource& features() const noexcept { return *features_; }
    const QuickviewRetriever& quickview() const noexcept { return *quickview_; }
    const RelevanceScorer* scorer() const noexcept { return scorer_.get(); }

    AnswerSet answer(std::string_view question_id, std::string_view question,
                     std::optional<std::size_t> top_k = std::nullopt) const {
        if (!scorer_) throw Error("engine was opened without a scorer");
        return rank_and_select(question_id, question, *quickview_, *scorer_, cfg_.ensemble(top_k));
    }

    nlohmann::json health() const {
        return {{"status", "ok"},
                {"articles", store_.size()},
                {"tokenizer", cfg_.tokenizer.fingerprint()},
                {"lexical_index", lex_fingerprint_},
                {"dense_index", dense_ ? nlohmann::json(dense_->fingerprint()) : nlohmann::json(nullptr)},
                {"scorer", scorer_ ? nlohmann::json(scorer_->fingerprint()) : nlohmann::json(nullptr)}};
    }

private:
    explicit Engine(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

    PipelineConfig cfg_;
    ArticleStore store_;
    LexIndex lex_;
    std::string lex_fingerprint_;
    std::unique_ptr<Embedder> embedder_;
    std::optional<DenseIndex> dense_;
    std::unique_ptr<FeatureSource> features_;
    std::unique_ptr<QuickviewRetriever> quickview_;
    std::unique_ptr<RelevanceScorer> scorer_;
};

}  // namespace lexqa
