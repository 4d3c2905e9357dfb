// lexqa: command-line front end for indexing, weak-label generation,
// training, querying, evaluation and serving.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexqa/evaluation.hpp"
#include "lexqa/pipeline.hpp"
#include "lexqa/queries.hpp"
#include "lexqa/reranker.hpp"
#include "lexqa/service.hpp"
#include "lexqa/weak_label.hpp"

namespace {

using namespace lexqa;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Overrides {
    std::string config;
    std::optional<std::string> corpus, index_dir, model, weak_dataset, gold_queries;
    std::optional<double> alpha, beta, gamma, threshold, k1, b;
    std::optional<std::size_t> top_k;
    std::optional<bool> no_dense;
    std::optional<std::size_t> embed_dim;
    std::optional<std::uint64_t> embed_seed;
    std::optional<std::string> scorer_command;

    PipelineConfig resolve() const {
        PipelineConfig cfg;
        std::string path = config;
        if (path.empty()) {
            if (const char* env = std::getenv("LEXQA_CONFIG")) path = env;
        }
        if (!path.empty()) cfg = PipelineConfig::from_file(path);
        if (corpus) cfg.corpus = *corpus;
        if (index_dir) cfg.index_dir = *index_dir;
        if (model) cfg.model = *model;
        if (weak_dataset) cfg.weak_dataset = *weak_dataset;
        if (gold_queries) cfg.gold_queries = *gold_queries;
        if (alpha) cfg.quickview.alpha = *alpha;
        if (beta) cfg.quickview.beta = *beta;
        if (k1) cfg.bm25.k1 = *k1;
        if (b) cfg.bm25.b = *b;
        if (gamma) cfg.gamma = *gamma;
        if (top_k) cfg.top_k = *top_k;
        if (threshold) cfg.threshold = *threshold;
        if (no_dense && *no_dense) cfg.dense = false;
        if (embed_dim) cfg.embedder.dimension = *embed_dim;
        if (embed_seed) cfg.embedder.seed = *embed_seed;
        if (scorer_command) {
            cfg.scorer.kind = ScorerKind::external;
            cfg.scorer.command = *scorer_command;
        }
        return cfg;
    }
};

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw Error(std::string("no ") + what + " path configured");
    if (!fs::exists(p)) throw Error(std::string(what) + " '" + p.string() + "' does not exist");
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || v == 0) throw CLI::ValidationError("--k", "expected comma separated positive integers");
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError("--k", "expected at least one value");
    return out;
}

int cmd_index(const PipelineConfig& cfg) {
    require_file(cfg.corpus, "corpus");
    LockFile lock(cfg.index_dir / ".lock");
    const IndexSummary s = build_indexes(cfg);
    std::cout << json{{"documents", s.parse.documents},
                      {"articles", s.parse.articles},
                      {"titled", s.parse.titled},
                      {"missing_title", s.parse.missing_title},
                      {"dropped_articles", s.parse.dropped_articles},
                      {"lexical_articles", s.lexical_articles},
                      {"dense_articles", s.dense_articles},
                      {"dense_vectors", s.dense_vectors},
                      {"dense_excluded", s.dense_excluded}}
                     .dump()
              << '\n';
    return kExitOk;
}

int cmd_weaklabel(const PipelineConfig& cfg) {
    require_file(cfg.corpus, "corpus");
    const auto articles = load_corpus(cfg.corpus).articles();
    const auto examples = generate_weak_dataset(articles, cfg.weak);
    {
        auto out = open_output(cfg.weak_dataset);
        write_dataset(out, examples);
    }
    const DatasetStats s = dataset_stats(examples);
    std::cout << json{{"total", s.total},
                      {"positives", s.positives},
                      {"negatives", s.negatives},
                      {"ratio", s.ratio},
                      {"duplicate_pairs", s.duplicate_pairs},
                      {"output", cfg.weak_dataset.string()}}
                     .dump()
              << '\n';
    return kExitOk;
}

int cmd_train(const PipelineConfig& cfg, const std::string& mode) {
    require_file(cfg.gold_queries, "gold queries");
    if (mode != "gold-only") require_file(cfg.weak_dataset, "weak dataset");
    LockFile lock(fs::path(cfg.model).concat(".lock"));

    const auto engine = Engine::open(cfg, /*with_scorer=*/false);
    const auto& articles = engine->store().articles();

    std::vector<GoldQuery> queries;
    {
        auto in = open_input(cfg.gold_queries);
        queries = read_gold_queries(in);
    }
    const auto [train_q, valid_q] = split_train_valid(queries, cfg.split_ratio, cfg.split_seed);
    const auto gold_train = make_gold_dataset(train_q, articles, cfg.weak);
    const auto gold_valid = make_gold_dataset(valid_q, articles, {cfg.weak.negative_ratio, cfg.weak.rng_seed + 1});

    std::vector<TrainingExample> weak;
    if (mode != "gold-only") {
        auto in = open_input(cfg.weak_dataset);
        weak = read_dataset(in);
    }

    LinearModel model;
    if (mode == "two-stage") {
        model = train_two_stage(weak, gold_train, gold_valid, cfg.train, engine->features());
    } else if (mode == "gold-only") {
        model = train_stage(LinearModel{}, gold_train, gold_valid, cfg.train, engine->features(), "gold");
    } else {
        model = train_stage(LinearModel{}, weak, gold_valid, cfg.train, engine->features(), "weak");
    }
    {
        auto out = open_output(cfg.model);
        model.save(out);
    }

    json stages = json::array();
    for (const auto& s : model.stages) {
        stages.push_back({{"stage", s.name},
                          {"epochs_run", s.epochs_run},
                          {"best_epoch", s.best_epoch},
                          {"final_train_loss", s.train_loss.empty() ? 0.0 : s.train_loss.back()},
                          {"best_valid_loss", s.valid_loss.empty()
                                                  ? json(nullptr)
                                                  : json(*std::min_element(s.valid_loss.begin(), s.valid_loss.end()))}});
    }
    std::cout << json{{"model", cfg.model.string()},
                      {"train_queries", train_q.size()},
                      {"valid_queries", valid_q.size()},
                      {"stages", stages}}
                     .dump()
              << '\n';
    return kExitOk;
}

int cmd_query(const PipelineConfig& cfg, const std::optional<std::string>& question, const std::string& id) {
    const auto engine = Engine::open(cfg);
    if (question) {
        std::cout << to_json(engine->answer(id, *question)).dump() << '\n';
        return kExitOk;
    }
    // Interactive: one question per input line.
    std::string line;
    std::size_t n = 0;
    while (std::getline(std::cin, line)) {
        if (clean_text(line).empty()) continue;
        std::cout << to_json(engine->answer("q" + std::to_string(++n), line)).dump() << std::endl;
    }
    return kExitOk;
}

int cmd_eval(const PipelineConfig& cfg, bool quickview_only, bool end_to_end_only, const std::vector<std::size_t>& ks,
             const std::string& report_path, bool no_latency) {
    require_file(cfg.gold_queries, "gold queries");
    EvalConfig ec;
    ec.k_values = ks;
    ec.quickview = !end_to_end_only;
    ec.end_to_end = !quickview_only;
    ec.ensemble = cfg.ensemble();
    const auto engine = Engine::open(cfg, ec.end_to_end);
    std::vector<GoldQuery> queries;
    {
        auto in = open_input(cfg.gold_queries);
        queries = read_gold_queries(in);
    }
    const EvalReport report = run_eval(queries, engine->quickview(), engine->scorer(), ec);
    const std::string text = report.to_json(!no_latency).dump(2);
    if (report_path.empty()) {
        std::cout << text << '\n';
    } else {
        auto out = open_output(report_path);
        out << text << '\n';
    }
    for (const auto& q : report.per_query) {
        if (q.error) std::cerr << "query " << q.question_id << " failed: " << *q.error << '\n';
    }
    return report.failed > 0 ? kExitRuntime : kExitOk;
}

int cmd_serve(const PipelineConfig& cfg, const std::string& host, int port) {
    const auto engine = Engine::open(cfg);
    auto server = make_service(*engine);
    std::cerr << "listening on " << host << ':' << port << '\n';
    if (!server->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Article retrieval question answering over statute corpora"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all");

    Overrides o;
    app.add_option("-c,--config", o.config, "JSON pipeline config (default: $LEXQA_CONFIG)");
    app.add_option("--corpus", o.corpus, "Corpus file (JSON lines)");
    app.add_option("--index-dir", o.index_dir, "Directory holding lex.idx and dense.idx");
    app.add_option("--model", o.model, "Linear model file");
    app.add_option("--alpha", o.alpha, "Title BM25 boost");
    app.add_option("--beta", o.beta, "Content BM25 boost");
    app.add_option("--k1", o.k1, "BM25 k1");
    app.add_option("--b", o.b, "BM25 b");
    app.add_option("--gamma", o.gamma, "Weight of the quickview score in the combination");
    app.add_option("--threshold", o.threshold, "Answer selection threshold (default: tuned per top-k)");
    app.add_option("--scorer-command", o.scorer_command, "Use an external relevance scorer process");
    app.add_flag("--no-dense", o.no_dense, "Skip the dense index");
    app.add_option("--embed-dim", o.embed_dim, "Hashed embedder dimension");
    app.add_option("--embed-seed", o.embed_seed, "Hashed embedder seed");

    auto* index = app.add_subcommand("index", "Build the lexical and dense indexes");

    auto* weak = app.add_subcommand("weaklabel", "Generate the weak-label dataset from article titles");
    std::optional<std::size_t> ratio;
    std::optional<std::uint64_t> weak_seed;
    weak->add_option("-o,--out", o.weak_dataset, "Output dataset file");
    weak->add_option("--ratio", ratio, "Negatives per positive")->check(CLI::PositiveNumber);
    weak->add_option("--seed", weak_seed, "Sampling seed");

    auto* train = app.add_subcommand("train", "Train the linear reranker");
    std::string mode = "two-stage";
    std::optional<std::size_t> epochs, batch;
    std::optional<double> lr, split_ratio;
    std::optional<std::uint64_t> train_seed, split_seed;
    train->add_option("--mode", mode, "two-stage | gold-only | weak-only")
        ->check(CLI::IsMember({"two-stage", "gold-only", "weak-only"}));
    train->add_option("--weak", o.weak_dataset, "Weak-label dataset");
    train->add_option("--gold", o.gold_queries, "Gold query file");
    train->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
    train->add_option("--batch-size", batch)->check(CLI::PositiveNumber);
    train->add_option("--lr", lr);
    train->add_option("--seed", train_seed, "Shuffle seed");
    train->add_option("--split-ratio", split_ratio, "Train share of the gold queries");
    train->add_option("--split-seed", split_seed);

    auto* query = app.add_subcommand("query", "Answer one question, or questions read from stdin");
    std::optional<std::string> question;
    std::string question_id = kDefaultQuestionId;
    query->add_option("-q,--question", question, "Question text (omit for an interactive loop)");
    query->add_option("--id", question_id, "Question id echoed in the output");
    query->add_option("-k,--k", o.top_k, "Quickview candidates")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Evaluate against gold queries");
    bool quickview_only = false;
    bool end_to_end_only = false;
    std::string k_list = "50,100,200";
    std::string report_path;
    bool no_latency = false;
    eval->add_option("--queries", o.gold_queries, "Gold query file");
    auto* qv_flag = eval->add_flag("--quickview", quickview_only, "Quickview Recall@k only");
    eval->add_flag("--end-to-end", end_to_end_only, "End-to-end metrics only")->excludes(qv_flag);
    eval->add_option("--k", k_list, "Comma separated Recall@k cut-offs");
    eval->add_option("--top-k", o.top_k, "Candidates for end-to-end answering")->check(CLI::PositiveNumber);
    eval->add_option("-o,--report", report_path, "Write the report here instead of stdout");
    eval->add_flag("--no-latency", no_latency, "Omit wall-clock fields (stable output)");

    auto* serve = app.add_subcommand("serve", "HTTP query endpoint");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::size_t> max_question;
    serve->add_option("--host", host);
    serve->add_option("--port", port)->check(CLI::Range(1, 65535));
    serve->add_option("--max-question-bytes", max_question)->check(CLI::PositiveNumber);

    std::vector<std::size_t> ks;
    try {
        app.parse(argc, argv);
        if (eval->parsed()) ks = parse_k_list(k_list);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        PipelineConfig cfg = o.resolve();
        if (ratio) cfg.weak.negative_ratio = *ratio;
        if (weak_seed) cfg.weak.rng_seed = *weak_seed;
        if (epochs) cfg.train.epochs = *epochs;
        if (batch) cfg.train.batch_size = *batch;
        if (lr) cfg.train.learning_rate = *lr;
        if (train_seed) cfg.train.rng_seed = *train_seed;
        if (split_ratio) cfg.split_ratio = *split_ratio;
        if (split_seed) cfg.split_seed = *split_seed;
        if (max_question) cfg.max_question_bytes = *max_question;
        cfg.validate();

        if (index->parsed()) return cmd_index(cfg);
        if (weak->parsed()) return cmd_weaklabel(cfg);
        if (train->parsed()) return cmd_train(cfg, mode);
        if (query->parsed()) return cmd_query(cfg, question, question_id);
        if (eval->parsed()) return cmd_eval(cfg, quickview_only, end_to_end_only, ks, report_path, no_latency);
        if (serve->parsed()) return cmd_serve(cfg, host, port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
