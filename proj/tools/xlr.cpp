// xlr: index, search, rerank, evaluate, and run whole experiments.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer error.

#include <iostream>

#include "CLI11.hpp"
#include "xlr/errors.hpp"
#include "xlr/pipeline.hpp"

namespace {

using namespace xlr;
namespace fs = std::filesystem;

void add_analyzer_options(CLI::App* cmd, AnalyzerSpec& spec, std::string& stopwords,
                          std::string& mode, bool& no_lowercase)
{
    cmd->add_option("--lang", spec.lang, "Document language code")->capture_default_str();
    cmd->add_option("--stopwords", stopwords, "Stopword file (one term per line)");
    cmd->add_option("--mode", mode, "Tokenization mode: unicode-word or cjk-bigram");
    cmd->add_flag("--no-lowercase", no_lowercase, "Keep original case");
}

void finish_analyzer(AnalyzerSpec& spec, const std::string& stopwords, const std::string& mode,
                     bool no_lowercase)
{
    spec.lowercase = !no_lowercase;
    if (!stopwords.empty()) {
        spec.stopwords = fs::path(stopwords);
    }
    if (!mode.empty()) {
        spec.mode = mode;
    }
}

Grid load_grid(const std::string& arg)
{
    if (arg == "default") {
        return Grid::default_grid();
    }
    std::ifstream in(arg);
    if (!in) {
        throw UsageError("cannot open grid file " + arg);
    }
    try {
        return grid_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError(arg + ": " + e.what());
    }
}

int run(int argc, char** argv)
{
    CLI::App app{"Multilingual BM25 retrieval with sentence-level evidence reranking"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

    // index
    IndexCommand index_cmd;
    std::string index_corpus, index_out, index_format = "jsonl", index_stop, index_mode;
    bool index_nolower = false;
    auto* index = app.add_subcommand("index", "Build an index snapshot from a corpus");
    index->add_option("--corpus", index_corpus, "Corpus file")->required();
    index->add_option("--format", index_format, "jsonl or trec-sgml")->capture_default_str();
    index->add_option("--out", index_out, "Snapshot path")->required();
    index->add_option("--k1", index_cmd.bm25.k1, "BM25 k1")->capture_default_str();
    index->add_option("--b", index_cmd.bm25.b, "BM25 b")->capture_default_str();
    add_analyzer_options(index, index_cmd.analyzer, index_stop, index_mode, index_nolower);

    // search
    SearchCommand search_cmd;
    std::string search_index, search_topics, search_out;
    std::optional<double> search_k1, search_b;
    auto* search = app.add_subcommand("search", "BM25 retrieval into a run file");
    search->add_option("--index", search_index, "Index snapshot")->required();
    search->add_option("--topics", search_topics, "Topics JSONL")->required();
    search->add_option("--lang", search_cmd.lang_select, "Topic language variant")->required();
    search->add_option("--topic-field", search_cmd.topic_field, "Topic field holding variants")
        ->capture_default_str();
    search->add_option("-k,--k", search_cmd.k, "Hits per topic")->capture_default_str();
    search->add_option("--k1", search_k1, "Override BM25 k1");
    search->add_option("--b", search_b, "Override BM25 b");
    search->add_option("--tag", search_cmd.tag, "Run tag")->capture_default_str();
    search->add_option("--out", search_out, "Run file")->required();

    // rerank
    RerankCommand rr;
    std::string rr_index, rr_run, rr_corpus, rr_format = "jsonl", rr_topics, rr_params, rr_grid,
                                             rr_qrels, rr_out, rr_cache, rr_stop, rr_mode,
                                             rr_on_error = "fail";
    bool rr_nolower = false;
    auto* rerank = app.add_subcommand("rerank", "Rerank BM25 candidates with sentence evidence");
    rerank->add_option("--index", rr_index, "Index snapshot (candidates by search)");
    rerank->add_option("--run", rr_run, "Existing candidate run");
    rerank->add_option("-k,--k", rr.k_candidates, "Candidates per topic when searching")
        ->capture_default_str();
    rerank->add_option("--corpus", rr_corpus, "Corpus file (sentence source)")->required();
    rerank->add_option("--format", rr_format, "jsonl or trec-sgml")->capture_default_str();
    rerank->add_option("--topics", rr_topics, "Topics JSONL")->required();
    rerank->add_option("--query-lang", rr.lang_select, "Topic language variant")->required();
    rerank->add_option("--topic-field", rr.topic_field, "Topic field holding variants")
        ->capture_default_str();
    rerank->add_option("--scorer", rr.scorer,
                       "builtin:constant:<v> | builtin:lexical | builtin:clairvoyant:<qrels> | "
                       "http:<url> | stdio:<command>")
        ->required();
    rerank->add_option("--cache-dir", rr_cache, "Score cache directory (default $XLR_CACHE_DIR)");
    rerank->add_option("--params", rr_params, "Fixed fusion params JSON");
    rerank->add_option("--grid", rr_grid, "Grid JSON or 'default' (runs cross-validation)");
    rerank->add_option("--qrels", rr_qrels, "Qrels for tuning");
    rerank->add_option("--k-sentences", rr.k_sentences, "Sentence counts to report (1..3)");
    rerank->add_option("--folds", rr.n_folds, "Cross-validation folds")->capture_default_str();
    rerank->add_option("--seed", rr.seed, "Fold assignment seed")->capture_default_str();
    rerank->add_option("--max-sentence-chars", rr.sentences.max_chars, "Sentence hard-split budget")
        ->capture_default_str();
    rerank->add_option("--batch-size", rr.sentences.batch_size, "Sentences per scorer request")
        ->capture_default_str();
    rerank->add_option("--on-scorer-error", rr_on_error, "fail or zero")->capture_default_str();
    rerank->add_flag("--normalize-bm25", rr.fusion.normalize_bm25, "Min-max BM25 scores per query");
    rerank->add_option("--tag", rr.tag, "Run tag")->capture_default_str();
    rerank->add_option("--out", rr_out, "Run file (--params) or output directory (--grid)")
        ->required();
    add_analyzer_options(rerank, rr.analyzer, rr_stop, rr_mode, rr_nolower);

    // eval
    EvalCommand eval_cmd;
    std::string eval_run, eval_qrels, eval_out;
    bool eval_json = false;
    auto* eval = app.add_subcommand("eval", "Compute AP, P@20 and NDCG@20");
    eval->add_option("--run", eval_run, "Run file")->required();
    eval->add_option("--qrels", eval_qrels, "Qrels file")->required();
    eval->add_option("--out", eval_out, "Report path (.json for JSON, else TSV)");
    eval->add_flag("--json", eval_json, "Print JSON instead of TSV");

    // experiment
    std::string exp_config;
    auto* experiment = app.add_subcommand("experiment", "Run index, search, rerank and eval");
    experiment->add_option("config", exp_config, "Experiment config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    set_threads(threads);

    if (*index) {
        index_cmd.corpus = index_corpus;
        index_cmd.format = parse_corpus_format(index_format);
        index_cmd.out = index_out;
        finish_analyzer(index_cmd.analyzer, index_stop, index_mode, index_nolower);
        auto idx = run_index(index_cmd);
        std::cerr << "indexed " << idx.num_docs() << " documents, " << idx.num_terms()
                  << " terms, avgdl " << idx.avgdl() << '\n';
    } else if (*search) {
        search_cmd.index = search_index;
        search_cmd.topics = search_topics;
        search_cmd.out = search_out;
        if (search_k1 || search_b) {
            auto params = InvertedIndex::load(search_cmd.index).params();
            params.k1 = search_k1.value_or(params.k1);
            params.b = search_b.value_or(params.b);
            search_cmd.bm25 = params;
        }
        run_search(search_cmd);
    } else if (*rerank) {
        if (!rr_index.empty()) {
            rr.index = fs::path(rr_index);
        }
        if (!rr_run.empty()) {
            rr.run = fs::path(rr_run);
        }
        rr.corpus = rr_corpus;
        rr.format = parse_corpus_format(rr_format);
        rr.topics = rr_topics;
        if (!rr_params.empty()) {
            rr.params = load_fusion_params(rr_params);
        }
        if (!rr_grid.empty()) {
            rr.grid = load_grid(rr_grid);
        }
        if (!rr_qrels.empty()) {
            rr.qrels = fs::path(rr_qrels);
        }
        if (!rr_cache.empty()) {
            rr.scorer_cache = fs::path(rr_cache);
        }
        rr.sentences.on_error = parse_on_scorer_error(rr_on_error);
        rr.sentences.lang = rr.analyzer.lang;
        rr.out = rr_out;
        finish_analyzer(rr.analyzer, rr_stop, rr_mode, rr_nolower);
        auto out = run_rerank(rr);
        for (const auto& p : out.runs) {
            std::cerr << "wrote " << p.string() << '\n';
        }
    } else if (*eval) {
        eval_cmd.run = eval_run;
        eval_cmd.qrels = eval_qrels;
        if (!eval_out.empty()) {
            eval_cmd.out = fs::path(eval_out);
        }
        auto report = run_eval(eval_cmd);
        for (const auto& w : report.warnings) {
            std::cerr << "warning: " << w << '\n';
        }
        if (eval_out.empty()) {
            if (eval_json) {
                std::cout << eval_to_json(report).dump(2) << '\n';
            } else {
                write_eval_tsv(std::cout, report);
            }
        }
    } else if (*experiment) {
        auto result = run_experiment(load_experiment_config(exp_config));
        std::cout << result.summary.dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const xlr::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const xlr::ScorerError& e) {
        std::cerr << "scorer error: " << e.what() << '\n';
        return 3;
    } catch (const xlr::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
