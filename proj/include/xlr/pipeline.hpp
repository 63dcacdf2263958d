#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlr/corpus_io.hpp"
#include "xlr/evidence_fusion.hpp"
#include "xlr/inverted_index.hpp"
#include "xlr/scorer_gateway.hpp"
#include "xlr/text_analysis.hpp"
#include "xlr/tuning_cv.hpp"

namespace xlr {

enum class OnScorerError { fail, zero };

OnScorerError parse_on_scorer_error(const std::string& name);

struct AnalyzerSpec {
    std::string lang = "en";
    bool lowercase = true;
    std::optional<std::filesystem::path> stopwords;
    std::optional<std::string> mode;  // "unicode-word" | "cjk-bigram"

    Analyzer make() const;
};

// index ---------------------------------------------------------------

struct IndexCommand {
    std::filesystem::path corpus;
    CorpusFormat format = CorpusFormat::jsonl;
    AnalyzerSpec analyzer;
    Bm25Params bm25;
    std::filesystem::path out;
};

InvertedIndex run_index(const IndexCommand& cmd);

// search --------------------------------------------------------------

struct SearchCommand {
    std::filesystem::path index;
    std::filesystem::path topics;
    std::string lang_select;
    std::string topic_field = "titles";
    std::size_t k = 1000;
    std::optional<Bm25Params> bm25;  // overrides the snapshot's parameters
    std::filesystem::path out;
    std::string tag = "bm25";
};

std::vector<RunEntry> bm25_run(const InvertedIndex& index, std::span<const Query> queries,
                               std::size_t k, const std::string& tag);
std::vector<RunEntry> run_search(const SearchCommand& cmd);

// rerank --------------------------------------------------------------

struct SentenceOptions {
    std::string lang = "en";
    std::size_t max_chars = kDefaultSentenceBudget;
    std::size_t batch_size = kDefaultScoreBatch;
    OnScorerError on_error = OnScorerError::fail;
};

/// Splits every candidate into sentences and scores them. Topics are
/// processed in parallel; output order follows `queries`.
std::vector<TopicCandidates> score_candidates(
    std::span<const Query> queries,
    const std::vector<std::pair<std::string, std::vector<RunEntry>>>& candidates,
    const std::unordered_map<std::string, std::string>& contents, SentenceScorer& scorer,
    const SentenceOptions& options);

/// doc_id -> contents for the requested documents only (streams the corpus).
std::unordered_map<std::string, std::string> load_contents(
    const std::filesystem::path& corpus, CorpusFormat format,
    const std::unordered_set<std::string>& wanted);

struct RerankCommand {
    std::optional<std::filesystem::path> index;  // candidates by searching the index...
    std::optional<std::filesystem::path> run;    // ...or from an existing run
    std::size_t k_candidates = 1000;
    std::filesystem::path corpus;
    CorpusFormat format = CorpusFormat::jsonl;
    std::filesystem::path topics;
    std::string lang_select;
    std::string topic_field = "titles";
    std::string scorer;
    std::optional<std::filesystem::path> scorer_cache;  // defaults to $XLR_CACHE_DIR
    AnalyzerSpec analyzer;  // for builtin:lexical when reranking from a run
    SentenceOptions sentences;
    RerankOptions fusion;
    std::optional<FusionParams> params;
    std::optional<Grid> grid;
    std::optional<std::filesystem::path> qrels;
    std::vector<std::size_t> k_sentences;  // overrides the grid's k values
    std::size_t n_folds = 5;
    std::uint64_t seed = 42;
    std::filesystem::path out;  // run file (fixed params) or output directory (CV)
    std::string tag = "xlr";
};

struct RerankOutput {
    std::vector<std::filesystem::path> runs;
    std::vector<std::filesystem::path> reports;
};

RerankOutput run_rerank(const RerankCommand& cmd);

// eval ----------------------------------------------------------------

struct EvalCommand {
    std::filesystem::path run;
    std::filesystem::path qrels;
    std::optional<std::filesystem::path> out;  // ".json" -> JSON, otherwise TSV
};

EvalReport run_eval(const EvalCommand& cmd);

// experiment ------------------------------------------------------------

/// One declarative experiment. Relative paths resolve against the config
/// file's directory.
struct ExperimentConfig {
    std::string name = "experiment";
    std::filesystem::path corpus;
    CorpusFormat format = CorpusFormat::jsonl;
    AnalyzerSpec analyzer;
    Bm25Params bm25;
    std::filesystem::path topics;
    std::string query_lang;
    std::string topic_field = "titles";
    std::filesystem::path qrels;
    std::size_t k_candidates = 1000;
    std::optional<std::string> scorer;  // absent: BM25 only
    SentenceOptions sentences;
    RerankOptions fusion;
    std::optional<FusionParams> params;
    Grid grid = Grid::default_grid();
    std::size_t n_folds = 5;
    std::uint64_t seed = 42;
    std::filesystem::path output_dir;
    bool save_index = false;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentResult {
    std::filesystem::path bm25_run;
    std::vector<std::filesystem::path> rerank_runs;
    std::filesystem::path report;  // eval.json summarizing every run
    nlohmann::json summary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Sets the OpenMP thread count; 0 leaves the runtime default.
void set_threads(int threads);

}  // namespace xlr
