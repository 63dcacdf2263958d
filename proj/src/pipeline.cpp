#include "xlr/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <omp.h>

#include "parallel.hpp"
#include "xlr/errors.hpp"
#include "xlr/eval_metrics.hpp"

namespace xlr {

namespace fs = std::filesystem;
using nlohmann::json;

OnScorerError parse_on_scorer_error(const std::string& name)
{
    if (name == "fail") {
        return OnScorerError::fail;
    }
    if (name == "zero") {
        return OnScorerError::zero;
    }
    throw UsageError("--on-scorer-error must be fail or zero, got '" + name + "'");
}

Analyzer AnalyzerSpec::make() const
{
    AnalyzerOptions opt;
    opt.lowercase = lowercase;
    if (stopwords) {
        opt.stopwords = load_stopwords(*stopwords);
    }
    if (mode) {
        if (*mode == "cjk-bigram") {
            opt.mode = TokenMode::cjk_bigram;
        } else if (*mode == "unicode-word") {
            opt.mode = TokenMode::unicode_word;
        } else {
            throw UsageError("unknown tokenization mode '" + *mode + "'");
        }
    }
    return Analyzer(lang, std::move(opt));
}

void set_threads(int threads)
{
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
}

// index ---------------------------------------------------------------

InvertedIndex run_index(const IndexCommand& cmd)
{
    CorpusReader reader(cmd.corpus, cmd.format, cmd.analyzer.lang);
    auto index = build_index(reader, cmd.analyzer.make(), cmd.bm25);
    if (!cmd.out.empty()) {
        index.save(cmd.out);
    }
    return index;
}

// search --------------------------------------------------------------

std::vector<RunEntry> bm25_run(const InvertedIndex& index, std::span<const Query> queries,
                               std::size_t k, const std::string& tag)
{
    if (k == 0) {
        throw UsageError("k must be positive");
    }
    auto results = search_batch(index, queries, k);
    std::vector<RunEntry> run;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto entries = to_run_entries(queries[i].topic_id, std::span<const ScoredDoc>(results[i]), tag);
        run.insert(run.end(), entries.begin(), entries.end());
    }
    return run;
}

std::vector<RunEntry> run_search(const SearchCommand& cmd)
{
    auto index = InvertedIndex::load(cmd.index);
    if (cmd.bm25) {
        index.set_params(*cmd.bm25);
    }
    auto queries = load_topics(cmd.topics, cmd.lang_select, cmd.topic_field);
    auto run = bm25_run(index, queries, cmd.k, cmd.tag);
    if (!cmd.out.empty()) {
        write_run(cmd.out, run);
    }
    return run;
}

// rerank --------------------------------------------------------------

std::unordered_map<std::string, std::string> load_contents(const fs::path& corpus,
                                                           CorpusFormat format,
                                                           const std::unordered_set<std::string>& wanted)
{
    std::unordered_map<std::string, std::string> out;
    CorpusReader reader(corpus, format);
    while (auto doc = reader.next()) {
        if (wanted.contains(doc->doc_id)) {
            out.emplace(std::move(doc->doc_id), std::move(doc->contents));
        }
    }
    return out;
}

std::vector<TopicCandidates> score_candidates(
    std::span<const Query> queries,
    const std::vector<std::pair<std::string, std::vector<RunEntry>>>& candidates,
    const std::unordered_map<std::string, std::string>& contents, SentenceScorer& scorer,
    const SentenceOptions& options)
{
    std::map<std::string, const std::vector<RunEntry>*> by_topic;
    for (const auto& [topic, entries] : candidates) {
        by_topic[topic] = &entries;
    }
    std::vector<TopicCandidates> out(queries.size());
    detail::parallel_for(queries.size(), [&](std::size_t qi) {
        const auto& query = queries[qi];
        TopicCandidates& tc = out[qi];
        tc.topic_id = query.topic_id;
        auto it = by_topic.find(query.topic_id);
        if (it == by_topic.end()) {
            return;
        }
        std::vector<SentenceInput> inputs;
        for (const auto& e : *it->second) {
            tc.candidates.push_back({e.doc_id, e.score});
            auto doc = contents.find(e.doc_id);
            if (doc == contents.end()) {
                throw DataError("candidate " + e.doc_id + " of topic " + query.topic_id +
                                " is not in the corpus");
            }
            tc.sentence_scores[e.doc_id];
            for (auto& s : split_sentences(options.lang, doc->second, options.max_chars, e.doc_id)) {
                inputs.push_back({std::move(s.doc_id), s.index, std::move(s.text)});
            }
        }
        const ScoreContext ctx{query.topic_id, query.text};
        std::vector<double> scores;
        scores.reserve(inputs.size());
        for (std::size_t from = 0; from < inputs.size(); from += options.batch_size) {
            auto chunk = std::span<const SentenceInput>(inputs).subspan(
                from, std::min(options.batch_size, inputs.size() - from));
            try {
                auto part = score_batch(scorer, ctx, chunk, options.batch_size);
                scores.insert(scores.end(), part.begin(), part.end());
            } catch (const ScorerError& e) {
                if (options.on_error == OnScorerError::fail) {
                    throw;
                }
                std::cerr << "warning: topic " << query.topic_id << ": " << e.what()
                          << "; scoring batch as 0\n";
                scores.insert(scores.end(), chunk.size(), 0.0);
            }
        }
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            tc.sentence_scores[inputs[i].doc_id].push_back(scores[i]);
        }
    });
    return out;
}

namespace {

std::unordered_set<std::string> candidate_ids(
    const std::vector<std::pair<std::string, std::vector<RunEntry>>>& candidates)
{
    std::unordered_set<std::string> ids;
    for (const auto& [_, entries] : candidates) {
        for (const auto& e : entries) {
            ids.insert(e.doc_id);
        }
    }
    return ids;
}

std::unique_ptr<SentenceScorer> open_scorer(const std::string& spec, const Analyzer& analyzer,
                                            const std::optional<fs::path>& cache_dir)
{
    auto scorer = make_scorer(spec, analyzer);
    std::optional<fs::path> dir = cache_dir;
    if (!dir) {
        if (const char* env = std::getenv("XLR_CACHE_DIR"); env && *env) {
            dir = fs::path(env);
        }
    }
    if (dir) {
        return std::make_unique<CachedScorer>(std::move(scorer), *dir);
    }
    return scorer;
}

struct RerankJob {
    std::vector<TopicCandidates> topics;
    RerankOptions fusion;
    std::optional<FusionParams> params;
    Grid grid;
    std::optional<Qrels> qrels;
    std::vector<std::size_t> k_values;
    std::size_t n_folds = 5;
    std::uint64_t seed = 42;
    std::string tag;
};

void write_json(const fs::path& path, const json& j)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

std::vector<RunEntry> rerank_fixed(const RerankJob& job)
{
    std::vector<RunEntry> run;
    for (const auto& tc : job.topics) {
        auto fused = rerank(tc.candidates, tc.sentence_scores, *job.params, job.fusion);
        auto entries = to_run_entries(tc.topic_id, std::span<const FusedDoc>(fused), job.tag);
        run.insert(run.end(), entries.begin(), entries.end());
    }
    return run;
}

// Fixed params -> `out` is the run file. Grid -> `out` is a directory
// receiving rerank.k<k>.run and tuning.k<k>.json per k.
RerankOutput execute(RerankJob job, const fs::path& out)
{
    RerankOutput result;
    if (job.params) {
        job.params->validate();
        write_run(out, rerank_fixed(job));
        result.runs.push_back(out);
        return result;
    }
    if (!job.qrels) {
        throw UsageError("tuning needs qrels");
    }
    job.grid.validate();
    std::vector<std::string> ids;
    for (const auto& tc : job.topics) {
        ids.push_back(tc.topic_id);
    }
    auto assignment = assign_folds(ids, job.n_folds, job.seed);
    auto ks = job.k_values.empty() ? job.grid.k_values : job.k_values;
    RerankPipeline pipeline(std::move(job.topics), std::move(*job.qrels), job.fusion);
    for (auto k : ks) {
        const std::string suffix = "k" + std::to_string(k);
        auto cv = cross_validate(assignment, job.grid.with_k(k), pipeline,
                                 job.tag + "-" + std::to_string(k) + "S");
        auto run_path = out / ("rerank." + suffix + ".run");
        auto report_path = out / ("tuning." + suffix + ".json");
        write_run(run_path, cv.heldout_run);
        auto report = cv_report_json(cv);
        report["k"] = k;
        report["normalize_bm25"] = job.fusion.normalize_bm25;
        write_json(report_path, report);
        result.runs.push_back(run_path);
        result.reports.push_back(report_path);
    }
    return result;
}

}  // namespace

RerankOutput run_rerank(const RerankCommand& cmd)
{
    if (cmd.index.has_value() == cmd.run.has_value()) {
        throw UsageError("rerank needs exactly one of --index or --run");
    }
    if (cmd.params.has_value() == cmd.grid.has_value()) {
        throw UsageError("rerank needs exactly one of --params or --grid");
    }
    if (cmd.grid && !cmd.qrels) {
        throw UsageError("--grid requires --qrels");
    }
    auto queries = load_topics(cmd.topics, cmd.lang_select, cmd.topic_field);

    std::optional<Analyzer> analyzer;
    std::vector<std::pair<std::string, std::vector<RunEntry>>> candidates;
    SentenceOptions sentences = cmd.sentences;
    if (cmd.index) {
        auto index = InvertedIndex::load(*cmd.index);
        analyzer = index.analyzer();
        sentences.lang = index.analyzer().lang();
        candidates = group_run(bm25_run(index, queries, cmd.k_candidates, "bm25"));
    } else {
        analyzer = cmd.analyzer.make();
        auto run = read_run(*cmd.run);
        candidates = group_run(run);
    }
    auto contents = load_contents(cmd.corpus, cmd.format, candidate_ids(candidates));
    auto scorer = open_scorer(cmd.scorer, *analyzer, cmd.scorer_cache);

    RerankJob job;
    job.topics = score_candidates(queries, candidates, contents, *scorer, sentences);
    job.fusion = cmd.fusion;
    job.params = cmd.params;
    if (cmd.grid) {
        job.grid = *cmd.grid;
        job.qrels = read_qrels(*cmd.qrels);
    }
    job.k_values = cmd.k_sentences;
    job.n_folds = cmd.n_folds;
    job.seed = cmd.seed;
    job.tag = cmd.tag;
    return execute(std::move(job), cmd.out);
}

// eval ----------------------------------------------------------------

EvalReport run_eval(const EvalCommand& cmd)
{
    auto run = read_run(cmd.run);
    auto qrels = read_qrels(cmd.qrels);
    auto report = evaluate_run(run, qrels);
    if (cmd.out) {
        if (cmd.out->extension() == ".json") {
            write_json(*cmd.out, eval_to_json(report));
        } else {
            if (cmd.out->has_parent_path()) {
                fs::create_directories(cmd.out->parent_path());
            }
            std::ofstream out(*cmd.out, std::ios::binary);
            if (!out) {
                throw DataError("cannot write " + cmd.out->string());
            }
            write_eval_tsv(out, report);
        }
    }
    return report;
}

// experiment ------------------------------------------------------------

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback)
{
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path resolve(const fs::path& base, const fs::path& p)
{
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace

ExperimentConfig load_experiment_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open experiment config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    const fs::path base = fs::absolute(path).parent_path();
    ExperimentConfig cfg;
    try {
        for (const char* key : {"corpus", "topics", "qrels", "query_lang", "output_dir"}) {
            if (!j.contains(key)) {
                throw UsageError(path.string() + ": missing \"" + key + "\"");
            }
        }
        cfg.name = get_or<std::string>(j, "name", path.stem().string());
        cfg.corpus = resolve(base, j.at("corpus").get<std::string>());
        cfg.format = parse_corpus_format(get_or<std::string>(j, "format", "jsonl"));
        if (j.contains("analyzer")) {
            const auto& a = j["analyzer"];
            cfg.analyzer.lang = get_or<std::string>(a, "lang", "en");
            cfg.analyzer.lowercase = get_or<bool>(a, "lowercase", true);
            if (a.contains("stopwords")) {
                cfg.analyzer.stopwords = resolve(base, a["stopwords"].get<std::string>());
            }
            if (a.contains("mode")) {
                cfg.analyzer.mode = a["mode"].get<std::string>();
            }
        }
        if (j.contains("bm25")) {
            cfg.bm25.k1 = get_or<double>(j["bm25"], "k1", cfg.bm25.k1);
            cfg.bm25.b = get_or<double>(j["bm25"], "b", cfg.bm25.b);
        }
        cfg.topics = resolve(base, j.at("topics").get<std::string>());
        cfg.query_lang = j.at("query_lang").get<std::string>();
        cfg.topic_field = get_or<std::string>(j, "topic_field", "titles");
        cfg.qrels = resolve(base, j.at("qrels").get<std::string>());
        cfg.k_candidates = get_or<std::size_t>(j, "k_candidates", 1000);
        if (j.contains("scorer") && !j["scorer"].is_null()) {
            auto spec = j["scorer"].get<std::string>();
            const std::string clair = "builtin:clairvoyant";
            if (spec == clair) {
                spec = clair + ":" + cfg.qrels.string();
            } else if (spec.starts_with(clair + ":")) {
                spec = clair + ":" + resolve(base, spec.substr(clair.size() + 1)).string();
            }
            cfg.scorer = spec;
        }
        cfg.sentences.lang = cfg.analyzer.lang;
        if (j.contains("sentences")) {
            const auto& s = j["sentences"];
            cfg.sentences.max_chars = get_or<std::size_t>(s, "max_chars", cfg.sentences.max_chars);
            cfg.sentences.batch_size = get_or<std::size_t>(s, "batch_size", cfg.sentences.batch_size);
            cfg.sentences.on_error =
                parse_on_scorer_error(get_or<std::string>(s, "on_scorer_error", "fail"));
        }
        cfg.fusion.normalize_bm25 = get_or<bool>(j, "normalize_bm25", false);
        if (j.contains("params")) {
            cfg.params = fusion_params_from_json(j["params"]);
        }
        if (j.contains("grid")) {
            cfg.grid = grid_from_json(j["grid"]);
        }
        cfg.n_folds = get_or<std::size_t>(j, "n_folds", 5);
        cfg.seed = get_or<std::uint64_t>(j, "seed", 42);
        cfg.output_dir = resolve(base, j.at("output_dir").get<std::string>());
        cfg.save_index = get_or<bool>(j, "save_index", false);
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    return cfg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    ExperimentResult result;
    fs::create_directories(cfg.output_dir);

    CorpusReader reader(cfg.corpus, cfg.format, cfg.analyzer.lang);
    const auto analyzer = cfg.analyzer.make();
    auto index = build_index(reader, analyzer, cfg.bm25);
    if (cfg.save_index) {
        index.save(cfg.output_dir / "index.bin");
    }
    auto queries = load_topics(cfg.topics, cfg.query_lang, cfg.topic_field);
    auto run = bm25_run(index, queries, cfg.k_candidates, "bm25");
    result.bm25_run = cfg.output_dir / "bm25.run";
    write_run(result.bm25_run, run);

    if (cfg.scorer) {
        auto candidates = group_run(run);
        auto contents = load_contents(cfg.corpus, cfg.format, candidate_ids(candidates));
        auto scorer = open_scorer(*cfg.scorer, analyzer, std::nullopt);
        RerankJob job;
        job.topics = score_candidates(queries, candidates, contents, *scorer, cfg.sentences);
        job.fusion = cfg.fusion;
        job.params = cfg.params;
        job.grid = cfg.grid;
        job.qrels = read_qrels(cfg.qrels);
        job.n_folds = cfg.n_folds;
        job.seed = cfg.seed;
        job.tag = "xlr";
        auto out = cfg.params ? cfg.output_dir / "rerank.run" : cfg.output_dir;
        result.rerank_runs = execute(std::move(job), out).runs;
    }

    const auto qrels = read_qrels(cfg.qrels);
    json runs = json::object();
    auto evaluate = [&](const fs::path& run_path) {
        auto report = evaluate_run(read_run(run_path), qrels);
        const auto name = run_path.stem().string();
        std::ofstream tsv(cfg.output_dir / ("eval." + name + ".tsv"), std::ios::binary);
        write_eval_tsv(tsv, report);
        runs[name] = {{"num_q", report.num_defined},
                      {"map", report.map},
                      {"P_20", report.p20},
                      {"ndcg_cut_20", report.ndcg20}};
    };
    evaluate(result.bm25_run);
    for (const auto& p : result.rerank_runs) {
        evaluate(p);
    }
    result.summary = {{"name", cfg.name},
                      {"query_lang", cfg.query_lang},
                      {"doc_lang", cfg.analyzer.lang},
                      {"seed", cfg.seed},
                      {"n_folds", cfg.n_folds},
                      {"scorer", cfg.scorer ? json(*cfg.scorer) : json(nullptr)},
                      {"runs", std::move(runs)}};
    result.report = cfg.output_dir / "eval.json";
    write_json(result.report, result.summary);
    return result;
}

}  // namespace xlr
