#include <cstdlib>
#include <omp.h>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"
#include "xlr/errors.hpp"
#include "xlr/pipeline.hpp"

using namespace xlr;
using testutil::read_file;
using testutil::TempDir;

namespace {

const std::filesystem::path kData = testutil::source_dir() / "data/synthetic";

nlohmann::json small_grid_json()
{
    return {{"alpha_values", {0.0, 0.5, 1.0}}, {"weight_values", {0.0, 0.5}}, {"k_values", {1, 2}}};
}

nlohmann::json base_config(const std::filesystem::path& out, const std::string& sub = "en")
{
    return {{"name", "t"},
            {"corpus", (kData / sub / "corpus.jsonl").string()},
            {"analyzer", {{"lang", sub}}},
            {"topics", (kData / sub / "topics.jsonl").string()},
            {"query_lang", sub},
            {"qrels", (kData / sub / "qrels.txt").string()},
            {"output_dir", out.string()}};
}

ExperimentResult run_config(const nlohmann::json& j, const std::filesystem::path& dir)
{
    testutil::write_file(dir / "config.json", j.dump(2));
    return run_experiment(load_experiment_config(dir / "config.json"));
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("'") + XLR_CLI + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("bm25-only experiment reports mean AP")
{
    TempDir tmp;
    auto result = run_config(base_config(tmp / "out"), tmp.path());
    CHECK(std::filesystem::exists(result.bm25_run));
    CHECK(result.rerank_runs.empty());
    auto report = nlohmann::json::parse(read_file(result.report));
    CHECK(report.dump().find("map") != std::string::npos);
    CHECK(result.summary.dump().find("bm25") != std::string::npos);
    auto run = read_run(result.bm25_run);
    CHECK(run.front().tag == "bm25");
}

TEST_CASE("constant scorer with alpha one reproduces the BM25 ranking")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "out");
    cfg["scorer"] = "builtin:constant:0.5";
    cfg["params"] = {{"alpha", 1.0}, {"weights", {1.0}}};
    auto result = run_config(cfg, tmp.path());
    REQUIRE(result.rerank_runs.size() == 1);
    auto bm25 = read_run(result.bm25_run);
    auto reranked = read_run(result.rerank_runs[0]);
    REQUIRE(bm25.size() == reranked.size());
    for (std::size_t i = 0; i < bm25.size(); ++i) {
        reranked[i].tag = bm25[i].tag;
        CHECK(reranked[i] == bm25[i]);
    }
}

TEST_CASE("clairvoyant scorer with alpha zero and one sentence is perfect")
{
    TempDir tmp;
    for (const std::string sub : {"en", "zh"}) {
        auto cfg = base_config(tmp / sub, sub);
        cfg["scorer"] = "builtin:clairvoyant";
        cfg["params"] = {{"alpha", 0.0}, {"weights", {1.0}}};
        auto result = run_config(cfg, tmp.path());
        auto qrels = read_qrels(kData / sub / "qrels.txt");
        auto report = evaluate_run(read_run(result.rerank_runs.at(0)), qrels);
        CHECK(report.map == 1.0);
        CHECK(report.num_defined == 5);
    }
}

TEST_CASE("experiment runs are byte-identical across thread counts")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "one");
    cfg["scorer"] = "builtin:lexical";
    cfg["grid"] = small_grid_json();
    set_threads(1);
    auto one = run_config(cfg, tmp.path());
    cfg["output_dir"] = (tmp / "four").string();
    set_threads(4);
    auto four = run_config(cfg, tmp.path());
    set_threads(0);
    CHECK(read_file(one.bm25_run) == read_file(four.bm25_run));
    REQUIRE(one.rerank_runs.size() == 2);
    REQUIRE(four.rerank_runs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(read_file(one.rerank_runs[i]) == read_file(four.rerank_runs[i]));
    }
}

TEST_CASE("experiment equals the chained subcommands")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "exp");
    cfg["scorer"] = "builtin:lexical";
    cfg["grid"] = small_grid_json();
    cfg["seed"] = 7;
    auto exp = run_config(cfg, tmp.path());

    testutil::write_file(tmp / "grid.json", small_grid_json().dump());
    const auto corpus = kData / "en/corpus.jsonl";
    const auto topics = kData / "en/topics.jsonl";
    const auto qrels = kData / "en/qrels.txt";
    REQUIRE(run_cli("index --corpus " + q(corpus) + " --lang en --out " + q(tmp / "idx.bin")) == 0);
    REQUIRE(run_cli("search --index " + q(tmp / "idx.bin") + " --topics " + q(topics) +
                    " --lang en --out " + q(tmp / "chain/bm25.run")) == 0);
    REQUIRE(run_cli("rerank --run " + q(tmp / "chain/bm25.run") + " --corpus " + q(corpus) +
                    " --topics " + q(topics) + " --query-lang en --lang en --scorer builtin:lexical" +
                    " --grid " + q(tmp / "grid.json") + " --qrels " + q(qrels) +
                    " --seed 7 --out " + q(tmp / "chain")) == 0);
    REQUIRE(run_cli("eval --run " + q(tmp / "chain/rerank.k1.run") + " --qrels " + q(qrels) +
                    " --out " + q(tmp / "chain/eval.rerank.k1.tsv")) == 0);

    CHECK(read_file(tmp / "chain/bm25.run") == read_file(exp.bm25_run));
    for (const std::string name : {"rerank.k1.run", "rerank.k2.run", "tuning.k1.json", "tuning.k2.json",
                                   "eval.rerank.k1.tsv"}) {
        CAPTURE(name);
        CHECK(read_file(tmp / "chain" / name) == read_file(tmp / "exp" / name));
    }
}

TEST_CASE("rerank from an index equals rerank from its run")
{
    TempDir tmp;
    IndexCommand ic;
    ic.corpus = kData / "zh/corpus.jsonl";
    ic.analyzer.lang = "zh";
    ic.out = tmp / "idx.bin";
    run_index(ic);

    RerankCommand rc;
    rc.index = tmp / "idx.bin";
    rc.corpus = kData / "zh/corpus.jsonl";
    rc.topics = kData / "zh/topics.jsonl";
    rc.lang_select = "en>zh";
    rc.analyzer.lang = "zh";
    rc.sentences.lang = "zh";
    rc.scorer = "builtin:lexical";
    rc.params = FusionParams{0.3, {1.0, 0.5}};
    rc.out = tmp / "from-index.run";
    run_rerank(rc);

    SearchCommand sc;
    sc.index = tmp / "idx.bin";
    sc.topics = rc.topics;
    sc.lang_select = "en>zh";
    sc.out = tmp / "bm25.run";
    run_search(sc);
    rc.index.reset();
    rc.run = tmp / "bm25.run";
    rc.out = tmp / "from-run.run";
    run_rerank(rc);
    CHECK(read_file(tmp / "from-index.run") == read_file(tmp / "from-run.run"));
}

TEST_CASE("score cache makes repeated reranks cheap and identical")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "a");
    cfg["scorer"] = "builtin:lexical";
    cfg["params"] = {{"alpha", 0.5}, {"weights", {1.0, 0.5}}};
    ::setenv("XLR_CACHE_DIR", (tmp / "cache").c_str(), 1);
    auto first = run_config(cfg, tmp.path());
    cfg["output_dir"] = (tmp / "b").string();
    auto second = run_config(cfg, tmp.path());
    ::unsetenv("XLR_CACHE_DIR");
    CHECK(read_file(first.rerank_runs[0]) == read_file(second.rerank_runs[0]));
    CHECK_FALSE(std::filesystem::is_empty(tmp / "cache"));
}

TEST_CASE("scorer failures fail the run unless zeroing is requested")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "out");
    cfg["scorer"] = std::string("stdio:'") + XLR_FAKE_SCORER + "' --crash-after 0";
    cfg["params"] = {{"alpha", 0.5}, {"weights", {1.0}}};
    CHECK_THROWS_AS(run_config(cfg, tmp.path()), ScorerError);
    cfg["sentences"] = {{"on_scorer_error", "zero"}};
    auto result = run_config(cfg, tmp.path());
    // all sentence evidence zeroed: order falls back to BM25
    auto bm25 = read_run(result.bm25_run);
    auto reranked = read_run(result.rerank_runs.at(0));
    REQUIRE(bm25.size() == reranked.size());
    for (std::size_t i = 0; i < bm25.size(); ++i) {
        CHECK(reranked[i].doc_id == bm25[i].doc_id);
    }
}

TEST_CASE("stdio scorer drives a full rerank")
{
    TempDir tmp;
    auto cfg = base_config(tmp / "out");
    cfg["scorer"] = std::string("stdio:'") + XLR_FAKE_SCORER + "'";
    cfg["params"] = {{"alpha", 0.5}, {"weights", {1.0, 0.5}}};
    auto result = run_config(cfg, tmp.path());
    CHECK(read_run(result.rerank_runs.at(0)).size() == read_run(result.bm25_run).size());
}

TEST_CASE("config errors")
{
    TempDir tmp;
    CHECK_THROWS_AS(load_experiment_config(tmp / "missing.json"), UsageError);
    testutil::write_file(tmp / "bad.json", R"({"corpus": "x"})");
    CHECK_THROWS_AS(load_experiment_config(tmp / "bad.json"), UsageError);
    auto cfg = base_config(tmp / "out");
    cfg["corpus"] = (tmp / "nope.jsonl").string();
    CHECK_THROWS_AS(run_config(cfg, tmp.path()), DataError);
}

TEST_CASE("cli exit codes")
{
    TempDir tmp;
    const auto corpus = kData / "en/corpus.jsonl";
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("index --corpus " + q(corpus)) == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("index --corpus " + q(tmp / "none.jsonl") + " --out " + q(tmp / "i.bin")) == 2);
    CHECK(run_cli("index --corpus " + q(corpus) + " --out " + q(tmp / "i.bin")) == 0);
    testutil::write_file(tmp / "bad.run", "t1 Q0 d1 1 1 x\nt1 Q0 d2 3 0 x\n");
    CHECK(run_cli("eval --run " + q(tmp / "bad.run") + " --qrels " + q(kData / "en/qrels.txt")) == 2);
    CHECK(run_cli("rerank --index " + q(tmp / "i.bin") + " --corpus " + q(corpus) + " --topics " +
                  q(kData / "en/topics.jsonl") + " --query-lang en --scorer 'stdio:/nonexistent/x'" +
                  " --params " + q(tmp / "p.json") + " --out " + q(tmp / "r.run")) != 0);
    testutil::write_file(tmp / "p.json", R"({"alpha": 0.5, "weights": [1]})");
    CHECK(run_cli("rerank --index " + q(tmp / "i.bin") + " --corpus " + q(corpus) + " --topics " +
                  q(kData / "en/topics.jsonl") + " --query-lang en --scorer 'stdio:/nonexistent/x'" +
                  " --params " + q(tmp / "p.json") + " --out " + q(tmp / "r.run")) == 3);
    CHECK(run_cli("rerank --index " + q(tmp / "i.bin") + " --run " + q(tmp / "bad.run") + " --corpus " +
                  q(corpus) + " --topics " + q(kData / "en/topics.jsonl") +
                  " --query-lang en --scorer builtin:lexical --params " + q(tmp / "p.json") +
                  " --out " + q(tmp / "r.run")) == 1);
}
