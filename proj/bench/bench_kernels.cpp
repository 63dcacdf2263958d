// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "xlr/inverted_index.hpp"
#include "xlr/tuning_cv.hpp"

using namespace xlr;

namespace {

std::vector<Document> corpus(std::size_t n)
{
    std::mt19937_64 rng(1);
    std::vector<Document> docs;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        for (std::size_t w = 0; w < 50 + rng() % 200; ++w) {
            text += "w" + std::to_string(rng() % 5000) + (w % 17 == 16 ? ". " : " ");
        }
        docs.push_back({"doc" + std::to_string(i), std::move(text), "en"});
    }
    return docs;
}

std::vector<Query> queries(std::size_t n)
{
    std::mt19937_64 rng(2);
    std::vector<Query> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"q" + std::to_string(i), "w" + std::to_string(rng() % 500) + " w" +
                                                    std::to_string(rng() % 2000) + " w" +
                                                    std::to_string(rng() % 5000)});
    }
    return out;
}

const std::vector<Document>& shared_corpus()
{
    static const auto docs = corpus(20000);
    return docs;
}

const InvertedIndex& shared_index()
{
    static const auto index = build_index(shared_corpus(), Analyzer("en"));
    return index;
}

const RerankPipeline& shared_pipeline()
{
    static const RerankPipeline pipeline = [] {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0, 1);
        std::vector<TopicCandidates> topics;
        Qrels qrels;
        auto results = search_batch(shared_index(), queries(50), 1000);
        for (std::size_t t = 0; t < results.size(); ++t) {
            TopicCandidates tc{"q" + std::to_string(t), results[t], {}};
            for (const auto& c : tc.candidates) {
                std::vector<double> s(1 + rng() % 10);
                for (auto& x : s) {
                    x = u(rng);
                }
                tc.sentence_scores[c.doc_id] = s;
                if (rng() % 10 == 0) {
                    qrels.set(tc.topic_id, c.doc_id, 1);
                }
            }
            topics.push_back(std::move(tc));
        }
        return RerankPipeline(std::move(topics), std::move(qrels));
    }();
    return pipeline;
}

void BM_IndexBuildSerial(benchmark::State& state)
{
    shared_corpus();
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_index_serial(shared_corpus(), Analyzer("en")));
    }
}

void BM_IndexBuildParallel(benchmark::State& state)
{
    shared_corpus();
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_index(shared_corpus(), Analyzer("en")));
    }
}

void BM_SearchBatchSerial(benchmark::State& state)
{
    const auto q = queries(200);
    shared_index();
    for (auto _ : state) {
        benchmark::DoNotOptimize(search_batch_serial(shared_index(), q, 1000));
    }
}

void BM_SearchBatchParallel(benchmark::State& state)
{
    const auto q = queries(200);
    shared_index();
    for (auto _ : state) {
        benchmark::DoNotOptimize(search_batch(shared_index(), q, 1000));
    }
}

void BM_ApMatrixSerial(benchmark::State& state)
{
    const auto points = Grid::default_grid().with_k(2).points();
    const auto topics = shared_pipeline().topic_ids();
    for (auto _ : state) {
        benchmark::DoNotOptimize(ap_matrix_serial(shared_pipeline(), points, topics));
    }
}

void BM_ApMatrixParallel(benchmark::State& state)
{
    const auto points = Grid::default_grid().with_k(2).points();
    const auto topics = shared_pipeline().topic_ids();
    for (auto _ : state) {
        benchmark::DoNotOptimize(ap_matrix(shared_pipeline(), points, topics));
    }
}

}  // namespace

BENCHMARK(BM_IndexBuildSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IndexBuildParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SearchBatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SearchBatchParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApMatrixSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApMatrixParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
