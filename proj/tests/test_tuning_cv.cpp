#include <omp.h>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "xlr/errors.hpp"
#include "xlr/tuning_cv.hpp"

using namespace xlr;

namespace {

std::vector<std::string> topic_ids(std::size_t n)
{
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("q" + std::to_string(100 + i));
    }
    return ids;
}

/// Random topics: BM25-ordered candidates with random sentence scores and
/// random graded judgments over the candidates.
struct Synthetic {
    std::vector<TopicCandidates> topics;
    Qrels qrels;
};

Synthetic synthetic(std::uint64_t seed, std::size_t n_topics, bool clairvoyant = false)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    Synthetic s;
    for (std::size_t t = 0; t < n_topics; ++t) {
        TopicCandidates tc;
        tc.topic_id = "q" + std::to_string(100 + t);
        const std::size_t n = 5 + rng() % 25;
        for (std::size_t i = 0; i < n; ++i) {
            const std::string doc = "d" + std::to_string(i);
            const bool relevant = rng() % 3 == 0 || i == n - 1;
            tc.candidates.push_back({doc, 10 * u(rng)});
            if (relevant) {
                s.qrels.set(tc.topic_id, doc, 1 + static_cast<int>(rng() % 2));
            } else if (rng() % 2 == 0) {
                s.qrels.set(tc.topic_id, doc, 0);
            }
            std::vector<double> sentences(clairvoyant ? 1 + rng() % 4 : rng() % 5);
            for (auto& x : sentences) {
                x = clairvoyant ? (relevant ? 1.0 : 0.0) : u(rng);
            }
            tc.sentence_scores[doc] = sentences;
        }
        std::sort(tc.candidates.begin(), tc.candidates.end(), ranks_before);
        s.topics.push_back(std::move(tc));
    }
    return s;
}

RerankPipeline pipeline_of(const Synthetic& s) { return RerankPipeline(s.topics, s.qrels); }

Grid small_grid()
{
    Grid g;
    g.alpha_values = {0.0, 0.3, 0.7, 1.0};
    g.weight_values = {0.0, 0.5, 1.0};
    g.k_values = {1, 2, 3};
    return g;
}

}  // namespace

TEST_CASE("fold sizes")
{
    auto fifty = assign_folds(topic_ids(50), 5, 1);
    for (std::size_t f = 0; f < 5; ++f) {
        CHECK(fifty.fold(f).size() == 10);
    }
    auto seventy_three = assign_folds(topic_ids(73), 5, 1);
    std::multiset<std::size_t> sizes;
    for (std::size_t f = 0; f < 5; ++f) {
        sizes.insert(seventy_three.fold(f).size());
    }
    CHECK(sizes == std::multiset<std::size_t>{14, 14, 15, 15, 15});
}

TEST_CASE("every topic lands in exactly one fold")
{
    for (std::size_t n : {5, 6, 17, 50}) {
        auto ids = topic_ids(n);
        auto a = assign_folds(ids, 5, 9);
        std::vector<std::string> all;
        for (std::size_t f = 0; f < 5; ++f) {
            auto fold = a.fold(f);
            auto rest = a.complement(f);
            CHECK(fold.size() + rest.size() == n);
            all.insert(all.end(), fold.begin(), fold.end());
        }
        std::sort(all.begin(), all.end());
        CHECK(all == ids);
    }
}

TEST_CASE("fold assignment is a function of the seed and the id set")
{
    auto ids = topic_ids(30);
    auto a = assign_folds(ids, 5, 42);
    CHECK(assign_folds(ids, 5, 42).fold_of == a.fold_of);
    auto reversed = ids;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(assign_folds(reversed, 5, 42).fold_of == a.fold_of);
    CHECK(assign_folds(ids, 5, 43).fold_of != a.fold_of);
    CHECK(a.seed == 42);
}

TEST_CASE("fold assignment errors")
{
    CHECK_THROWS_AS(assign_folds(topic_ids(4), 5, 0), DataError);
    auto dup = topic_ids(6);
    dup.push_back(dup[0]);
    CHECK_THROWS_AS(assign_folds(dup, 5, 0), DataError);
}

TEST_CASE("default grid")
{
    auto g = Grid::default_grid();
    CHECK(g.alpha_values.size() == 11);
    CHECK(g.alpha_values.front() == 0.0);
    CHECK(g.alpha_values.back() == 1.0);
    CHECK(g.k_values == std::vector<std::size_t>{1, 2, 3});
    auto points = g.points();
    CHECK(points.size() == 11 + 11 * 11 + 11 * 11 * 11);
    for (const auto& p : points) {
        CHECK_NOTHROW(p.validate());
    }
    std::set<std::vector<double>> distinct;
    for (const auto& p : points) {
        auto key = p.weights;
        key.insert(key.begin(), p.alpha);
        distinct.insert(key);
    }
    CHECK(distinct.size() == points.size());
    CHECK(g.with_k(2).points().size() == 121);
}

TEST_CASE("grid validation and json")
{
    auto g = small_grid();
    CHECK(grid_from_json(to_json(g)).points().size() == g.points().size());
    Grid bad = g;
    bad.alpha_values = {0.5, 0.2};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = g;
    bad.k_values = {4};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = g;
    bad.weight_values = {};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = g;
    bad.alpha_values = {0.0, 1.5};
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("constant objective picks the tie-preferred point")
{
    EvalFn constant = [](const FusionParams&, std::span<const std::string> topics) {
        return std::vector<std::optional<double>>(topics.size(), 0.5);
    };
    auto train = topic_ids(8);
    auto best = grid_search(Grid::default_grid(), train, constant);
    CHECK(best.k() == 1);
    CHECK(best.alpha == 1.0);
    CHECK(best.weights == std::vector<double>{1.0});
}

TEST_CASE("objective increasing in alpha picks the largest alpha")
{
    EvalFn by_alpha = [](const FusionParams& p, std::span<const std::string> topics) {
        return std::vector<std::optional<double>>(topics.size(), p.alpha);
    };
    auto g = small_grid();
    g.alpha_values = {0.1, 0.4, 0.6};
    CHECK(grid_search(g, topic_ids(3), by_alpha).alpha == 0.6);
}

TEST_CASE("tie preference")
{
    CHECK(tie_preferred({0.5, {1.0}}, {0.5, {1.0, 0.0}}));
    CHECK(tie_preferred({0.6, {1.0, 0.5}}, {0.5, {1.0, 0.0}}));
    CHECK(tie_preferred({0.5, {1.0, 0.2}}, {0.5, {1.0, 0.3}}));
    CHECK_FALSE(tie_preferred({0.5, {1.0, 0.3}}, {0.5, {1.0, 0.2}}));
}

TEST_CASE("empty training set is an error")
{
    EvalFn fn = [](const FusionParams&, std::span<const std::string> t) {
        return std::vector<std::optional<double>>(t.size(), 0.0);
    };
    CHECK_THROWS_AS(grid_search(small_grid(), {}, fn), DataError);
}

TEST_CASE("grid search attains the exhaustive maximum")
{
    auto s = synthetic(11, 12);
    auto pipe = pipeline_of(s);
    auto topics = pipe.topic_ids();
    auto g = small_grid();
    auto best = grid_search(g, topics, pipe.eval_fn());
    double best_mean = -1;
    for (const auto& p : g.points()) {
        std::vector<std::optional<double>> aps;
        for (const auto& t : topics) {
            aps.push_back(oracle::ap(pipe.ranking(t, p),
                                     std::map<std::string, int>(s.qrels.topic(t).begin(), s.qrels.topic(t).end())));
        }
        best_mean = std::max(best_mean, mean_defined(aps));
    }
    CHECK(mean_defined(pipe.eval_fn()(best, topics)) == doctest::Approx(best_mean).epsilon(1e-12));
}

TEST_CASE("serial and parallel grid search agree")
{
    auto s = synthetic(12, 15);
    auto pipe = pipeline_of(s);
    auto topics = pipe.topic_ids();
    auto serial = grid_search_serial(small_grid(), topics, pipe.eval_fn());
    for (int threads : {1, 4}) {
        omp_set_num_threads(threads);
        CHECK(grid_search(small_grid(), topics, pipe.eval_fn()) == serial);
    }
    auto points = small_grid().points();
    CHECK(ap_matrix(pipe, points, topics) == ap_matrix_serial(pipe, points, topics));
}

TEST_CASE("pipeline rankings equal direct fusion")
{
    auto s = synthetic(13, 6);
    auto pipe = pipeline_of(s);
    for (const auto& tc : s.topics) {
        for (const auto& p : small_grid().points()) {
            auto fused = rerank(tc.candidates, tc.sentence_scores, p);
            auto got = pipe.rerank_topic(tc.topic_id, p);
            REQUIRE(got.size() == fused.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].doc_id == fused[i].doc_id);
                CHECK(got[i].s_doc == fused[i].s_doc);
            }
        }
    }
}

TEST_CASE("single-point grid reproduces plain evaluation")
{
    auto s = synthetic(14, 10);
    auto pipe = pipeline_of(s);
    Grid g;
    g.alpha_values = {0.4};
    g.weight_values = {0.5};
    g.k_values = {2};
    auto result = cross_validate(assign_folds(pipe.topic_ids(), 5, 3), g, pipe, "x");
    const FusionParams only{0.4, {1.0, 0.5}};
    for (const auto& p : result.fold_params) {
        CHECK(p == only);
    }
    for (const auto& m : result.topic_metrics) {
        CHECK(m.ap == pipe.average_precision(m.topic_id, only));
    }
}

TEST_CASE("test-fold judgments never influence that fold's params")
{
    auto s = synthetic(15, 20);
    auto pipe = pipeline_of(s);
    auto assignment = assign_folds(pipe.topic_ids(), 5, 8);
    auto base = cross_validate(assignment, small_grid(), pipe, "x");
    std::mt19937_64 rng(99);
    for (std::size_t f = 0; f < 5; ++f) {
        Qrels perturbed = s.qrels;
        for (const auto& t : assignment.fold(f)) {
            for (const auto& tc : s.topics) {
                if (tc.topic_id != t) {
                    continue;
                }
                for (const auto& c : tc.candidates) {
                    perturbed.set(t, c.doc_id, static_cast<int>(rng() % 3));
                }
            }
        }
        RerankPipeline other(s.topics, perturbed);
        auto result = cross_validate(assignment, small_grid(), other, "x");
        CHECK(result.fold_params[f] == base.fold_params[f]);
    }
}

TEST_CASE("clairvoyant evidence reaches perfect held-out AP")
{
    auto s = synthetic(16, 10, true);
    auto pipe = pipeline_of(s);
    auto result = cross_validate(assign_folds(pipe.topic_ids(), 5, 1), Grid::default_grid().with_k(1), pipe, "x");
    CHECK(result.mean_ap == 1.0);
    double bm25 = 0;
    for (const auto& t : pipe.topic_ids()) {
        bm25 += *pipe.average_precision(t, {1.0, {1.0}});
    }
    bm25 /= 10;
    REQUIRE(bm25 < 1.0);
    for (const auto& p : result.fold_params) {
        CHECK(p.alpha < 1.0);
    }
}

TEST_CASE("held-out run covers every topic with its fold's params")
{
    auto s = synthetic(17, 10);
    auto pipe = pipeline_of(s);
    auto assignment = assign_folds(pipe.topic_ids(), 5, 2);
    auto result = cross_validate(assignment, small_grid(), pipe, "xlr-1S");
    auto groups = group_run(result.heldout_run);
    CHECK(groups.size() == 10);
    for (const auto& [topic, entries] : groups) {
        const auto& params = result.fold_params[assignment.fold_of.at(topic)];
        auto expected = pipe.ranking(topic, params);
        REQUIRE(entries.size() == expected.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            CHECK(entries[i].doc_id == expected[i]);
            CHECK(entries[i].tag == "xlr-1S");
        }
    }
    auto report = cv_report_json(result);
    CHECK(report["seed"] == 2);
    CHECK(report["folds"].size() == 5);
}

TEST_CASE("cross validation is deterministic across thread counts")
{
    auto s = synthetic(18, 25);
    auto pipe = pipeline_of(s);
    auto assignment = assign_folds(pipe.topic_ids(), 5, 4);
    omp_set_num_threads(1);
    auto one = cross_validate(assignment, small_grid(), pipe, "x");
    omp_set_num_threads(4);
    auto four = cross_validate(assignment, small_grid(), pipe, "x");
    CHECK(one.heldout_run == four.heldout_run);
    CHECK(one.fold_params == four.fold_params);
    CHECK(one.mean_ap == four.mean_ap);
}
