#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlr/corpus_io.hpp"
#include "xlr/eval_metrics.hpp"
#include "xlr/evidence_fusion.hpp"
#include "xlr/inverted_index.hpp"

namespace xlr {

struct Grid {
    std::vector<double> alpha_values;
    std::vector<double> weight_values;  // candidates for w_2, w_3
    std::vector<std::size_t> k_values;

    /// Values in [0, 1], lists non-empty and strictly increasing, k in {1, 2, 3}.
    void validate() const;

    /// alpha, w_2, w_3 in {0.0, 0.1, ..., 1.0}; k in {1, 2, 3}.
    static Grid default_grid();

    /// Every parameter combination, ordered by (k, alpha, weights).
    std::vector<FusionParams> points() const;

    /// Copy restricted to one k.
    Grid with_k(std::size_t k) const;
};

nlohmann::json to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& j);

struct FoldAssignment {
    std::map<std::string, std::size_t> fold_of;
    std::size_t n_folds = 0;
    std::uint64_t seed = 0;

    /// Topic ids of one fold, sorted.
    std::vector<std::string> fold(std::size_t f) const;
    /// Topic ids outside one fold, sorted.
    std::vector<std::string> complement(std::size_t f) const;
};

/// Sorts ids, shuffles them with a seeded Fisher-Yates (mt19937_64), then
/// deals them round-robin into folds. Throws DataError if there are fewer
/// topics than folds.
FoldAssignment assign_folds(std::span<const std::string> topic_ids, std::size_t n_folds = 5,
                            std::uint64_t seed = 0);

/// Per-topic AP for the requested topics under the given params (nullopt for
/// topics without relevant documents). Must be thread-safe.
using EvalFn = std::function<std::vector<std::optional<double>>(const FusionParams&,
                                                                std::span<const std::string>)>;

/// Mean of the defined entries; 0 when none are defined.
double mean_defined(std::span<const std::optional<double>> values);

/// True when `a` wins a tie against `b`: smaller k, then larger alpha, then
/// lexicographically smaller weights.
bool tie_preferred(const FusionParams& a, const FusionParams& b);

/// Index of the best point (highest mean, ties by tie_preferred).
std::size_t select_best(std::span<const FusionParams> points, std::span<const double> means);

/// Exhaustive search for the params maximizing mean AP over `train_topics`.
/// Grid points are evaluated in parallel and reduced in grid order.
FusionParams grid_search(const Grid& grid, std::span<const std::string> train_topics,
                         const EvalFn& eval_fn);
FusionParams grid_search_serial(const Grid& grid, std::span<const std::string> train_topics,
                                const EvalFn& eval_fn);

/// Candidates and sentence scores of one topic, ready for fusion.
struct TopicCandidates {
    std::string topic_id;
    std::vector<ScoredDoc> candidates;  // BM25 order
    SentenceScoreMap sentence_scores;
};

/// Reranks and evaluates topics under arbitrary params. Top sentence scores
/// are presorted once so each evaluation is O(candidates * k).
class RerankPipeline {
  public:
    RerankPipeline(std::vector<TopicCandidates> topics, Qrels qrels, RerankOptions options = {});

    std::vector<std::string> topic_ids() const;
    bool has_topic(const std::string& topic_id) const;

    std::vector<FusedDoc> rerank_topic(const std::string& topic_id, const FusionParams& params) const;
    std::vector<std::string> ranking(const std::string& topic_id, const FusionParams& params) const;
    std::optional<double> average_precision(const std::string& topic_id,
                                            const FusionParams& params) const;
    TopicMetrics metrics(const std::string& topic_id, const FusionParams& params) const;

    EvalFn eval_fn() const;

    const Qrels& qrels() const { return qrels_; }

  private:
    struct Prepared {
        std::string topic_id;
        std::vector<ScoredDoc> candidates;
        std::vector<double> s_r;                    // possibly normalized
        std::vector<std::vector<double>> top;       // per candidate, top-3 descending
        std::vector<std::vector<std::size_t>> top_index;
    };

    const Prepared& prepared(const std::string& topic_id) const;

    std::vector<Prepared> topics_;
    std::map<std::string, std::size_t> lookup_;
    Qrels qrels_;
};

struct CvResult {
    FoldAssignment assignment;
    Grid grid;
    std::vector<FusionParams> fold_params;     // indexed by fold
    std::vector<TopicMetrics> topic_metrics;   // held-out, sorted by topic_id
    double mean_ap = 0.0;                      // over topics with relevant documents
    double mean_p20 = 0.0;
    double mean_ndcg20 = 0.0;
    std::vector<RunEntry> heldout_run;
};

/// Per grid point, per topic AP matrix ([point][topic]); points evaluated in parallel.
std::vector<std::vector<std::optional<double>>> ap_matrix(const RerankPipeline& pipeline,
                                                          std::span<const FusionParams> points,
                                                          std::span<const std::string> topics);
std::vector<std::vector<std::optional<double>>> ap_matrix_serial(
    const RerankPipeline& pipeline, std::span<const FusionParams> points,
    std::span<const std::string> topics);

/// For each fold, selects params on the other folds and applies them to the
/// fold's topics. Selection only ever reads AP of training topics.
CvResult cross_validate(const FoldAssignment& assignment, const Grid& grid,
                        const RerankPipeline& pipeline, const std::string& run_tag);

nlohmann::json cv_report_json(const CvResult& result);

}  // namespace xlr
