#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xlr/corpus_io.hpp"
#include "xlr/inverted_index.hpp"

namespace xlr {

/// Interpolation weights: s_doc = alpha * s_r + (1 - alpha) * sum_i w_i * S_(i),
/// where S_(i) is the i-th largest sentence score of the document.
struct FusionParams {
    double alpha = 1.0;
    std::vector<double> weights{1.0};  // w_1..w_k, w_1 == 1

    std::size_t k() const { return weights.size(); }

    /// Throws DataError unless alpha and all weights lie in [0, 1],
    /// 1 <= k <= 3 and w_1 == 1.
    void validate() const;

    bool operator==(const FusionParams&) const = default;
};

nlohmann::json to_json(const FusionParams& params);
FusionParams fusion_params_from_json(const nlohmann::json& j);
FusionParams load_fusion_params(const std::filesystem::path& path);

/// Top-`k` scores in descending order (fewer if not enough are available).
std::vector<double> top_scores(std::span<const double> sentence_scores, std::size_t k);

/// Fuses precomputed top scores (descending). Missing positions contribute 0.
double fuse_sorted(const FusionParams& params, double s_r, std::span<const double> top);

double fuse(const FusionParams& params, double s_r, std::span<const double> sentence_scores);

struct FusedDoc {
    std::string doc_id;
    double s_r = 0.0;
    std::vector<std::pair<std::size_t, double>> top_sentences;  // (index, score), best first
    double s_doc = 0.0;
};

/// Scores per candidate document, indexed by sentence position.
using SentenceScoreMap = std::unordered_map<std::string, std::vector<double>>;

struct RerankOptions {
    /// Rescale s_r to [0, 1] per query (min-max) before interpolation.
    bool normalize_bm25 = false;
};

/// Min-max rescaled copy of the candidates' scores; all-equal scores map to 1.
std::vector<double> minmax_normalized(std::span<const ScoredDoc> candidates);

/// Reorders the candidate set by fused score (descending, ties by doc_id).
/// Every candidate must have an entry in `sentence_scores`, possibly empty;
/// a missing entry raises DataError.
std::vector<FusedDoc> rerank(std::span<const ScoredDoc> candidates,
                             const SentenceScoreMap& sentence_scores, const FusionParams& params,
                             const RerankOptions& options = {});

std::vector<RunEntry> to_run_entries(const std::string& topic_id, std::span<const FusedDoc> docs,
                                     const std::string& tag);

}  // namespace xlr
