#include "xlr/evidence_fusion.hpp"

#include <algorithm>
#include <fstream>

#include "xlr/errors.hpp"

namespace xlr {

void FusionParams::validate() const
{
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha)) {
        throw DataError("alpha must lie in [0,1]");
    }
    if (weights.empty() || weights.size() > 3) {
        throw DataError("k must be 1, 2 or 3");
    }
    if (weights.front() != 1.0) {
        throw DataError("w_1 must be 1");
    }
    if (!std::all_of(weights.begin(), weights.end(), unit)) {
        throw DataError("weights must lie in [0,1]");
    }
}

nlohmann::json to_json(const FusionParams& params)
{
    return {{"alpha", params.alpha}, {"weights", params.weights}, {"k", params.k()}};
}

FusionParams fusion_params_from_json(const nlohmann::json& j)
{
    FusionParams p;
    try {
        p.alpha = j.at("alpha").get<double>();
        p.weights = j.at("weights").get<std::vector<double>>();
        if (j.contains("k") && j["k"].get<std::size_t>() != p.weights.size()) {
            throw DataError("params: k does not match the number of weights");
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed fusion params: ") + e.what());
    }
    p.validate();
    return p;
}

FusionParams load_fusion_params(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open params file " + path.string());
    }
    try {
        return fusion_params_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<double> top_scores(std::span<const double> sentence_scores, std::size_t k)
{
    std::vector<double> sorted(sentence_scores.begin(), sentence_scores.end());
    const auto n = std::min(k, sorted.size());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n), sorted.end(),
                      std::greater<>());
    sorted.resize(n);
    return sorted;
}

double fuse_sorted(const FusionParams& params, double s_r, std::span<const double> top)
{
    double sentence_part = 0.0;
    const auto n = std::min(params.k(), top.size());
    for (std::size_t i = 0; i < n; ++i) {
        sentence_part += params.weights[i] * top[i];
    }
    return params.alpha * s_r + (1.0 - params.alpha) * sentence_part;
}

double fuse(const FusionParams& params, double s_r, std::span<const double> sentence_scores)
{
    return fuse_sorted(params, s_r, top_scores(sentence_scores, params.k()));
}

std::vector<double> minmax_normalized(std::span<const ScoredDoc> candidates)
{
    std::vector<double> out;
    out.reserve(candidates.size());
    if (candidates.empty()) {
        return out;
    }
    auto [lo, hi] = std::minmax_element(candidates.begin(), candidates.end(),
                                        [](const ScoredDoc& a, const ScoredDoc& b) {
                                            return a.score < b.score;
                                        });
    const double min = lo->score;
    const double range = hi->score - min;
    for (const auto& c : candidates) {
        out.push_back(range > 0.0 ? (c.score - min) / range : 1.0);
    }
    return out;
}

std::vector<FusedDoc> rerank(std::span<const ScoredDoc> candidates,
                             const SentenceScoreMap& sentence_scores, const FusionParams& params,
                             const RerankOptions& options)
{
    params.validate();
    std::vector<double> s_r;
    if (options.normalize_bm25) {
        s_r = minmax_normalized(candidates);
    } else {
        for (const auto& c : candidates) {
            s_r.push_back(c.score);
        }
    }
    std::vector<FusedDoc> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        auto it = sentence_scores.find(c.doc_id);
        if (it == sentence_scores.end()) {
            throw DataError("candidate " + c.doc_id + " has no sentence scores");
        }
        const auto& scores = it->second;
        std::vector<std::size_t> order(scores.size());
        for (std::size_t j = 0; j < order.size(); ++j) {
            order[j] = j;
        }
        const auto n = std::min(params.k(), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (scores[a] != scores[b]) {
                                  return scores[a] > scores[b];
                              }
                              return a < b;
                          });
        FusedDoc fd{c.doc_id, s_r[i], {}, 0.0};
        std::vector<double> top;
        for (std::size_t j = 0; j < n; ++j) {
            fd.top_sentences.emplace_back(order[j], scores[order[j]]);
            top.push_back(scores[order[j]]);
        }
        fd.s_doc = fuse_sorted(params, s_r[i], top);
        out.push_back(std::move(fd));
    }
    std::sort(out.begin(), out.end(), [](const FusedDoc& a, const FusedDoc& b) {
        if (a.s_doc != b.s_doc) {
            return a.s_doc > b.s_doc;
        }
        return a.doc_id < b.doc_id;
    });
    return out;
}

std::vector<RunEntry> to_run_entries(const std::string& topic_id, std::span<const FusedDoc> docs,
                                     const std::string& tag)
{
    std::vector<RunEntry> out;
    out.reserve(docs.size());
    int rank = 1;
    for (const auto& d : docs) {
        out.push_back({topic_id, d.doc_id, rank++, d.s_doc, tag});
    }
    return out;
}

}  // namespace xlr
