#include "xlr/tuning_cv.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "parallel.hpp"
#include "xlr/errors.hpp"

namespace xlr {

namespace {

void check_unit_increasing(const std::vector<double>& values, const char* name)
{
    if (values.empty()) {
        throw DataError(std::string("grid: ") + name + " is empty");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
            throw DataError(std::string("grid: ") + name + " values must lie in [0,1]");
        }
        if (i > 0 && !(values[i - 1] < values[i])) {
            throw DataError(std::string("grid: ") + name + " must be strictly increasing");
        }
    }
}

// Uniform integer in [0, bound) from raw mt19937_64 output by rejection, so the
// sequence does not depend on the standard library's distribution code.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % bound;
}

}  // namespace

void Grid::validate() const
{
    check_unit_increasing(alpha_values, "alpha_values");
    check_unit_increasing(weight_values, "weight_values");
    if (k_values.empty()) {
        throw DataError("grid: k_values is empty");
    }
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        if (k_values[i] < 1 || k_values[i] > 3) {
            throw DataError("grid: k must be 1, 2 or 3");
        }
        if (i > 0 && !(k_values[i - 1] < k_values[i])) {
            throw DataError("grid: k_values must be strictly increasing");
        }
    }
}

Grid Grid::default_grid()
{
    Grid g;
    for (int i = 0; i <= 10; ++i) {
        g.alpha_values.push_back(i / 10.0);
        g.weight_values.push_back(i / 10.0);
    }
    g.k_values = {1, 2, 3};
    return g;
}

std::vector<FusionParams> Grid::points() const
{
    validate();
    std::vector<FusionParams> out;
    for (auto k : k_values) {
        for (double alpha : alpha_values) {
            // odometer over w_2..w_k
            std::vector<std::size_t> digit(k - 1, 0);
            for (;;) {
                FusionParams p{alpha, {1.0}};
                for (auto d : digit) {
                    p.weights.push_back(weight_values[d]);
                }
                out.push_back(std::move(p));
                std::size_t pos = digit.size();
                while (pos > 0 && ++digit[pos - 1] == weight_values.size()) {
                    digit[pos - 1] = 0;
                    --pos;
                }
                if (pos == 0) {
                    break;
                }
            }
        }
    }
    return out;
}

Grid Grid::with_k(std::size_t k) const
{
    Grid g = *this;
    g.k_values = {k};
    return g;
}

nlohmann::json to_json(const Grid& grid)
{
    return {{"alpha_values", grid.alpha_values},
            {"weight_values", grid.weight_values},
            {"k_values", grid.k_values}};
}

Grid grid_from_json(const nlohmann::json& j)
{
    Grid g = Grid::default_grid();
    try {
        if (j.contains("alpha_values")) {
            g.alpha_values = j["alpha_values"].get<std::vector<double>>();
        }
        if (j.contains("weight_values")) {
            g.weight_values = j["weight_values"].get<std::vector<double>>();
        }
        if (j.contains("k_values")) {
            g.k_values = j["k_values"].get<std::vector<std::size_t>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed grid: ") + e.what());
    }
    g.validate();
    return g;
}

std::vector<std::string> FoldAssignment::fold(std::size_t f) const
{
    std::vector<std::string> out;
    for (const auto& [topic, fold] : fold_of) {
        if (fold == f) {
            out.push_back(topic);
        }
    }
    return out;
}

std::vector<std::string> FoldAssignment::complement(std::size_t f) const
{
    std::vector<std::string> out;
    for (const auto& [topic, fold] : fold_of) {
        if (fold != f) {
            out.push_back(topic);
        }
    }
    return out;
}

FoldAssignment assign_folds(std::span<const std::string> topic_ids, std::size_t n_folds,
                            std::uint64_t seed)
{
    if (n_folds == 0) {
        throw DataError("number of folds must be positive");
    }
    std::vector<std::string> ids(topic_ids.begin(), topic_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw DataError("duplicate topic ids in fold assignment");
    }
    if (ids.size() < n_folds) {
        throw DataError("cannot split " + std::to_string(ids.size()) + " topics into " +
                        std::to_string(n_folds) + " folds");
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::swap(ids[i - 1], ids[uniform_below(rng, i)]);
    }
    FoldAssignment a;
    a.n_folds = n_folds;
    a.seed = seed;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        a.fold_of[ids[i]] = i % n_folds;
    }
    return a;
}

double mean_defined(std::span<const std::optional<double>> values)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

bool tie_preferred(const FusionParams& a, const FusionParams& b)
{
    if (a.k() != b.k()) {
        return a.k() < b.k();
    }
    if (a.alpha != b.alpha) {
        return a.alpha > b.alpha;
    }
    return a.weights < b.weights;
}

std::size_t select_best(std::span<const FusionParams> points, std::span<const double> means)
{
    if (points.empty()) {
        throw DataError("empty grid");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (means[i] > means[best] || (means[i] == means[best] && tie_preferred(points[i], points[best]))) {
            best = i;
        }
    }
    return best;
}

FusionParams grid_search(const Grid& grid, std::span<const std::string> train_topics,
                         const EvalFn& eval_fn)
{
    if (train_topics.empty()) {
        throw DataError("grid search needs at least one training topic");
    }
    const auto points = grid.points();
    std::vector<double> means(points.size(), 0.0);
    detail::parallel_for(points.size(), [&](std::size_t i) {
        auto per_topic = eval_fn(points[i], train_topics);
        means[i] = mean_defined(per_topic);
    });
    return points[select_best(points, means)];
}

FusionParams grid_search_serial(const Grid& grid, std::span<const std::string> train_topics,
                                const EvalFn& eval_fn)
{
    if (train_topics.empty()) {
        throw DataError("grid search needs at least one training topic");
    }
    const auto points = grid.points();
    std::vector<double> means;
    means.reserve(points.size());
    for (const auto& p : points) {
        auto per_topic = eval_fn(p, train_topics);
        means.push_back(mean_defined(per_topic));
    }
    return points[select_best(points, means)];
}

RerankPipeline::RerankPipeline(std::vector<TopicCandidates> topics, Qrels qrels,
                               RerankOptions options)
    : qrels_(std::move(qrels))
{
    constexpr std::size_t kMaxK = 3;
    topics_.reserve(topics.size());
    for (auto& t : topics) {
        Prepared p;
        p.topic_id = t.topic_id;
        if (options.normalize_bm25) {
            p.s_r = minmax_normalized(t.candidates);
        } else {
            for (const auto& c : t.candidates) {
                p.s_r.push_back(c.score);
            }
        }
        for (const auto& c : t.candidates) {
            auto it = t.sentence_scores.find(c.doc_id);
            if (it == t.sentence_scores.end()) {
                throw DataError("topic " + t.topic_id + ": candidate " + c.doc_id +
                                " has no sentence scores");
            }
            const auto& scores = it->second;
            std::vector<std::size_t> order(scores.size());
            for (std::size_t j = 0; j < order.size(); ++j) {
                order[j] = j;
            }
            const auto n = std::min(kMaxK, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n),
                              order.end(), [&](std::size_t a, std::size_t b) {
                                  if (scores[a] != scores[b]) {
                                      return scores[a] > scores[b];
                                  }
                                  return a < b;
                              });
            order.resize(n);
            std::vector<double> top;
            for (auto j : order) {
                top.push_back(scores[j]);
            }
            p.top.push_back(std::move(top));
            p.top_index.push_back(std::move(order));
        }
        p.candidates = std::move(t.candidates);
        if (!lookup_.emplace(p.topic_id, topics_.size()).second) {
            throw DataError("duplicate topic " + p.topic_id);
        }
        topics_.push_back(std::move(p));
    }
}

std::vector<std::string> RerankPipeline::topic_ids() const
{
    std::vector<std::string> out;
    for (const auto& [id, _] : lookup_) {
        out.push_back(id);
    }
    return out;
}

bool RerankPipeline::has_topic(const std::string& topic_id) const
{
    return lookup_.contains(topic_id);
}

const RerankPipeline::Prepared& RerankPipeline::prepared(const std::string& topic_id) const
{
    auto it = lookup_.find(topic_id);
    if (it == lookup_.end()) {
        throw DataError("pipeline has no topic " + topic_id);
    }
    return topics_[it->second];
}

std::vector<FusedDoc> RerankPipeline::rerank_topic(const std::string& topic_id,
                                                   const FusionParams& params) const
{
    const auto& p = prepared(topic_id);
    std::vector<FusedDoc> out;
    out.reserve(p.candidates.size());
    for (std::size_t i = 0; i < p.candidates.size(); ++i) {
        FusedDoc fd{p.candidates[i].doc_id, p.s_r[i], {}, 0.0};
        const auto n = std::min(params.k(), p.top[i].size());
        for (std::size_t j = 0; j < n; ++j) {
            fd.top_sentences.emplace_back(p.top_index[i][j], p.top[i][j]);
        }
        fd.s_doc = fuse_sorted(params, p.s_r[i], std::span(p.top[i]).first(n));
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

std::vector<std::string> RerankPipeline::ranking(const std::string& topic_id,
                                                 const FusionParams& params) const
{
    const auto& p = prepared(topic_id);
    std::vector<double> fused(p.candidates.size());
    std::vector<std::size_t> order(p.candidates.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        fused[i] = fuse_sorted(params, p.s_r[i], p.top[i]);
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (fused[a] != fused[b]) {
            return fused[a] > fused[b];
        }
        return p.candidates[a].doc_id < p.candidates[b].doc_id;
    });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (auto i : order) {
        out.push_back(p.candidates[i].doc_id);
    }
    return out;
}

std::optional<double> RerankPipeline::average_precision(const std::string& topic_id,
                                                        const FusionParams& params) const
{
    return xlr::average_precision(ranking(topic_id, params), qrels_.topic(topic_id));
}

TopicMetrics RerankPipeline::metrics(const std::string& topic_id, const FusionParams& params) const
{
    return evaluate_topic(topic_id, ranking(topic_id, params), qrels_.topic(topic_id));
}

EvalFn RerankPipeline::eval_fn() const
{
    return [this](const FusionParams& params, std::span<const std::string> topics) {
        std::vector<std::optional<double>> out;
        out.reserve(topics.size());
        for (const auto& t : topics) {
            out.push_back(average_precision(t, params));
        }
        return out;
    };
}

std::vector<std::vector<std::optional<double>>> ap_matrix(const RerankPipeline& pipeline,
                                                          std::span<const FusionParams> points,
                                                          std::span<const std::string> topics)
{
    std::vector<std::vector<std::optional<double>>> m(
        points.size(), std::vector<std::optional<double>>(topics.size()));
    detail::parallel_for(points.size() * topics.size(), [&](std::size_t flat) {
        const auto p = flat / topics.size();
        const auto t = flat % topics.size();
        m[p][t] = pipeline.average_precision(topics[t], points[p]);
    });
    return m;
}

std::vector<std::vector<std::optional<double>>> ap_matrix_serial(
    const RerankPipeline& pipeline, std::span<const FusionParams> points,
    std::span<const std::string> topics)
{
    std::vector<std::vector<std::optional<double>>> m;
    m.reserve(points.size());
    for (const auto& p : points) {
        std::vector<std::optional<double>> row;
        row.reserve(topics.size());
        for (const auto& t : topics) {
            row.push_back(pipeline.average_precision(t, p));
        }
        m.push_back(std::move(row));
    }
    return m;
}

CvResult cross_validate(const FoldAssignment& assignment, const Grid& grid,
                        const RerankPipeline& pipeline, const std::string& run_tag)
{
    CvResult result;
    result.assignment = assignment;
    result.grid = grid;
    const auto points = grid.points();

    std::vector<std::string> topics;
    for (const auto& [topic, _] : assignment.fold_of) {
        if (!pipeline.has_topic(topic)) {
            throw DataError("fold assignment names topic " + topic + " unknown to the pipeline");
        }
        topics.push_back(topic);
    }
    const auto matrix = ap_matrix(pipeline, points, topics);

    for (std::size_t f = 0; f < assignment.n_folds; ++f) {
        std::vector<std::size_t> train;
        for (std::size_t t = 0; t < topics.size(); ++t) {
            if (assignment.fold_of.at(topics[t]) != f) {
                train.push_back(t);
            }
        }
        if (train.empty()) {
            throw DataError("fold " + std::to_string(f) + " leaves no training topics");
        }
        std::vector<double> means(points.size(), 0.0);
        for (std::size_t p = 0; p < points.size(); ++p) {
            std::vector<std::optional<double>> row;
            row.reserve(train.size());
            for (auto t : train) {
                row.push_back(matrix[p][t]);
            }
            means[p] = mean_defined(row);
        }
        result.fold_params.push_back(points[select_best(points, means)]);
    }

    std::size_t defined = 0;
    for (const auto& topic : topics) {
        const auto& params = result.fold_params[assignment.fold_of.at(topic)];
        auto fused = pipeline.rerank_topic(topic, params);
        auto entries = to_run_entries(topic, std::span<const FusedDoc>(fused), run_tag);
        result.heldout_run.insert(result.heldout_run.end(), entries.begin(), entries.end());
        auto m = pipeline.metrics(topic, params);
        if (m.defined()) {
            ++defined;
            result.mean_ap += *m.ap;
            result.mean_p20 += m.p20;
            result.mean_ndcg20 += m.ndcg20.value_or(0.0);
        }
        result.topic_metrics.push_back(std::move(m));
    }
    if (defined > 0) {
        result.mean_ap /= static_cast<double>(defined);
        result.mean_p20 /= static_cast<double>(defined);
        result.mean_ndcg20 /= static_cast<double>(defined);
    }
    return result;
}

nlohmann::json cv_report_json(const CvResult& result)
{
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t f = 0; f < result.fold_params.size(); ++f) {
        folds.push_back({{"fold", f},
                         {"topics", result.assignment.fold(f)},
                         {"params", to_json(result.fold_params[f])}});
    }
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& m : result.topic_metrics) {
        nlohmann::json t = {{"topic_id", m.topic_id},
                            {"fold", result.assignment.fold_of.at(m.topic_id)},
                            {"P_20", m.p20}};
        t["map"] = m.ap ? nlohmann::json(*m.ap) : nlohmann::json(nullptr);
        t["ndcg_cut_20"] = m.ndcg20 ? nlohmann::json(*m.ndcg20) : nlohmann::json(nullptr);
        topics.push_back(std::move(t));
    }
    return {{"seed", result.assignment.seed},
            {"n_folds", result.assignment.n_folds},
            {"grid", to_json(result.grid)},
            {"selection_metric", "map"},
            {"folds", std::move(folds)},
            {"topics", std::move(topics)},
            {"map", result.mean_ap},
            {"P_20", result.mean_p20},
            {"ndcg_cut_20", result.mean_ndcg20}};
}

}  // namespace xlr
