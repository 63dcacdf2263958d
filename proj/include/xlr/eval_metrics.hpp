#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlr/corpus_io.hpp"

namespace xlr {

inline constexpr std::size_t kDefaultCutoff = 20;

/// Number of judgments with grade >= 1.
std::size_t count_relevant(const Qrels::TopicJudgments& judgments);

/// Non-interpolated AP over the full ranking; nullopt when the topic has no
/// relevant documents.
std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const Qrels::TopicJudgments& judgments);

/// Relevant documents in the top `cutoff`, divided by `cutoff`.
double precision_at(std::span<const std::string> ranking, const Qrels::TopicJudgments& judgments,
                    std::size_t cutoff = kDefaultCutoff);

/// DCG@cutoff / IDCG@cutoff with gain 2^grade - 1 and discount 1/log2(rank + 1);
/// nullopt when IDCG is 0.
std::optional<double> ndcg_at(std::span<const std::string> ranking,
                              const Qrels::TopicJudgments& judgments,
                              std::size_t cutoff = kDefaultCutoff);

struct TopicMetrics {
    std::string topic_id;
    std::optional<double> ap;
    double p20 = 0.0;
    std::optional<double> ndcg20;

    /// Topics without relevant documents are left out of means.
    bool defined() const { return ap.has_value(); }
};

TopicMetrics evaluate_topic(const std::string& topic_id, std::span<const std::string> ranking,
                            const Qrels::TopicJudgments& judgments);

struct EvalReport {
    std::vector<TopicMetrics> topics;  // sorted by topic_id
    std::size_t num_defined = 0;
    double map = 0.0;
    double p20 = 0.0;
    double ndcg20 = 0.0;
    std::vector<std::string> warnings;
};

/// Per-topic metrics and means over topics with at least one relevant
/// document. Run topics missing from the qrels are skipped with a warning.
EvalReport evaluate_run(std::span<const RunEntry> run, const Qrels& qrels);

/// trec_eval-style "metric<TAB>topic<TAB>value" lines plus "all" summaries.
void write_eval_tsv(std::ostream& out, const EvalReport& report);
nlohmann::json eval_to_json(const EvalReport& report);

}  // namespace xlr
