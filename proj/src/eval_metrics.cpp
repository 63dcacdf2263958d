#include "xlr/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace xlr {

namespace {

int grade_of(const Qrels::TopicJudgments& judgments, const std::string& doc)
{
    auto it = judgments.find(doc);
    return it == judgments.end() ? 0 : it->second;
}

double gain(int grade)
{
    return std::exp2(static_cast<double>(grade)) - 1.0;
}

std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::size_t count_relevant(const Qrels::TopicJudgments& judgments)
{
    return static_cast<std::size_t>(std::count_if(judgments.begin(), judgments.end(),
                                                  [](const auto& kv) { return kv.second >= 1; }));
}

std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const Qrels::TopicJudgments& judgments)
{
    const auto total = count_relevant(judgments);
    if (total == 0) {
        return std::nullopt;
    }
    double sum = 0.0;
    std::size_t found = 0;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        if (grade_of(judgments, ranking[i]) >= 1) {
            ++found;
            sum += static_cast<double>(found) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total);
}

double precision_at(std::span<const std::string> ranking, const Qrels::TopicJudgments& judgments,
                    std::size_t cutoff)
{
    if (cutoff == 0) {
        return 0.0;
    }
    const auto n = std::min(cutoff, ranking.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        hits += grade_of(judgments, ranking[i]) >= 1 ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(cutoff);
}

std::optional<double> ndcg_at(std::span<const std::string> ranking,
                              const Qrels::TopicJudgments& judgments, std::size_t cutoff)
{
    std::vector<int> ideal;
    for (const auto& [_, g] : judgments) {
        if (g > 0) {
            ideal.push_back(g);
        }
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(cutoff, ideal.size()); ++i) {
        idcg += gain(ideal[i]) / std::log2(static_cast<double>(i + 2));
    }
    if (idcg == 0.0) {
        return std::nullopt;
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(cutoff, ranking.size()); ++i) {
        dcg += gain(grade_of(judgments, ranking[i])) / std::log2(static_cast<double>(i + 2));
    }
    return dcg / idcg;
}

TopicMetrics evaluate_topic(const std::string& topic_id, std::span<const std::string> ranking,
                            const Qrels::TopicJudgments& judgments)
{
    return {topic_id, average_precision(ranking, judgments), precision_at(ranking, judgments),
            ndcg_at(ranking, judgments)};
}

EvalReport evaluate_run(std::span<const RunEntry> run, const Qrels& qrels)
{
    EvalReport report;
    auto groups = group_run(run);
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [topic, entries] : groups) {
        if (!qrels.has_topic(topic)) {
            report.warnings.push_back("topic " + topic + " has no judgments; skipped");
            continue;
        }
        std::vector<std::string> ranking;
        ranking.reserve(entries.size());
        for (const auto& e : entries) {
            ranking.push_back(e.doc_id);
        }
        auto m = evaluate_topic(topic, ranking, qrels.topic(topic));
        if (m.defined()) {
            ++report.num_defined;
            report.map += *m.ap;
            report.p20 += m.p20;
            report.ndcg20 += m.ndcg20.value_or(0.0);
        }
        report.topics.push_back(std::move(m));
    }
    if (report.num_defined > 0) {
        const auto n = static_cast<double>(report.num_defined);
        report.map /= n;
        report.p20 /= n;
        report.ndcg20 /= n;
    }
    return report;
}

void write_eval_tsv(std::ostream& out, const EvalReport& report)
{
    for (const auto& m : report.topics) {
        if (!m.defined()) {
            continue;
        }
        out << "map\t" << m.topic_id << '\t' << fixed4(*m.ap) << '\n';
        out << "P_20\t" << m.topic_id << '\t' << fixed4(m.p20) << '\n';
        out << "ndcg_cut_20\t" << m.topic_id << '\t' << fixed4(m.ndcg20.value_or(0.0)) << '\n';
    }
    out << "num_q\tall\t" << report.num_defined << '\n';
    out << "map\tall\t" << fixed4(report.map) << '\n';
    out << "P_20\tall\t" << fixed4(report.p20) << '\n';
    out << "ndcg_cut_20\tall\t" << fixed4(report.ndcg20) << '\n';
}

nlohmann::json eval_to_json(const EvalReport& report)
{
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& m : report.topics) {
        nlohmann::json t = {{"topic_id", m.topic_id}, {"P_20", m.p20}};
        t["map"] = m.ap ? nlohmann::json(*m.ap) : nlohmann::json(nullptr);
        t["ndcg_cut_20"] = m.ndcg20 ? nlohmann::json(*m.ndcg20) : nlohmann::json(nullptr);
        topics.push_back(std::move(t));
    }
    return {{"num_q", report.num_defined},
            {"map", report.map},
            {"P_20", report.p20},
            {"ndcg_cut_20", report.ndcg20},
            {"topics", std::move(topics)},
            {"warnings", report.warnings}};
}

}  // namespace xlr
