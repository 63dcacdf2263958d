#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace xlr {

struct Document {
    std::string doc_id;
    std::string contents;
    std::string lang;

    bool operator==(const Document&) const = default;
};

enum class CorpusFormat { jsonl, trec_sgml };

CorpusFormat parse_corpus_format(const std::string& name);

/// Streams documents from a corpus file one record at a time.
///
/// Only the current record and the set of doc_ids seen so far are held in
/// memory. Malformed records raise DataError with the offending line number;
/// a repeated doc_id raises DataError naming the id.
class CorpusReader {
  public:
    CorpusReader(const std::filesystem::path& path, CorpusFormat format,
                 std::string default_lang = {});

    /// Next document in file order, or nullopt at end of file.
    std::optional<Document> next();

  private:
    std::optional<Document> next_jsonl();
    std::optional<Document> next_sgml();
    Document accept(Document doc);

    std::filesystem::path path_;
    std::ifstream in_;
    CorpusFormat format_;
    std::string default_lang_;
    std::size_t line_no_ = 0;
    std::unordered_set<std::string> seen_;
};

/// Loads a whole corpus into memory. Convenience for small collections.
std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  const std::string& default_lang = {});

struct Topic {
    std::string topic_id;
    std::map<std::string, std::string> titles;  // language variant -> query text

    bool operator==(const Topic&) const = default;
};

struct Query {
    std::string topic_id;
    std::string text;

    bool operator==(const Query&) const = default;
};

/// Reads a topics JSONL file. `field` names the object holding the language
/// variants; "titles" by default, but e.g. "descriptions" works the same way.
std::vector<Topic> load_topic_set(const std::filesystem::path& path,
                                  const std::string& field = "titles");

/// Resolves one query string per topic for the given language variant.
std::vector<Query> select_queries(std::span<const Topic> topics, const std::string& lang_select);

std::vector<Query> load_topics(const std::filesystem::path& path, const std::string& lang_select,
                               const std::string& field = "titles");

/// Graded relevance judgments. Unjudged pairs are absent.
class Qrels {
  public:
    using TopicJudgments = std::map<std::string, int>;

    void set(const std::string& topic_id, const std::string& doc_id, int grade);

    /// Grade for (topic, doc); 0 when unjudged.
    int grade(const std::string& topic_id, const std::string& doc_id) const;

    bool has_topic(const std::string& topic_id) const;

    /// Judgments for one topic, or an empty map.
    const TopicJudgments& topic(const std::string& topic_id) const;

    const std::map<std::string, TopicJudgments>& topics() const { return judgments_; }

    std::size_t size() const;

    bool operator==(const Qrels&) const = default;

  private:
    std::map<std::string, TopicJudgments> judgments_;
};

Qrels read_qrels(std::istream& in);
Qrels read_qrels(const std::filesystem::path& path);
void write_qrels(std::ostream& out, const Qrels& qrels);

struct RunEntry {
    std::string topic_id;
    std::string doc_id;
    int rank = 0;
    double score = 0.0;
    std::string tag;

    bool operator==(const RunEntry&) const = default;
};

/// Writes "topic Q0 doc rank score tag" lines. Scores use the shortest
/// representation that parses back to the identical double.
void write_run(std::ostream& out, std::span<const RunEntry> entries);
void write_run(const std::filesystem::path& path, std::span<const RunEntry> entries);

/// Reads a run file, validating per-topic rank continuity (1..n), non-increasing
/// scores and (topic, doc) uniqueness. Entries are returned in file order.
std::vector<RunEntry> read_run(std::istream& in);
std::vector<RunEntry> read_run(const std::filesystem::path& path);

/// Groups run entries by topic, each group ordered by rank. Topics appear in
/// order of first occurrence.
std::vector<std::pair<std::string, std::vector<RunEntry>>> group_run(std::span<const RunEntry> entries);

}  // namespace xlr
