#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlr/corpus_io.hpp"
#include "xlr/text_analysis.hpp"

namespace xlr {

/// One sentence to score, with the position it came from.
struct SentenceInput {
    std::string doc_id;
    std::size_t sentence_index = 0;
    std::string text;
};

/// Query-side context for a scoring call.
struct ScoreContext {
    std::string topic_id;
    std::string query;
};

struct ScoredSentence {
    std::string doc_id;
    std::size_t sentence_index = 0;
    double score = 0.0;
};

/// A sentence relevance scorer. Implementations return exactly one score in
/// [0, 1] per input sentence, aligned with the input order, and must be safe
/// to call from several threads at once.
class SentenceScorer {
  public:
    virtual ~SentenceScorer() = default;

    virtual std::vector<double> score(const ScoreContext& ctx,
                                      std::span<const SentenceInput> sentences) = 0;

    /// Identifies the scorer for caching purposes.
    virtual std::string fingerprint() const = 0;
};

inline constexpr std::size_t kDefaultScoreBatch = 64;

/// Scores `sentences` in chunks of at most `batch_size` and checks the
/// alignment and range contract on every chunk.
std::vector<double> score_batch(SentenceScorer& scorer, const ScoreContext& ctx,
                                std::span<const SentenceInput> sentences,
                                std::size_t batch_size = kDefaultScoreBatch);

class ConstantScorer final : public SentenceScorer {
  public:
    explicit ConstantScorer(double value);
    std::vector<double> score(const ScoreContext&, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override;

  private:
    double value_;
};

/// |unique query terms ∩ sentence terms| / |unique query terms|.
double lexical_overlap(const Analyzer& analyzer, std::string_view query, std::string_view sentence);

class LexicalOverlapScorer final : public SentenceScorer {
  public:
    explicit LexicalOverlapScorer(Analyzer analyzer);
    std::vector<double> score(const ScoreContext& ctx, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override;

  private:
    Analyzer analyzer_;
};

/// Test oracle: 1.0 for every sentence of a document judged relevant
/// (grade >= 1) for the context's topic, 0.0 otherwise.
class ClairvoyantScorer final : public SentenceScorer {
  public:
    explicit ClairvoyantScorer(std::shared_ptr<const Qrels> qrels);
    std::vector<double> score(const ScoreContext& ctx, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override;

  private:
    std::shared_ptr<const Qrels> qrels_;
};

std::unique_ptr<SentenceScorer> clairvoyant_scorer(const Qrels& qrels);

// Wire protocol shared by the HTTP and stdio transports:
//   request  {"request_id": string, "query": string, "sentences": [string, ...]}
//   response {"request_id": string, "scores": [number, ...]}
std::string encode_score_request(const std::string& request_id, const std::string& query,
                                 std::span<const SentenceInput> sentences);

/// Parses and validates a response body: matching id (when `expected_id` is
/// non-empty), `expected_count` scores, each finite and within [0, 1].
/// Violations raise ProtocolError; scores are never clamped.
std::vector<double> decode_score_response(const std::string& body, const std::string& expected_id,
                                          std::size_t expected_count);

/// Scorer behind `POST /score` and `GET /health`.
class HttpScorer final : public SentenceScorer {
  public:
    explicit HttpScorer(std::string url, int timeout_seconds = 300);

    std::vector<double> score(const ScoreContext& ctx, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override;

    /// Model name reported by `GET /health`. Throws TransportError.
    std::string health() const;

  private:
    std::string url_;
    std::string base_;
    std::string path_prefix_;
    int timeout_seconds_;
    mutable std::string model_;
    mutable std::mutex model_mutex_;
};

/// Scorer running as a child process speaking newline-delimited JSON on its
/// stdin/stdout. Several requests may be in flight; responses are matched by
/// request_id and may arrive in any order.
class StdioScorer final : public SentenceScorer {
  public:
    explicit StdioScorer(std::string command);
    ~StdioScorer() override;

    StdioScorer(const StdioScorer&) = delete;
    StdioScorer& operator=(const StdioScorer&) = delete;

    std::vector<double> score(const ScoreContext& ctx, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override;

  private:
    struct Channel;
    std::string command_;
    std::unique_ptr<Channel> channel_;
};

/// Persistent score cache keyed by (scorer fingerprint, query, doc_id,
/// sentence_index). Entries live in one JSONL file per fingerprint under
/// `cache_dir`; misses are forwarded to the wrapped scorer and appended.
class CachedScorer final : public SentenceScorer {
  public:
    CachedScorer(std::unique_ptr<SentenceScorer> inner, std::filesystem::path cache_dir);

    std::vector<double> score(const ScoreContext& ctx, std::span<const SentenceInput> sentences) override;
    std::string fingerprint() const override { return inner_->fingerprint(); }

    std::size_t hits() const;
    std::size_t misses() const;

  private:
    static std::string key(const std::string& query, const std::string& doc_id, std::size_t index);

    std::unique_ptr<SentenceScorer> inner_;
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, double> entries_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

/// Builds a scorer from a spec string:
///   builtin:constant:<v> | builtin:lexical | builtin:clairvoyant:<qrels path>
///   http:<url> | stdio:<command>
/// `analyzer` backs builtin:lexical. Bad specs raise UsageError.
std::unique_ptr<SentenceScorer> make_scorer(const std::string& spec, const Analyzer& analyzer);

}  // namespace xlr
