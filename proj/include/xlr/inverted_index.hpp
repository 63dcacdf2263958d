#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlr/corpus_io.hpp"
#include "xlr/text_analysis.hpp"

namespace xlr {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Ranking order used throughout: score descending, then doc_id ascending.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b)
{
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.doc_id < b.doc_id;
}

/// Lucene-style non-negative IDF: ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(std::uint64_t num_docs, std::uint64_t df);

/// tf saturation with length normalization, without the IDF factor.
double bm25_tf_component(double tf, double doc_len, double avgdl, const Bm25Params& params);

/// Immutable in-memory inverted index. Safe for concurrent searches.
class InvertedIndex {
  public:
    InvertedIndex(Analyzer analyzer, Bm25Params params = {});

    const Analyzer& analyzer() const { return analyzer_; }
    const Bm25Params& params() const { return params_; }
    void set_params(Bm25Params params) { params_ = params; }

    std::uint32_t num_docs() const { return static_cast<std::uint32_t>(doc_ids_.size()); }
    double avgdl() const { return avgdl_; }
    std::uint64_t total_length() const { return total_length_; }
    std::size_t num_terms() const { return terms_.size(); }

    const std::string& doc_id(std::uint32_t internal) const { return doc_ids_.at(internal); }
    std::optional<std::uint32_t> internal_id(std::string_view doc_id) const;
    std::uint32_t doc_length(std::uint32_t internal) const { return doc_lengths_.at(internal); }

    /// Postings for a term (sorted by internal doc id), empty if unknown.
    std::span<const Posting> postings(std::string_view term) const;
    std::uint64_t document_frequency(std::string_view term) const { return postings(term).size(); }

    /// Every term in the dictionary, sorted.
    std::vector<std::string> terms() const;

    /// BM25 score of one document for already-analyzed query terms. Duplicate
    /// terms are collapsed; unknown terms contribute 0. Throws DataError for an
    /// unknown doc_id.
    double bm25_score(std::span<const std::string> query_terms, std::string_view doc_id) const;

    /// Top-k documents with nonzero term overlap, ordered by ranks_before.
    std::vector<ScoredDoc> search(std::string_view query, std::size_t k) const;
    std::vector<ScoredDoc> search_terms(std::span<const std::string> query_terms, std::size_t k) const;

    /// Versioned binary snapshot; see README for the layout.
    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);

  private:
    friend class IndexBuilder;

    std::vector<std::string> unique_sorted(std::span<const std::string> terms) const;

    Analyzer analyzer_;
    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> doc_lookup_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t> term_lookup_;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::uint64_t total_length_ = 0;
    double avgdl_ = 0.0;
};

/// Accumulates documents into an index. Tokenization of a batch may run in
/// parallel; merging is always in input order, so serial and parallel builds
/// produce identical indexes.
class IndexBuilder {
  public:
    explicit IndexBuilder(Analyzer analyzer, Bm25Params params = {});

    void add(const Document& doc);
    void add_batch(std::span<const Document> docs);         // OpenMP tokenization
    void add_batch_serial(std::span<const Document> docs);  // reference path

    InvertedIndex finish() &&;

  private:
    using TermCounts = std::vector<std::pair<std::string, std::uint32_t>>;

    TermCounts count_terms(const Document& doc) const;
    void merge(const Document& doc, TermCounts counts);

    InvertedIndex index_;
};

inline constexpr std::size_t kIndexBatchSize = 4096;

InvertedIndex build_index(CorpusReader& reader, const Analyzer& analyzer, Bm25Params params = {});
InvertedIndex build_index_serial(CorpusReader& reader, const Analyzer& analyzer,
                                 Bm25Params params = {});
InvertedIndex build_index(std::span<const Document> docs, const Analyzer& analyzer,
                          Bm25Params params = {});
InvertedIndex build_index_serial(std::span<const Document> docs, const Analyzer& analyzer,
                                 Bm25Params params = {});

/// One ranked list per query, in query order. Topics are searched in parallel.
std::vector<std::vector<ScoredDoc>> search_batch(const InvertedIndex& index,
                                                 std::span<const Query> queries, std::size_t k);
std::vector<std::vector<ScoredDoc>> search_batch_serial(const InvertedIndex& index,
                                                        std::span<const Query> queries,
                                                        std::size_t k);

std::vector<RunEntry> to_run_entries(const std::string& topic_id, std::span<const ScoredDoc> docs,
                                     const std::string& tag);

}  // namespace xlr
