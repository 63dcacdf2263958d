#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace xlr {

enum class TokenMode { unicode_word, cjk_bigram };

struct AnalyzerOptions {
    bool lowercase = true;
    std::set<std::string> stopwords;
    /// Ignored for "zh", which always uses cjk_bigram.
    TokenMode mode = TokenMode::unicode_word;
};

/// Language-aware tokenizer used for both indexing and querying.
///
/// Words are maximal runs of letters, digits and combining marks. In
/// cjk_bigram mode runs of Han/Kana/Hangul characters are emitted as
/// overlapping character bigrams (a lone character becomes a unigram);
/// in unicode_word mode each such character is its own token. Full-width
/// ASCII forms are folded to ASCII before classification.
class Analyzer {
  public:
    explicit Analyzer(std::string lang, AnalyzerOptions options = {});

    std::vector<std::string> tokenize(std::string_view text) const;

    const std::string& lang() const { return lang_; }
    TokenMode mode() const { return options_.mode; }
    const AnalyzerOptions& options() const { return options_; }

    /// Stable description of the configuration; two analyzers with equal
    /// fingerprints tokenize identically.
    std::string fingerprint() const;

  private:
    std::string lang_;
    AnalyzerOptions options_;
};

/// Stopword file: UTF-8, one term per line, '#' starts a comment.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

struct Sentence {
    std::string doc_id;
    std::size_t index = 0;
    std::string text;

    bool operator==(const Sentence&) const = default;
};

inline constexpr std::size_t kDefaultSentenceBudget = 2000;

/// Rule-based sentence segmentation.
///
/// A run of terminators (. ! ? … ؟ । ॥) followed by whitespace or end of
/// text closes a sentence; full-width CJK terminators (。！？) close a
/// sentence unconditionally; a blank line closes a sentence. Sentences are
/// trimmed, never empty, and hard-split when longer than `max_chars` code
/// points (at the last whitespace inside the budget when there is one).
std::vector<Sentence> split_sentences(std::string_view lang, std::string_view text,
                                      std::size_t max_chars = kDefaultSentenceBudget,
                                      std::string_view doc_id = {});

}  // namespace xlr
