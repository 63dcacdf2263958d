#include "xlr/inverted_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "xlr/errors.hpp"

namespace xlr {

namespace {

constexpr char kMagic[8] = {'X', 'L', 'R', 'I', 'D', 'X', '\0', '\0'};
constexpr std::uint32_t kSnapshotVersion = 1;

inline double term_contribution(double idf, std::uint32_t tf, std::uint32_t doc_len, double avgdl,
                                const Bm25Params& params)
{
    return idf * bm25_tf_component(static_cast<double>(tf), static_cast<double>(doc_len), avgdl,
                                   params);
}

class Writer {
  public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    template <typename T>
    void pod(const T& v)
    {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void str(const std::string& s)
    {
        pod(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

  private:
    std::ofstream& out_;
};

class Reader {
  public:
    Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

    template <typename T>
    T pod()
    {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        check();
        return v;
    }

    std::string str()
    {
        auto len = pod<std::uint32_t>();
        std::string s(len, '\0');
        in_.read(s.data(), len);
        check();
        return s;
    }

  private:
    void check()
    {
        if (!in_) {
            throw DataError("truncated index snapshot " + path_);
        }
    }

    std::ifstream& in_;
    std::string path_;
};

nlohmann::json analyzer_to_json(const Analyzer& analyzer)
{
    const auto& opt = analyzer.options();
    return {{"lang", analyzer.lang()},
            {"lowercase", opt.lowercase},
            {"mode", opt.mode == TokenMode::cjk_bigram ? "cjk-bigram" : "unicode-word"},
            {"stopwords", opt.stopwords}};
}

Analyzer analyzer_from_json(const nlohmann::json& j)
{
    AnalyzerOptions opt;
    opt.lowercase = j.at("lowercase").get<bool>();
    opt.mode = j.at("mode").get<std::string>() == "cjk-bigram" ? TokenMode::cjk_bigram
                                                                 : TokenMode::unicode_word;
    opt.stopwords = j.at("stopwords").get<std::set<std::string>>();
    return Analyzer(j.at("lang").get<std::string>(), std::move(opt));
}

}  // namespace

double bm25_idf(std::uint64_t num_docs, std::uint64_t df)
{
    const double n = static_cast<double>(num_docs);
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_tf_component(double tf, double doc_len, double avgdl, const Bm25Params& params)
{
    const double norm = avgdl > 0.0 ? doc_len / avgdl : 0.0;
    return tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
}

InvertedIndex::InvertedIndex(Analyzer analyzer, Bm25Params params)
    : analyzer_(std::move(analyzer)), params_(params)
{}

std::optional<std::uint32_t> InvertedIndex::internal_id(std::string_view doc_id) const
{
    auto it = doc_lookup_.find(std::string(doc_id));
    if (it == doc_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const
{
    auto it = term_lookup_.find(std::string(term));
    if (it == term_lookup_.end()) {
        return {};
    }
    return postings_[it->second];
}

std::vector<std::string> InvertedIndex::terms() const
{
    auto out = terms_;
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> InvertedIndex::unique_sorted(std::span<const std::string> terms) const
{
    std::vector<std::string> out(terms.begin(), terms.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double InvertedIndex::bm25_score(std::span<const std::string> query_terms,
                                 std::string_view doc_id) const
{
    auto internal = internal_id(doc_id);
    if (!internal) {
        throw DataError("unknown document " + std::string(doc_id));
    }
    const std::uint32_t doc = *internal;
    double score = 0.0;
    for (const auto& term : unique_sorted(query_terms)) {
        auto list = postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != doc) {
            continue;
        }
        const double idf = bm25_idf(num_docs(), list.size());
        score += term_contribution(idf, it->tf, doc_lengths_[doc], avgdl_, params_);
    }
    return score;
}

std::vector<ScoredDoc> InvertedIndex::search(std::string_view query, std::size_t k) const
{
    auto terms = analyzer_.tokenize(query);
    return search_terms(terms, k);
}

// Term-at-a-time accumulation in sorted term order, which is the same
// summation order bm25_score uses, so scores agree bit for bit.
std::vector<ScoredDoc> InvertedIndex::search_terms(std::span<const std::string> query_terms,
                                                   std::size_t k) const
{
    if (k == 0 || doc_ids_.empty()) {
        return {};
    }
    std::vector<double> acc(doc_ids_.size(), 0.0);
    std::vector<std::uint8_t> hit(doc_ids_.size(), 0);
    std::vector<std::uint32_t> touched;
    for (const auto& term : unique_sorted(query_terms)) {
        auto list = postings(term);
        if (list.empty()) {
            continue;
        }
        const double idf = bm25_idf(num_docs(), list.size());
        for (const auto& p : list) {
            acc[p.doc] += term_contribution(idf, p.tf, doc_lengths_[p.doc], avgdl_, params_);
            if (!hit[p.doc]) {
                hit[p.doc] = 1;
                touched.push_back(p.doc);
            }
        }
    }
    auto before = [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) {
            return acc[a] > acc[b];
        }
        return doc_ids_[a] < doc_ids_[b];
    };
    const std::size_t n = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(n),
                      touched.end(), before);
    std::vector<ScoredDoc> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({doc_ids_[touched[i]], acc[touched[i]]});
    }
    return out;
}

// Layout (native little-endian):
//   magic[8] "XLRIDX\0\0", u32 version
//   str analyzer-json, f64 k1, f64 b
//   u32 N, N x (str doc_id, u32 length)
//   u32 T, T x (str term, u32 P, P x (u32 doc, u32 tf))
// where str = u32 byte length + UTF-8 bytes.
void InvertedIndex::save(const std::filesystem::path& path) const
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write index snapshot " + path.string());
    }
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod(kSnapshotVersion);
    w.str(analyzer_to_json(analyzer_).dump());
    w.pod(params_.k1);
    w.pod(params_.b);
    w.pod(num_docs());
    for (std::uint32_t d = 0; d < num_docs(); ++d) {
        w.str(doc_ids_[d]);
        w.pod(doc_lengths_[d]);
    }
    w.pod(static_cast<std::uint32_t>(terms_.size()));
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        w.str(terms_[t]);
        w.pod(static_cast<std::uint32_t>(postings_[t].size()));
        for (const auto& p : postings_[t]) {
            w.pod(p.doc);
            w.pod(p.tf);
        }
    }
    if (!out) {
        throw DataError("failed writing index snapshot " + path.string());
    }
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open index snapshot " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError(path.string() + " is not an index snapshot");
    }
    Reader r(in, path.string());
    auto version = r.pod<std::uint32_t>();
    if (version != kSnapshotVersion) {
        throw DataError("unsupported index snapshot version " + std::to_string(version));
    }
    Analyzer analyzer = analyzer_from_json(nlohmann::json::parse(r.str()));
    Bm25Params params;
    params.k1 = r.pod<double>();
    params.b = r.pod<double>();
    InvertedIndex index(std::move(analyzer), params);

    auto n = r.pod<std::uint32_t>();
    index.doc_ids_.reserve(n);
    index.doc_lengths_.reserve(n);
    for (std::uint32_t d = 0; d < n; ++d) {
        auto id = r.str();
        auto len = r.pod<std::uint32_t>();
        if (!index.doc_lookup_.emplace(id, d).second) {
            throw DataError("duplicate doc_id " + id + " in snapshot");
        }
        index.doc_ids_.push_back(std::move(id));
        index.doc_lengths_.push_back(len);
        index.total_length_ += len;
    }
    auto t = r.pod<std::uint32_t>();
    index.terms_.reserve(t);
    index.postings_.reserve(t);
    for (std::uint32_t i = 0; i < t; ++i) {
        auto term = r.str();
        auto count = r.pod<std::uint32_t>();
        std::vector<Posting> list(count);
        for (auto& p : list) {
            p.doc = r.pod<std::uint32_t>();
            p.tf = r.pod<std::uint32_t>();
            if (p.doc >= n || (&p != list.data() && (&p - 1)->doc >= p.doc)) {
                throw DataError("corrupt postings for term " + term);
            }
        }
        index.term_lookup_.emplace(term, i);
        index.terms_.push_back(std::move(term));
        index.postings_.push_back(std::move(list));
    }
    index.avgdl_ = n > 0 ? static_cast<double>(index.total_length_) / n : 0.0;
    return index;
}

IndexBuilder::IndexBuilder(Analyzer analyzer, Bm25Params params)
    : index_(std::move(analyzer), params)
{}

IndexBuilder::TermCounts IndexBuilder::count_terms(const Document& doc) const
{
    auto tokens = index_.analyzer_.tokenize(doc.contents);
    std::sort(tokens.begin(), tokens.end());
    TermCounts counts;
    for (auto& tok : tokens) {
        if (!counts.empty() && counts.back().first == tok) {
            ++counts.back().second;
        } else {
            counts.emplace_back(std::move(tok), 1);
        }
    }
    return counts;
}

void IndexBuilder::merge(const Document& doc, TermCounts counts)
{
    const auto id = static_cast<std::uint32_t>(index_.doc_ids_.size());
    if (!index_.doc_lookup_.emplace(doc.doc_id, id).second) {
        throw DataError("duplicate doc_id " + doc.doc_id);
    }
    index_.doc_ids_.push_back(doc.doc_id);
    std::uint32_t length = 0;
    for (auto& [term, tf] : counts) {
        length += tf;
        auto [it, inserted] =
            index_.term_lookup_.emplace(term, static_cast<std::uint32_t>(index_.terms_.size()));
        if (inserted) {
            index_.terms_.push_back(std::move(term));
            index_.postings_.emplace_back();
        }
        index_.postings_[it->second].push_back({id, tf});
    }
    index_.doc_lengths_.push_back(length);
    index_.total_length_ += length;
}

void IndexBuilder::add(const Document& doc)
{
    merge(doc, count_terms(doc));
}

void IndexBuilder::add_batch(std::span<const Document> docs)
{
    std::vector<TermCounts> counts(docs.size());
    const auto n = static_cast<std::int64_t>(docs.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
        counts[static_cast<std::size_t>(i)] = count_terms(docs[static_cast<std::size_t>(i)]);
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
        merge(docs[i], std::move(counts[i]));
    }
}

void IndexBuilder::add_batch_serial(std::span<const Document> docs)
{
    for (const auto& doc : docs) {
        add(doc);
    }
}

InvertedIndex IndexBuilder::finish() &&
{
    const auto n = index_.doc_ids_.size();
    index_.avgdl_ = n > 0 ? static_cast<double>(index_.total_length_) / static_cast<double>(n) : 0.0;
    return std::move(index_);
}

namespace {

template <bool Parallel>
InvertedIndex build_from_reader(CorpusReader& reader, const Analyzer& analyzer, Bm25Params params)
{
    IndexBuilder builder(analyzer, params);
    std::vector<Document> batch;
    batch.reserve(kIndexBatchSize);
    auto flush = [&] {
        if constexpr (Parallel) {
            builder.add_batch(batch);
        } else {
            builder.add_batch_serial(batch);
        }
        batch.clear();
    };
    while (auto doc = reader.next()) {
        batch.push_back(std::move(*doc));
        if (batch.size() == kIndexBatchSize) {
            flush();
        }
    }
    flush();
    return std::move(builder).finish();
}

}  // namespace

InvertedIndex build_index(CorpusReader& reader, const Analyzer& analyzer, Bm25Params params)
{
    return build_from_reader<true>(reader, analyzer, params);
}

InvertedIndex build_index_serial(CorpusReader& reader, const Analyzer& analyzer, Bm25Params params)
{
    return build_from_reader<false>(reader, analyzer, params);
}

InvertedIndex build_index(std::span<const Document> docs, const Analyzer& analyzer,
                          Bm25Params params)
{
    IndexBuilder builder(analyzer, params);
    builder.add_batch(docs);
    return std::move(builder).finish();
}

InvertedIndex build_index_serial(std::span<const Document> docs, const Analyzer& analyzer,
                                 Bm25Params params)
{
    IndexBuilder builder(analyzer, params);
    builder.add_batch_serial(docs);
    return std::move(builder).finish();
}

std::vector<std::vector<ScoredDoc>> search_batch(const InvertedIndex& index,
                                                 std::span<const Query> queries, std::size_t k)
{
    std::vector<std::vector<ScoredDoc>> results(queries.size());
    const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        results[idx] = index.search(queries[idx].text, k);
    }
    return results;
}

std::vector<std::vector<ScoredDoc>> search_batch_serial(const InvertedIndex& index,
                                                        std::span<const Query> queries,
                                                        std::size_t k)
{
    std::vector<std::vector<ScoredDoc>> results;
    results.reserve(queries.size());
    for (const auto& q : queries) {
        results.push_back(index.search(q.text, k));
    }
    return results;
}

std::vector<RunEntry> to_run_entries(const std::string& topic_id, std::span<const ScoredDoc> docs,
                                     const std::string& tag)
{
    std::vector<RunEntry> out;
    out.reserve(docs.size());
    int rank = 1;
    for (const auto& d : docs) {
        out.push_back({topic_id, d.doc_id, rank++, d.score, tag});
    }
    return out;
}

}  // namespace xlr
