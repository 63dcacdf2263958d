#include "xlr/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "xlr/errors.hpp"

namespace xlr {

namespace {

using nlohmann::json;

std::string where(const std::filesystem::path& path, std::size_t line)
{
    return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> split_ws(const std::string& line)
{
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) {
        fields.push_back(std::move(f));
    }
    return fields;
}

bool blank(const std::string& s)
{
    return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string format_score(double score)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), score);
    return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(const std::string& s, T& out)
{
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

std::string strip_tags(const std::string& s)
{
    std::string out;
    out.reserve(s.size());
    bool in_tag = false;
    for (char c : s) {
        if (c == '<') {
            in_tag = true;
        } else if (c == '>' && in_tag) {
            in_tag = false;
            out.push_back(' ');
        } else if (!in_tag) {
            out.push_back(c);
        }
    }
    return out;
}

std::string trim(const std::string& s)
{
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

CorpusFormat parse_corpus_format(const std::string& name)
{
    if (name == "jsonl") {
        return CorpusFormat::jsonl;
    }
    if (name == "trec-sgml" || name == "trec") {
        return CorpusFormat::trec_sgml;
    }
    throw UsageError("unknown corpus format '" + name + "' (expected jsonl or trec-sgml)");
}

CorpusReader::CorpusReader(const std::filesystem::path& path, CorpusFormat format,
                           std::string default_lang)
    : path_(path), in_(path), format_(format), default_lang_(std::move(default_lang))
{
    if (!in_) {
        throw DataError("cannot open corpus " + path.string());
    }
}

std::optional<Document> CorpusReader::next()
{
    return format_ == CorpusFormat::jsonl ? next_jsonl() : next_sgml();
}

Document CorpusReader::accept(Document doc)
{
    if (doc.doc_id.empty()) {
        throw DataError(where(path_, line_no_) + "empty doc_id");
    }
    if (!seen_.insert(doc.doc_id).second) {
        throw DataError(where(path_, line_no_) + "duplicate doc_id " + doc.doc_id);
    }
    if (doc.lang.empty()) {
        doc.lang = default_lang_;
    }
    return doc;
}

std::optional<Document> CorpusReader::next_jsonl()
{
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (blank(line)) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where(path_, line_no_) + "malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
            throw DataError(where(path_, line_no_) + "record needs a string \"id\"");
        }
        Document doc;
        doc.doc_id = j["id"].get<std::string>();
        if (j.contains("contents")) {
            if (!j["contents"].is_string()) {
                throw DataError(where(path_, line_no_) + "\"contents\" must be a string");
            }
            doc.contents = j["contents"].get<std::string>();
        }
        if (j.contains("lang")) {
            if (!j["lang"].is_string()) {
                throw DataError(where(path_, line_no_) + "\"lang\" must be a string");
            }
            doc.lang = j["lang"].get<std::string>();
        }
        return accept(std::move(doc));
    }
    return std::nullopt;
}

// <DOC> ... <DOCNO> id </DOCNO> ... </DOC>; every other tag is stripped.
std::optional<Document> CorpusReader::next_sgml()
{
    std::string line;
    bool in_doc = false;
    std::size_t doc_start = 0;
    std::string body;
    std::string docno;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (!in_doc) {
            if (blank(line)) {
                continue;
            }
            auto pos = line.find("<DOC>");
            if (pos == std::string::npos) {
                throw DataError(where(path_, line_no_) + "expected <DOC>");
            }
            in_doc = true;
            doc_start = line_no_;
            line = line.substr(pos + 5);
        }
        auto end = line.find("</DOC>");
        std::string chunk = end == std::string::npos ? line : line.substr(0, end);
        auto no_open = chunk.find("<DOCNO>");
        if (no_open != std::string::npos) {
            auto no_close = chunk.find("</DOCNO>", no_open);
            if (no_close == std::string::npos) {
                throw DataError(where(path_, line_no_) + "unterminated <DOCNO>");
            }
            docno = trim(chunk.substr(no_open + 7, no_close - no_open - 7));
            chunk.erase(no_open, no_close + 8 - no_open);
        }
        std::string text = trim(strip_tags(chunk));
        if (!text.empty()) {
            if (!body.empty()) {
                body.push_back('\n');
            }
            body += text;
        }
        if (end != std::string::npos) {
            if (docno.empty()) {
                throw DataError(where(path_, doc_start) + "<DOC> without <DOCNO>");
            }
            return accept(Document{docno, body, {}});
        }
    }
    if (in_doc) {
        throw DataError(where(path_, doc_start) + "unterminated <DOC>");
    }
    return std::nullopt;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  const std::string& default_lang)
{
    CorpusReader reader(path, format, default_lang);
    std::vector<Document> docs;
    while (auto doc = reader.next()) {
        docs.push_back(std::move(*doc));
    }
    return docs;
}

std::vector<Topic> load_topic_set(const std::filesystem::path& path, const std::string& field)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open topics " + path.string());
    }
    std::vector<Topic> topics;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where(path, line_no) + "malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
            throw DataError(where(path, line_no) + "topic needs a string \"id\"");
        }
        Topic topic;
        topic.topic_id = j["id"].get<std::string>();
        if (topic.topic_id.empty()) {
            throw DataError(where(path, line_no) + "empty topic id");
        }
        if (!j.contains(field) || !j[field].is_object()) {
            throw DataError(where(path, line_no) + "topic " + topic.topic_id + " has no \"" +
                            field + "\" object");
        }
        for (const auto& [lang, text] : j[field].items()) {
            if (!text.is_string()) {
                throw DataError(where(path, line_no) + "variant " + lang + " of topic " +
                                topic.topic_id + " is not a string");
            }
            topic.titles.emplace(lang, text.get<std::string>());
        }
        if (topic.titles.empty()) {
            throw DataError(where(path, line_no) + "topic " + topic.topic_id +
                            " has no language variants");
        }
        if (!seen.emplace(topic.topic_id, topics.size()).second) {
            throw DataError(where(path, line_no) + "duplicate topic id " + topic.topic_id);
        }
        topics.push_back(std::move(topic));
    }
    return topics;
}

std::vector<Query> select_queries(std::span<const Topic> topics, const std::string& lang_select)
{
    std::vector<Query> queries;
    queries.reserve(topics.size());
    for (const auto& topic : topics) {
        auto it = topic.titles.find(lang_select);
        if (it == topic.titles.end()) {
            throw DataError("missing variant " + lang_select + " for " + topic.topic_id);
        }
        queries.push_back({topic.topic_id, it->second});
    }
    return queries;
}

std::vector<Query> load_topics(const std::filesystem::path& path, const std::string& lang_select,
                               const std::string& field)
{
    return select_queries(load_topic_set(path, field), lang_select);
}

void Qrels::set(const std::string& topic_id, const std::string& doc_id, int grade)
{
    if (grade < 0) {
        throw DataError("negative grade for " + topic_id + "/" + doc_id);
    }
    judgments_[topic_id][doc_id] = grade;
}

int Qrels::grade(const std::string& topic_id, const std::string& doc_id) const
{
    auto t = judgments_.find(topic_id);
    if (t == judgments_.end()) {
        return 0;
    }
    auto d = t->second.find(doc_id);
    return d == t->second.end() ? 0 : d->second;
}

bool Qrels::has_topic(const std::string& topic_id) const
{
    return judgments_.contains(topic_id);
}

const Qrels::TopicJudgments& Qrels::topic(const std::string& topic_id) const
{
    static const TopicJudgments empty;
    auto t = judgments_.find(topic_id);
    return t == judgments_.end() ? empty : t->second;
}

std::size_t Qrels::size() const
{
    std::size_t n = 0;
    for (const auto& [_, docs] : judgments_) {
        n += docs.size();
    }
    return n;
}

Qrels read_qrels(std::istream& in)
{
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) {
            continue;
        }
        auto f = split_ws(line);
        int grade = 0;
        if (f.size() != 4 || !parse_number(f[3], grade)) {
            throw DataError("qrels line " + std::to_string(line_no) +
                            ": expected \"topic_id 0 doc_id grade\"");
        }
        if (grade < 0) {
            throw DataError("qrels line " + std::to_string(line_no) + ": negative grade");
        }
        qrels.set(f[0], f[2], grade);
    }
    return qrels;
}

Qrels read_qrels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open qrels " + path.string());
    }
    return read_qrels(in);
}

void write_qrels(std::ostream& out, const Qrels& qrels)
{
    for (const auto& [topic, docs] : qrels.topics()) {
        for (const auto& [doc, grade] : docs) {
            out << topic << " 0 " << doc << ' ' << grade << '\n';
        }
    }
}

void write_run(std::ostream& out, std::span<const RunEntry> entries)
{
    for (const auto& e : entries) {
        out << e.topic_id << " Q0 " << e.doc_id << ' ' << e.rank << ' ' << format_score(e.score)
            << ' ' << e.tag << '\n';
    }
}

void write_run(const std::filesystem::path& path, std::span<const RunEntry> entries)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write run " + path.string());
    }
    write_run(out, entries);
}

std::vector<RunEntry> read_run(std::istream& in)
{
    struct TopicState {
        int last_rank = 0;
        double last_score = 0.0;
        std::unordered_set<std::string> docs;
    };
    std::unordered_map<std::string, TopicState> state;
    std::vector<RunEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) {
            continue;
        }
        auto err = [&](const std::string& what) {
            return DataError("run line " + std::to_string(line_no) + ": " + what);
        };
        auto f = split_ws(line);
        if (f.size() != 6) {
            throw err("expected \"topic_id Q0 doc_id rank score tag\"");
        }
        RunEntry e{f[0], f[2], 0, 0.0, f[5]};
        if (!parse_number(f[3], e.rank) || e.rank < 1) {
            throw err("bad rank '" + f[3] + "'");
        }
        if (!parse_number(f[4], e.score)) {
            throw err("bad score '" + f[4] + "'");
        }
        auto& st = state[e.topic_id];
        if (e.rank != st.last_rank + 1) {
            throw err("rank " + std::to_string(e.rank) + " for topic " + e.topic_id +
                      " breaks the 1..n sequence");
        }
        if (st.last_rank > 0 && e.score > st.last_score) {
            throw err("score increases with rank for topic " + e.topic_id);
        }
        if (!st.docs.insert(e.doc_id).second) {
            throw err("duplicate doc " + e.doc_id + " for topic " + e.topic_id);
        }
        st.last_rank = e.rank;
        st.last_score = e.score;
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<RunEntry> read_run(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open run " + path.string());
    }
    return read_run(in);
}

std::vector<std::pair<std::string, std::vector<RunEntry>>> group_run(std::span<const RunEntry> entries)
{
    std::vector<std::pair<std::string, std::vector<RunEntry>>> groups;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& e : entries) {
        auto [it, inserted] = slot.emplace(e.topic_id, groups.size());
        if (inserted) {
            groups.emplace_back(e.topic_id, std::vector<RunEntry>{});
        }
        groups[it->second].second.push_back(e);
    }
    for (auto& [_, list] : groups) {
        std::stable_sort(list.begin(), list.end(),
                         [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    }
    return groups;
}

}  // namespace xlr
