#include "xlr/scorer_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"
#include "xlr/errors.hpp"
#include "xlr/hash.hpp"

extern char** environ;

namespace xlr {

namespace {

using nlohmann::json;

std::string next_request_id()
{
    static std::atomic<std::uint64_t> counter{0};
    return "xlr-" + std::to_string(::getpid()) + "-" + std::to_string(++counter);
}

void check_scores(std::span<const double> scores, std::size_t expected, const std::string& id)
{
    if (scores.size() != expected) {
        throw ProtocolError(id, "expected " + std::to_string(expected) + " scores, got " +
                                    std::to_string(scores.size()));
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i]) || scores[i] < 0.0 || scores[i] > 1.0) {
            throw ProtocolError(id, "score " + std::to_string(i) + " out of [0,1]");
        }
    }
}

}  // namespace

std::vector<double> score_batch(SentenceScorer& scorer, const ScoreContext& ctx,
                                std::span<const SentenceInput> sentences, std::size_t batch_size)
{
    if (batch_size == 0) {
        throw UsageError("batch size must be positive");
    }
    std::vector<double> out;
    out.reserve(sentences.size());
    for (std::size_t from = 0; from < sentences.size(); from += batch_size) {
        auto chunk = sentences.subspan(from, std::min(batch_size, sentences.size() - from));
        auto scores = scorer.score(ctx, chunk);
        check_scores(scores, chunk.size(), scorer.fingerprint());
        out.insert(out.end(), scores.begin(), scores.end());
    }
    return out;
}

ConstantScorer::ConstantScorer(double value) : value_(value)
{
    if (!(value >= 0.0 && value <= 1.0)) {
        throw UsageError("constant scorer value must lie in [0,1]");
    }
}

std::vector<double> ConstantScorer::score(const ScoreContext&, std::span<const SentenceInput> sentences)
{
    return std::vector<double>(sentences.size(), value_);
}

std::string ConstantScorer::fingerprint() const
{
    json j = value_;
    return "builtin:constant:" + j.dump();
}

double lexical_overlap(const Analyzer& analyzer, std::string_view query, std::string_view sentence)
{
    auto q = analyzer.tokenize(query);
    std::set<std::string> unique_query(q.begin(), q.end());
    if (unique_query.empty()) {
        return 0.0;
    }
    auto s = analyzer.tokenize(sentence);
    std::set<std::string> sentence_terms(s.begin(), s.end());
    std::size_t shared = 0;
    for (const auto& t : unique_query) {
        shared += sentence_terms.count(t);
    }
    return static_cast<double>(shared) / static_cast<double>(unique_query.size());
}

LexicalOverlapScorer::LexicalOverlapScorer(Analyzer analyzer) : analyzer_(std::move(analyzer)) {}

std::vector<double> LexicalOverlapScorer::score(const ScoreContext& ctx,
                                                std::span<const SentenceInput> sentences)
{
    std::vector<double> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
        out.push_back(lexical_overlap(analyzer_, ctx.query, s.text));
    }
    return out;
}

std::string LexicalOverlapScorer::fingerprint() const
{
    return "builtin:lexical;" + analyzer_.fingerprint();
}

ClairvoyantScorer::ClairvoyantScorer(std::shared_ptr<const Qrels> qrels) : qrels_(std::move(qrels)) {}

std::vector<double> ClairvoyantScorer::score(const ScoreContext& ctx,
                                             std::span<const SentenceInput> sentences)
{
    std::vector<double> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
        out.push_back(qrels_->grade(ctx.topic_id, s.doc_id) >= 1 ? 1.0 : 0.0);
    }
    return out;
}

std::string ClairvoyantScorer::fingerprint() const
{
    std::string all;
    for (const auto& [topic, docs] : qrels_->topics()) {
        for (const auto& [doc, grade] : docs) {
            all += topic + ' ' + doc + ' ' + std::to_string(grade) + '\n';
        }
    }
    return "builtin:clairvoyant:" + hex64(fnv1a64(all));
}

std::unique_ptr<SentenceScorer> clairvoyant_scorer(const Qrels& qrels)
{
    return std::make_unique<ClairvoyantScorer>(std::make_shared<const Qrels>(qrels));
}

std::string encode_score_request(const std::string& request_id, const std::string& query,
                                 std::span<const SentenceInput> sentences)
{
    json sent = json::array();
    for (const auto& s : sentences) {
        sent.push_back(s.text);
    }
    json j = {{"request_id", request_id}, {"query", query}, {"sentences", std::move(sent)}};
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<double> decode_score_response(const std::string& body, const std::string& expected_id,
                                          std::size_t expected_count)
{
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw ProtocolError(expected_id, std::string("unparseable response: ") + e.what());
    }
    if (!j.is_object()) {
        throw ProtocolError(expected_id, "response is not a JSON object");
    }
    if (!expected_id.empty()) {
        if (!j.contains("request_id") || !j["request_id"].is_string() ||
            j["request_id"].get<std::string>() != expected_id) {
            throw ProtocolError(expected_id, "response request_id does not match");
        }
    }
    if (!j.contains("scores") || !j["scores"].is_array()) {
        throw ProtocolError(expected_id, "response has no \"scores\" array");
    }
    std::vector<double> scores;
    scores.reserve(j["scores"].size());
    for (const auto& v : j["scores"]) {
        if (!v.is_number()) {
            // NaN and Infinity are not valid JSON numbers; they arrive as null or strings.
            throw ProtocolError(expected_id, "non-numeric score");
        }
        scores.push_back(v.get<double>());
    }
    check_scores(scores, expected_count, expected_id);
    return scores;
}

// HTTP ----------------------------------------------------------------

HttpScorer::HttpScorer(std::string url, int timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds)
{
    auto scheme = url_.find("://");
    if (scheme == std::string::npos) {
        throw UsageError("scorer URL needs a scheme: " + url_);
    }
    auto path = url_.find('/', scheme + 3);
    base_ = path == std::string::npos ? url_ : url_.substr(0, path);
    path_prefix_ = path == std::string::npos ? "" : url_.substr(path);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

std::string HttpScorer::health() const
{
    httplib::Client cli(base_);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);
    auto res = cli.Get(path_prefix_ + "/health");
    if (!res) {
        throw TransportError("GET " + url_ + "/health: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("GET " + url_ + "/health returned " + std::to_string(res->status));
    }
    try {
        auto j = json::parse(res->body);
        return j.at("model").get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError("health", std::string("malformed health response: ") + e.what());
    }
}

std::vector<double> HttpScorer::score(const ScoreContext& ctx, std::span<const SentenceInput> sentences)
{
    const auto id = next_request_id();
    httplib::Client cli(base_);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);
    cli.set_write_timeout(timeout_seconds_);
    auto res = cli.Post(path_prefix_ + "/score", encode_score_request(id, ctx.query, sentences),
                        "application/json");
    if (!res) {
        throw TransportError("POST " + url_ + "/score (" + id + "): " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("POST " + url_ + "/score (" + id + ") returned " +
                             std::to_string(res->status));
    }
    return decode_score_response(res->body, id, sentences.size());
}

std::string HttpScorer::fingerprint() const
{
    std::lock_guard lock(model_mutex_);
    if (model_.empty()) {
        try {
            model_ = health();
        } catch (const ScorerError&) {
            return "http:" + url_;
        }
    }
    return "http:" + url_ + "#" + model_;
}

// Stdio ---------------------------------------------------------------

struct StdioScorer::Channel {
    pid_t pid = -1;
    int to_child = -1;
    int from_child = -1;
    std::thread reader;
    std::mutex write_mutex;
    std::mutex pending_mutex;
    std::map<std::string, std::promise<std::string>> pending;
    bool closed = false;
    std::string close_reason;

    explicit Channel(const std::string& command)
    {
        static const bool ignore_sigpipe = [] {
            std::signal(SIGPIPE, SIG_IGN);
            return true;
        }();
        (void)ignore_sigpipe;

        int in_pipe[2];
        int out_pipe[2];
        if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
            throw TransportError("pipe: " + std::string(std::strerror(errno)));
        }
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
        posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
        std::string shell = "/bin/sh";
        std::string dash_c = "-c";
        std::string cmd = command;
        char* argv[] = {shell.data(), dash_c.data(), cmd.data(), nullptr};
        int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
        posix_spawn_file_actions_destroy(&actions);
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        if (rc != 0) {
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            throw TransportError("cannot start scorer '" + command + "': " + std::strerror(rc));
        }
        to_child = in_pipe[1];
        from_child = out_pipe[0];
        reader = std::thread([this] { read_loop(); });
    }

    ~Channel()
    {
        if (to_child >= 0) {
            ::close(to_child);
        }
        int status = 0;
        bool exited = false;
        for (int i = 0; i < 200 && !exited; ++i) {
            exited = ::waitpid(pid, &status, WNOHANG) == pid;
            if (!exited) {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        }
        if (!exited) {
            ::kill(pid, SIGTERM);
            ::waitpid(pid, &status, 0);
        }
        if (reader.joinable()) {
            reader.join();
        }
        ::close(from_child);
    }

    void fail_all(const std::string& reason)
    {
        std::lock_guard lock(pending_mutex);
        closed = true;
        close_reason = reason;
        for (auto& [id, promise] : pending) {
            promise.set_exception(std::make_exception_ptr(TransportError(id + ": " + reason)));
        }
        pending.clear();
    }

    void dispatch(const std::string& line)
    {
        std::string id;
        try {
            auto j = json::parse(line);
            id = j.at("request_id").get<std::string>();
        } catch (const json::exception&) {
            std::lock_guard lock(pending_mutex);
            for (auto& [pid_, promise] : pending) {
                promise.set_exception(
                    std::make_exception_ptr(ProtocolError(pid_, "unroutable response line")));
            }
            pending.clear();
            return;
        }
        std::lock_guard lock(pending_mutex);
        auto it = pending.find(id);
        if (it == pending.end()) {
            return;  // stale or unknown id
        }
        it->second.set_value(line);
        pending.erase(it);
    }

    void read_loop()
    {
        std::string buffer;
        char chunk[65536];
        for (;;) {
            ssize_t n = ::read(from_child, chunk, sizeof(chunk));
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                break;
            }
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t nl;
            while ((nl = buffer.find('\n')) != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                if (!line.empty()) {
                    dispatch(line);
                }
            }
        }
        fail_all("scorer process closed its output");
    }

    std::future<std::string> submit(const std::string& id, const std::string& payload)
    {
        std::future<std::string> fut;
        {
            std::lock_guard lock(pending_mutex);
            if (closed) {
                throw TransportError(id + ": " + close_reason);
            }
            fut = pending[id].get_future();
        }
        std::lock_guard lock(write_mutex);
        std::string line = payload + "\n";
        std::size_t off = 0;
        while (off < line.size()) {
            ssize_t n = ::write(to_child, line.data() + off, line.size() - off);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                std::lock_guard plock(pending_mutex);
                pending.erase(id);
                throw TransportError(id + ": write to scorer failed: " + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
        return fut;
    }
};

StdioScorer::StdioScorer(std::string command)
    : command_(std::move(command)), channel_(std::make_unique<Channel>(command_))
{}

StdioScorer::~StdioScorer() = default;

std::vector<double> StdioScorer::score(const ScoreContext& ctx, std::span<const SentenceInput> sentences)
{
    const auto id = next_request_id();
    auto fut = channel_->submit(id, encode_score_request(id, ctx.query, sentences));
    return decode_score_response(fut.get(), id, sentences.size());
}

std::string StdioScorer::fingerprint() const
{
    return "stdio:" + command_;
}

// Cache ---------------------------------------------------------------

CachedScorer::CachedScorer(std::unique_ptr<SentenceScorer> inner, std::filesystem::path cache_dir)
    : inner_(std::move(inner))
{
    std::filesystem::create_directories(cache_dir);
    file_ = cache_dir / ("scores-" + hex64(fnv1a64(inner_->fingerprint())) + ".jsonl");
    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
        try {
            auto j = json::parse(line);
            entries_[key(j.at("q"), j.at("d"), j.at("i"))] = j.at("s").get<double>();
        } catch (const json::exception&) {
            // a torn trailing write; the pair is simply re-scored
        }
    }
}

std::string CachedScorer::key(const std::string& query, const std::string& doc_id, std::size_t index)
{
    return query + '\x1f' + doc_id + '\x1f' + std::to_string(index);
}

std::vector<double> CachedScorer::score(const ScoreContext& ctx, std::span<const SentenceInput> sentences)
{
    std::vector<double> out(sentences.size(), 0.0);
    std::vector<std::size_t> missing;
    {
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            auto it = entries_.find(key(ctx.query, sentences[i].doc_id, sentences[i].sentence_index));
            if (it == entries_.end()) {
                missing.push_back(i);
            } else {
                out[i] = it->second;
                ++hits_;
            }
        }
    }
    if (missing.empty()) {
        return out;
    }
    std::vector<SentenceInput> todo;
    todo.reserve(missing.size());
    for (auto i : missing) {
        todo.push_back(sentences[i]);
    }
    auto fresh = inner_->score(ctx, todo);
    check_scores(fresh, todo.size(), inner_->fingerprint());

    std::lock_guard lock(mutex_);
    std::ofstream append(file_, std::ios::app);
    for (std::size_t j = 0; j < missing.size(); ++j) {
        const auto& s = sentences[missing[j]];
        out[missing[j]] = fresh[j];
        entries_[key(ctx.query, s.doc_id, s.sentence_index)] = fresh[j];
        json line = {{"q", ctx.query}, {"d", s.doc_id}, {"i", s.sentence_index}, {"s", fresh[j]}};
        append << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
        ++misses_;
    }
    return out;
}

std::size_t CachedScorer::hits() const
{
    std::lock_guard lock(mutex_);
    return hits_;
}

std::size_t CachedScorer::misses() const
{
    std::lock_guard lock(mutex_);
    return misses_;
}

std::unique_ptr<SentenceScorer> make_scorer(const std::string& spec, const Analyzer& analyzer)
{
    auto rest_after = [&](const std::string& prefix) { return spec.substr(prefix.size()); };
    if (spec.starts_with("builtin:constant:")) {
        const auto value = rest_after("builtin:constant:");
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(value, &used);
            if (used != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw UsageError("bad constant in scorer spec '" + spec + "'");
        }
        return std::make_unique<ConstantScorer>(v);
    }
    if (spec == "builtin:lexical") {
        return std::make_unique<LexicalOverlapScorer>(analyzer);
    }
    if (spec.starts_with("builtin:clairvoyant:")) {
        auto qrels = read_qrels(std::filesystem::path(rest_after("builtin:clairvoyant:")));
        return std::make_unique<ClairvoyantScorer>(std::make_shared<const Qrels>(std::move(qrels)));
    }
    if (spec.starts_with("http:") || spec.starts_with("https:")) {
        return std::make_unique<HttpScorer>(spec.starts_with("http:") && !spec.starts_with("http://")
                                                ? rest_after("http:")
                                                : spec);
    }
    if (spec.starts_with("stdio:")) {
        auto cmd = rest_after("stdio:");
        if (cmd.empty()) {
            throw UsageError("stdio scorer needs a command");
        }
        return std::make_unique<StdioScorer>(cmd);
    }
    throw UsageError("unknown scorer spec '" + spec + "'");
}

}  // namespace xlr
