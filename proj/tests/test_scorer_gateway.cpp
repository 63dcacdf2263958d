#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_util.hpp"
#include "xlr/errors.hpp"
#include "xlr/hash.hpp"
#include "xlr/scorer_gateway.hpp"

using namespace xlr;
using nlohmann::json;

namespace {

std::vector<SentenceInput> inputs(const std::vector<std::string>& texts, const std::string& doc = "d")
{
    std::vector<SentenceInput> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back({doc, i, texts[i]});
    }
    return out;
}

double fake_score(const std::string& text) { return static_cast<double>(text.size() % 11) / 10.0; }

std::vector<std::string> varied_sentences(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(std::string(1 + rng() % 30, 'a' + static_cast<char>(rng() % 26)) + " 龙应台");
    }
    return out;
}

/// In-process stand-in for the scoring service.
class FakeService {
  public:
    enum class Mode { ok, bad_count, nan, out_of_range, wrong_id, status_500 };

    FakeService()
    {
        server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"model":"fake-1"})", "application/json");
        });
        server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            auto j = json::parse(req.body);
            if (mode_ == Mode::status_500) {
                res.status = 500;
                return;
            }
            std::string scores = "[";
            const auto& sent = j["sentences"];
            const std::size_t n = sent.size() - (mode_ == Mode::bad_count && !sent.empty() ? 1 : 0);
            for (std::size_t i = 0; i < n; ++i) {
                if (i) {
                    scores += ",";
                }
                if (mode_ == Mode::nan) {
                    scores += "NaN";
                } else if (mode_ == Mode::out_of_range) {
                    scores += "-0.25";
                } else {
                    scores += json(fake_score(sent[i].get<std::string>())).dump();
                }
            }
            scores += "]";
            const std::string id =
                mode_ == Mode::wrong_id ? "someone-else" : j["request_id"].get<std::string>();
            res.set_content(R"({"request_id":")" + id + R"(","scores":)" + scores + "}",
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeService()
    {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    void set_mode(Mode m) { mode_ = m; }
    int requests() const { return requests_; }

  private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<Mode> mode_{Mode::ok};
    std::atomic<int> requests_{0};
};

/// Contract checks every scorer has to satisfy.
void check_conformance(SentenceScorer& scorer)
{
    const ScoreContext ctx{"t1", "dragon literature"};
    const auto texts = varied_sentences(37, 99);
    const auto in = inputs(texts);
    const auto whole = score_batch(scorer, ctx, in, 1000);

    // alignment and range
    REQUIRE(whole.size() == in.size());
    for (double s : whole) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }

    // permuting the input permutes the output identically
    std::vector<std::size_t> perm(in.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    std::vector<SentenceInput> shuffled;
    for (auto p : perm) {
        shuffled.push_back(in[p]);
    }
    const auto permuted = score_batch(scorer, ctx, shuffled, 1000);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(permuted[i] == whole[perm[i]]);
    }

    // batching transparency
    for (std::size_t batch : {1, 2, 5, 36, 37, 64}) {
        CHECK(score_batch(scorer, ctx, in, batch) == whole);
    }

    CHECK(score_batch(scorer, ctx, {}, 8).empty());
}

std::string fake_scorer_command(const std::string& flags = "")
{
    return std::string("'") + XLR_FAKE_SCORER + "' " + flags;
}

}  // namespace

TEST_CASE("constant scorer")
{
    ConstantScorer c(0.5);
    CHECK(c.score({}, inputs({"x", "y", "z"})) == std::vector<double>{0.5, 0.5, 0.5});
    CHECK_THROWS(ConstantScorer(1.5));
    CHECK_THROWS(ConstantScorer(-0.1));
}

TEST_CASE("lexical overlap scorer")
{
    Analyzer en("en");
    LexicalOverlapScorer lex(en);
    CHECK(lex.score({"t", "a b"}, inputs({"a b c", "x y"})) == std::vector<double>{1.0, 0.0});
    CHECK(lexical_overlap(en, "a b", "b b a") == 1.0);
    CHECK(lexical_overlap(en, "a b", "c") == 0.0);
    CHECK(lexical_overlap(en, "a b c d", "a c") == 0.5);
    CHECK(lexical_overlap(en, "", "a c") == 0.0);
    CHECK(lexical_overlap(en, "A B", "b a") == 1.0);
}

TEST_CASE("clairvoyant scorer")
{
    Qrels q;
    q.set("t1", "d1", 1);
    q.set("t1", "d2", 0);
    q.set("t1", "d3", 3);
    auto scorer = clairvoyant_scorer(q);
    std::vector<SentenceInput> in{{"d1", 0, "x"}, {"d2", 0, "y"}, {"d3", 4, "z"}, {"d4", 0, "w"}};
    CHECK(scorer->score({"t1", "q"}, in) == std::vector<double>{1.0, 0.0, 1.0, 0.0});
    CHECK(scorer->score({"t-none", "q"}, in) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("built-in scorers conform")
{
    Analyzer en("en");
    ConstantScorer c(0.25);
    LexicalOverlapScorer lex(en);
    check_conformance(c);
    check_conformance(lex);
}

TEST_CASE("score_batch validates scorer output")
{
    struct Bad : SentenceScorer {
        std::vector<double> out;
        std::vector<double> score(const ScoreContext&, std::span<const SentenceInput>) override { return out; }
        std::string fingerprint() const override { return "bad"; }
    } bad;
    auto in = inputs({"a", "b"});
    bad.out = {0.5};
    CHECK_THROWS_AS(score_batch(bad, {}, in), ProtocolError);
    bad.out = {0.5, 1.5};
    CHECK_THROWS_AS(score_batch(bad, {}, in), ProtocolError);
    bad.out = {0.5, std::nan("")};
    CHECK_THROWS_AS(score_batch(bad, {}, in), ProtocolError);
    bad.out = {0.0, 1.0};
    CHECK(score_batch(bad, {}, in) == bad.out);
    CHECK_THROWS_AS(score_batch(bad, {}, in, 0), UsageError);
}

TEST_CASE("request encoding")
{
    auto j = json::parse(encode_score_request("r-1", "谁是X", inputs({"one", "two"})));
    CHECK(j["request_id"] == "r-1");
    CHECK(j["query"] == "谁是X");
    CHECK(j["sentences"] == json::array({"one", "two"}));
}

TEST_CASE("response decoding")
{
    CHECK(decode_score_response(R"({"request_id":"r","scores":[0,0.5,1]})", "r", 3) ==
          std::vector<double>{0, 0.5, 1});

    auto rejects = [](const std::string& body, std::size_t n) {
        try {
            decode_score_response(body, "r-42", n);
        } catch (const ProtocolError& e) {
            CHECK(e.request_id() == "r-42");
            CHECK(std::string(e.what()).find("r-42") != std::string::npos);
            return true;
        }
        return false;
    };
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1]})", 2));
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1, null]})", 2));
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1, 1.0000001]})", 2));
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1, -1e-9]})", 2));
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1, "0.2"]})", 2));
    CHECK(rejects(R"({"request_id":"other","scores":[0.1, 0.2]})", 2));
    CHECK(rejects(R"({"request_id":"r-42","scores":[0.1, NaN]})", 2));
    CHECK(rejects("not json", 2));
}

TEST_CASE("http scorer against a fake service")
{
    FakeService svc;
    HttpScorer http(svc.url(), 10);
    CHECK(http.health() == "fake-1");
    CHECK(http.fingerprint() == "http:" + svc.url() + "#fake-1");

    auto texts = varied_sentences(5, 1);
    auto got = http.score({"t", "q"}, inputs(texts));
    for (std::size_t i = 0; i < texts.size(); ++i) {
        CHECK(got[i] == fake_score(texts[i]));
    }
    check_conformance(http);
}

TEST_CASE("http scorer batches at 64 sentences")
{
    FakeService svc;
    HttpScorer http(svc.url(), 10);
    auto in = inputs(varied_sentences(130, 2));
    score_batch(http, {"t", "q"}, in);
    CHECK(svc.requests() == 3);
}

TEST_CASE("http protocol violations")
{
    FakeService svc;
    HttpScorer http(svc.url(), 10);
    auto in = inputs({"a", "bb", "ccc"});
    svc.set_mode(FakeService::Mode::bad_count);
    CHECK_THROWS_AS(http.score({}, in), ProtocolError);
    svc.set_mode(FakeService::Mode::nan);
    CHECK_THROWS_AS(http.score({}, in), ProtocolError);
    svc.set_mode(FakeService::Mode::out_of_range);
    CHECK_THROWS_AS(http.score({}, in), ProtocolError);
    svc.set_mode(FakeService::Mode::wrong_id);
    CHECK_THROWS_AS(http.score({}, in), ProtocolError);
    svc.set_mode(FakeService::Mode::status_500);
    CHECK_THROWS_AS(http.score({}, in), TransportError);
}

TEST_CASE("unreachable http service is a transport error")
{
    int port = 0;
    {
        httplib::Server s;
        port = s.bind_to_any_port("127.0.0.1");
    }
    HttpScorer http("http://127.0.0.1:" + std::to_string(port), 2);
    CHECK_THROWS_AS(http.health(), TransportError);
    CHECK_THROWS_AS(http.score({}, inputs({"a"})), TransportError);
}

TEST_CASE("stdio scorer")
{
    StdioScorer stdio(fake_scorer_command());
    auto texts = varied_sentences(4, 3);
    auto got = stdio.score({"t", "q"}, inputs(texts));
    for (std::size_t i = 0; i < texts.size(); ++i) {
        CHECK(got[i] == fake_score(texts[i]));
    }
    check_conformance(stdio);
}

TEST_CASE("stdio responses may arrive out of order")
{
    // the child holds four requests and answers them newest first
    StdioScorer stdio(fake_scorer_command("--reverse 4"));
    std::vector<std::vector<std::string>> texts;
    for (int t = 0; t < 4; ++t) {
        texts.push_back(varied_sentences(3 + t, 10 + t));
    }
    std::vector<std::vector<double>> results(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] { results[t] = stdio.score({"t", "q"}, inputs(texts[t])); });
    }
    for (auto& th : threads) {
        th.join();
    }
    for (int t = 0; t < 4; ++t) {
        REQUIRE(results[t].size() == texts[t].size());
        for (std::size_t i = 0; i < texts[t].size(); ++i) {
            CHECK(results[t][i] == fake_score(texts[t][i]));
        }
    }
}

TEST_CASE("stdio protocol violations")
{
    auto in = inputs({"a", "bb"});
    StdioScorer bad_count(fake_scorer_command("--bad-count"));
    CHECK_THROWS_AS(bad_count.score({}, in), ProtocolError);
    StdioScorer out_of_range(fake_scorer_command("--out-of-range"));
    CHECK_THROWS_AS(out_of_range.score({}, in), ProtocolError);
}

TEST_CASE("stdio child exit is a transport error")
{
    StdioScorer crash(fake_scorer_command("--crash-after 1"));
    auto in = inputs({"a"});
    CHECK(crash.score({}, in).size() == 1);
    CHECK_THROWS_AS(crash.score({}, in), TransportError);
    CHECK_THROWS_AS(crash.score({}, in), TransportError);

    StdioScorer missing("/nonexistent/scorer-binary");
    CHECK_THROWS_AS(missing.score({}, in), TransportError);
}

TEST_CASE("cache serves repeated pairs and persists across instances")
{
    testutil::TempDir tmp;
    struct Counting : SentenceScorer {
        int calls = 0;
        std::size_t scored = 0;
        std::vector<double> score(const ScoreContext&, std::span<const SentenceInput> s) override
        {
            ++calls;
            scored += s.size();
            std::vector<double> out;
            for (const auto& x : s) {
                out.push_back(fake_score(x.text));
            }
            return out;
        }
        std::string fingerprint() const override { return "counting-v1"; }
    };
    auto texts = varied_sentences(10, 4);
    auto in = inputs(texts);
    std::vector<double> first;
    {
        auto inner = std::make_unique<Counting>();
        auto* raw = inner.get();
        CachedScorer cached(std::move(inner), tmp.path());
        first = cached.score({"t", "q"}, in);
        CHECK(cached.score({"t", "q"}, in) == first);
        CHECK(raw->scored == 10);
        CHECK(cached.hits() == 10);
        CHECK(cached.misses() == 10);
        // a different query is a different key
        cached.score({"t", "other"}, in);
        CHECK(raw->scored == 20);
    }
    auto inner = std::make_unique<Counting>();
    auto* raw = inner.get();
    CachedScorer reopened(std::move(inner), tmp.path());
    CHECK(reopened.score({"t", "q"}, in) == first);
    CHECK(raw->calls == 0);
    CHECK(std::filesystem::exists(tmp.path() / ("scores-" + hex64(fnv1a64("counting-v1")) + ".jsonl")));
    check_conformance(reopened);
}

TEST_CASE("cache rejects invalid inner scores")
{
    testutil::TempDir tmp;
    struct Bad : SentenceScorer {
        std::vector<double> score(const ScoreContext&, std::span<const SentenceInput> s) override
        {
            return std::vector<double>(s.size(), 2.0);
        }
        std::string fingerprint() const override { return "bad"; }
    };
    CachedScorer cached(std::make_unique<Bad>(), tmp.path());
    CHECK_THROWS_AS(cached.score({}, inputs({"a"})), ProtocolError);
}

TEST_CASE("scorer specs")
{
    Analyzer en("en");
    CHECK(make_scorer("builtin:constant:0.5", en)->score({}, inputs({"a"})) == std::vector<double>{0.5});
    CHECK(make_scorer("builtin:lexical", en)->score({"t", "a"}, inputs({"a"})) == std::vector<double>{1.0});
    CHECK_THROWS_AS(make_scorer("builtin:constant:abc", en), UsageError);
    CHECK_THROWS_AS(make_scorer("stdio:", en), UsageError);
    CHECK_THROWS_AS(make_scorer("magic", en), UsageError);
    CHECK(make_scorer("stdio:" + fake_scorer_command(), en)->score({}, inputs({"abc"})) ==
          std::vector<double>{0.3});
}

TEST_CASE("live scoring service conformance" * doctest::skip(std::getenv("XLR_SCORER_URL") == nullptr))
{
    HttpScorer live(std::getenv("XLR_SCORER_URL"), 60);
    CHECK_FALSE(live.health().empty());
    check_conformance(live);
    // inference is deterministic
    auto in = inputs({"The minister spoke.", "Unrelated text."});
    CHECK(live.score({"t", "minister"}, in) == live.score({"t", "minister"}, in));
}
