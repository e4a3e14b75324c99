#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "circuitfusion/corpus.hpp"
#include "circuitfusion/hdl.hpp"
#include "fixtures.hpp"

using namespace cfusion;

TEST_CASE("build_vocab counts") {
    const auto v1 = build_vocab(std::vector<std::string>{"a a b"}, 1);
    CHECK(v1.size() == 7);
    CHECK(v1.id("a") == 5);  // more frequent first
    CHECK(v1.id("b") == 6);
    const auto v2 = build_vocab(std::vector<std::string>{"a a b"}, 2);
    CHECK(v2.size() == 6);
    CHECK(v2.id("b") == Vocab::kUnk);
    CHECK(build_vocab(std::vector<std::string>{}, 1).size() == 5);
    CHECK(v1.token(Vocab::kCls) == "[CLS]");
    CHECK(v1.token(Vocab::kMask) == "[MASK]");
    CHECK(v1.token(Vocab::kPad) == "[PAD]");
    CHECK(v1.token(Vocab::kSep) == "[SEP]");
    CHECK(v1.token(Vocab::kUnk) == "[UNK]");
    // ties break lexicographically
    const auto v3 = build_vocab(std::vector<std::string>{"z y x"}, 1);
    CHECK(v3.token(5) == "x");
    CHECK(v3.token(7) == "z");
}

TEST_CASE("tokenize") {
    const auto v = build_vocab(std::vector<std::string>{"a a b"}, 1);
    CHECK(tokenize("", v, 16) == std::vector<int>{Vocab::kCls});
    CHECK(tokenize("a b", v, 16) == std::vector<int>{Vocab::kCls, v.id("a"), v.id("b")});
    CHECK(tokenize("a q", v, 16) == std::vector<int>{Vocab::kCls, v.id("a"), Vocab::kUnk});
    std::string big;
    for (int i = 0; i < 10000; ++i) big += "a ";
    CHECK(tokenize(big, v, 512).size() == 512);
    // "[MASK]" in text is punctuation plus a word, never the mask id
    for (int id : tokenize("[MASK] a", v, 16)) CHECK(id != Vocab::kMask);
    CHECK_THROWS(tokenize("a", v, 1));
}

TEST_CASE("split_words and detokenize round trip") {
    CHECK(split_words("cnt[3] <= cnt+1;") ==
          std::vector<std::string>{"cnt", "[", "3", "]", "<", "=", "cnt", "+", "1", ";"});
    const std::string text = "assign  y = a & b ;\n  q <= y";
    const auto v = build_vocab(std::vector<std::string>{text}, 1);
    const auto ids = tokenize(text, v, 128);
    const auto back = detokenize(ids, v);
    CHECK(back == "assign y = a & b ; q < = y");
    CHECK(tokenize(back, v, 128) == ids);

    const auto j = v.to_json();
    CHECK(Vocab::from_json(j) == v);
}

TEST_CASE("offline summaries") {
    const auto g = hdl::elaborate(hdl::parse_verilog(fixtures::kTwoRegister));
    const auto r1 = extract_cone(g, *g.find_named("r1", Op::Reg));
    CHECK(offline_summary(r1) == "Register r1 updates with the AND of inputs a, b.");
    CHECK(offline_summary(r1) == offline_summary(r1));
    const auto r2 = extract_cone(g, *g.find_named("r2", Op::Reg));
    CHECK(offline_summary(r2) == "Register r2 updates with the OR of signals r1, c.");

    const auto gc = hdl::elaborate(hdl::parse_verilog(fixtures::kCounter));
    const auto cnt = extract_cone(gc, *gc.find_named("cnt", Op::Reg));
    const auto s = offline_summary(cnt);
    CHECK(s.rfind("Register cnt (4 bits) updates with the MUX of 3 terms.", 0) == 0);
    CHECK(s.find("It reads inputs rst, en and register cnt.") != std::string::npos);
    CHECK(s.find("2 MUX") != std::string::npos);

    SummaryRequest req;
    req.code = "module m; endmodule";
    CHECK(summarize(req, r1, nullptr) == offline_summary(r1));
    const auto prompt = prompt_template(req.template_id);
    CHECK(prompt.find("Functionality") != std::string::npos);
    CHECK(prompt.find("Implementation details") != std::string::npos);
}

namespace {

struct FakeSummarizer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};

    explicit FakeSummarizer(std::function<void(const httplib::Request&, httplib::Response&, int)> handler) {
        server.Post("/v1/summarize", [this, handler](const httplib::Request& req, httplib::Response& res) {
            const int now = ++in_flight;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            handler(req, res, calls++);
            --in_flight;
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeSummarizer() {
        server.stop();
        thread.join();
    }
    SummarizerConfig config() const {
        SummarizerConfig c;
        c.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/summarize";
        c.initial_backoff = std::chrono::milliseconds(1);
        c.max_backoff = std::chrono::milliseconds(4);
        c.timeout = std::chrono::milliseconds(2000);
        return c;
    }
};

}  // namespace

TEST_CASE("summarizer client: request shape and reply") {
    FakeSummarizer fake([](const httplib::Request& req, httplib::Response& res, int) {
        const auto body = nlohmann::json::parse(req.body);
        const bool ok = body.contains("model") && body.contains("prompt") && body["input"] == "module x; endmodule" &&
                        body["max_tokens"] == 64 && req.get_header_value("Authorization") == "Bearer k";
        res.set_content(nlohmann::json{{"text", ok ? "fine" : "bad request shape"}}.dump(), "application/json");
    });
    auto cfg = fake.config();
    cfg.key = "k";
    SummarizerClient client(cfg);
    SummaryRequest req{"module x; endmodule", "functionality_v1", 64};
    CHECK(client.summarize(req) == "fine");
}

TEST_CASE("summarizer client: retries then surfaces HttpError") {
    FakeSummarizer fake([](const httplib::Request&, httplib::Response& res, int) { res.status = 500; });
    auto cfg = fake.config();
    cfg.max_retries = 2;
    SummarizerClient client(cfg);
    try {
        client.summarize({"x"});
        FAIL("expected HttpError");
    } catch (const HttpError& e) {
        CHECK(e.status == 500);
    }
    CHECK(fake.calls == 3);
}

TEST_CASE("summarizer client: recovers after transient failures") {
    FakeSummarizer fake([](const httplib::Request&, httplib::Response& res, int call) {
        if (call < 2) {
            res.status = 503;
            return;
        }
        res.set_content(call == 2 ? "not json" : R"({"text":"ok"})", "application/json");
    });
    SummarizerClient client(fake.config());
    CHECK(client.summarize({"x"}) == "ok");
    CHECK(fake.calls == 4);
}

TEST_CASE("summarizer client: malformed reply") {
    FakeSummarizer fake([](const httplib::Request&, httplib::Response& res, int) {
        res.set_content(R"({"answer":"x"})", "application/json");
    });
    auto cfg = fake.config();
    cfg.max_retries = 0;
    CHECK_THROWS_AS(SummarizerClient(cfg).summarize({"x"}), MalformedResponse);
}

TEST_CASE("summarizer client: bounded concurrency keeps order") {
    FakeSummarizer fake([](const httplib::Request& req, httplib::Response& res, int) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(nlohmann::json{{"text", "echo " + body["input"].get<std::string>()}}.dump(),
                        "application/json");
    });
    auto cfg = fake.config();
    cfg.concurrency = 2;
    std::vector<SummaryRequest> reqs;
    for (int i = 0; i < 9; ++i) reqs.push_back({std::to_string(i)});
    const auto out = SummarizerClient(cfg).summarize_all(reqs);
    REQUIRE(out.size() == 9);
    for (int i = 0; i < 9; ++i) CHECK(out[static_cast<std::size_t>(i)] == "echo " + std::to_string(i));
    CHECK(fake.peak <= 2);
}
