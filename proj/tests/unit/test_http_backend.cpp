#include "support.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>

using namespace synthtrips;
using testing_support::TempDir;

namespace {

/// Local OpenAI-style endpoint whose replies follow a queue of statuses.
class FakeProvider {
public:
    FakeProvider() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_body = json::parse(req.body);
            last_auth = req.get_header_value("Authorization");
            const std::size_t n = calls++;
            const int status = n < statuses.size() ? statuses[n] : 200;
            if (status == -1) {
                std::this_thread::sleep_for(std::chrono::milliseconds(1500));
                res.set_content(success().dump(), "application/json");
                return;
            }
            res.status = status;
            if (status == 200) res.set_content(reply.dump(), "application/json");
            else res.set_content(R"({"error":{"message":"nope"}})", "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            json data = json::array();
            // reversed on purpose; the client must honour "index"
            for (std::size_t i = body["input"].size(); i-- > 0;)
                data.push_back({{"index", i}, {"embedding", {double(i) + 1.0, 2.0, 0.0}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeProvider() {
        server_.stop();
        thread_.join();
    }

    static json success() {
        return {{"model", "served-model"},
                {"choices", {{{"message", {{"role", "assistant"}, {"content", "A quiet town in May"}}},
                              {"finish_reason", "stop"}}}},
                {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 5}}}};
    }

    HttpConfig config(const std::string& path = "/v1/chat/completions") const {
        HttpConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + path;
        c.model_id = "requested-model";
        c.timeout_s = 0.5;
        return c;
    }

    std::vector<int> statuses;
    json reply = success();
    json last_body;
    std::string last_auth;
    std::atomic<std::size_t> calls{0};

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

PromptBundle prompt() { return {std::nullopt, "be brief", "suggest a trip", "gen.user", "v1"}; }

GenerationParams params() {
    GenerationParams p;
    p.model_id = "requested-model";
    p.seed = 9;
    return p;
}

Gateway gateway(std::shared_ptr<Backend> b, int attempts = 3) {
    return Gateway(std::move(b), 0, RetryPolicy{attempts, std::chrono::milliseconds(1), std::chrono::milliseconds(2)},
                   [](std::chrono::milliseconds) {});
}

Errc error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::empty_input;
}

}  // namespace

TEST(HttpChat, SuccessParsesTextModelAndUsage) {
    FakeProvider fake;
    HttpChatBackend backend(fake.config());
    const auto rc = backend.submit(prompt(), params());
    EXPECT_EQ(rc.text, "A quiet town in May");
    EXPECT_EQ(rc.model_id, "served-model");
    ASSERT_TRUE(rc.tokens);
    EXPECT_EQ(rc.tokens->prompt, 12);
    EXPECT_EQ(rc.tokens->completion, 5);
    EXPECT_EQ(fake.last_body["model"], "requested-model");
    EXPECT_EQ(fake.last_body["seed"], 9);
    EXPECT_EQ(fake.last_body["messages"][0]["content"], "be brief");
    EXPECT_EQ(fake.last_body["messages"][1]["role"], "user");
}

TEST(HttpChat, RateLimitIsRetriedThenSucceeds) {
    FakeProvider fake;
    fake.statuses = {429, 429};
    auto gw = gateway(std::make_shared<HttpChatBackend>(fake.config()));
    EXPECT_EQ(gw.complete(prompt(), params()).text, "A quiet town in May");
    EXPECT_EQ(fake.calls, 3u);
}

TEST(HttpChat, ClientErrorIsRejectedWithoutRetry) {
    FakeProvider fake;
    fake.statuses = {400};
    auto gw = gateway(std::make_shared<HttpChatBackend>(fake.config()));
    EXPECT_EQ(error_of([&] { gw.complete(prompt(), params()); }), Errc::rejected);
    EXPECT_EQ(fake.calls, 1u);
}

TEST(HttpChat, ServerErrorIsTransport) {
    FakeProvider fake;
    fake.statuses = {500, 502, 503};
    auto gw = gateway(std::make_shared<HttpChatBackend>(fake.config()));
    EXPECT_EQ(error_of([&] { gw.complete(prompt(), params()); }), Errc::transport);
    EXPECT_EQ(fake.calls, 3u);
}

TEST(HttpChat, ContentFilterIsRejected) {
    FakeProvider fake;
    fake.reply["choices"][0]["finish_reason"] = "content_filter";
    HttpChatBackend backend(fake.config());
    EXPECT_EQ(error_of([&] { backend.submit(prompt(), params()); }), Errc::rejected);
}

TEST(HttpChat, MalformedPayloadIsTransport) {
    FakeProvider fake;
    fake.reply = json{{"unexpected", true}};
    HttpChatBackend backend(fake.config());
    EXPECT_EQ(error_of([&] { backend.submit(prompt(), params()); }), Errc::transport);
}

TEST(HttpChat, SlowReplyTimesOut) {
    FakeProvider fake;
    fake.statuses = {-1};
    HttpChatBackend backend(fake.config());
    EXPECT_EQ(error_of([&] { backend.submit(prompt(), params()); }), Errc::timeout);
}

TEST(HttpChat, UnreachableEndpointIsRetryable) {
    HttpConfig c;
    c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    c.model_id = "m";
    c.timeout_s = 0.5;
    HttpChatBackend backend(c);
    try {
        backend.submit(prompt(), params());
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.retryable());
    }
}

TEST(HttpChat, BearerTokenFromEnvironment) {
    FakeProvider fake;
    auto cfg = fake.config();
    cfg.auth_env = "SYNTHTRIPS_TEST_TOKEN_UNSET";
    ::unsetenv(cfg.auth_env.c_str());
    EXPECT_EQ(error_of([&] { HttpChatBackend(cfg).submit(prompt(), params()); }), Errc::config_invalid);
    ::setenv(cfg.auth_env.c_str(), "sekret", 1);
    HttpChatBackend(cfg).submit(prompt(), params());
    EXPECT_EQ(fake.last_auth, "Bearer sekret");
    ::unsetenv(cfg.auth_env.c_str());
}

TEST(HttpEmbedding, OrdersVectorsByIndex) {
    FakeProvider fake;
    HttpEmbeddingProvider p(fake.config("/v1/embeddings"));
    const auto v = p.encode({"a", "b", "c"});
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0][0], 1.0);
    EXPECT_EQ(v[2][0], 3.0);
    EXPECT_EQ(embed({"a", "b"}, p)[1].dim(), 3u);
}

TEST(HttpConfigTest, Validation) {
    EXPECT_EQ(error_of([] { HttpConfig::from_json({{"model_id", "m"}}); }), Errc::config_invalid);
    EXPECT_EQ(error_of([] { HttpConfig::from_json({{"endpoint", "http://x/y"}}); }), Errc::config_invalid);
    EXPECT_EQ(error_of([] { HttpConfig::from_json({{"endpoint", "http://x/y"}, {"model_id", "m"}, {"timeout_s", 0}}); }),
              Errc::config_invalid);
    EXPECT_EQ(error_of([] { split_url("no-scheme"); }), Errc::config_invalid);
    EXPECT_EQ(split_url("https://api.example.com:8443/v1/chat").origin, "https://api.example.com:8443");
    EXPECT_EQ(split_url("https://api.example.com:8443/v1/chat").path, "/v1/chat");
    EXPECT_EQ(split_url("http://h").path, "/");
}

TEST(Factories, BuildEachKind) {
    TempDir tmp;
    EXPECT_EQ(make_backend({{"kind", "mock"}, {"seed", 1}, {"model_id", "x"}})->id().find("mock"), 0u);
    EXPECT_NE(dynamic_cast<HttpChatBackend*>(
                  make_backend({{"kind", "http"}, {"endpoint", "http://h/v1"}, {"model_id", "m"}}).get()),
              nullptr);
    EXPECT_NE(dynamic_cast<ReplayBackend*>(make_backend({{"kind", "replay"}, {"dir", "r"}}, tmp.path()).get()), nullptr);
    EXPECT_EQ(error_of([] { make_backend({{"kind", "carrier-pigeon"}}); }), Errc::config_invalid);
    EXPECT_EQ(error_of([] { make_backend({{"kind", "replay"}, {"mode", "sometimes"}}); }), Errc::config_invalid);
    EXPECT_EQ(make_embedding_provider({{"kind", "mock"}, {"seed", 2}, {"dim", 8}})->id(), "mock-embed:8:2");
    EXPECT_EQ(error_of([] { make_embedding_provider({{"kind", "none"}}); }), Errc::config_invalid);
    auto cached = make_embedding_provider({{"kind", "mock"}, {"cache", "emb.jsonl"}}, tmp.path());
    embed({"hello"}, *cached);
    EXPECT_TRUE(std::filesystem::exists(tmp / "emb.jsonl"));
}
