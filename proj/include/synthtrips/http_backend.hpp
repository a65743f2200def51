#pragma once

// HTTP providers (OpenAI-compatible chat completions and embeddings) and the
// factories that build any backend from its JSON config.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "synthtrips/embedding.hpp"
#include "synthtrips/error.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace synthtrips {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::config_invalid, "endpoint '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

struct HttpConfig {
    std::string endpoint;
    std::string model_id;
    std::string auth_env;  // name of the variable holding the bearer token
    double timeout_s = 60;

    static HttpConfig from_json(const json& j) {
        HttpConfig c;
        c.endpoint = j.value("endpoint", std::string{});
        c.model_id = j.value("model_id", std::string{});
        c.auth_env = j.value("auth_env", std::string{});
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        if (c.endpoint.empty()) throw Error(Errc::config_invalid, "http backend needs an endpoint");
        if (c.model_id.empty()) throw Error(Errc::config_invalid, "http backend needs a model_id");
        if (c.timeout_s <= 0) throw Error(Errc::config_invalid, "timeout_s must be positive");
        return c;
    }
};

namespace http_detail {

inline json post_json(const HttpConfig& cfg, const json& body) {
    const Url url = split_url(cfg.endpoint);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    if (!cfg.auth_env.empty()) {
        const char* token = std::getenv(cfg.auth_env.c_str());
        if (!token || !*token) throw Error(Errc::config_invalid, "environment variable " + cfg.auth_env + " is not set");
        client.set_bearer_token_auth(token);
    }
    auto res = client.Post(url.path, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        const std::string what = httplib::to_string(err);
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
            throw Error(Errc::timeout, cfg.endpoint + ": " + what);
        throw Error(Errc::transport, cfg.endpoint + ": " + what);
    }
    if (res->status == 429) throw Error(Errc::rate_limited, cfg.endpoint + " answered 429");
    if (res->status == 408 || res->status == 504) throw Error(Errc::timeout, cfg.endpoint + " answered " + std::to_string(res->status));
    if (res->status >= 500) throw Error(Errc::transport, cfg.endpoint + " answered " + std::to_string(res->status));
    if (res->status >= 400)
        throw Error(Errc::rejected, cfg.endpoint + " answered " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(Errc::transport, cfg.endpoint + " returned invalid JSON: " + e.what());
    }
}

}  // namespace http_detail

/// Chat-completions endpoint: system + user messages, returns the first choice.
class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(HttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::string id() const override { return "http:" + cfg_.model_id + "@" + cfg_.endpoint; }

    RawCompletion submit(const PromptBundle& prompt, const GenerationParams& params) override {
        json body{{"model", params.model_id.empty() ? cfg_.model_id : params.model_id},
                  {"messages",
                   {{{"role", "system"}, {"content", prompt.system_text}}, {{"role", "user"}, {"content", prompt.user_text}}}},
                  {"temperature", params.temperature},
                  {"top_p", params.top_p},
                  {"max_tokens", params.max_output_tokens}};
        if (params.seed) body["seed"] = *params.seed;
        const auto start = std::chrono::steady_clock::now();
        const json res = http_detail::post_json(cfg_, body);
        RawCompletion rc;
        rc.latency_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        try {
            const json& choice = res.at("choices").at(0);
            if (choice.value("finish_reason", std::string{}) == "content_filter")
                throw Error(Errc::rejected, "completion withheld by the provider's content filter");
            rc.text = choice.at("message").at("content").get<std::string>();
            rc.model_id = res.value("model", body["model"].get<std::string>());
            if (res.contains("usage"))
                rc.tokens = TokenCounts{res["usage"].value("prompt_tokens", 0LL), res["usage"].value("completion_tokens", 0LL)};
        } catch (const json::exception& e) {
            throw Error(Errc::transport, "unexpected completion payload: " + std::string(e.what()));
        }
        return rc;
    }

private:
    HttpConfig cfg_;
};

/// Embeddings endpoint: {"model", "input": [...]} -> data[i].embedding.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::string id() const override { return "http-embed:" + cfg_.model_id; }

    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        const json res = http_detail::post_json(cfg_, json{{"model", cfg_.model_id}, {"input", texts}});
        std::vector<std::vector<double>> out(texts.size());
        try {
            for (const auto& item : res.at("data")) {
                const auto i = item.value("index", std::size_t{0});
                if (i >= out.size()) throw Error(Errc::transport, "embedding index out of range");
                out[i] = item.at("embedding").get<std::vector<double>>();
            }
        } catch (const json::exception& e) {
            throw Error(Errc::transport, "unexpected embedding payload: " + std::string(e.what()));
        }
        return out;
    }

private:
    HttpConfig cfg_;
};

// ---------------------------------------------------------------------------
// Factories. Relative paths resolve against `base_dir`.

inline std::shared_ptr<Backend> make_backend(const json& cfg, const std::filesystem::path& base_dir = ".") {
    const std::string kind = cfg.value("kind", std::string{});
    if (kind == "mock") return std::make_shared<MockBackend>(cfg.value("seed", std::uint64_t{0}), cfg.value("model_id", std::string("mock")));
    if (kind == "http") return std::make_shared<HttpChatBackend>(HttpConfig::from_json(cfg));
    if (kind == "replay") {
        const std::string mode = cfg.value("mode", std::string("replay"));
        if (mode != "replay" && mode != "record") throw Error(Errc::config_invalid, "replay mode must be replay or record");
        std::shared_ptr<Backend> inner;
        if (cfg.contains("inner")) inner = make_backend(cfg["inner"], base_dir);
        return std::make_shared<ReplayBackend>(base_dir / cfg.value("dir", std::string("replay")),
                                               mode == "record" ? ReplayBackend::Mode::record : ReplayBackend::Mode::replay,
                                               inner);
    }
    throw Error(Errc::config_invalid, "unknown backend kind '" + kind + "'");
}

inline std::shared_ptr<EmbeddingProvider> make_embedding_provider(const json& cfg,
                                                                  const std::filesystem::path& base_dir = ".") {
    const std::string kind = cfg.value("kind", std::string{});
    std::shared_ptr<EmbeddingProvider> p;
    if (kind == "mock") {
        p = std::make_shared<MockEmbeddingProvider>(cfg.value("seed", std::uint64_t{0}), cfg.value("dim", std::size_t{256}));
    } else if (kind == "http") {
        p = std::make_shared<HttpEmbeddingProvider>(HttpConfig::from_json(cfg));
    } else {
        throw Error(Errc::config_invalid, "unknown embedding provider kind '" + kind + "'");
    }
    if (cfg.contains("cache")) {
        return std::make_shared<CachedEmbeddingProvider>(p, base_dir / cfg["cache"].get<std::string>());
    }
    return std::make_shared<CachedEmbeddingProvider>(p);
}

}  // namespace synthtrips
