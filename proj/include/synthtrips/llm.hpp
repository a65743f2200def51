#pragma once

// Text-generation backends behind one interface, plus the gateway that
// applies rate limiting and retry with exponential backoff.

#include "synthtrips/error.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/text.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace synthtrips {

struct GenerationParams {
    double temperature = 0.5;
    double top_p = 0.95;
    int max_output_tokens = 256;
    std::string model_id;
    std::optional<std::uint64_t> seed;

    void validate() const {
        if (!(temperature >= 0.0)) throw Error(Errc::config_invalid, "temperature must be >= 0");
        if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(Errc::config_invalid, "top_p must be in (0, 1]");
        if (max_output_tokens <= 0) throw Error(Errc::config_invalid, "max_output_tokens must be positive");
    }

    bool operator==(const GenerationParams&) const = default;
};

inline json to_json(const GenerationParams& p) {
    json j{{"temperature", p.temperature},
           {"top_p", p.top_p},
           {"max_output_tokens", p.max_output_tokens},
           {"model_id", p.model_id}};
    j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    return j;
}

inline GenerationParams generation_params_from_json(const json& j) {
    GenerationParams p;
    p.temperature = j.value("temperature", p.temperature);
    p.top_p = j.value("top_p", p.top_p);
    p.max_output_tokens = j.value("max_output_tokens", p.max_output_tokens);
    p.model_id = j.value("model_id", std::string{});
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
    return p;
}

struct TokenCounts {
    long long prompt = 0;
    long long completion = 0;
};

struct RawCompletion {
    std::string text;
    std::string model_id;
    long long latency_ms = 0;
    std::optional<TokenCounts> tokens;
};

/// A text-generation provider: prompt + params in, text out. Implementations
/// throw synthtrips::Error with transport/rate_limited/timeout/rejected codes.
class Backend {
public:
    virtual ~Backend() = default;
    virtual RawCompletion submit(const PromptBundle& prompt, const GenerationParams& params) = 0;
    /// Stable identifier recorded in run manifests.
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mock

namespace mock_detail {

/// Contents of the first <tag>...</tag> block, trimmed.
inline std::optional<std::string> tagged(const std::string& s, const std::string& tag) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto a = s.find(open);
    if (a == std::string::npos) return std::nullopt;
    const auto b = s.find(close, a + open.size());
    if (b == std::string::npos) return std::nullopt;
    return std::string(text::trim(std::string_view(s).substr(a + open.size(), b - a - open.size())));
}

/// "- label: phrase" lines of a filter block.
inline std::vector<LabeledPhrase> filter_lines(const std::string& block) {
    std::vector<LabeledPhrase> out;
    std::size_t pos = 0;
    while (pos <= block.size()) {
        auto end = block.find('\n', pos);
        if (end == std::string::npos) end = block.size();
        std::string_view line = text::trim(std::string_view(block).substr(pos, end - pos));
        if (line.size() > 2 && line.substr(0, 2) == "- ") {
            line.remove_prefix(2);
            const auto colon = line.find(':');
            if (colon != std::string_view::npos)
                out.push_back({std::string(text::trim(line.substr(0, colon))), std::string(text::trim(line.substr(colon + 1)))});
        }
        pos = end + 1;
    }
    return out;
}

inline std::vector<std::string> list_lines(const std::string& block) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= block.size()) {
        auto end = block.find('\n', pos);
        if (end == std::string::npos) end = block.size();
        std::string_view line = text::trim(std::string_view(block).substr(pos, end - pos));
        if (line.size() > 2 && line.substr(0, 2) == "- ") out.emplace_back(text::trim(line.substr(2)));
        pos = end + 1;
    }
    return out;
}

}  // namespace mock_detail

/// Up to `n` distinctive persona words (length >= 6, not stop words), in order of appearance.
inline std::vector<std::string> persona_keywords(const std::string& persona, std::size_t n = 2) {
    static const std::set<std::string> stop{"person", "someone", "people", "interested", "different", "passionate",
                                            "through", "always", "enjoys", "traveler", "traveller", "loves"};
    std::vector<std::string> out;
    for (const auto& tok : text::tokenize(persona)) {
        if (tok.size() < 6 || stop.count(tok)) continue;
        if (std::find(out.begin(), out.end(), tok) != out.end()) continue;
        out.push_back(tok);
        if (out.size() == n) break;
    }
    return out;
}

/// Completions are pure functions of (prompt text, seed). Generation output
/// echoes every filter phrase and persona keyword; judge output is computed
/// by string matching so downstream metrics carry signal.
class MockBackend : public Backend {
public:
    explicit MockBackend(std::uint64_t seed, std::string model_id = "mock")
        : seed_(seed), model_id_(std::move(model_id)) {}

    std::string id() const override { return "mock:" + model_id_ + ":" + std::to_string(seed_); }

    RawCompletion submit(const PromptBundle& prompt, const GenerationParams& params) override {
        const std::uint64_t h = hash64({std::to_string(seed_), prompt.system_text, prompt.user_text});
        RawCompletion out;
        out.model_id = params.model_id.empty() ? model_id_ : params.model_id;
        const std::string& id = prompt.template_id;
        if (id.rfind("generate.", 0) == 0) {
            out.text = generate(prompt.user_text, h);
        } else if (id == "judge.filter_groundedness") {
            out.text = judge_filters(prompt.user_text);
        } else if (id == "judge.persona_alignment") {
            out.text = judge_persona(prompt.user_text);
        } else if (id == "recommend.user") {
            out.text = recommend(prompt.user_text, h);
        } else if (id == "extract.user") {
            out.text = extract(prompt.user_text);
        } else {
            out.text = "mock";
        }
        out.tokens = TokenCounts{static_cast<long long>(text::tokenize(prompt.user_text).size()),
                                 static_cast<long long>(text::tokenize(out.text).size())};
        return out;
    }

    /// The bare query the generator would emit, before any wrapping.
    static std::string compose_query(const std::string& user_text, std::uint64_t h) {
        using namespace mock_detail;
        static const std::vector<std::string> openers{
            "Looking for a European city with", "Which European city offers", "Suggest a European destination with",
            "I want a city trip in Europe with", "Recommend a European city that has"};
        const auto filters = filter_lines(tagged(user_text, "filters").value_or(""));
        std::vector<std::string> phrases;
        for (const auto& f : filters) phrases.push_back(f.phrase);

        std::string opener = openers[h % openers.size()];
        if (auto ex = tagged(user_text, "example")) {
            // Mimic the in-context example's opening words.
            const auto words = text::tokenize(*ex);
            if (words.size() >= 3) opener = "Which " + words[1] + " " + words[2] + " city with";
        }
        std::string body;
        for (std::size_t i = 0; i < phrases.size(); ++i) {
            if (i > 0) body += (i + 1 == phrases.size()) ? " and " : ", ";
            body += phrases[i];
        }
        std::string q = opener + " " + body;
        if (auto persona = tagged(user_text, "persona")) {
            const auto kw = persona_keywords(*persona);
            if (!kw.empty()) q += ", for someone into " + text::join(kw, " and ");
        }
        q += (h >> 8) % 2 ? "?" : ".";
        return q;
    }

private:
    static std::string generate(const std::string& user_text, std::uint64_t h) {
        const std::string q = compose_query(user_text, h);
        switch ((h >> 16) % 5) {
        case 0: return q;
        case 1: return "Here is your query: \"" + q + "\"";
        case 2: return "Query: " + q;
        case 3: return "```\n" + q + "\n```";
        default: return "Sure! I considered the traveller and the filters carefully.\n" + q + "\nLet me know if you need more.";
        }
    }

    static std::string judge_filters(const std::string& user_text) {
        using namespace mock_detail;
        const std::string query = tagged(user_text, "query").value_or("");
        const auto filters = filter_lines(tagged(user_text, "filters").value_or(""));
        std::vector<std::string> matched;
        for (const auto& f : filters)
            if (text::contains_ci(query, f.phrase)) matched.push_back(f.label);
        return "matched: " + (matched.empty() ? std::string("none") : text::join(matched, ", ")) +
               "\nexplanation: " + std::to_string(matched.size()) + " of " + std::to_string(filters.size()) +
               " filters are stated verbatim.";
    }

    static std::string judge_persona(const std::string& user_text) {
        using namespace mock_detail;
        const auto query_tokens = text::tokenize(tagged(user_text, "query").value_or(""));
        std::size_t hits = 0;
        for (const auto& kw : persona_keywords(tagged(user_text, "persona").value_or(""), 3))
            if (std::find(query_tokens.begin(), query_tokens.end(), kw) != query_tokens.end()) ++hits;
        const char* rating = hits >= 2 ? "Aligned" : hits == 1 ? "Partially Aligned" : "Not Aligned";
        return std::string("rating: ") + rating + "\nexplanation: " + std::to_string(hits) + " persona cues found.";
    }

    std::string recommend(const std::string& user_text, std::uint64_t h) const {
        using namespace mock_detail;
        auto cities = list_lines(tagged(user_text, "cities").value_or(""));
        const std::string query = tagged(user_text, "query").value_or("");
        std::sort(cities.begin(), cities.end(), [&](const std::string& a, const std::string& b) {
            const auto ha = hash64({std::to_string(seed_), query, a});
            const auto hb = hash64({std::to_string(seed_), query, b});
            return ha != hb ? ha < hb : a < b;
        });
        if (cities.size() > 10) cities.resize(10);
        if (h % 3 == 0 && !cities.empty()) cities.back() = "El Dorado";
        std::string out;
        for (std::size_t i = 0; i < cities.size(); ++i) out += std::to_string(i + 1) + ". " + cities[i] + "\n";
        return out;
    }

    static std::string extract(const std::string& user_text) {
        const std::string body = mock_detail::tagged(user_text, "text").value_or("");
        std::string best;
        std::size_t pos = 0;
        while (pos <= body.size()) {
            auto end = body.find('\n', pos);
            if (end == std::string::npos) end = body.size();
            std::string line(text::trim(std::string_view(body).substr(pos, end - pos)));
            if (line.size() > best.size()) best = line;
            pos = end + 1;
        }
        return best;
    }

    std::uint64_t seed_;
    std::string model_id_;
};

// ---------------------------------------------------------------------------
// Record / replay

inline std::string replay_key(const PromptBundle& prompt, const GenerationParams& params) {
    return hash_parts({prompt.template_id, prompt.system_text, prompt.user_text, jsonl::dump(to_json(params))});
}

/// Content-addressed completion store: <dir>/<sha256(prompt, params)>.json.
/// In replay mode a miss is terminal; in record mode misses go to the inner
/// backend and are written back.
class ReplayBackend : public Backend {
public:
    enum class Mode { replay, record };

    ReplayBackend(std::filesystem::path dir, Mode mode, std::shared_ptr<Backend> inner = nullptr)
        : dir_(std::move(dir)), mode_(mode), inner_(std::move(inner)) {
        if (mode_ == Mode::record && !inner_) throw Error(Errc::config_invalid, "record mode needs an inner backend");
        std::filesystem::create_directories(dir_);
    }

    std::string id() const override {
        return std::string(mode_ == Mode::replay ? "replay:" : "record:") + dir_.filename().string() +
               (inner_ ? "+" + inner_->id() : "");
    }

    RawCompletion submit(const PromptBundle& prompt, const GenerationParams& params) override {
        const std::string key = replay_key(prompt, params);
        const auto path = dir_ / (key + ".json");
        {
            std::lock_guard lock(mu_);
            if (std::filesystem::exists(path)) {
                const json j = jsonl::read_json_file(path);
                RawCompletion rc;
                rc.text = j.at("text").get<std::string>();
                rc.model_id = j.at("model_id").get<std::string>();
                return rc;
            }
        }
        if (mode_ == Mode::replay) throw Error(Errc::replay_miss, "no recorded completion for key " + key);
        RawCompletion rc = inner_->submit(prompt, params);
        std::lock_guard lock(mu_);
        jsonl::write_file(path, jsonl::dump(json{{"key", key}, {"text", rc.text}, {"model_id", rc.model_id}}) + "\n");
        return rc;
    }

private:
    std::filesystem::path dir_;
    Mode mode_;
    std::shared_ptr<Backend> inner_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Gateway

/// Token bucket; a rate of 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute = 0, double burst = 1)
        : rate_per_sec_(requests_per_minute / 60.0), capacity_(std::max(1.0, burst)), tokens_(capacity_),
          last_(std::chrono::steady_clock::now()) {}

    void acquire() {
        if (rate_per_sec_ <= 0) return;
        std::unique_lock lock(mu_);
        for (;;) {
            const auto now = std::chrono::steady_clock::now();
            tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
            last_ = now;
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
            lock.unlock();
            std::this_thread::sleep_for(wait);
            lock.lock();
        }
    }

private:
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    std::chrono::milliseconds max_delay{10000};
};

/// Executes prompts against one backend under its rate limit. Retryable errors
/// (transport, rate limiting, timeouts) back off exponentially until the
/// attempt budget runs out; rejections surface immediately.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    Gateway(std::shared_ptr<Backend> backend, double requests_per_minute = 0, RetryPolicy retry = {},
            Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : backend_(std::move(backend)), limiter_(std::make_shared<RateLimiter>(requests_per_minute)),
          retry_(retry), sleep_(std::move(sleeper)) {}

    const std::shared_ptr<Backend>& backend() const { return backend_; }

    RawCompletion complete(const PromptBundle& prompt, const GenerationParams& params) const {
        params.validate();
        std::chrono::milliseconds delay = retry_.base_delay;
        for (int attempt = 1;; ++attempt) {
            limiter_->acquire();
            const auto start = std::chrono::steady_clock::now();
            try {
                RawCompletion rc = backend_->submit(prompt, params);
                if (rc.model_id.empty()) rc.model_id = params.model_id;
                if (rc.latency_ms == 0)
                    rc.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
                return rc;
            } catch (const Error& e) {
                if (!e.retryable() || attempt >= retry_.max_attempts) throw;
            }
            sleep_(delay);
            delay = std::min(retry_.max_delay, delay * 2);
        }
    }

private:
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<RateLimiter> limiter_;
    RetryPolicy retry_;
    Sleeper sleep_;
};

}  // namespace synthtrips
