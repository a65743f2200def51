#pragma once

// HTTP+JSON front end for EvalService. Errors are problem-detail documents
// whose "code" field carries the Errc name.

#include "synthtrips/http_backend.hpp"
#include "synthtrips/eval_service.hpp"

#include <map>
#include <string>
#include <thread>

namespace synthtrips {

inline int http_status_for(Errc code) {
    switch (code) {
    case Errc::unauthorized: return 401;
    case Errc::unknown_session: return 404;
    case Errc::session_complete:
    case Errc::already_rated: return 409;
    case Errc::not_assigned:
    case Errc::validation_failed:
    case Errc::insufficient_queries: return 422;
    case Errc::malformed_record: return 400;
    default: return 500;
    }
}

inline json problem_json(Errc code, const std::string& detail) {
    const int status = http_status_for(code);
    return json{{"type", "about:blank"},
                {"title", httplib::status_message(status)},
                {"status", status},
                {"detail", detail},
                {"code", std::string(to_string(code))}};
}

/// Bearer tokens -> rater ids.
using RaterTokens = std::map<std::string, std::string>;

class EvalServer {
public:
    EvalServer(EvalService& service, RaterTokens tokens) : service_(service), tokens_(std::move(tokens)) { routes(); }

    ~EvalServer() { stop(); }
    EvalServer(const EvalServer&) = delete;
    EvalServer& operator=(const EvalServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Serves on the calling thread until stop().
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw Error(Errc::io_error, "cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }

private:
    using Handler = std::function<json(const httplib::Request&, const std::string& rater, httplib::Response&)>;

    void send_problem(httplib::Response& res, Errc code, const std::string& detail) {
        const json p = problem_json(code, detail);
        res.status = p["status"].get<int>();
        res.set_content(p.dump(), "application/problem+json");
    }

    httplib::Server::Handler guarded(Handler h) {
        return [this, h](const httplib::Request& req, httplib::Response& res) {
            try {
                const std::string auth = req.get_header_value("Authorization");
                const std::string prefix = "Bearer ";
                auto it = auth.rfind(prefix, 0) == 0 ? tokens_.find(auth.substr(prefix.size())) : tokens_.end();
                if (it == tokens_.end()) throw Error(Errc::unauthorized, "missing or unknown bearer token");
                res.status = 200;
                const json body = h(req, it->second, res);
                res.set_content(body.dump(), "application/json");
            } catch (const Error& e) {
                send_problem(res, e.code(), e.message());
            } catch (const json::exception& e) {
                send_problem(res, Errc::validation_failed, std::string("malformed request body: ") + e.what());
            } catch (const std::exception& e) {
                send_problem(res, Errc::io_error, e.what());
            }
        };
    }

    /// The session must belong to the caller; others look nonexistent.
    void require_owner(const std::string& session_id, const std::string& rater) const {
        auto s = service_.session(session_id);
        if (!s || s->rater_id != rater) throw Error(Errc::unknown_session, "no session '" + session_id + "'");
    }

    void routes() {
        server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"status", "ok"}}.dump(), "application/json");
        });

        server_.Post("/sessions", guarded([this](const httplib::Request& req, const std::string& rater,
                                                 httplib::Response& res) {
            const json body = json::parse(req.body);
            const SampleSpec spec = SampleSpec::from_json(body.at("sample_spec"));
            const auto seed = body.value("seed", std::uint64_t{0});
            const EvalSession s = service_.create_session(rater, spec, seed);
            res.status = 201;
            return json{{"session_id", s.session_id},
                        {"rater_id", s.rater_id},
                        {"total", s.assigned_query_ids.size()},
                        {"completed", s.completed.size()},
                        {"created_at", s.created_at}};
        }));

        server_.Get(R"(/sessions/([^/]+)/next)", guarded([this](const httplib::Request& req, const std::string& rater,
                                                                httplib::Response&) {
            const std::string id = req.matches[1];
            require_owner(id, rater);
            return service_.next_item(id);
        }));

        server_.Post(R"(/sessions/([^/]+)/ratings)", guarded([this](const httplib::Request& req, const std::string& rater,
                                                                    httplib::Response& res) {
            const std::string id = req.matches[1];
            require_owner(id, rater);
            const json body = json::parse(req.body);
            ExpertRating r;
            r.query_id = body.at("query_id").get<std::string>();
            r.groundedness_level = body.at("groundedness_level").get<int>();
            if (body.contains("persona_rating") && !body["persona_rating"].is_null()) {
                try {
                    r.persona_rating = parse_enum<PersonaRating>(body["persona_rating"].get<std::string>());
                } catch (const Error&) {
                    throw Error(Errc::validation_failed, "persona_rating must be one of the listed options");
                }
            }
            r.clarity = body.at("clarity").get<int>();
            r.overall_fit = body.at("overall_fit").get<int>();
            json ack = service_.submit_rating(id, r);
            res.status = 201;
            return ack;
        }));

        server_.Get(R"(/sessions/([^/]+)/progress)", guarded([this](const httplib::Request& req, const std::string& rater,
                                                                    httplib::Response&) {
            const std::string id = req.matches[1];
            require_owner(id, rater);
            return service_.progress(id);
        }));
    }

    EvalService& service_;
    RaterTokens tokens_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

}  // namespace synthtrips
