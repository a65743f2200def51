// synthtrips: generate, validate, recbias, stats, serve-eval.

#include "synthtrips/synthtrips.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace st = synthtrips;

namespace {

int fail(const st::Error& e) {
    std::cerr << "error [" << st::to_string(e.code()) << "]: " << e.message() << "\n";
    return e.code() == st::Errc::config_invalid ? 2 : 1;
}

void print_notices(const std::vector<std::string>& notices) {
    for (const auto& n : notices) std::cerr << "notice: " << n << "\n";
}

int cmd_generate(const st::Config& c, bool dry_run) {
    const auto sum = st::run_generate(c, dry_run, {[](std::size_t done, std::size_t total) {
                                          if (done % 50 == 0 || done == total)
                                              std::cerr << "\rgenerated " << done << "/" << total << std::flush;
                                      }});
    if (!dry_run && sum.created > 0) std::cerr << "\n";
    std::cout << sum.to_json().dump(2) << "\n";
    return 0;
}

int cmd_validate(const st::Config& c, bool dry_run) {
    const auto out = st::run_validate(c, dry_run);
    print_notices(out.notices);
    if (!dry_run) std::cout << st::reports_to_table(out.reports);
    return 0;
}

int cmd_recbias(const st::Config& c, bool dry_run) {
    if (dry_run) {
        std::cout << "recbias: shots";
        for (unsigned s : c.rec_shots) std::cout << " " << s;
        std::cout << ", recommender " << (c.recommender ? c.recommender->model_id() : c.backends.front().model_id())
                  << "\n";
        return 0;
    }
    const auto out = st::run_recbias(c);
    if (out.failures > 0) std::cerr << "notice: " << out.failures << " recommendation calls failed\n";
    if (!out.unresolved.empty()) std::cerr << "notice: " << out.unresolved.size() << " names did not resolve to KB cities\n";
    std::cout << st::reports_to_table(out.reports);
    return 0;
}

int cmd_stats(const st::Config& c) {
    std::cout << st::to_json(st::run_stats(c)).dump(2) << "\n";
    return 0;
}

st::EvalServer* active_server = nullptr;

int cmd_serve(const st::Config& c, bool dry_run, const std::string& host, int port) {
    if (c.rater_tokens.empty()) throw st::Error(st::Errc::config_invalid, "eval.raters is empty; no one could log in");
    if (dry_run) {
        std::cout << "would serve on " << host << ":" << port << " for " << c.rater_tokens.size() << " raters\n";
        return 0;
    }
    st::DatasetStore store(c.store_dir, {st::StoreMode::write, true, c.clock()});
    st::EvalService service(store, st::load_personas(c.personas_path));
    st::EvalServer server(service, c.rater_tokens);
    active_server = &server;
    std::signal(SIGINT, [](int) { if (active_server) active_server->stop(); });
    std::signal(SIGTERM, [](int) { if (active_server) active_server->stop(); });
    std::cerr << "serving on " << host << ":" << port << "\n";
    server.run(host, port);
    active_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic travel query generation and validation"};
    app.set_version_flag("--version", std::string(st::tool_version));
    app.require_subcommand(1);

    std::string config_path;
    bool dry_run = false;
    std::string host;
    int port = -1;

    auto add = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_flag("--dry-run", dry_run, "Check inputs and report the plan without calling any backend");
        return sub;
    };
    auto* gen = add("generate", "Enumerate key functions and generate queries");
    auto* val = add("validate", "Judge stored queries and compute metrics");
    auto* rec = add("recbias", "Run the recommender and report popularity bias");
    auto* stats = add("stats", "Summarize the stored dataset");
    auto* serve = add("serve-eval", "Serve the expert evaluation API");
    serve->add_option("--host", host, "Bind address (default from config)");
    serve->add_option("--port", port, "Port (default from config)");

    CLI11_PARSE(app, argc, argv);

    try {
        const st::Config c = st::load_config(config_path);
        if (*gen) return cmd_generate(c, dry_run);
        if (*val) return cmd_validate(c, dry_run);
        if (*rec) return cmd_recbias(c, dry_run);
        if (*stats) return cmd_stats(c);
        if (*serve) return cmd_serve(c, dry_run, host.empty() ? c.eval_host : host, port < 0 ? c.eval_port : port);
    } catch (const st::Error& e) {
        return fail(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
