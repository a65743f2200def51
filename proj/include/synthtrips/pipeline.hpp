#pragma once

// End-to-end runs driven by one JSON config: generate, validate, recbias,
// stats. Every run is resumable through the store and writes a manifest.

#include "synthtrips/embedding.hpp"
#include "synthtrips/error.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/http_backend.hpp"
#include "synthtrips/kb.hpp"
#include "synthtrips/llm.hpp"
#include "synthtrips/metrics.hpp"
#include "synthtrips/parse.hpp"
#include "synthtrips/persona.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/recgen.hpp"
#include "synthtrips/store.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace synthtrips {

inline constexpr const char* tool_version = "0.1.0";

struct BackendConfig {
    std::string name;
    json spec;  // kind-specific fields, see docs/config.md
    double rate_limit_rpm = 0;

    std::string model_id() const { return spec.value("model_id", name); }
};

struct Config {
    std::filesystem::path config_path;
    std::filesystem::path base_dir;
    std::filesystem::path kb_path;
    std::filesystem::path personas_path;
    std::optional<std::filesystem::path> persona_embeddings_path;
    std::optional<std::size_t> representatives;
    std::filesystem::path templates_dir;
    std::filesystem::path names_dir;
    std::filesystem::path store_dir;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    std::vector<Setting> settings{all_settings.begin(), all_settings.end()};
    GenerationParams params;
    std::vector<BackendConfig> backends;
    std::optional<BackendConfig> judge;
    std::optional<BackendConfig> extractor;
    std::optional<BackendConfig> recommender;
    bool rec_grounding = false;
    json embedding = json{{"kind", "mock"}, {"seed", 0}, {"dim", 256}};
    std::size_t workers = 1;
    TierBoundaries tier_boundaries;
    RetrieveOptions retrieve;
    SustThresholds sust;
    std::string timestamps = "system";
    std::vector<unsigned> rec_shots{0, 2};
    RetryPolicy retry;
    std::string eval_host = "127.0.0.1";
    int eval_port = 8080;
    std::map<std::string, std::string> rater_tokens;  // token -> rater id
    json raw;

    Clock clock() const { return timestamps == "fixed" ? fixed_clock() : system_clock(); }
    std::string hash() const { return sha256_hex(jsonl::dump(raw)); }
};

namespace config_detail {

inline BackendConfig backend_from_json(const json& j, const std::string& fallback_name) {
    if (!j.is_object()) throw Error(Errc::config_invalid, "backend entries must be objects");
    BackendConfig b;
    b.name = j.value("name", fallback_name);
    b.spec = j;
    b.rate_limit_rpm = j.value("rate_limit_rpm", 0.0);
    if (b.rate_limit_rpm < 0) throw Error(Errc::config_invalid, "rate_limit_rpm must be >= 0");
    if (!j.contains("kind")) throw Error(Errc::config_invalid, "backend '" + b.name + "' has no kind");
    return b;
}

}  // namespace config_detail

/// Reads and checks a config file. Paths are relative to the file's directory.
inline Config load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = jsonl::read_json_file(path);
    } catch (const std::exception& e) {
        throw Error(Errc::config_invalid, "cannot read config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(Errc::config_invalid, "config must be a JSON object");
    Config c;
    c.raw = j;
    c.config_path = path;
    c.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    auto rel = [&](const char* key, bool required) -> std::filesystem::path {
        if (!j.contains(key)) {
            if (required) throw Error(Errc::config_invalid, std::string("missing key '") + key + "'");
            return {};
        }
        return c.base_dir / j.at(key).get<std::string>();
    };
    try {
        c.kb_path = rel("kb", true);
        c.personas_path = rel("personas", true);
        if (j.contains("persona_embeddings")) c.persona_embeddings_path = rel("persona_embeddings", true);
        if (j.contains("representatives")) c.representatives = j["representatives"].get<std::size_t>();
        c.templates_dir = rel("templates_dir", true);
        c.names_dir = rel("names_dir", true);
        c.store_dir = rel("store_dir", true);
        c.output_dir = rel("output_dir", true);
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("settings")) {
            c.settings.clear();
            for (const auto& s : j["settings"]) c.settings.push_back(parse_enum<Setting>(s.get<std::string>()));
            if (c.settings.empty()) throw Error(Errc::config_invalid, "settings must not be empty");
        }
        if (j.contains("params")) {
            const auto& p = j["params"];
            c.params.temperature = p.value("temperature", c.params.temperature);
            c.params.top_p = p.value("top_p", c.params.top_p);
            c.params.max_output_tokens = p.value("max_output_tokens", c.params.max_output_tokens);
        }
        c.params.validate();
        if (!j.contains("backends") || !j["backends"].is_array() || j["backends"].empty())
            throw Error(Errc::config_invalid, "at least one generation backend is required");
        std::set<std::string> models;
        for (std::size_t i = 0; i < j["backends"].size(); ++i) {
            c.backends.push_back(config_detail::backend_from_json(j["backends"][i], "backend" + std::to_string(i)));
            if (!models.insert(c.backends.back().model_id()).second)
                throw Error(Errc::config_invalid, "model_id '" + c.backends.back().model_id() + "' used twice");
        }
        if (j.contains("judge")) c.judge = config_detail::backend_from_json(j["judge"], "judge");
        if (j.contains("extractor")) c.extractor = config_detail::backend_from_json(j["extractor"], "extractor");
        if (j.contains("recommender")) {
            c.recommender = config_detail::backend_from_json(j["recommender"], "recommender");
            c.rec_grounding = j["recommender"].value("grounding", false);
        }
        if (j.contains("embedding")) c.embedding = j["embedding"];
        c.workers = j.value("workers", std::size_t{1});
        if (c.workers == 0) throw Error(Errc::config_invalid, "workers must be >= 1");
        if (j.contains("tier_boundaries")) {
            const auto& tb = j["tier_boundaries"];
            c.tier_boundaries = {tb.at(0).get<double>(), tb.at(1).get<double>()};
        }
        c.tier_boundaries.validate();
        c.retrieve.context_cap = j.value("context_cap", c.retrieve.context_cap);
        c.retrieve.pois_per_interest = j.value("pois_per_interest", c.retrieve.pois_per_interest);
        if (c.retrieve.context_cap == 0 || c.retrieve.pois_per_interest == 0)
            throw Error(Errc::config_invalid, "context_cap and pois_per_interest must be positive");
        const std::string bm = j.value("budget_match", std::string("exact"));
        if (bm != "exact" && bm != "at_most") throw Error(Errc::config_invalid, "budget_match must be exact or at_most");
        c.retrieve.budget_match = bm == "exact" ? BudgetMatch::exact : BudgetMatch::at_most;
        if (j.contains("sust_thresholds")) {
            c.sust.walkability_min = j["sust_thresholds"].value("walkability_min", c.sust.walkability_min);
            c.sust.aqi_max = j["sust_thresholds"].value("aqi_max", c.sust.aqi_max);
        }
        c.timestamps = j.value("timestamps", c.timestamps);
        if (c.timestamps != "fixed" && c.timestamps != "system")
            throw Error(Errc::config_invalid, "timestamps must be fixed or system");
        if (j.contains("rec_shots")) c.rec_shots = j["rec_shots"].get<std::vector<unsigned>>();
        for (unsigned s : c.rec_shots)
            if (s > 3) throw Error(Errc::config_invalid, "rec_shots values must be in 0..3");
        if (j.contains("retry")) {
            c.retry.max_attempts = j["retry"].value("max_attempts", c.retry.max_attempts);
            c.retry.base_delay = std::chrono::milliseconds(j["retry"].value("base_delay_ms", 200));
            c.retry.max_delay = std::chrono::milliseconds(j["retry"].value("max_delay_ms", 10000));
            if (c.retry.max_attempts < 1) throw Error(Errc::config_invalid, "retry.max_attempts must be >= 1");
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            c.eval_host = e.value("host", c.eval_host);
            c.eval_port = e.value("port", c.eval_port);
            if (e.contains("raters"))
                for (const auto& [token, rater] : e["raters"].items()) c.rater_tokens[token] = rater.get<std::string>();
        }
    } catch (const json::exception& e) {
        throw Error(Errc::config_invalid, std::string("config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::config_invalid || e.code() == Errc::invalid_boundaries) throw;
        throw Error(Errc::config_invalid, e.message());
    }
    return c;
}

// ---------------------------------------------------------------------------
// Shared run context

/// Inputs every run needs, loaded once.
struct Workspace {
    Config config;
    KnowledgeBase kb;
    PersonaCatalog personas;
    PromptFactory prompts;
    std::vector<KeyFunction> keys;
    KeyValidation validation;

    static Workspace open(const Config& c) {
        KnowledgeBase kb = load_kb(c.kb_path, kb_schema_version, c.tier_boundaries);
        PersonaCatalog personas = load_personas(c.personas_path);
        if (c.representatives) {
            if (!c.persona_embeddings_path)
                throw Error(Errc::config_invalid, "representatives needs persona_embeddings");
            personas = select_representatives(personas, load_persona_embeddings(*c.persona_embeddings_path),
                                              *c.representatives, c.seed);
        }
        PromptFactory prompts(TemplateSet::load(c.templates_dir));
        auto keys = enumerate_key_functions(personas, c.seed, c.sust);
        auto validation = validate_keys(kb, keys, c.retrieve);
        return Workspace{c, std::move(kb), std::move(personas), std::move(prompts), std::move(keys), std::move(validation)};
    }
};

inline std::shared_ptr<Gateway> make_gateway(const BackendConfig& b, const Config& c) {
    return std::make_shared<Gateway>(make_backend(b.spec, c.base_dir), b.rate_limit_rpm, c.retry);
}

inline GenerationParams params_for(const Config& c, const std::string& model_id) {
    GenerationParams p = c.params;
    p.model_id = model_id;
    return p;
}

/// Runs fn(i) for i in [0, n) on `workers` threads.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline void write_manifest(const Config& c, const std::string& run, const json& details) {
    json backends = json::array();
    for (const auto& b : c.backends) backends.push_back({{"name", b.name}, {"model_id", b.model_id()}, {"spec", b.spec}});
    json m{{"run", run},
           {"tool_version", tool_version},
           {"config_hash", c.hash()},
           {"seed", c.seed},
           {"backends", backends},
           {"embedding", c.embedding},
           {"details", details}};
    if (c.judge) m["judge"] = c.judge->spec;
    if (c.recommender) m["recommender"] = c.recommender->spec;
    if (c.timestamps == "system") m["written_at"] = rfc3339_utc(std::chrono::system_clock::now());
    jsonl::write_file(c.output_dir / "manifests" / (run + ".json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// generate

struct RunHooks {
    /// Called after each stored record with (records stored so far, records planned).
    std::function<void(std::size_t, std::size_t)> on_record;
};

struct GenerateSummary {
    std::size_t keys_total = 0;
    std::size_t keys_valid = 0;
    std::size_t planned = 0;
    std::size_t created = 0;
    std::size_t skipped = 0;
    std::size_t needs_manual = 0;
    std::map<std::string, std::size_t> parse_paths;
    json failures = json::array();
    json plan = json::object();

    json to_json() const {
        return json{{"keys_total", keys_total}, {"keys_valid", keys_valid}, {"planned", planned},
                    {"created", created},       {"skipped", skipped},       {"needs_manual", needs_manual},
                    {"parse_paths", parse_paths}, {"failures", failures}, {"plan", plan}};
    }
};

inline GenerateSummary run_generate(const Config& c, bool dry_run = false, const RunHooks& hooks = {}) {
    Workspace ws = Workspace::open(c);
    GenerateSummary sum;
    sum.keys_total = ws.keys.size();
    sum.keys_valid = ws.validation.valid.size();

    struct Task {
        std::size_t key_index;
        Setting setting;
        std::size_t backend;
    };
    std::vector<Task> tasks;
    for (std::size_t b = 0; b < c.backends.size(); ++b)
        for (std::size_t k = 0; k < ws.validation.valid.size(); ++k)
            for (Setting s : c.settings) tasks.push_back({k, s, b});
    sum.planned = tasks.size();
    json template_versions = json::object();
    template_versions["templates"] = ws.prompts.templates().version();
    sum.plan = {{"backends", c.backends.size()}, {"settings", c.settings.size()}, {"template_version", ws.prompts.templates().version()}};
    if (dry_run) return sum;

    DatasetStore store(c.store_dir, {StoreMode::write, true, c.clock()});
    for (const auto& k : ws.validation.valid) store.put_key(k);
    for (const auto& k : ws.validation.invalid) store.put_key(k);
    for (const auto& ctx : ws.validation.contexts) store.put_context(ctx);

    std::vector<std::shared_ptr<Gateway>> gateways, extractors;
    for (const auto& b : c.backends) {
        gateways.push_back(make_gateway(b, c));
        extractors.push_back(c.extractor ? make_gateway(*c.extractor, c) : gateways.back());
    }

    std::mutex mu;
    std::size_t stored = 0;
    parallel_for(tasks.size(), c.workers, [&](std::size_t i) {
        const Task& t = tasks[i];
        const KeyFunction& key = ws.validation.valid[t.key_index];
        const GroundingContext& ctx = ws.validation.contexts[t.key_index];
        const BackendConfig& b = c.backends[t.backend];
        const std::string model = b.model_id();
        if (store.has_query(key.key_id, t.setting, model)) {
            std::lock_guard lock(mu);
            ++sum.skipped;
            return;
        }
        try {
            std::optional<Persona> persona;
            if (uses_persona(t.setting)) persona = ws.personas.at(key.persona_id);
            const PromptBundle bundle = ws.prompts.generation(persona, key.filters, ctx, t.setting);
            GenerationParams params = params_for(c, model);
            params.seed = derive_seed(c.seed, {key.key_id, to_string(t.setting), model});
            const RawCompletion rc = gateways[t.backend]->complete(bundle, params);
            GenerationParams extract_params = params_for(c, c.extractor ? c.extractor->model_id() : model);
            const ParsedQuery pq =
                parse_query(rc.text, make_llm_extractor(*extractors[t.backend], ws.prompts, extract_params));
            QueryRecord q;
            q.query_id = make_query_id(key.key_id, t.setting, model);
            q.key_id = key.key_id;
            q.persona_id = key.persona_id;
            q.setting = t.setting;
            q.query_text = pq.query_text;
            q.raw_text = rc.text;
            q.model_id = model;
            q.params = params;
            q.template_version = bundle.template_version;
            q.parse_path = pq.parse_path;
            q.ground_truth_cities = ctx.cities;
            store.put_query(q);
            std::lock_guard lock(mu);
            ++sum.created;
            ++sum.parse_paths[std::string(to_string(pq.parse_path))];
            if (pq.parse_path == ParsePath::needs_manual) ++sum.needs_manual;
            ++stored;
            if (hooks.on_record) hooks.on_record(stored, tasks.size());
        } catch (const Error& e) {
            std::lock_guard lock(mu);
            sum.failures.push_back({{"key_id", key.key_id},
                                    {"setting", to_string(t.setting)},
                                    {"model_id", model},
                                    {"code", to_string(e.code())},
                                    {"message", e.message()}});
        }
    });
    write_manifest(c, "generate", sum.to_json());
    return sum;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateSummary {
    std::vector<MetricReport> reports;
    std::vector<std::string> notices;
    std::size_t verdicts_created = 0;
    std::size_t judge_failures = 0;
};

namespace validate_detail {

inline bool report_less(const MetricReport& a, const MetricReport& b) {
    return std::tie(a.model_id, a.setting, a.complexity, a.section, a.metric) <
           std::tie(b.model_id, b.setting, b.complexity, b.section, b.metric);
}

}  // namespace validate_detail

/// Judges every parsed query (resumably), then computes all metrics per
/// (model, setting, complexity) and writes metrics.jsonl and metrics.txt.
inline ValidateSummary run_validate(const Config& c, bool dry_run = false) {
    ValidateSummary out;
    Workspace ws = Workspace::open(c);
    if (dry_run) {
        DatasetStore ro(c.store_dir, {StoreMode::read, false, c.clock()});
        out.notices.push_back("would validate " + std::to_string(ro.count(RecordType::queries)) + " stored queries");
        return out;
    }
    DatasetStore store(c.store_dir, {StoreMode::write, true, c.clock()});
    const auto all_queries = store.get_queries();
    if (all_queries.empty()) throw Error(Errc::empty_store, "no queries stored; run generate first");
    std::map<std::string, KeyFunction> keys;
    for (const auto& k : store.get_keys()) keys.emplace(k.key_id, k);
    const auto contexts = store.get_contexts();

    std::vector<QueryRecord> queries;
    for (const auto& q : all_queries)
        if (q.parse_path != ParsePath::needs_manual && keys.count(q.key_id) && contexts.count(q.key_id))
            queries.push_back(q);
    if (queries.size() < all_queries.size())
        out.notices.push_back(std::to_string(all_queries.size() - queries.size()) +
                              " queries awaiting manual parsing were left out");

    // Judge verdicts.
    const BackendConfig judge_cfg = c.judge ? *c.judge : c.backends.front();
    const auto judge = make_gateway(judge_cfg, c);
    const std::string judge_model = judge_cfg.model_id();
    const GenerationParams judge_params = params_for(c, judge_model);
    auto verdict_key = [&](const std::string& qid, JudgeTask t) {
        return qid + "|" + std::string(to_string(t)) + "|" + judge_model;
    };
    std::mutex mu;
    parallel_for(queries.size(), c.workers, [&](std::size_t i) {
        const QueryRecord& q = queries[i];
        const KeyFunction& key = keys.at(q.key_id);
        std::vector<JudgeTask> tasks{JudgeTask::filter_groundedness};
        if (uses_persona(q.setting) && ws.personas.contains(q.persona_id)) tasks.push_back(JudgeTask::persona_alignment);
        for (JudgeTask t : tasks) {
            if (store.get(RecordType::verdicts, verdict_key(q.query_id, t))) continue;
            try {
                std::optional<Persona> persona;
                if (t == JudgeTask::persona_alignment) persona = ws.personas.at(q.persona_id);
                const auto bundle = ws.prompts.judge(t, q.query_text, key.filters, persona);
                const auto rc = judge->complete(bundle, judge_params);
                JudgeVerdict v = t == JudgeTask::filter_groundedness ? parse_filter_verdict(rc.text, key.filters)
                                                                     : parse_persona_verdict(rc.text);
                v.query_id = q.query_id;
                store.put_verdict({v, judge_model, {}});
                std::lock_guard lock(mu);
                ++out.verdicts_created;
            } catch (const Error&) {
                std::lock_guard lock(mu);
                ++out.judge_failures;
            }
        }
    });
    if (out.judge_failures > 0)
        out.notices.push_back(std::to_string(out.judge_failures) + " judge calls failed; affected verdicts are missing");

    std::map<std::string, JudgeVerdict> filter_verdicts, persona_verdicts;
    for (const auto& sv : store.get_verdicts()) {
        if (sv.judge_model_id != judge_model) continue;
        (sv.verdict.task == JudgeTask::filter_groundedness ? filter_verdicts : persona_verdicts)[sv.verdict.query_id] =
            sv.verdict;
    }

    // Embedding-based metrics share one provider and index.
    auto provider = make_embedding_provider(c.embedding, c.base_dir);
    const VectorIndex index = build_index(ws.kb, *provider, c.retrieve.pois_per_interest);
    std::map<std::string, double> ctx_alignment;
    for (const auto& q : queries)
        ctx_alignment[q.query_id] = contextual_alignment(q.query_text, contexts.at(q.key_id), index, *provider,
                                                         c.retrieve.context_cap);

    std::vector<double> baseline;
    for (const auto& [kid, ctx] : contexts)
        baseline.push_back(contextual_alignment_baseline(ctx, index, *provider, c.retrieve.context_cap));
    if (!baseline.empty())
        out.reports.push_back(make_report("baseline", "all", "all", "contextual_alignment", stable_mean(baseline),
                                          baseline.size()));

    // Group queries.
    std::map<std::string, std::map<Setting, std::vector<const QueryRecord*>>> by_model;
    for (const auto& q : queries) by_model[q.model_id][q.setting].push_back(&q);

    std::set<Setting> seen_settings;
    for (const auto& [model, per_setting] : by_model) {
        for (const auto& [setting, qs] : per_setting) {
            seen_settings.insert(setting);
            const std::string st(to_string(setting));
            std::map<std::string, std::vector<const QueryRecord*>> by_cx;
            for (const auto* q : qs) {
                by_cx["all"].push_back(q);
                by_cx[std::string(to_string(keys.at(q->key_id).filters.complexity))].push_back(q);
            }
            for (const auto& [cx, group] : by_cx) {
                std::vector<JudgeVerdict> fv, pv;
                std::vector<double> ca;
                std::vector<std::string> texts;
                for (const auto* q : group) {
                    if (auto it = filter_verdicts.find(q->query_id); it != filter_verdicts.end()) fv.push_back(it->second);
                    if (auto it = persona_verdicts.find(q->query_id); it != persona_verdicts.end()) pv.push_back(it->second);
                    ca.push_back(ctx_alignment.at(q->query_id));
                    texts.push_back(q->query_text);
                }
                if (!fv.empty()) {
                    out.reports.push_back(make_report(model, st, cx, "mean_recall", mean_recall(fv), fv.size()));
                } else if (cx == "all") {
                    out.notices.push_back("mean_recall unavailable for " + model + "/" + st);
                }
                if (!pv.empty())
                    out.reports.push_back(
                        make_report(model, st, cx, "persona_alignment_pct", persona_alignment_pct(pv), pv.size()));
                out.reports.push_back(make_report(model, st, cx, "contextual_alignment", stable_mean(ca), ca.size()));
                if (texts.size() >= 2)
                    out.reports.push_back(
                        make_report(model, st, cx, "diversity", self_bleu_diversity(texts), texts.size()));
            }

            // Sustainability: sustainable queries against the others of the same persona and tier.
            std::vector<GroupedQuery> sust, non_sust;
            std::vector<FilteredQuery> sust_filtered;
            for (const auto* q : qs) {
                const FilterSet& f = keys.at(q->key_id).filters;
                GroupedQuery g{q->query_text, q->persona_id + "|" + std::string(to_string(f.popularity))};
                if (f.complexity == Complexity::sustainable) {
                    sust.push_back(g);
                    sust_filtered.push_back({q->query_text, f});
                } else {
                    non_sust.push_back(g);
                }
            }
            if (!sust.empty() && !non_sust.empty()) {
                try {
                    out.reports.push_back(make_report(model, st, "sustainable", "sustainability_similarity",
                                                      sustainability_similarity(sust, non_sust, *provider), sust.size()));
                } catch (const Error& e) {
                    out.notices.push_back("sustainability_similarity skipped for " + model + "/" + st + ": " + e.message());
                }
            }
            if (!sust_filtered.empty())
                out.reports.push_back(make_report(model, st, "sustainable", "sustainability_mae",
                                                  sustainability_mae(sust_filtered, *provider), sust_filtered.size()));
        }
    }
    if (!seen_settings.count(Setting::persona_zero_shot) && !seen_settings.count(Setting::persona_one_shot))
        out.notices.push_back("no persona settings in the store; persona metrics skipped");

    // Expert ratings, when any have been collected.
    const auto ratings = store.get_ratings();
    if (!ratings.empty()) {
        std::vector<ExpertRating> rs;
        for (const auto& r : ratings) rs.push_back(r.rating);
        for (auto& r : expert_aggregate(rs, query_origins(store))) out.reports.push_back(r);
        std::map<std::string, std::vector<ExpertRating>> by_rater;
        for (const auto& r : rs) by_rater[r.rater_id].push_back(r);
        if (by_rater.size() >= 2) {
            auto it = by_rater.begin();
            const auto& [ra, a] = *it++;
            const auto& [rb, b] = *it;
            for (RatingDimension d : {RatingDimension::groundedness, RatingDimension::persona, RatingDimension::clarity,
                                      RatingDimension::overall_fit}) {
                try {
                    MetricReport m = make_report("experts", "all", "all",
                                                 "inter_evaluator_mae_" + std::string(to_string(d)),
                                                 inter_evaluator_mae(a, b, d), a.size());
                    m.section = ra + "~" + rb;
                    out.reports.push_back(m);
                } catch (const Error& e) {
                    out.notices.push_back("inter-evaluator MAE (" + std::string(to_string(d)) + ") skipped: " + e.message());
                }
            }
        }
    }

    std::sort(out.reports.begin(), out.reports.end(), validate_detail::report_less);
    jsonl::write_file(c.output_dir / "metrics.jsonl", reports_to_jsonl(out.reports));
    jsonl::write_file(c.output_dir / "metrics.txt", reports_to_table(out.reports));
    write_manifest(c, "validate",
                   json{{"reports", out.reports.size()},
                        {"judge", judge_model},
                        {"embedding_provider", provider->id()},
                        {"template_version", ws.prompts.templates().version()},
                        {"notices", out.notices}});
    return out;
}

// ---------------------------------------------------------------------------
// recbias

struct RecbiasSummary {
    std::vector<MetricReport> reports;
    std::size_t created = 0;
    std::size_t skipped = 0;
    std::size_t failures = 0;
    std::vector<std::string> unresolved;
};

inline RecbiasSummary run_recbias(const Config& c, bool dry_run = false, const RunHooks& hooks = {}) {
    RecbiasSummary out;
    Workspace ws = Workspace::open(c);
    if (dry_run) return out;
    const NameResolver resolver = NameResolver::load(c.names_dir);
    DatasetStore store(c.store_dir, {StoreMode::write, true, c.clock()});
    std::map<std::string, Level> popularity_of;
    std::map<std::string, KeyFunction> keys;
    for (const auto& k : store.get_keys()) keys.emplace(k.key_id, k);
    std::vector<QueryRecord> queries;
    for (const auto& q : store.get_queries()) {
        if (q.parse_path == ParsePath::needs_manual) continue;
        queries.push_back(q);
        if (auto it = keys.find(q.key_id); it != keys.end()) popularity_of[q.query_id] = it->second.filters.popularity;
    }
    if (queries.empty()) throw Error(Errc::empty_store, "no parsed queries stored; run generate first");

    const BackendConfig rec_cfg = c.recommender ? *c.recommender : c.backends.front();
    const auto gateway = make_gateway(rec_cfg, c);
    const std::string rec_model = rec_cfg.model_id();
    const GenerationParams params = params_for(c, rec_model);

    struct Task {
        std::size_t query;
        unsigned shots;
    };
    std::vector<Task> tasks;
    for (unsigned shots : c.rec_shots)
        for (std::size_t i = 0; i < queries.size(); ++i) tasks.push_back({i, shots});

    std::mutex mu;
    std::size_t stored = 0;
    parallel_for(tasks.size(), c.workers, [&](std::size_t i) {
        const QueryRecord& q = queries[tasks[i].query];
        const unsigned shots = tasks[i].shots;
        if (store.get(RecordType::rec_results, q.query_id + "|" + std::to_string(shots) + "|" + rec_model)) {
            std::lock_guard lock(mu);
            ++out.skipped;
            return;
        }
        try {
            std::vector<std::string> unresolved;
            RecResult r = recommend(q, ws.kb, *gateway, ws.prompts, resolver, params, {shots, c.rec_grounding},
                                    &unresolved);
            r.model_id = rec_model;
            store.put_rec_result(r);
            std::lock_guard lock(mu);
            ++out.created;
            out.unresolved.insert(out.unresolved.end(), unresolved.begin(), unresolved.end());
            ++stored;
            if (hooks.on_record) hooks.on_record(stored, tasks.size());
        } catch (const Error&) {
            std::lock_guard lock(mu);
            ++out.failures;
        }
    });

    std::vector<RecResult> results;
    for (const auto& r : store.get_rec_results())
        if (r.model_id == rec_model) results.push_back(r);
    out.reports = bias_report(results, ws.kb, popularity_of);
    std::sort(out.reports.begin(), out.reports.end(), validate_detail::report_less);
    std::sort(out.unresolved.begin(), out.unresolved.end());
    out.unresolved.erase(std::unique(out.unresolved.begin(), out.unresolved.end()), out.unresolved.end());
    jsonl::write_file(c.output_dir / "recbias.jsonl", reports_to_jsonl(out.reports));
    jsonl::write_file(c.output_dir / "recbias.txt", reports_to_table(out.reports));
    write_manifest(c, "recbias",
                   json{{"recommender", rec_model},
                        {"shots", c.rec_shots},
                        {"grounding_requested", c.rec_grounding},
                        {"created", out.created},
                        {"skipped", out.skipped},
                        {"failures", out.failures},
                        {"unresolved_names", out.unresolved}});
    return out;
}

// ---------------------------------------------------------------------------
// stats

inline DatasetStats run_stats(const Config& c) {
    DatasetStore store(c.store_dir, {StoreMode::read, false, c.clock()});
    return compute_stats(store);
}

}  // namespace synthtrips
