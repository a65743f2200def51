// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// gating criterion fails. Reference checks against live results only run
// when SYNTHTRIPS_REFERENCE_CONFIG names a config whose outputs exist.

#include "../oracles.hpp"
#include "../unit/support.hpp"

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sys/wait.h>
#include <unistd.h>

using namespace synthtrips;
namespace ts = testing_support;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

PersonaCatalog numbered_personas(std::size_t n) {
    std::vector<Persona> ps;
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "p%04zu", i);
        ps.push_back({id, "traveller " + std::to_string(i), std::nullopt, std::nullopt});
    }
    return PersonaCatalog::from_personas(ps);
}

Outcome enumeration_counts() {
    for (std::size_t n : {1u, 6u, 50u}) {
        const auto keys = enumerate_key_functions(numbered_personas(n), 3);
        std::map<Level, std::size_t> tiers;
        for (const auto& k : keys) ++tiers[k.filters.popularity];
        if (keys.size() != 12 * n) return {false, "n=" + std::to_string(n) + " gave " + std::to_string(keys.size())};
        for (Level l : all_levels)
            if (tiers[l] != 4 * n) return {false, "n=" + std::to_string(n) + " tier count " + std::to_string(tiers[l])};
    }
    const auto personas = numbered_personas(200);
    const auto t0 = std::chrono::steady_clock::now();
    const auto keys = enumerate_key_functions(personas, 1);
    const double secs = seconds_since(t0);
    std::map<Level, std::size_t> tiers;
    for (const auto& k : keys) ++tiers[k.filters.popularity];
    const bool ok = keys.size() == 2400 && tiers[Level::low] == 800 && tiers[Level::medium] == 800 &&
                    tiers[Level::high] == 800 && secs < 1.0;
    return {ok, "12n keys, 4n per tier (exact); n=200 -> " + std::to_string(keys.size()) + " keys in " +
                    fmt("%.3f", secs) + " s (limit 1 s)"};
}

oracles::RawFilters raw(const FilterSet& f) {
    static const char* months[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    oracles::RawFilters r;
    r.popularity = to_string(f.popularity);
    if (f.budget()) r.budget = to_string(*f.budget());
    if (f.month()) r.month = months[static_cast<int>(*f.month())];
    if (f.interest()) r.interest = to_string(*f.interest());
    if (f.sust) {
        r.sust_kind = to_string(f.sust->kind);
        r.threshold = f.sust->threshold.value_or(0);
    }
    return r;
}

Outcome retrieval_oracle() {
    const auto cities = oracles::raw_cities(ts::fixture("kb12.jsonl"));
    const auto& kb = ts::kb12();
    Rng rng(2024);
    std::size_t mismatches = 0, non_empty = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) {
        const auto f = sample_filter_set(all_complexities[rng.index(4)], all_levels[rng.index(3)], rng.index(1u << 30));
        const auto expected = oracles::scan_retrieve(raw(f), cities);
        const auto ctx = retrieve(kb, f);
        const std::vector<std::string> got = ctx ? ctx->cities : std::vector<std::string>{};
        mismatches += got != expected;
        non_empty += !expected.empty();
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 5.0,
            "1000 seeded filter sets, " + std::to_string(mismatches) + " set mismatches vs full scan (exact), " +
                std::to_string(non_empty) + " non-empty; " + fmt("%.3f", secs) + " s (limit 5 s)"};
}

Outcome popularity_normalization() {
    Rng rng(11);
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<CityRecord> cs;
        const std::size_t n = 2 + rng.index(40);
        for (std::size_t i = 0; i < n; ++i)
            cs.push_back(ts::make_city("c" + std::to_string(i), static_cast<long long>(rng.index(5'000'000))));
        const auto lo = std::min_element(cs.begin(), cs.end(),
                                         [](auto& a, auto& b) { return a.review_count < b.review_count; });
        const auto hi = std::max_element(cs.begin(), cs.end(),
                                         [](auto& a, auto& b) { return a.review_count < b.review_count; });
        if (lo->review_count == hi->review_count) continue;
        const auto kb = KnowledgeBase::from_cities(cs);
        bool ok = kb.popularity_score(lo->city_id) == 0.0 && kb.popularity_score(hi->city_id) == 1.0;
        for (const auto& a : cs)
            for (const auto& b : cs) {
                const double sa = kb.popularity_score(a.city_id), sb = kb.popularity_score(b.city_id);
                if (a.review_count < b.review_count && !(sa < sb)) ok = false;
                if (a.review_count == b.review_count && sa != sb) ok = false;
                if (sa < 0.0 || sa > 1.0) ok = false;
            }
        failures += !ok;
    }
    return {failures == 0, "min -> 0 and max -> 1 exact, strict monotonicity over 1000 random review-count vectors; " +
                               std::to_string(failures) + " failing vectors"};
}

Outcome diversity_metric() {
    const double identical = self_bleu_diversity({"quiet town with cheap food in may", "quiet town with cheap food in may",
                                                  "quiet town with cheap food in may"});
    const double disjoint =
        self_bleu_diversity({"alpha beta gamma delta", "epsilon zeta eta theta", "iota kappa lambda mu"});
    const std::vector<std::string> hand{"a quiet city break with cheap food in march",
                                        "a cheap city break in march with museums",
                                        "somewhere quiet in march for food and museums"};
    const double got = self_bleu_diversity(hand), want = oracles::diversity(hand);
    const bool ok = std::abs(identical) <= 1e-9 && disjoint >= 0.99 && std::abs(got - want) <= 1e-9;
    return {ok, "identical " + fmt("%.3g", identical) + " (|err| <= 1e-9), disjoint " + fmt("%.6f", disjoint) +
                    " (>= 0.99), hand fixture |err| " + fmt("%.3g", std::abs(got - want)) + " vs oracle (<= 1e-9)"};
}

JudgeVerdict verdict(std::string qid, std::size_t matched, std::size_t total) {
    JudgeVerdict v;
    v.query_id = std::move(qid);
    v.filter_count = total;
    for (std::size_t i = 0; i < matched; ++i) v.matched_filters.push_back("f" + std::to_string(i));
    return v;
}

Outcome mean_recall_metric() {
    const double hand = mean_recall({verdict("q1", 2, 3), verdict("q2", 1, 2)});
    std::vector<JudgeVerdict> vs;
    Rng rng(8);
    for (int i = 0; i < 60; ++i) {
        const std::size_t total = 1 + rng.index(5);
        vs.push_back(verdict("q" + std::to_string(i), rng.index(total + 1), total));
    }
    const double base = mean_recall(vs);
    std::size_t differing = 0;
    for (int i = 0; i < 100; ++i) {
        rng.shuffle(vs);
        differing += mean_recall(vs) != base;
    }
    const double err = std::abs(hand - 7.0 / 12.0);
    return {err <= 1e-9 && differing == 0, "{2/3, 1/2} -> " + fmt("%.9f", hand) + " (|err| <= 1e-9); " +
                                               std::to_string(differing) + " of 100 shuffles differ (exact)"};
}

Outcome sustainability_mae_metric() {
    const double hand = sustainability_mae(std::vector<PhraseSimilarities>{{0.5, {0.6, 0.8}}, {0.3, {0.4}}});
    const double same = sustainability_mae(std::vector<PhraseSimilarities>{{0.42, {0.42, 0.42}}, {0.7, {0.7}}});
    return {std::abs(hand - 0.15) <= 1e-9 && same == 0.0,
            "hand fixture " + fmt("%.12f", hand) + " (0.15 within 1e-9), identical similarities " + fmt("%g", same) +
                " (0.0 exact)"};
}

Outcome contextual_alignment_metric() {
    MockEmbeddingProvider p(6);
    const auto& kb = ts::kb12();
    const auto index = build_index(kb, p);
    double worst = 1.0, worst_gap = 1.0;
    for (const auto& [id, city] : kb.cities()) {
        GroundingContext ctx;
        ctx.cities = {id};
        const double self = contextual_alignment(city_document_text(kb, id), ctx, index, p);
        const double base = contextual_alignment_baseline(ctx, index, p);
        worst = std::min(worst, self);
        worst_gap = std::min(worst_gap, self - base);
    }
    return {worst >= 1.0 - 1e-6 && worst_gap > 0.0,
            "self-retrieval over 12 cities, min " + fmt("%.9f", worst) + " (1.0 within 1e-6); placeholder baseline below by >= " +
                fmt("%.4f", worst_gap)};
}

std::map<std::string, std::string> export_files(const Config& c, const std::filesystem::path& to) {
    DatasetStore(c.store_dir, {StoreMode::read, false, fixed_clock()}).export_to(to);
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(to)) files[e.path().filename()] = jsonl::read_file(e.path());
    return files;
}

Outcome end_to_end_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::map<std::string, std::string>> runs;
    std::size_t queries = 0;
    for (int i = 0; i < 3; ++i) {
        ts::TempDir tmp;
        const Config c = ts::write_config(tmp.path(), ts::desk_config(tmp.path()));
        queries = run_generate(c).created;
        run_validate(c);
        run_recbias(c);
        auto files = export_files(c, tmp / "export");
        for (const char* f : {"metrics.jsonl", "metrics.txt", "recbias.jsonl", "recbias.txt"})
            files[std::string("out/") + f] = jsonl::read_file(c.output_dir / f);
        runs.push_back(std::move(files));
    }
    const double secs = seconds_since(t0);
    const bool same = runs[0] == runs[1] && runs[1] == runs[2];
    return {same && queries > 0 && secs < 60.0,
            "3 runs (6 personas, 12 cities, mock LLM and embeddings, seed 7, " + std::to_string(queries) +
                " queries): exports and metric reports " + (same ? "byte-identical" : "DIFFER") + "; " +
                fmt("%.2f", secs) + " s (limit 60 s)"};
}

Outcome parser_cascade() {
    std::size_t total = 0, resolved = 0, idempotent = 0;
    jsonl::for_each(ts::fixture("parser_corpus.jsonl"), [&](const json& j, std::size_t) {
        ++total;
        const std::string expected = j["expected"];
        const auto p = parse_query(j["raw"].get<std::string>());
        if ((p.parse_path == ParsePath::direct || p.parse_path == ParsePath::pattern_extracted) &&
            p.query_text == expected)
            ++resolved;
        const auto once = parse_query(expected);
        if (once.parse_path == ParsePath::direct && once.query_text == expected && parse_query(once.query_text) == once)
            ++idempotent;
    });
    return {total == 20 && resolved >= 18 && idempotent == total,
            std::to_string(resolved) + "/" + std::to_string(total) +
                " resolved at direct/pattern stages with exact text (need >= 18); clean queries fixed points: " +
                std::to_string(idempotent) + "/" + std::to_string(total)};
}

Outcome resumability() {
    ts::TempDir whole, killed;
    const Config cw = ts::write_config(whole.path(), ts::desk_config(whole.path()));
    const Config ck = ts::write_config(killed.path(), ts::desk_config(killed.path()));
    run_generate(cw);

    std::fflush(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) return {false, "fork failed"};
    if (pid == 0) {
        RunHooks hooks;
        hooks.on_record = [](std::size_t done, std::size_t total) {
            if (2 * done >= total) ::raise(SIGKILL);
        };
        try {
            run_generate(ck, false, hooks);
        } catch (...) {
        }
        ::_exit(3);  // only reached if the kill did not happen
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    const bool was_killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
    std::size_t partial = 0;
    {
        DatasetStore ro(ck.store_dir, {StoreMode::read, false, fixed_clock()});
        partial = ro.count(RecordType::queries);
    }
    const auto resumed = run_generate(ck);
    const bool same = export_files(cw, whole / "export") == export_files(ck, killed / "export");
    return {was_killed && partial > 0 && partial < resumed.planned && same,
            std::string("generation killed (SIGKILL) at ") + std::to_string(partial) + "/" +
                std::to_string(resumed.planned) + " records, resume created " + std::to_string(resumed.created) +
                "; export " + (same ? "byte-identical" : "DIFFERS") + " to an uninterrupted run"};
}

Outcome bias_arithmetic() {
    const auto& kb = ts::kb12();
    const auto res = [](std::string q, std::vector<std::string> names, std::vector<std::string> ids) {
        return RecResult{std::move(q), std::move(names), std::move(ids), 0, "rec", false, ""};
    };
    std::map<std::string, double> mixed;
    for (const auto& m : bias_report({res("q1", {"Paris", "Tartu", "Atlantis"}, {"paris", "tartu"}),
                                      res("q2", {"Rome", "Lisbon", "Graz", "Bruges", "El Dorado"},
                                             {"rome", "lisbon", "graz", "bruges"})},
                                     kb, {{"q1", Level::low}, {"q2", Level::high}}))
        mixed[m.metric] = m.value;
    std::map<std::string, double> low;
    for (const auto& m : bias_report({res("q1", {"Tartu", "Graz"}, {"tartu", "graz"}), res("q2", {"Bruges"}, {"bruges"})},
                                     kb, {}))
        low[m.metric] = m.value;
    const bool ok = mixed["rec_mean_list_length"] == 4.0 && mixed["rec_in_kb_fraction"] == 6.0 / 8.0 &&
                    mixed["rec_high_popularity_share"] == 3.0 / 6.0 &&
                    mixed["rec_high_popularity_share_low_queries"] == 1.0 / 2.0 &&
                    low["rec_high_popularity_share"] == 0.0;
    return {ok, "mixed fixture: length 4, in-KB 6/8, high share 3/6, low-query high share 1/2; all-low fixture high share " +
                    fmt("%g", low["rec_high_popularity_share"]) + " (all exact)"};
}

/// Directional comparisons on results produced by live backends. Never gating.
void reference_checks() {
    const char* path = std::getenv("SYNTHTRIPS_REFERENCE_CONFIG");
    if (!path || !*path) {
        std::printf("SKIP  reference-checks  set SYNTHTRIPS_REFERENCE_CONFIG to compare live results (non-gating)\n");
        return;
    }
    try {
        const Config c = load_config(path);
        std::map<std::string, std::map<std::string, double>> by;  // metric -> model/setting -> value
        std::vector<MetricReport> reports;
        jsonl::for_each(c.output_dir / "metrics.jsonl", [&](const json& j, std::size_t) {
            reports.push_back(metric_report_from_json(j));
        });
        jsonl::for_each(c.output_dir / "recbias.jsonl", [&](const json& j, std::size_t) {
            reports.push_back(metric_report_from_json(j));
        });
        double baseline = NAN, kb_high = NAN;
        for (const auto& r : reports) {
            if (r.model_id == "baseline") baseline = r.value;
            if (r.metric == "kb_high_tier_share") kb_high = r.value;
            if (r.complexity == "all") by[r.metric][r.model_id + "/" + r.setting + "/" + r.section] = r.value;
        }
        auto line = [](bool ok, const std::string& name, const std::string& detail) {
            std::printf("%s  reference-%s  %s (non-gating)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        };
        for (const auto& b : c.backends) {
            const std::string m = b.model_id();
            auto get = [&](const std::string& metric, const char* setting) {
                auto& mm = by[metric];
                auto it = mm.find(m + "/" + setting + "/");
                return it == mm.end() ? NAN : it->second;
            };
            const double v = get("mean_recall", "vanilla"), p0 = get("mean_recall", "persona_zero_shot"),
                         p1 = get("mean_recall", "persona_one_shot");
            line(v > p0 && p0 > p1, "mean-recall-order-" + m,
                 "vanilla " + fmt("%.3f", v) + " > zero-shot " + fmt("%.3f", p0) + " > one-shot " + fmt("%.3f", p1));
            const double a0 = get("persona_alignment_pct", "persona_zero_shot"),
                         a1 = get("persona_alignment_pct", "persona_one_shot");
            line(a1 > a0, "persona-alignment-" + m, "one-shot " + fmt("%.1f", a1) + "% > zero-shot " + fmt("%.1f", a0) + "%");
            bool above = true;
            for (const char* s : {"vanilla", "persona_zero_shot", "persona_one_shot"})
                above &= get("contextual_alignment", s) > baseline;
            line(above, "contextual-alignment-" + m, "every setting above baseline " + fmt("%.3f", baseline));
        }
        for (const auto& [key, value] : by["rec_high_popularity_share"])
            line(value > kb_high, "rec-popularity-bias-" + key,
                 "high-popularity share " + fmt("%.3f", value) + " > KB high-tier share " + fmt("%.3f", kb_high));
    } catch (const std::exception& e) {
        std::printf("FAIL  reference-checks  %s (non-gating)\n", e.what());
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"enumeration-counts", enumeration_counts},
        {"retrieval-oracle", retrieval_oracle},
        {"popularity-normalization", popularity_normalization},
        {"diversity-metric", diversity_metric},
        {"mean-recall", mean_recall_metric},
        {"sustainability-mae", sustainability_mae_metric},
        {"contextual-alignment", contextual_alignment_metric},
        {"end-to-end-determinism", end_to_end_determinism},
        {"parser-cascade", parser_cascade},
        {"resumability", resumability},
        {"bias-arithmetic", bias_arithmetic},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    reference_checks();
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
