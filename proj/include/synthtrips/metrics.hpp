#pragma once

// Evaluation metrics over generated queries, judge verdicts and expert ratings.

#include "synthtrips/embedding.hpp"
#include "synthtrips/error.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/parse.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/text.hpp"
#include "synthtrips/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

/// Sum in ascending order, so the result does not depend on input order.
inline double stable_sum(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    double s = 0;
    for (double x : xs) s += x;
    return s;
}

inline double stable_mean(std::vector<double> xs) {
    if (xs.empty()) throw Error(Errc::empty_input, "mean of an empty list");
    const double n = static_cast<double>(xs.size());
    return stable_sum(std::move(xs)) / n;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
    std::string model_id;
    std::string setting = "all";
    std::string complexity = "all";
    std::string metric;
    double value = 0;
    std::size_t n = 0;
    std::string section;  // optional sub-grouping, e.g. "shots=2"

    bool operator==(const MetricReport&) const = default;
};

inline json to_json(const MetricReport& r) {
    json j{{"model_id", r.model_id}, {"setting", r.setting}, {"complexity", r.complexity},
           {"metric", r.metric},     {"value", r.value},     {"n", r.n}};
    if (!r.section.empty()) j["section"] = r.section;
    return j;
}

inline MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.setting = j.at("setting").get<std::string>();
    r.complexity = j.at("complexity").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.section = j.value("section", std::string{});
    return r;
}

inline MetricReport make_report(std::string model, std::string setting, std::string complexity, std::string metric,
                                double value, std::size_t n) {
    if (n == 0) throw Error(Errc::empty_input, metric + ": report over zero samples");
    if (!std::isfinite(value)) throw Error(Errc::empty_input, metric + ": non-finite value");
    return {std::move(model), std::move(setting), std::move(complexity), std::move(metric), value, n, {}};
}

inline std::string reports_to_jsonl(const std::vector<MetricReport>& reports) {
    std::string out;
    for (const auto& r : reports) out += jsonl::dump(to_json(r)) + "\n";
    return out;
}

/// Fixed-width table, one row per report.
inline std::string reports_to_table(const std::vector<MetricReport>& reports) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %-18s %-11s %-10s %-38s %10s %6s\n", "model", "setting", "complexity",
                  "section", "metric", "value", "n");
    out += buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-14s %-18s %-11s %-10s %-38s %10.4f %6zu\n", r.model_id.c_str(),
                      r.setting.c_str(), r.complexity.c_str(), r.section.empty() ? "-" : r.section.c_str(),
                      r.metric.c_str(), r.value, r.n);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Self-BLEU diversity

struct BleuOptions {
    int max_order = 4;
    double epsilon = 1e-9;  // replaces zero n-gram precisions
};

using NGramCounts = std::map<std::vector<std::string>, int>;

inline NGramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
    NGramCounts counts;
    if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

/// Per query in the group: BLEU against every other query as references.
/// Uniform weights over orders 1..max_order; brevity penalty against the
/// closest reference length (shorter wins ties).
inline std::vector<double> self_bleu_scores(const std::vector<std::string>& queries, const BleuOptions& opts = {}) {
    if (queries.size() < 2) throw Error(Errc::group_too_small, "self-BLEU needs at least two queries");
    const std::size_t n_q = queries.size();
    std::vector<std::vector<std::string>> toks;
    for (const auto& q : queries) toks.push_back(text::tokenize(q));

    // For each n-gram, the two largest per-query counts and the holder of the
    // largest: the max over "everyone but i" is then O(1).
    struct Top2 {
        int first = 0, second = 0;
        std::size_t owner = SIZE_MAX;
    };
    std::vector<std::vector<NGramCounts>> counts(opts.max_order + 1, std::vector<NGramCounts>(n_q));
    std::vector<std::map<std::vector<std::string>, Top2>> top(opts.max_order + 1);
    for (int n = 1; n <= opts.max_order; ++n) {
        for (std::size_t i = 0; i < n_q; ++i) {
            counts[n][i] = ngram_counts(toks[i], n);
            for (const auto& [g, c] : counts[n][i]) {
                Top2& t = top[n][g];
                if (c > t.first) {
                    t.second = t.first;
                    t.first = c;
                    t.owner = i;
                } else if (c > t.second) {
                    t.second = c;
                }
            }
        }
    }
    std::multiset<std::size_t> lengths;
    for (const auto& t : toks) lengths.insert(t.size());

    std::vector<double> scores(n_q);
    for (std::size_t i = 0; i < n_q; ++i) {
        const std::size_t c = toks[i].size();
        if (c == 0) {
            scores[i] = 0.0;
            continue;
        }
        double log_sum = 0;
        for (int n = 1; n <= opts.max_order; ++n) {
            long long clipped = 0, total = 0;
            for (const auto& [g, cnt] : counts[n][i]) {
                const Top2& t = top[n].at(g);
                const int ref_max = (t.owner == i) ? t.second : t.first;
                clipped += std::min(cnt, ref_max);
                total += cnt;
            }
            double p = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
            if (p == 0.0) p = opts.epsilon;
            log_sum += std::log(p) / opts.max_order;
        }
        lengths.erase(lengths.find(c));
        std::size_t r = *lengths.begin();
        for (std::size_t len : lengths) {
            const auto d = [&](std::size_t x) { return x > c ? x - c : c - x; };
            if (d(len) < d(r) || (d(len) == d(r) && len < r)) r = len;
        }
        lengths.insert(c);
        const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
        scores[i] = bp * std::exp(log_sum);
    }
    return scores;
}

/// 1 - mean Self-BLEU over the group.
inline double self_bleu_diversity(const std::vector<std::string>& queries, const BleuOptions& opts = {}) {
    return std::clamp(1.0 - stable_mean(self_bleu_scores(queries, opts)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Judge-based metrics

/// Mean over queries of |matched| / |filters|.
inline double mean_recall(const std::vector<JudgeVerdict>& verdicts) {
    if (verdicts.empty()) throw Error(Errc::empty_input, "mean recall over no verdicts");
    std::vector<double> recalls;
    recalls.reserve(verdicts.size());
    for (const auto& v : verdicts) {
        if (v.task != JudgeTask::filter_groundedness || v.filter_count == 0)
            throw Error(Errc::missing_input, "verdict for '" + v.query_id + "' has no filter set");
        recalls.push_back(static_cast<double>(std::min(v.matched_filters.size(), v.filter_count)) /
                          static_cast<double>(v.filter_count));
    }
    return stable_mean(std::move(recalls));
}

/// 100 * |Aligned| / N.
inline double persona_alignment_pct(const std::vector<PersonaRating>& ratings) {
    if (ratings.empty()) throw Error(Errc::empty_input, "persona alignment over no ratings");
    const auto aligned = std::count(ratings.begin(), ratings.end(), PersonaRating::aligned);
    return 100.0 * static_cast<double>(aligned) / static_cast<double>(ratings.size());
}

inline double persona_alignment_pct(const std::vector<JudgeVerdict>& verdicts) {
    std::vector<PersonaRating> ratings;
    for (const auto& v : verdicts) {
        if (v.task != JudgeTask::persona_alignment)
            throw Error(Errc::missing_input, "verdict for '" + v.query_id + "' is not a persona verdict");
        ratings.push_back(v.rating.value_or(PersonaRating::unclear));
    }
    return persona_alignment_pct(ratings);
}

// ---------------------------------------------------------------------------
// Embedding-based metrics

/// Filler paragraph used as the contextual-alignment baseline.
inline constexpr const char* placeholder_paragraph =
    "Lorem ipsum dolor sit amet, consectetur adipiscing elit, sed do eiusmod tempor incididunt ut labore et "
    "dolore magna aliqua. Ut enim ad minim veniam, quis nostrud exercitation ullamco laboris nisi ut aliquip ex "
    "ea commodo consequat. Duis aute irure dolor in reprehenderit in voluptate velit esse cillum dolore eu fugiat "
    "nulla pariatur.";

/// Index documents of the context's first k cities, joined in context order.
inline std::string context_document_text(const GroundingContext& ctx, const VectorIndex& index, std::size_t k) {
    std::map<std::string, const ContextDocument*> by_city;
    for (const auto& d : index.documents()) by_city[d.city_id] = &d;
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < std::min(k, ctx.cities.size()); ++i) {
        auto it = by_city.find(ctx.cities[i]);
        if (it == by_city.end()) throw Error(Errc::unknown_city, "city '" + ctx.cities[i] + "' is not indexed");
        parts.push_back(it->second->rendered_text);
    }
    return text::join(parts, "\n");
}

/// Cosine between the original context and the documents re-retrieved with
/// the query text, k = |ground truth| capped at `context_cap`.
inline double contextual_alignment(const std::string& query_text, const GroundingContext& original,
                                   const VectorIndex& index, EmbeddingProvider& provider,
                                   std::size_t context_cap = 25) {
    if (index.empty()) throw Error(Errc::empty_index, "index has no documents");
    if (original.cities.empty()) throw Error(Errc::context_invalid, "original context has no cities");
    const std::size_t k = std::min(original.cities.size(), context_cap);
    const auto hits = semantic_retrieve(index, query_text, k, provider);
    std::vector<std::string> parts;
    for (const auto& h : hits) parts.push_back(h.doc.rendered_text);
    const auto vecs = embed({context_document_text(original, index, k), text::join(parts, "\n")}, provider);
    return cosine(vecs[0], vecs[1]);
}

/// Cosine between the placeholder paragraph and the original context.
inline double contextual_alignment_baseline(const GroundingContext& original, const VectorIndex& index,
                                            EmbeddingProvider& provider, std::size_t context_cap = 25,
                                            const std::string& placeholder = placeholder_paragraph) {
    const std::size_t k = std::min(original.cities.size(), context_cap);
    const auto vecs = embed({context_document_text(original, index, k), placeholder}, provider);
    return cosine(vecs[0], vecs[1]);
}

struct GroupedQuery {
    std::string text;
    std::string group;  // persona and popularity tier, e.g. "p01|low"
};

/// For each sustainable query, cosine to the mean embedding of the
/// non-sustainable queries in its group; averaged over queries that have a
/// non-empty comparison group.
inline double sustainability_similarity(const std::vector<GroupedQuery>& sust, const std::vector<GroupedQuery>& non_sust,
                                        EmbeddingProvider& provider) {
    if (sust.empty() || non_sust.empty()) throw Error(Errc::empty_input, "sustainability similarity needs both sets");
    std::vector<std::string> texts;
    for (const auto& q : non_sust) texts.push_back(q.text);
    const auto non_vecs = embed(texts, provider);
    std::map<std::string, std::vector<double>> centroid;
    for (std::size_t i = 0; i < non_sust.size(); ++i) {
        auto& c = centroid[non_sust[i].group];
        if (c.empty()) c.assign(non_vecs[i].dim(), 0.0);
        for (std::size_t d = 0; d < c.size(); ++d) c[d] += non_vecs[i].values[d];
    }
    texts.clear();
    for (const auto& q : sust) texts.push_back(q.text);
    const auto sust_vecs = embed(texts, provider);
    std::vector<double> sims;
    for (std::size_t i = 0; i < sust.size(); ++i) {
        auto it = centroid.find(sust[i].group);
        if (it == centroid.end()) continue;
        sims.push_back(cosine(sust_vecs[i], EmbeddingVector{normalized(it->second), provider.id()}));
    }
    if (sims.empty()) throw Error(Errc::empty_input, "no sustainable query shares a group with a non-sustainable one");
    return stable_mean(std::move(sims));
}

struct PhraseSimilarities {
    double sust = 0;
    std::vector<double> prefs;
};

/// Mean over queries of |sim(sust) - mean(sim(prefs))|.
inline double sustainability_mae(const std::vector<PhraseSimilarities>& sims) {
    if (sims.empty()) throw Error(Errc::empty_input, "sustainability MAE over no queries");
    std::vector<double> gaps;
    for (const auto& s : sims) {
        if (s.prefs.empty()) throw Error(Errc::missing_sust_filter, "query has no preference filters");
        gaps.push_back(std::abs(s.sust - stable_mean(s.prefs)));
    }
    return stable_mean(std::move(gaps));
}

struct FilteredQuery {
    std::string text;
    FilterSet filters;
};

/// Phrase similarities from embeddings of the canonical filter phrases.
inline std::vector<PhraseSimilarities> phrase_similarities(const std::vector<FilteredQuery>& queries,
                                                           EmbeddingProvider& provider) {
    std::vector<PhraseSimilarities> out;
    for (const auto& q : queries) {
        if (!q.filters.sust) throw Error(Errc::missing_sust_filter, "query has no sustainability filter");
        if (q.filters.prefs.empty()) throw Error(Errc::missing_sust_filter, "query has no preference filters");
        std::vector<std::string> texts{q.text, canonical_filter_phrase(*q.filters.sust)};
        for (const auto& p : q.filters.prefs) texts.push_back(canonical_filter_phrase(p));
        const auto v = embed(texts, provider);
        PhraseSimilarities s;
        s.sust = cosine(v[0], v[1]);
        for (std::size_t i = 2; i < v.size(); ++i) s.prefs.push_back(cosine(v[0], v[i]));
        out.push_back(std::move(s));
    }
    return out;
}

inline double sustainability_mae(const std::vector<FilteredQuery>& queries, EmbeddingProvider& provider) {
    return sustainability_mae(phrase_similarities(queries, provider));
}

// ---------------------------------------------------------------------------
// Expert ratings

struct ExpertRating {
    std::string rater_id;
    std::string query_id;
    int groundedness_level = 0;                  // 0 unclear, 1 not, 2 partially, 3 grounded
    std::optional<PersonaRating> persona_rating;  // absent for vanilla queries
    int clarity = 1;                              // 1..5
    int overall_fit = 1;                          // 1..5

    bool operator==(const ExpertRating&) const = default;
};

inline constexpr int rating_scale_min = 1;
inline constexpr int rating_scale_max = 5;

/// Range check; returns the first problem found.
inline std::optional<std::string> rating_problem(const ExpertRating& r) {
    if (r.groundedness_level < 0 || r.groundedness_level > 3) return "groundedness_level must be in 0..3";
    if (r.clarity < rating_scale_min || r.clarity > rating_scale_max) return "clarity must be in 1..5";
    if (r.overall_fit < rating_scale_min || r.overall_fit > rating_scale_max) return "overall_fit must be in 1..5";
    return std::nullopt;
}

inline json to_json(const ExpertRating& r) {
    return json{{"rater_id", r.rater_id},
                {"query_id", r.query_id},
                {"groundedness_level", r.groundedness_level},
                {"persona_rating", r.persona_rating ? json(std::string(to_string(*r.persona_rating))) : json(nullptr)},
                {"clarity", r.clarity},
                {"overall_fit", r.overall_fit}};
}

inline ExpertRating expert_rating_from_json(const json& j) {
    ExpertRating r;
    r.rater_id = j.at("rater_id").get<std::string>();
    r.query_id = j.at("query_id").get<std::string>();
    r.groundedness_level = j.at("groundedness_level").get<int>();
    if (j.contains("persona_rating") && !j["persona_rating"].is_null())
        r.persona_rating = parse_enum<PersonaRating>(j["persona_rating"].get<std::string>());
    r.clarity = j.at("clarity").get<int>();
    r.overall_fit = j.at("overall_fit").get<int>();
    return r;
}

inline double normalize_scale(double v) {
    return (v - rating_scale_min) / static_cast<double>(rating_scale_max - rating_scale_min);
}

/// Where a rated query came from; hidden from raters, known to the aggregator.
struct QueryOrigin {
    std::string model_id;
    Setting setting = Setting::vanilla;
};

/// Per (model, setting): % level-3 groundedness, % Aligned among persona
/// ratings, and mean clarity / overall fit scaled to [0, 1].
inline std::vector<MetricReport> expert_aggregate(const std::vector<ExpertRating>& ratings,
                                                  const std::map<std::string, QueryOrigin>& origins) {
    if (ratings.empty()) throw Error(Errc::empty_input, "no expert ratings");
    std::map<std::pair<std::string, Setting>, std::vector<const ExpertRating*>> groups;
    for (const auto& r : ratings) {
        auto it = origins.find(r.query_id);
        if (it == origins.end()) throw Error(Errc::missing_input, "no origin for rated query '" + r.query_id + "'");
        groups[{it->second.model_id, it->second.setting}].push_back(&r);
    }
    std::vector<MetricReport> out;
    for (const auto& [key, rs] : groups) {
        const std::string setting(to_string(key.second));
        const std::size_t n = rs.size();
        std::vector<double> clarity, fit;
        std::vector<PersonaRating> persona;
        std::size_t grounded = 0;
        for (const auto* r : rs) {
            grounded += r->groundedness_level == 3;
            clarity.push_back(normalize_scale(r->clarity));
            fit.push_back(normalize_scale(r->overall_fit));
            if (r->persona_rating) persona.push_back(*r->persona_rating);
        }
        out.push_back(make_report(key.first, setting, "all", "expert_grounded_pct",
                                  100.0 * static_cast<double>(grounded) / static_cast<double>(n), n));
        if (!persona.empty())
            out.push_back(make_report(key.first, setting, "all", "expert_persona_aligned_pct",
                                      persona_alignment_pct(persona), persona.size()));
        out.push_back(make_report(key.first, setting, "all", "expert_clarity", stable_mean(clarity), n));
        out.push_back(make_report(key.first, setting, "all", "expert_overall_fit", stable_mean(fit), n));
    }
    return out;
}

enum class RatingDimension { groundedness, persona, clarity, overall_fit };

constexpr std::string_view to_string(RatingDimension d) {
    switch (d) {
    case RatingDimension::groundedness: return "groundedness";
    case RatingDimension::persona: return "persona";
    case RatingDimension::clarity: return "clarity";
    case RatingDimension::overall_fit: return "overall_fit";
    }
    return "?";
}

/// Persona options encoded 0..3 in their listed order.
inline int persona_code(PersonaRating r) { return static_cast<int>(r); }

/// Mean |r1 - r2| over the shared query set on the dimension's raw scale.
inline double inter_evaluator_mae(const std::vector<ExpertRating>& rater_a, const std::vector<ExpertRating>& rater_b,
                                  RatingDimension dim) {
    std::map<std::string, const ExpertRating*> a, b;
    for (const auto& r : rater_a) a[r.query_id] = &r;
    for (const auto& r : rater_b) b[r.query_id] = &r;
    if (a.empty() || a.size() != b.size() || a.size() != rater_a.size() || b.size() != rater_b.size())
        throw Error(Errc::misaligned_sets, "raters must cover the same queries exactly once");
    std::vector<double> diffs;
    for (const auto& [qid, ra] : a) {
        auto it = b.find(qid);
        if (it == b.end()) throw Error(Errc::misaligned_sets, "query '" + qid + "' rated by only one rater");
        const ExpertRating& rb = *it->second;
        switch (dim) {
        case RatingDimension::groundedness: diffs.push_back(std::abs(ra->groundedness_level - rb.groundedness_level)); break;
        case RatingDimension::clarity: diffs.push_back(std::abs(ra->clarity - rb.clarity)); break;
        case RatingDimension::overall_fit: diffs.push_back(std::abs(ra->overall_fit - rb.overall_fit)); break;
        case RatingDimension::persona:
            if (ra->persona_rating.has_value() != rb.persona_rating.has_value())
                throw Error(Errc::misaligned_sets, "query '" + qid + "' has a persona rating from only one rater");
            if (ra->persona_rating)
                diffs.push_back(std::abs(persona_code(*ra->persona_rating) - persona_code(*rb.persona_rating)));
            break;
        }
    }
    if (diffs.empty()) throw Error(Errc::empty_input, "no shared ratings on dimension " + std::string(to_string(dim)));
    return stable_mean(std::move(diffs));
}

}  // namespace synthtrips
