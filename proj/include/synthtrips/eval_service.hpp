#pragma once

// Blind expert evaluation: seeded session assignment, one item at a time,
// durable incremental ratings and resume.

#include "synthtrips/error.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/metrics.hpp"
#include "synthtrips/persona.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/store.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

/// Requested number of queries per model.
struct SampleSpec {
    std::map<std::string, std::size_t> per_model;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [m, c] : per_model) n += c;
        return n;
    }

    json to_json() const { return json(per_model); }

    static SampleSpec from_json(const json& j) {
        if (!j.is_object() || j.empty()) throw Error(Errc::validation_failed, "sample_spec must map model ids to counts");
        SampleSpec s;
        for (const auto& [model, count] : j.items()) {
            if (!count.is_number_unsigned() || count.get<std::size_t>() == 0)
                throw Error(Errc::validation_failed, "sample count for '" + model + "' must be a positive integer");
            s.per_model[model] = count.get<std::size_t>();
        }
        return s;
    }
};

struct EvalSession {
    std::string session_id;
    std::string rater_id;
    std::vector<std::string> assigned_query_ids;
    std::set<std::string> completed;
    std::string created_at;
};

/// Fields an evaluation payload may carry. Anything identifying the model,
/// setting, template or parse path is excluded by construction.
inline const std::set<std::string>& payload_allowlist() {
    static const std::set<std::string> keys{"session_id", "query_id", "position", "total",
                                            "query_text", "persona",  "filters",  "rating_schema"};
    return keys;
}

inline const std::set<std::string>& blinded_fields() {
    static const std::set<std::string> keys{"model_id", "model", "setting", "template_version", "template_id",
                                            "parse_path", "raw_text", "params"};
    return keys;
}

/// Query id -> generating model and setting, for aggregating ratings.
inline std::map<std::string, QueryOrigin> query_origins(const DatasetStore& store) {
    std::map<std::string, QueryOrigin> out;
    for (const auto& q : store.get_queries()) out[q.query_id] = {q.model_id, q.setting};
    return out;
}

class EvalService {
public:
    EvalService(DatasetStore& store, PersonaCatalog personas) : store_(store), personas_(std::move(personas)) {
        for (const auto& q : store_.get_queries()) queries_.emplace(q.query_id, q);
        for (const auto& k : store_.get_keys()) keys_.emplace(k.key_id, k);
    }

    /// Stratified over settings within each model, then shuffled. Depends only
    /// on (spec, seed), so raters given the same spec and seed see the same
    /// items in the same order. Re-creating an existing session returns it.
    EvalSession create_session(const std::string& rater_id, const SampleSpec& spec, std::uint64_t seed) {
        std::lock_guard lock(mu_);
        if (rater_id.empty()) throw Error(Errc::validation_failed, "rater_id is required");
        if (spec.per_model.empty()) throw Error(Errc::validation_failed, "sample_spec is empty");
        const std::string session_id =
            "s" + hash_parts({rater_id, jsonl::dump(spec.to_json()), std::to_string(seed)}).substr(0, 16);
        if (auto existing = load(session_id)) return *existing;

        std::vector<std::string> assigned = sample(spec, seed);
        SessionRecord rec{session_id, rater_id, assigned, spec.to_json(), seed, store_.now()};
        store_.put_session(rec);
        return *load(session_id);
    }

    /// The first assigned item not yet rated. Calling again without a
    /// submission returns the same item.
    json next_item(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        const EvalSession s = require(session_id);
        for (std::size_t i = 0; i < s.assigned_query_ids.size(); ++i) {
            const auto& qid = s.assigned_query_ids[i];
            if (s.completed.count(qid)) continue;
            return payload(s, qid, i);
        }
        throw Error(Errc::session_complete, "session '" + session_id + "' has no remaining items");
    }

    /// Validates and stores one rating; rater_id is taken from the session.
    json submit_rating(const std::string& session_id, ExpertRating rating) {
        std::lock_guard lock(mu_);
        const EvalSession s = require(session_id);
        const auto& assigned = s.assigned_query_ids;
        if (std::find(assigned.begin(), assigned.end(), rating.query_id) == assigned.end())
            throw Error(Errc::not_assigned, "query '" + rating.query_id + "' is not assigned to this session");
        if (s.completed.count(rating.query_id))
            throw Error(Errc::already_rated, "query '" + rating.query_id + "' was already rated");
        if (auto problem = rating_problem(rating)) throw Error(Errc::validation_failed, *problem);
        const bool has_persona = shows_persona(queries_.at(rating.query_id));
        if (has_persona && !rating.persona_rating)
            throw Error(Errc::validation_failed, "persona_rating is required for this item");
        if (!has_persona && rating.persona_rating)
            throw Error(Errc::validation_failed, "this item has no persona to rate");
        rating.rater_id = s.rater_id;
        store_.put_rating({session_id, rating, store_.now()});
        return json{{"accepted", true},
                    {"query_id", rating.query_id},
                    {"completed", s.completed.size() + 1},
                    {"total", assigned.size()}};
    }

    json progress(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        const EvalSession s = require(session_id);
        return json{{"session_id", s.session_id},
                    {"completed", s.completed.size()},
                    {"total", s.assigned_query_ids.size()},
                    {"done", s.completed.size() == s.assigned_query_ids.size()}};
    }

    std::optional<EvalSession> session(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        return load(session_id);
    }

    static json rating_schema(bool with_persona) {
        json schema{{"groundedness_level",
                     {{"min", 0},
                      {"max", 3},
                      {"labels", {"Unclear", "Not grounded", "Partially grounded", "Grounded"}}}},
                    {"clarity", {{"min", rating_scale_min}, {"max", rating_scale_max}}},
                    {"overall_fit", {{"min", rating_scale_min}, {"max", rating_scale_max}}}};
        if (with_persona) {
            json options = json::array();
            for (PersonaRating r : all_persona_ratings) options.push_back(std::string(to_string(r)));
            schema["persona_rating"] = {{"options", options}};
        }
        return schema;
    }

private:
    std::vector<std::string> sample(const SampleSpec& spec, std::uint64_t seed) const {
        std::vector<std::string> chosen;
        for (const auto& [model, count] : spec.per_model) {
            std::map<Setting, std::vector<std::string>> pool;
            for (const auto& [qid, q] : queries_)
                if (q.model_id == model && q.parse_path != ParsePath::needs_manual && !q.query_text.empty())
                    pool[q.setting].push_back(qid);
            std::size_t available = 0;
            for (const auto& [st, ids] : pool) available += ids.size();
            if (available < count)
                throw Error(Errc::insufficient_queries, "model '" + model + "' has " + std::to_string(available) +
                                                            " rateable queries, " + std::to_string(count) + " requested");
            // Even split over settings; the remainder goes to the earliest settings.
            for (std::size_t i = 0; i < all_settings.size(); ++i) {
                const Setting st = all_settings[i];
                const std::size_t quota = count / all_settings.size() + (i < count % all_settings.size() ? 1 : 0);
                auto ids = pool[st];
                if (ids.size() < quota)
                    throw Error(Errc::insufficient_queries, "model '" + model + "' has only " +
                                                                std::to_string(ids.size()) + " queries for one setting, " +
                                                                std::to_string(quota) + " needed");
                Rng rng(derive_seed(seed, {model, to_string(st)}));
                rng.shuffle(ids);
                chosen.insert(chosen.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quota));
            }
        }
        std::sort(chosen.begin(), chosen.end());
        Rng rng(derive_seed(seed, {"order"}));
        rng.shuffle(chosen);
        return chosen;
    }

    std::optional<EvalSession> load(const std::string& session_id) const {
        auto j = store_.get(RecordType::sessions, session_id);
        if (!j) return std::nullopt;
        const SessionRecord rec = session_record_from_json(*j);
        EvalSession s{rec.session_id, rec.rater_id, rec.assigned_query_ids, {}, rec.created_at};
        for (const auto& r : store_.get_ratings())
            if (r.session_id == session_id) s.completed.insert(r.rating.query_id);
        return s;
    }

    EvalSession require(const std::string& session_id) const {
        auto s = load(session_id);
        if (!s) throw Error(Errc::unknown_session, "no session '" + session_id + "'");
        return *s;
    }

    bool shows_persona(const QueryRecord& q) const {
        return uses_persona(q.setting) && personas_.contains(q.persona_id);
    }

    json payload(const EvalSession& s, const std::string& qid, std::size_t position) const {
        const QueryRecord& q = queries_.at(qid);
        json filters = json::array();
        if (auto k = keys_.find(q.key_id); k != keys_.end())
            for (const auto& lp : filter_phrases(k->second.filters))
                filters.push_back({{"label", lp.label}, {"phrase", lp.phrase}});
        const bool with_persona = shows_persona(q);
        json p{{"session_id", s.session_id},
               {"query_id", qid},
               {"position", position},
               {"total", s.assigned_query_ids.size()},
               {"query_text", q.query_text},
               {"filters", filters},
               {"rating_schema", rating_schema(with_persona)}};
        if (with_persona) p["persona"] = {{"description", personas_.at(q.persona_id).description}};
        return p;
    }

    DatasetStore& store_;
    PersonaCatalog personas_;
    std::map<std::string, QueryRecord> queries_;
    std::map<std::string, KeyFunction> keys_;
    mutable std::mutex mu_;
};

}  // namespace synthtrips
