#pragma once

// Canonical filter phrases, the placeholder template engine and the prompt
// builders for generation, judging, recommendation and output extraction.

#include "synthtrips/error.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/persona.hpp"
#include "synthtrips/text.hpp"
#include "synthtrips/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace synthtrips {

// ---------------------------------------------------------------------------
// Canonical phrases

inline std::string canonical_filter_phrase(const PrefFilter& f) {
    switch (f.kind) {
    case PrefKind::budget: return std::string(to_string(std::get<Level>(f.value))) + " budget";
    case PrefKind::month: return "travel in " + std::string(month_full_name(std::get<Month>(f.value)));
    case PrefKind::interests:
        switch (std::get<Interest>(f.value)) {
        case Interest::arts_entertainment: return "arts and entertainment";
        case Interest::outdoors_recreation: return "outdoors and recreation";
        case Interest::food: return "food and dining";
        case Interest::nightlife_spot: return "nightlife spots";
        case Interest::shops_services: return "shops and services";
        }
    }
    throw Error(Errc::missing_input, "malformed preference filter");
}

inline std::string canonical_filter_phrase(const SustFilter& f) {
    switch (f.kind) {
    case SustKind::seasonality: return "off-peak, less crowded time";
    case SustKind::walkability:
        return "highly walkable (walkability at least " + format_number(f.threshold.value_or(0)) + ")";
    case SustKind::aqi: return "good air quality (AQI at most " + format_number(f.threshold.value_or(0)) + ")";
    }
    throw Error(Errc::missing_input, "malformed sustainability filter");
}

/// Phrase for a popularity tier.
inline std::string canonical_filter_phrase(Level popularity) {
    return std::string(to_string(popularity)) + " popularity";
}

struct LabeledPhrase {
    std::string label;  // filter kind, as used in judge verdicts
    std::string phrase;

    bool operator==(const LabeledPhrase&) const = default;
};

/// Every filter in the set with its kind label: preferences, sustainability, popularity.
inline std::vector<LabeledPhrase> filter_phrases(const FilterSet& f) {
    std::vector<LabeledPhrase> out;
    for (const auto& p : f.prefs) out.push_back({std::string(to_string(p.kind)), canonical_filter_phrase(p)});
    if (f.sust) out.push_back({std::string(to_string(f.sust->kind)), canonical_filter_phrase(*f.sust)});
    out.push_back({"popularity", canonical_filter_phrase(f.popularity)});
    return out;
}

inline std::string render_filter_block(const FilterSet& f) {
    std::string out;
    for (const auto& lp : filter_phrases(f)) {
        if (!out.empty()) out += "\n";
        out += "- " + lp.label + ": " + lp.phrase;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Templates

/// Plain text with `{name}` placeholders; `{{` and `}}` are literal braces.
class Template {
public:
    static inline const std::set<std::string> known_placeholders{
        "persona", "filters", "facts", "example", "query", "cities", "examples", "text"};

    Template() = default;

    static Template parse(std::string source, const std::string& id) {
        Template t;
        t.id_ = id;
        std::string literal;
        for (std::size_t i = 0; i < source.size(); ++i) {
            const char c = source[i];
            if (c == '{' && i + 1 < source.size() && source[i + 1] == '{') {
                literal.push_back('{');
                ++i;
            } else if (c == '}' && i + 1 < source.size() && source[i + 1] == '}') {
                literal.push_back('}');
                ++i;
            } else if (c == '{') {
                const auto close = source.find('}', i);
                if (close == std::string::npos)
                    throw Error(Errc::template_error, id + ": unterminated placeholder");
                std::string name = source.substr(i + 1, close - i - 1);
                if (!known_placeholders.count(name))
                    throw Error(Errc::template_error, id + ": unknown placeholder {" + name + "}");
                t.parts_.push_back({std::move(literal), false});
                literal.clear();
                t.parts_.push_back({name, true});
                t.names_.insert(std::move(name));
                i = close;
            } else if (c == '}') {
                throw Error(Errc::template_error, id + ": stray '}'");
            } else {
                literal.push_back(c);
            }
        }
        t.parts_.push_back({std::move(literal), false});
        return t;
    }

    const std::string& id() const { return id_; }
    const std::set<std::string>& placeholders() const { return names_; }

    std::string render(const std::map<std::string, std::string>& values) const {
        std::string out;
        for (const auto& part : parts_) {
            if (!part.placeholder) {
                out += part.text;
                continue;
            }
            auto it = values.find(part.text);
            if (it == values.end()) throw Error(Errc::template_error, id_ + ": no value for {" + part.text + "}");
            out += it->second;
        }
        return out;
    }

private:
    struct Part {
        std::string text;
        bool placeholder;
    };
    std::string id_;
    std::vector<Part> parts_;
    std::set<std::string> names_;
};

struct RecExample {
    std::string query;
    std::vector<std::string> cities;
};

/// A versioned set of templates plus the fixed in-context examples.
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& dir) {
        const json manifest = jsonl::read_json_file(dir / "manifest.json");
        TemplateSet ts;
        try {
            ts.version_ = manifest.at("template_version").get<std::string>();
            for (const auto& [id, file] : manifest.at("templates").items())
                ts.templates_[id] = Template::parse(jsonl::read_file(dir / file.get<std::string>()), id);
            for (Complexity c : all_complexities)
                ts.icl_examples_[c] = manifest.at("icl_examples").at(std::string(to_string(c))).get<std::string>();
            for (const auto& ex : manifest.at("rec_examples"))
                ts.rec_examples_.push_back({ex.at("query").get<std::string>(), ex.at("cities").get<std::vector<std::string>>()});
        } catch (const json::exception& e) {
            throw Error(Errc::template_error, (dir / "manifest.json").string() + ": " + e.what());
        }
        ts.check_contracts();
        return ts;
    }

    const std::string& version() const { return version_; }

    const Template& get(const std::string& id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw Error(Errc::template_error, "template set has no '" + id + "'");
        return it->second;
    }

    const std::string& icl_example(Complexity c) const { return icl_examples_.at(c); }
    const std::vector<RecExample>& rec_examples() const { return rec_examples_; }

private:
    void check_contracts() const {
        struct Contract {
            const char* id;
            std::set<std::string> required;
        };
        const std::vector<Contract> contracts{
            {"generate.system", {}},
            {"generate.vanilla", {"filters", "facts"}},
            {"generate.persona_zero_shot", {"persona", "filters", "facts"}},
            {"generate.persona_one_shot", {"persona", "filters", "facts", "example"}},
            {"judge.system", {}},
            {"judge.filter_groundedness", {"query", "filters"}},
            {"judge.persona_alignment", {"persona", "query"}},
            {"recommend.system", {}},
            {"recommend.user", {"query", "cities", "examples"}},
            {"extract.user", {"text"}},
        };
        for (const auto& c : contracts) {
            const auto& names = get(c.id).placeholders();
            if (names != c.required)
                throw Error(Errc::template_error, std::string(c.id) + ": placeholders do not match the required set");
        }
        if (rec_examples_.size() < 3) throw Error(Errc::template_error, "need at least 3 recommendation examples");
    }

    std::string version_;
    std::map<std::string, Template> templates_;
    std::map<Complexity, std::string> icl_examples_;
    std::vector<RecExample> rec_examples_;
};

// ---------------------------------------------------------------------------
// Prompt bundles

struct PromptBundle {
    std::optional<Setting> setting;  // generation prompts only
    std::string system_text;
    std::string user_text;
    std::string template_id;
    std::string template_version;

    bool operator==(const PromptBundle&) const = default;
};

enum class JudgeTask { filter_groundedness, persona_alignment };

constexpr std::string_view to_string(JudgeTask t) {
    return t == JudgeTask::filter_groundedness ? "filter_groundedness" : "persona_alignment";
}

inline JudgeTask parse_judge_task(std::string_view s) {
    if (s == "filter_groundedness") return JudgeTask::filter_groundedness;
    if (s == "persona_alignment") return JudgeTask::persona_alignment;
    throw Error(Errc::malformed_record, "unknown judge task '" + std::string(s) + "'");
}

inline std::string example_block(const std::string& body) { return "<example>\n" + body + "\n</example>"; }

class PromptFactory {
public:
    explicit PromptFactory(TemplateSet templates) : templates_(std::move(templates)) {}

    const TemplateSet& templates() const { return templates_; }

    /// Persona must be present exactly when the setting is personalized.
    PromptBundle generation(const std::optional<Persona>& persona, const FilterSet& filters,
                            const GroundingContext& ctx, Setting setting) const {
        if (uses_persona(setting) != persona.has_value())
            throw Error(Errc::persona_required, setting == Setting::vanilla
                                                    ? "vanilla prompts take no persona"
                                                    : "personalized prompts need a persona");
        if (ctx.cities.empty() || ctx.facts.empty())
            throw Error(Errc::context_invalid, "grounding context has no cities");

        std::map<std::string, std::string> values{{"filters", render_filter_block(filters)},
                                                  {"facts", ctx.facts_text()}};
        if (persona) values["persona"] = persona->description;
        if (setting == Setting::persona_one_shot)
            values["example"] = example_block(templates_.icl_example(filters.complexity));

        const std::string id = "generate." + std::string(to_string(setting));
        return bundle(setting, "generate.system", id, values);
    }

    PromptBundle judge(JudgeTask task, const std::string& query, const std::optional<FilterSet>& filters,
                       const std::optional<Persona>& persona) const {
        if (task == JudgeTask::filter_groundedness) {
            if (!filters) throw Error(Errc::missing_input, "filter judging needs the filter set");
            return bundle(std::nullopt, "judge.system", "judge.filter_groundedness",
                          {{"query", query}, {"filters", render_filter_block(*filters)}});
        }
        if (!persona) throw Error(Errc::missing_input, "persona judging needs the persona");
        return bundle(std::nullopt, "judge.system", "judge.persona_alignment",
                      {{"query", query}, {"persona", persona->description}});
    }

    PromptBundle recommendation(const std::string& query, const std::vector<std::string>& city_names,
                                unsigned shots) const {
        if (city_names.empty()) throw Error(Errc::empty_city_list, "recommendation prompt needs KB city names");
        if (shots > 3) throw Error(Errc::missing_input, "shots must be in [0, 3]");
        std::string cities;
        for (const auto& n : city_names) cities += (cities.empty() ? "" : "\n") + ("- " + n);
        std::string examples;
        for (unsigned i = 0; i < shots; ++i) {
            const auto& ex = templates_.rec_examples()[i];
            if (!examples.empty()) examples += "\n";
            examples += example_block("Query: " + ex.query + "\nRecommended: " + text::join(ex.cities, ", "));
        }
        return bundle(std::nullopt, "recommend.system", "recommend.user",
                      {{"query", query}, {"cities", cities}, {"examples", examples}});
    }

    PromptBundle extraction(const std::string& raw_text) const {
        return bundle(std::nullopt, "judge.system", "extract.user", {{"text", raw_text}});
    }

private:
    PromptBundle bundle(std::optional<Setting> setting, const std::string& system_id, const std::string& user_id,
                        const std::map<std::string, std::string>& values) const {
        PromptBundle b;
        b.setting = setting;
        b.system_text = templates_.get(system_id).render({});
        b.user_text = templates_.get(user_id).render(values);
        b.template_id = user_id;
        b.template_version = templates_.version();
        return b;
    }

    TemplateSet templates_;
};

/// Names of KB cities that appear as whole words in the text (case-insensitive).
inline std::vector<std::string> mentioned_cities(const std::string& query, const KnowledgeBase& kb) {
    const auto q = text::tokenize(query);
    std::vector<std::string> hits;
    for (const auto& [id, c] : kb.cities()) {
        const auto name = text::tokenize(c.name);
        if (name.empty() || name.size() > q.size()) continue;
        for (std::size_t i = 0; i + name.size() <= q.size(); ++i) {
            if (std::equal(name.begin(), name.end(), q.begin() + static_cast<std::ptrdiff_t>(i))) {
                hits.push_back(c.name);
                break;
            }
        }
    }
    return hits;
}

}  // namespace synthtrips
