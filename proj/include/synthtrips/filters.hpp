#pragma once

// Filter algebra, seeded filter-set sampling, key-function enumeration and
// structured retrieval of grounding context from the knowledge base.

#include "synthtrips/error.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/kb.hpp"
#include "synthtrips/persona.hpp"
#include "synthtrips/text.hpp"
#include "synthtrips/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace synthtrips {

enum class PrefKind { budget, month, interests };
enum class SustKind { seasonality, walkability, aqi };

inline constexpr std::array<PrefKind, 3> all_pref_kinds{PrefKind::budget, PrefKind::month, PrefKind::interests};
inline constexpr std::array<SustKind, 3> all_sust_kinds{SustKind::seasonality, SustKind::walkability, SustKind::aqi};

constexpr std::string_view to_string(PrefKind k) {
    switch (k) {
    case PrefKind::budget: return "budget";
    case PrefKind::month: return "month";
    case PrefKind::interests: return "interests";
    }
    return "?";
}

constexpr std::string_view to_string(SustKind k) {
    switch (k) {
    case SustKind::seasonality: return "seasonality";
    case SustKind::walkability: return "walkability";
    case SustKind::aqi: return "aqi";
    }
    return "?";
}

/// Shortest round-trip decimal; integral values print without a fraction.
inline std::string format_number(double v) {
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct PrefFilter {
    using Value = std::variant<Level, Month, Interest>;

    PrefKind kind = PrefKind::budget;
    Value value = Level::low;

    static PrefFilter budget(Level l) { return {PrefKind::budget, l}; }
    static PrefFilter month(Month m) { return {PrefKind::month, m}; }
    static PrefFilter interests(Interest i) { return {PrefKind::interests, i}; }

    bool well_formed() const {
        switch (kind) {
        case PrefKind::budget: return std::holds_alternative<Level>(value);
        case PrefKind::month: return std::holds_alternative<Month>(value);
        case PrefKind::interests: return std::holds_alternative<Interest>(value);
        }
        return false;
    }

    std::string value_name() const {
        return std::visit([](auto v) { return std::string(to_string(v)); }, value);
    }

    bool operator==(const PrefFilter&) const = default;
};

struct SustFilter {
    SustKind kind = SustKind::seasonality;
    /// Minimum for walkability, maximum for AQI, absent for seasonality.
    std::optional<double> threshold;

    static SustFilter seasonality() { return {SustKind::seasonality, std::nullopt}; }
    static SustFilter walkability(double min) { return {SustKind::walkability, min}; }
    static SustFilter aqi(double max) { return {SustKind::aqi, max}; }

    bool well_formed() const {
        if (kind == SustKind::seasonality) return !threshold;
        if (!threshold) return false;
        if (kind == SustKind::walkability) return *threshold >= 0.0 && *threshold <= 100.0;
        return *threshold >= 0.0;
    }

    bool operator==(const SustFilter&) const = default;
};

struct FilterSet {
    std::vector<PrefFilter> prefs;  // sorted by kind, distinct kinds
    std::optional<SustFilter> sust;
    Level popularity = Level::low;
    Complexity complexity = Complexity::easy;

    const PrefFilter* pref(PrefKind k) const {
        for (const auto& p : prefs)
            if (p.kind == k) return &p;
        return nullptr;
    }

    std::optional<Level> budget() const {
        if (auto p = pref(PrefKind::budget)) return std::get<Level>(p->value);
        return std::nullopt;
    }
    std::optional<Month> month() const {
        if (auto p = pref(PrefKind::month)) return std::get<Month>(p->value);
        return std::nullopt;
    }
    std::optional<Interest> interest() const {
        if (auto p = pref(PrefKind::interests)) return std::get<Interest>(p->value);
        return std::nullopt;
    }

    /// Number of filters a judge is asked to find: preferences, the optional
    /// sustainability filter and the popularity tier.
    std::size_t filter_count() const { return prefs.size() + (sust ? 1 : 0) + 1; }

    /// Checks the complexity cardinality rules and value domains.
    bool satisfies_complexity() const {
        for (std::size_t i = 0; i < prefs.size(); ++i) {
            if (!prefs[i].well_formed()) return false;
            if (i > 0 && !(prefs[i - 1].kind < prefs[i].kind)) return false;
        }
        if (sust && !sust->well_formed()) return false;
        switch (complexity) {
        case Complexity::easy: return prefs.size() == 1 && !sust;
        case Complexity::medium: return prefs.size() == 2 && !sust;
        case Complexity::hard: return prefs.size() == 3 && !sust;
        case Complexity::sustainable: return prefs.size() == 2 && sust.has_value();
        }
        return false;
    }

    bool operator==(const FilterSet&) const = default;
};

/// Snapshot-level sustainability thresholds used when sampling filter sets.
struct SustThresholds {
    double walkability_min = 70.0;
    double aqi_max = 50.0;

    bool operator==(const SustThresholds&) const = default;
};

inline constexpr const char* filter_encoding_version = "v1";

/// Stable text form, e.g. "v1;pop=low;cx=sustainable;budget=low;month=Mar;sust=aqi<=50".
inline std::string canonical_encoding(const FilterSet& f) {
    std::string out = filter_encoding_version;
    out += ";pop=" + std::string(to_string(f.popularity));
    out += ";cx=" + std::string(to_string(f.complexity));
    for (const auto& p : f.prefs) out += ";" + std::string(to_string(p.kind)) + "=" + p.value_name();
    if (f.sust) {
        out += ";sust=";
        switch (f.sust->kind) {
        case SustKind::seasonality: out += "seasonality"; break;
        case SustKind::walkability: out += "walkability>=" + format_number(*f.sust->threshold); break;
        case SustKind::aqi: out += "aqi<=" + format_number(*f.sust->threshold); break;
        }
    }
    return out;
}

inline FilterSet parse_canonical_encoding(std::string_view encoded) {
    auto fail = [&](const std::string& why) -> FilterSet {
        throw Error(Errc::malformed_record, "bad filter encoding '" + std::string(encoded) + "': " + why);
    };
    std::vector<std::string> parts;
    std::string cur;
    for (char c : encoded) {
        if (c == ';') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    if (parts.empty() || parts[0] != filter_encoding_version) return fail("unsupported version");

    FilterSet f;
    bool have_pop = false, have_cx = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) return fail("missing '='");
        const std::string key = parts[i].substr(0, eq);
        const std::string val = parts[i].substr(eq + 1);
        if (key == "pop") {
            f.popularity = parse_enum<Level>(val);
            have_pop = true;
        } else if (key == "cx") {
            f.complexity = parse_enum<Complexity>(val);
            have_cx = true;
        } else if (key == "budget") {
            f.prefs.push_back(PrefFilter::budget(parse_enum<Level>(val)));
        } else if (key == "month") {
            f.prefs.push_back(PrefFilter::month(parse_enum<Month>(val)));
        } else if (key == "interests") {
            f.prefs.push_back(PrefFilter::interests(parse_enum<Interest>(val)));
        } else if (key == "sust") {
            auto number = [&](std::size_t from) {
                try {
                    return std::stod(val.substr(from));
                } catch (const std::exception&) {
                    fail("bad threshold");
                }
                return 0.0;
            };
            if (val == "seasonality") {
                f.sust = SustFilter::seasonality();
            } else if (val.rfind("walkability>=", 0) == 0) {
                f.sust = SustFilter::walkability(number(13));
            } else if (val.rfind("aqi<=", 0) == 0) {
                f.sust = SustFilter::aqi(number(5));
            } else {
                return fail("unknown sustainability filter");
            }
        } else {
            return fail("unknown key '" + key + "'");
        }
    }
    if (!have_pop || !have_cx) return fail("popularity and complexity are required");
    if (!f.satisfies_complexity()) return fail("violates complexity rules");
    return f;
}

/// Draws a filter set for the complexity level. Distinct preference kinds are
/// drawn uniformly, then each value uniformly from its domain; sustainable sets
/// also draw one sustainability kind.
inline FilterSet sample_filter_set(Complexity complexity, Level popularity, std::uint64_t seed,
                                   const SustThresholds& thresholds = {}) {
    Rng rng(seed);
    std::size_t n_prefs = 0;
    switch (complexity) {
    case Complexity::easy: n_prefs = 1; break;
    case Complexity::medium: n_prefs = 2; break;
    case Complexity::hard: n_prefs = 3; break;
    case Complexity::sustainable: n_prefs = 2; break;
    }
    std::array<PrefKind, 3> kinds = all_pref_kinds;
    for (std::size_t i = 0; i < n_prefs; ++i) std::swap(kinds[i], kinds[i + rng.index(kinds.size() - i)]);
    std::vector<PrefKind> chosen(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(n_prefs));
    std::sort(chosen.begin(), chosen.end());

    FilterSet f;
    f.popularity = popularity;
    f.complexity = complexity;
    for (PrefKind k : chosen) {
        switch (k) {
        case PrefKind::budget: f.prefs.push_back(PrefFilter::budget(all_levels[rng.index(3)])); break;
        case PrefKind::month: f.prefs.push_back(PrefFilter::month(all_months[rng.index(12)])); break;
        case PrefKind::interests: f.prefs.push_back(PrefFilter::interests(all_interests[rng.index(5)])); break;
        }
    }
    if (complexity == Complexity::sustainable) {
        switch (all_sust_kinds[rng.index(3)]) {
        case SustKind::seasonality: f.sust = SustFilter::seasonality(); break;
        case SustKind::walkability: f.sust = SustFilter::walkability(thresholds.walkability_min); break;
        case SustKind::aqi: f.sust = SustFilter::aqi(thresholds.aqi_max); break;
        }
    }
    return f;
}

struct KeyFunction {
    std::string key_id;
    std::string persona_id;
    FilterSet filters;
    bool valid = false;

    bool operator==(const KeyFunction&) const = default;
};

inline std::string make_key_id(const std::string& persona_id, const FilterSet& f) {
    return "k" + hash_parts({persona_id, canonical_encoding(f)}).substr(0, 16);
}

inline std::uint64_t key_seed(std::uint64_t master_seed, const std::string& persona_id, Complexity c, Level tier) {
    return derive_seed(master_seed, {persona_id, to_string(c), to_string(tier)});
}

/// One key function per (persona, complexity, popularity tier), personas in id order.
inline std::vector<KeyFunction> enumerate_key_functions(const PersonaCatalog& personas, std::uint64_t seed,
                                                        const SustThresholds& thresholds = {}) {
    if (personas.empty()) throw Error(Errc::empty_catalog, "cannot enumerate key functions without personas");
    std::vector<KeyFunction> keys;
    keys.reserve(personas.size() * all_complexities.size() * all_levels.size());
    for (const auto& pid : personas.ids()) {
        for (Complexity c : all_complexities) {
            for (Level tier : all_levels) {
                KeyFunction k;
                k.persona_id = pid;
                k.filters = sample_filter_set(c, tier, key_seed(seed, pid, c, tier), thresholds);
                k.key_id = make_key_id(pid, k.filters);
                keys.push_back(std::move(k));
            }
        }
    }
    return keys;
}

// ---------------------------------------------------------------------------
// Retrieval

enum class BudgetMatch { exact, at_most };

struct RetrieveOptions {
    std::size_t context_cap = 25;
    std::size_t pois_per_interest = 3;
    BudgetMatch budget_match = BudgetMatch::exact;

    bool operator==(const RetrieveOptions&) const = default;
};

struct CityFact {
    std::string city_id;
    std::string text;

    bool operator==(const CityFact&) const = default;
};

struct GroundingContext {
    std::string key_id;
    std::vector<std::string> cities;  // full ground truth, ascending id
    std::vector<CityFact> facts;      // capped, id-ordered prefix of `cities`

    std::string facts_text() const {
        std::string out;
        for (const auto& f : facts) {
            if (!out.empty()) out += "\n";
            out += f.text;
        }
        return out;
    }

    bool operator==(const GroundingContext&) const = default;
};

/// Which attributes a rendered city snippet mentions.
struct FactView {
    std::optional<Month> month;
    std::optional<Interest> interest;
    bool seasonality = false;
    bool walkability = false;
    bool aqi = false;
    bool all_interests = false;
    bool full_calendar = false;

    static FactView full() {
        FactView v;
        v.seasonality = v.walkability = v.aqi = true;
        v.all_interests = v.full_calendar = true;
        return v;
    }

    static FactView for_filters(const FilterSet& f) {
        FactView v;
        v.month = f.month();
        v.interest = f.interest();
        if (f.sust) {
            v.seasonality = f.sust->kind == SustKind::seasonality;
            v.walkability = f.sust->kind == SustKind::walkability;
            v.aqi = f.sust->kind == SustKind::aqi;
        }
        return v;
    }
};

inline std::string interest_display(Interest i) {
    switch (i) {
    case Interest::arts_entertainment: return "arts and entertainment";
    case Interest::outdoors_recreation: return "outdoors and recreation";
    case Interest::food: return "food";
    case Interest::nightlife_spot: return "nightlife";
    case Interest::shops_services: return "shops and services";
    }
    return "?";
}

/// One-line attribute snippet for a city. The same renderer feeds prompts and
/// the vector index, so a context and its re-retrieved documents are comparable.
inline std::string render_city_facts(const KnowledgeBase& kb, const std::string& city_id, const FactView& view,
                                     std::size_t pois_per_interest = 3) {
    const CityRecord& c = kb.city(city_id);
    std::string out = c.name + ", " + c.country;
    out += " | cost: " + std::string(to_string(c.cost_label));
    out += " | popularity: " + std::string(to_string(kb.popularity_tier(city_id)));

    auto poi_clause = [&](Interest i) {
        auto top = kb.top_pois(city_id, i, pois_per_interest);
        if (top.empty()) return;
        std::vector<std::string> names;
        for (const auto& p : top) names.push_back(p.name);
        out += " | top " + interest_display(i) + ": " + text::join(names, ", ");
    };
    if (view.all_interests) {
        for (Interest i : all_interests) poi_clause(i);
    } else if (view.interest) {
        poi_clause(*view.interest);
    }

    if (view.month)
        out += " | season in " + std::string(month_full_name(*view.month)) + ": " +
               std::string(to_string(c.season_in(*view.month)));
    if (view.full_calendar) {
        std::vector<std::string> cal;
        for (Month m : all_months) cal.push_back(std::string(to_string(m)) + " " + std::string(to_string(c.season_in(m))));
        out += " | seasons: " + text::join(cal, ", ");
    }
    if (view.seasonality) {
        std::vector<std::string> off;
        for (Month m : kb.off_peak_months(city_id)) off.emplace_back(to_string(m));
        out += " | off-peak months: " + (off.empty() ? std::string("none") : text::join(off, ", "));
    }
    if (view.walkability) out += " | walkability: " + format_number(c.walkability);
    if (view.aqi) out += " | AQI: " + format_number(c.aqi);
    return out;
}

/// True when the city satisfies every constraint in the filter set.
inline bool city_matches(const KnowledgeBase& kb, const std::string& city_id, const FilterSet& f,
                         BudgetMatch budget_match = BudgetMatch::exact) {
    const CityRecord& c = kb.city(city_id);
    if (kb.popularity_tier(city_id) != f.popularity) return false;
    if (auto b = f.budget()) {
        const bool ok = budget_match == BudgetMatch::exact ? c.cost_label == *b : c.cost_label <= *b;
        if (!ok) return false;
    }
    if (auto i = f.interest(); i && !kb.has_interest(city_id, *i)) return false;
    if (f.sust) {
        switch (f.sust->kind) {
        case SustKind::seasonality:
            if (auto m = f.month()) {
                if (c.season_in(*m) != Season::low) return false;
            } else if (kb.off_peak_months(city_id).empty()) {
                return false;
            }
            break;
        case SustKind::walkability:
            if (c.walkability < *f.sust->threshold) return false;
            break;
        case SustKind::aqi:
            if (c.aqi > *f.sust->threshold) return false;
            break;
        }
    }
    return true;
}

/// Structured retrieval. Returns nullopt when no city matches (invalid key function).
inline std::optional<GroundingContext> retrieve(const KnowledgeBase& kb, const FilterSet& f,
                                                const RetrieveOptions& opts = {}, const std::string& key_id = {}) {
    GroundingContext ctx;
    ctx.key_id = key_id;
    for (const auto& [id, city] : kb.cities())
        if (city_matches(kb, id, f, opts.budget_match)) ctx.cities.push_back(id);
    if (ctx.cities.empty()) return std::nullopt;
    const FactView view = FactView::for_filters(f);
    const std::size_t n = std::min(ctx.cities.size(), opts.context_cap);
    for (std::size_t i = 0; i < n; ++i)
        ctx.facts.push_back({ctx.cities[i], render_city_facts(kb, ctx.cities[i], view, opts.pois_per_interest)});
    return ctx;
}

struct KeyValidation {
    std::vector<KeyFunction> valid;
    std::vector<KeyFunction> invalid;
    std::vector<GroundingContext> contexts;  // parallel to `valid`
};

inline KeyValidation validate_keys(const KnowledgeBase& kb, std::vector<KeyFunction> keys,
                                   const RetrieveOptions& opts = {}) {
    KeyValidation out;
    for (auto& k : keys) {
        auto ctx = retrieve(kb, k.filters, opts, k.key_id);
        k.valid = ctx.has_value();
        if (ctx) {
            out.valid.push_back(std::move(k));
            out.contexts.push_back(std::move(*ctx));
        } else {
            out.invalid.push_back(std::move(k));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const KeyFunction& k) {
    return json{{"key_id", k.key_id},
                {"persona_id", k.persona_id},
                {"filters", canonical_encoding(k.filters)},
                {"valid", k.valid}};
}

inline KeyFunction key_function_from_json(const json& j) {
    KeyFunction k;
    k.key_id = j.at("key_id").get<std::string>();
    k.persona_id = j.at("persona_id").get<std::string>();
    k.filters = parse_canonical_encoding(j.at("filters").get<std::string>());
    k.valid = j.at("valid").get<bool>();
    return k;
}

inline json to_json(const GroundingContext& ctx) {
    json facts = json::array();
    for (const auto& f : ctx.facts) facts.push_back(json{{"city_id", f.city_id}, {"text", f.text}});
    return json{{"key_id", ctx.key_id}, {"cities", ctx.cities}, {"facts", facts}};
}

inline GroundingContext grounding_context_from_json(const json& j) {
    GroundingContext ctx;
    ctx.key_id = j.at("key_id").get<std::string>();
    ctx.cities = j.at("cities").get<std::vector<std::string>>();
    for (const auto& f : j.at("facts")) ctx.facts.push_back({f.at("city_id").get<std::string>(), f.at("text").get<std::string>()});
    return ctx;
}

/// Key-function manifest: one record per key with its validity.
inline void write_key_manifest(const std::filesystem::path& path, const std::vector<KeyFunction>& keys) {
    std::string out;
    for (const auto& k : keys) out += jsonl::dump(to_json(k)) + "\n";
    jsonl::write_file(path, out);
}

inline std::vector<KeyFunction> read_key_manifest(const std::filesystem::path& path) {
    std::vector<KeyFunction> keys;
    jsonl::for_each(path, [&](const json& j, std::size_t row) {
        try {
            keys.push_back(key_function_from_json(j));
        } catch (const json::exception& e) {
            throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": " + e.what());
        }
    });
    return keys;
}

}  // namespace synthtrips
