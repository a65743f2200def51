#pragma once

// City knowledge base: ingestion, popularity normalization and tiering,
// and read-only attribute access.

#include "synthtrips/error.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/types.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

struct PoiRecord {
    std::string name;
    Activity category = Activity::see;
    Interest interest = Interest::arts_entertainment;
    double confidence = 0.0;

    bool operator==(const PoiRecord&) const = default;
};

struct CityRecord {
    std::string city_id;
    std::string name;
    std::string country;
    Level cost_label = Level::medium;
    double walkability = 0.0;
    double aqi = 0.0;
    std::array<Season, 12> seasonality{};
    long long review_count = 0;
    std::vector<PoiRecord> pois;

    Season season_in(Month m) const { return seasonality[index_of(m)]; }

    bool operator==(const CityRecord&) const = default;
};

/// Score cut points on the normalized popularity scale.
/// score < low -> low tier; score < high -> medium; otherwise high.
struct TierBoundaries {
    double low = 1.0 / 3.0;
    double high = 2.0 / 3.0;

    void validate() const {
        if (!(0.0 < low && low < high && high < 1.0))
            throw Error(Errc::invalid_boundaries, "expected 0 < b_low < b_high < 1, got (" +
                                                      std::to_string(low) + ", " + std::to_string(high) + ")");
    }

    Level tier_for(double score) const {
        if (score < low) return Level::low;
        if (score < high) return Level::medium;
        return Level::high;
    }

    bool operator==(const TierBoundaries&) const = default;
};

/// Min-max normalization of review counts. All-equal counts map to 0.
inline std::map<std::string, double> normalize_popularity(const std::map<std::string, CityRecord>& cities) {
    std::map<std::string, double> scores;
    if (cities.empty()) return scores;
    long long lo = cities.begin()->second.review_count;
    long long hi = lo;
    for (const auto& [id, c] : cities) {
        lo = std::min(lo, c.review_count);
        hi = std::max(hi, c.review_count);
    }
    for (const auto& [id, c] : cities) {
        scores[id] = (hi == lo) ? 0.0
                                : static_cast<double>(c.review_count - lo) / static_cast<double>(hi - lo);
    }
    return scores;
}

class KnowledgeBase {
public:
    KnowledgeBase() = default;

    /// Validates the invariants and computes popularity. Throws on empty input
    /// or duplicate ids.
    static KnowledgeBase from_cities(std::vector<CityRecord> cities, TierBoundaries bounds = {}) {
        bounds.validate();
        if (cities.empty()) throw Error(Errc::empty_kb, "knowledge base has no cities");
        KnowledgeBase kb;
        for (auto& c : cities) {
            const std::string id = c.city_id;
            if (!kb.cities_.emplace(id, std::move(c)).second)
                throw Error(Errc::duplicate_city, "city_id '" + id + "' appears more than once");
        }
        kb.scores_ = normalize_popularity(kb.cities_);
        kb.apply_boundaries(bounds);
        return kb;
    }

    const std::map<std::string, CityRecord>& cities() const { return cities_; }
    std::size_t size() const { return cities_.size(); }
    const TierBoundaries& boundaries() const { return bounds_; }
    const std::map<std::string, double>& popularity_scores() const { return scores_; }
    const std::map<std::string, Level>& popularity_tiers() const { return tiers_; }

    bool contains(const std::string& city_id) const { return cities_.count(city_id) != 0; }

    const CityRecord& city(const std::string& city_id) const {
        auto it = cities_.find(city_id);
        if (it == cities_.end()) throw Error(Errc::unknown_city, "no city '" + city_id + "'");
        return it->second;
    }

    double popularity_score(const std::string& city_id) const {
        auto it = scores_.find(city_id);
        if (it == scores_.end()) throw Error(Errc::unknown_city, "no city '" + city_id + "'");
        return it->second;
    }

    Level popularity_tier(const std::string& city_id) const {
        auto it = tiers_.find(city_id);
        if (it == tiers_.end()) throw Error(Errc::unknown_city, "no city '" + city_id + "'");
        return it->second;
    }

    /// Same cities and scores, re-tiered under new boundaries.
    KnowledgeBase with_boundaries(TierBoundaries bounds) const {
        bounds.validate();
        KnowledgeBase kb = *this;
        kb.apply_boundaries(bounds);
        return kb;
    }

    /// Highest-confidence POIs with the given label; ties by ascending name.
    std::vector<PoiRecord> top_pois(const std::string& city_id, Interest label, std::size_t k) const {
        if (k == 0) throw Error(Errc::missing_input, "top_pois requires k >= 1");
        std::vector<PoiRecord> matches;
        for (const auto& p : city(city_id).pois)
            if (p.interest == label) matches.push_back(p);
        std::sort(matches.begin(), matches.end(), [](const PoiRecord& a, const PoiRecord& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            return a.name < b.name;
        });
        if (matches.size() > k) matches.resize(k);
        return matches;
    }

    bool has_interest(const std::string& city_id, Interest label) const {
        const auto& pois = city(city_id).pois;
        return std::any_of(pois.begin(), pois.end(), [&](const PoiRecord& p) { return p.interest == label; });
    }

    std::vector<Month> off_peak_months(const std::string& city_id) const {
        const auto& c = city(city_id);
        std::vector<Month> months;
        for (Month m : all_months)
            if (c.season_in(m) == Season::low) months.push_back(m);
        return months;
    }

    bool operator==(const KnowledgeBase&) const = default;

private:
    void apply_boundaries(const TierBoundaries& bounds) {
        bounds_ = bounds;
        tiers_.clear();
        for (const auto& [id, score] : scores_) tiers_[id] = bounds_.tier_for(score);
    }

    std::map<std::string, CityRecord> cities_;
    std::map<std::string, double> scores_;
    std::map<std::string, Level> tiers_;
    TierBoundaries bounds_;
};

// ---------------------------------------------------------------------------
// Snapshot file format (see docs/kb_format.md): JSON lines, first record is
// {"schema_version": "..."}, then one city per line.

inline constexpr const char* kb_schema_version = "1";

namespace detail {

inline const json& require(const json& j, const char* key, std::size_t row) {
    if (!j.is_object() || !j.contains(key))
        throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": missing field '" + key + "'");
    return j.at(key);
}

inline std::string require_string(const json& j, const char* key, std::size_t row) {
    const auto& v = require(j, key, row);
    if (!v.is_string() || v.get<std::string>().empty())
        throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": '" + key + "' must be a non-empty string");
    return v.get<std::string>();
}

inline double require_number(const json& j, const char* key, std::size_t row) {
    const auto& v = require(j, key, row);
    if (!v.is_number())
        throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": '" + key + "' must be a number");
    return v.get<double>();
}

template <typename E>
E require_enum(const json& j, const char* key, std::size_t row) {
    const std::string s = require_string(j, key, row);
    try {
        return parse_enum<E>(s);
    } catch (const Error& e) {
        throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": " + e.what());
    }
}

inline void row_check(bool ok, std::size_t row, const std::string& what) {
    if (!ok) throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": " + what);
}

}  // namespace detail

inline json to_json(const PoiRecord& p) {
    return json{{"name", p.name},
                {"category", to_string(p.category)},
                {"interest", to_string(p.interest)},
                {"confidence", p.confidence}};
}

inline json to_json(const CityRecord& c) {
    json season = json::object();
    for (Month m : all_months) season[std::string(to_string(m))] = to_string(c.season_in(m));
    json pois = json::array();
    for (const auto& p : c.pois) pois.push_back(to_json(p));
    return json{{"city_id", c.city_id},         {"name", c.name},
                {"country", c.country},         {"cost_label", to_string(c.cost_label)},
                {"walkability", c.walkability}, {"aqi", c.aqi},
                {"seasonality", season},        {"review_count", c.review_count},
                {"pois", pois}};
}

/// Parses and validates one city record; `row` is used in error messages.
inline CityRecord city_from_json(const json& j, std::size_t row) {
    using namespace detail;
    CityRecord c;
    c.city_id = require_string(j, "city_id", row);
    c.name = require_string(j, "name", row);
    c.country = require_string(j, "country", row);
    c.cost_label = require_enum<Level>(j, "cost_label", row);
    c.walkability = require_number(j, "walkability", row);
    row_check(c.walkability >= 0.0 && c.walkability <= 100.0, row, "walkability outside [0, 100]");
    c.aqi = require_number(j, "aqi", row);
    row_check(c.aqi >= 0.0, row, "aqi must be >= 0");

    const auto& rc = require(j, "review_count", row);
    row_check(rc.is_number_integer() && rc.get<long long>() >= 0, row, "review_count must be a non-negative integer");
    c.review_count = rc.get<long long>();

    const auto& season = require(j, "seasonality", row);
    row_check(season.is_object() && season.size() == 12, row, "seasonality must have exactly 12 months");
    for (Month m : all_months) {
        const std::string key(to_string(m));
        row_check(season.contains(key) && season.at(key).is_string(), row, "seasonality missing month " + key);
        try {
            c.seasonality[index_of(m)] = parse_enum<Season>(season.at(key).get<std::string>());
        } catch (const Error& e) {
            throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": " + e.what());
        }
    }

    const auto& pois = require(j, "pois", row);
    row_check(pois.is_array(), row, "pois must be an array");
    for (const auto& pj : pois) {
        PoiRecord p;
        p.name = require_string(pj, "name", row);
        p.category = require_enum<Activity>(pj, "category", row);
        p.interest = require_enum<Interest>(pj, "interest", row);
        p.confidence = require_number(pj, "confidence", row);
        row_check(p.confidence >= 0.0 && p.confidence <= 1.0, row, "POI confidence outside [0, 1]");
        c.pois.push_back(std::move(p));
    }
    return c;
}

/// Loads a snapshot file. Rows are numbered from 1 counting the header line.
inline KnowledgeBase load_kb(const std::filesystem::path& source,
                             const std::string& schema_version = kb_schema_version,
                             TierBoundaries bounds = {}) {
    std::vector<CityRecord> cities;
    std::set<std::string> seen;
    bool header_seen = false;
    jsonl::for_each(source, [&](const json& j, std::size_t row) {
        if (!header_seen) {
            detail::row_check(j.is_object() && j.contains("schema_version") && j.at("schema_version").is_string(),
                              row, "first record must be the schema_version header");
            const auto found = j.at("schema_version").get<std::string>();
            detail::row_check(found == schema_version, row,
                              "schema_version '" + found + "' does not match expected '" + schema_version + "'");
            header_seen = true;
            return;
        }
        CityRecord c = city_from_json(j, row);
        if (!seen.insert(c.city_id).second)
            throw Error(Errc::duplicate_city, "row " + std::to_string(row) + ": city_id '" + c.city_id + "' repeated");
        cities.push_back(std::move(c));
    });
    if (cities.empty()) throw Error(Errc::empty_kb, source.string() + " contains no city records");
    return KnowledgeBase::from_cities(std::move(cities), bounds);
}

inline std::string serialize_kb(const KnowledgeBase& kb, const std::string& schema_version = kb_schema_version) {
    std::string out = jsonl::dump(json{{"schema_version", schema_version}}) + "\n";
    for (const auto& [id, c] : kb.cities()) out += jsonl::dump(to_json(c)) + "\n";
    return out;
}

inline void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dest,
                    const std::string& schema_version = kb_schema_version) {
    jsonl::write_file(dest, serialize_kb(kb, schema_version));
}

// ---------------------------------------------------------------------------
// POI labeling hook. Snapshots ship pre-computed labels; a classifier can
// relabel POIs from their names (e.g. an NLI zero-shot model).

struct PoiLabel {
    Interest interest;
    double confidence;
};

class PoiClassifier {
public:
    virtual ~PoiClassifier() = default;
    virtual PoiLabel classify(const std::string& poi_text) const = 0;
};

inline KnowledgeBase relabel_pois(const KnowledgeBase& kb, const PoiClassifier& classifier) {
    std::vector<CityRecord> cities;
    for (const auto& [id, c] : kb.cities()) {
        CityRecord copy = c;
        for (auto& p : copy.pois) {
            const PoiLabel label = classifier.classify(p.name);
            if (!(label.confidence >= 0.0 && label.confidence <= 1.0))
                throw Error(Errc::malformed_record, "classifier confidence outside [0, 1] for '" + p.name + "'");
            p.interest = label.interest;
            p.confidence = label.confidence;
        }
        cities.push_back(std::move(copy));
    }
    return KnowledgeBase::from_cities(std::move(cities), kb.boundaries());
}

}  // namespace synthtrips
