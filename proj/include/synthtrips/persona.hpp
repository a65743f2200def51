#pragma once

#include "synthtrips/error.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

struct Persona {
    std::string persona_id;
    std::string description;
    std::optional<int> cluster_id;
    std::optional<double> representativeness;

    bool operator==(const Persona&) const = default;
};

/// Immutable, id-ordered persona collection.
class PersonaCatalog {
public:
    PersonaCatalog() = default;

    static PersonaCatalog from_personas(std::vector<Persona> personas) {
        if (personas.empty()) throw Error(Errc::empty_catalog, "persona catalog is empty");
        PersonaCatalog cat;
        std::set<std::string> descriptions;
        for (auto& p : personas) {
            std::string desc(text::trim(p.description));
            if (desc.empty())
                throw Error(Errc::malformed_record, "persona '" + p.persona_id + "' has a blank description");
            if (!descriptions.insert(desc).second)
                throw Error(Errc::duplicate_persona, "persona '" + p.persona_id + "' duplicates another description");
            p.description = desc;
            const std::string id = p.persona_id;
            if (!cat.by_id_.emplace(id, std::move(p)).second)
                throw Error(Errc::duplicate_persona, "persona_id '" + id + "' repeated");
        }
        return cat;
    }

    std::size_t size() const { return by_id_.size(); }
    bool empty() const { return by_id_.empty(); }
    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

    const Persona& at(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw Error(Errc::missing_input, "no persona '" + id + "'");
        return it->second;
    }

    std::vector<Persona> personas() const {
        std::vector<Persona> out;
        for (const auto& [id, p] : by_id_) out.push_back(p);
        return out;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [id, p] : by_id_) out.push_back(id);
        return out;
    }

    bool operator==(const PersonaCatalog&) const = default;

private:
    std::map<std::string, Persona> by_id_;
};

/// Persona file: one JSON object per line with persona_id and description,
/// optionally cluster_id and representativeness.
inline PersonaCatalog load_personas(const std::filesystem::path& source) {
    std::vector<Persona> personas;
    jsonl::for_each(source, [&](const json& j, std::size_t row) {
        auto fail = [&](const std::string& what) {
            throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": " + what);
        };
        if (!j.is_object()) fail("record must be an object");
        if (!j.contains("persona_id") || !j["persona_id"].is_string() || j["persona_id"].get<std::string>().empty())
            fail("missing persona_id");
        if (!j.contains("description") || !j["description"].is_string()) fail("missing description");
        Persona p;
        p.persona_id = j["persona_id"].get<std::string>();
        p.description = j["description"].get<std::string>();
        if (text::trim(p.description).empty()) fail("blank description for '" + p.persona_id + "'");
        if (j.contains("cluster_id") && !j["cluster_id"].is_null()) {
            if (!j["cluster_id"].is_number_integer()) fail("cluster_id must be an integer");
            p.cluster_id = j["cluster_id"].get<int>();
        }
        if (j.contains("representativeness") && !j["representativeness"].is_null()) {
            if (!j["representativeness"].is_number()) fail("representativeness must be a number");
            const double r = j["representativeness"].get<double>();
            if (r < 0.0 || r > 1.0) fail("representativeness outside [0, 1]");
            p.representativeness = r;
        }
        personas.push_back(std::move(p));
    });
    if (personas.empty()) throw Error(Errc::empty_catalog, source.string() + " contains no personas");
    return PersonaCatalog::from_personas(std::move(personas));
}

using EmbeddingTable = std::map<std::string, std::vector<double>>;

/// Sidecar embedding file: {"persona_id": ..., "embedding": [...]} per line.
inline EmbeddingTable load_persona_embeddings(const std::filesystem::path& source) {
    EmbeddingTable table;
    jsonl::for_each(source, [&](const json& j, std::size_t row) {
        if (!j.contains("persona_id") || !j.contains("embedding") || !j["embedding"].is_array())
            throw Error(Errc::malformed_record, "row " + std::to_string(row) + ": expected persona_id and embedding");
        table[j["persona_id"].get<std::string>()] = j["embedding"].get<std::vector<double>>();
    });
    return table;
}

namespace detail {

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

/// Greedy farthest-point selection under cosine distance. Starts from the
/// lexicographically smallest id; each step adds the persona whose distance to
/// its nearest selected persona is largest, ties going to the smaller id.
/// The procedure is fully deterministic, so `seed` only travels into run
/// manifests.
inline PersonaCatalog select_representatives(const PersonaCatalog& catalog, const EmbeddingTable& embeddings,
                                             std::size_t n, std::uint64_t seed) {
    (void)seed;
    const auto ids = catalog.ids();
    std::optional<std::size_t> dim;
    for (const auto& id : ids) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) throw Error(Errc::missing_embedding, "no embedding for persona '" + id + "'");
        if (dim && it->second.size() != *dim)
            throw Error(Errc::dimension_mismatch, "embedding for '" + id + "' has dimension " +
                                                      std::to_string(it->second.size()));
        dim = it->second.size();
    }
    const std::size_t target = std::min(n, ids.size());
    if (target == ids.size()) return catalog;

    std::vector<double> nearest(ids.size(), std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(ids.size(), false);
    std::vector<Persona> selected;
    std::size_t next = 0;
    for (std::size_t step = 0; step < target; ++step) {
        chosen[next] = true;
        selected.push_back(catalog.at(ids[next]));
        const auto& anchor = embeddings.at(ids[next]);
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (chosen[i]) continue;
            nearest[i] = std::min(nearest[i], detail::cosine_distance(embeddings.at(ids[i]), anchor));
            if (!best || nearest[i] > nearest[*best]) best = i;
        }
        if (!best) break;
        next = *best;
    }
    return PersonaCatalog::from_personas(std::move(selected));
}

}  // namespace synthtrips
