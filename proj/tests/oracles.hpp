#pragma once

// Brute-force reference implementations used as test oracles. They read the
// raw fixture files and share no code with the library they check.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracles {

struct RawCity {
    std::string id;
    std::string cost;
    double walk = 0, aqi = 0;
    std::map<std::string, std::string> season;  // "Jan" -> "low"
    long long reviews = 0;
    std::set<std::string> interests;
};

/// Cities of a KB JSONL file, header line skipped.
inline std::vector<RawCity> raw_cities(const std::filesystem::path& path) {
    std::vector<RawCity> out;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        RawCity c;
        c.id = j["city_id"];
        c.cost = j["cost_label"];
        c.walk = j["walkability"];
        c.aqi = j["aqi"];
        c.reviews = j["review_count"];
        for (auto& [m, s] : j["seasonality"].items()) c.season[m] = s;
        for (auto& p : j["pois"]) c.interests.insert(p["interest"].get<std::string>());
        out.push_back(c);
    }
    return out;
}

inline std::string tier_of(const RawCity& c, const std::vector<RawCity>& all) {
    long long lo = c.reviews, hi = c.reviews;
    for (const auto& o : all) lo = std::min(lo, o.reviews), hi = std::max(hi, o.reviews);
    const double s = hi == lo ? 0.0 : double(c.reviews - lo) / double(hi - lo);
    return s < 1.0 / 3.0 ? "low" : s < 2.0 / 3.0 ? "medium" : "high";
}

/// Filter values as plain strings; empty means "not set".
struct RawFilters {
    std::string popularity, budget, month, interest, sust_kind;
    double threshold = 0;
};

/// Ids of every city satisfying all filters, sorted.
inline std::vector<std::string> scan_retrieve(const RawFilters& f, const std::vector<RawCity>& all) {
    std::vector<std::string> ids;
    for (const auto& c : all) {
        if (tier_of(c, all) != f.popularity) continue;
        if (!f.budget.empty() && c.cost != f.budget) continue;
        if (!f.interest.empty() && !c.interests.count(f.interest)) continue;
        if (f.sust_kind == "walkability" && c.walk < f.threshold) continue;
        if (f.sust_kind == "aqi" && c.aqi > f.threshold) continue;
        if (f.sust_kind == "seasonality") {
            if (!f.month.empty()) {
                if (c.season.at(f.month) != "low") continue;
            } else {
                bool any = false;
                for (auto& [m, s] : c.season) any |= s == "low";
                if (!any) continue;
            }
        }
        ids.push_back(c.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

inline int count_ngram(const std::vector<std::string>& toks, const std::vector<std::string>& g) {
    int c = 0;
    for (std::size_t i = 0; i + g.size() <= toks.size(); ++i)
        if (std::equal(g.begin(), g.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) ++c;
    return c;
}

/// Sentence BLEU of group[i] against all other members, by direct scans.
/// Expects lowercase, space-separated, punctuation-free text.
inline double self_bleu(const std::vector<std::string>& group, std::size_t i, int max_order = 4) {
    const auto hyp = words(group[i]);
    if (hyp.empty()) return 0.0;
    std::vector<std::vector<std::string>> refs;
    for (std::size_t j = 0; j < group.size(); ++j)
        if (j != i) refs.push_back(words(group[j]));
    double log_p = 0;
    for (int n = 1; n <= max_order; ++n) {
        int clipped = 0, total = 0;
        for (std::size_t s = 0; s + n <= hyp.size(); ++s) {
            const std::vector<std::string> g(hyp.begin() + s, hyp.begin() + s + n);
            bool seen = false;
            for (std::size_t t = 0; t < s; ++t)
                if (std::equal(g.begin(), g.end(), hyp.begin() + t)) seen = true;
            if (seen) continue;
            int best = 0;
            for (const auto& r : refs) best = std::max(best, count_ngram(r, g));
            const int own = count_ngram(hyp, g);
            clipped += std::min(own, best);
            total += own;
        }
        const double p = total == 0 || clipped == 0 ? 1e-9 : double(clipped) / total;
        log_p += std::log(p) / max_order;
    }
    const std::size_t c = hyp.size();
    std::size_t r = refs.front().size();
    for (const auto& ref : refs) {
        const auto d = [c](std::size_t x) { return x > c ? x - c : c - x; };
        if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - double(r) / double(c));
    return bp * std::exp(log_p);
}

inline double diversity(const std::vector<std::string>& group) {
    double s = 0;
    for (std::size_t i = 0; i < group.size(); ++i) s += self_bleu(group, i);
    return std::clamp(1.0 - s / double(group.size()), 0.0, 1.0);
}

}  // namespace oracles
