#pragma once

// Recommender harness: ask a backend for KB cities, resolve the names it
// returns, and summarize how popular the recommended cities are.

#include "synthtrips/error.hpp"
#include "synthtrips/kb.hpp"
#include "synthtrips/llm.hpp"
#include "synthtrips/metrics.hpp"
#include "synthtrips/parse.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/store.hpp"
#include "synthtrips/text.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

/// Maps free-form city names to KB ids: exact case-insensitive match, then a
/// diacritic-folded match, then the exonym table (e.g. Munich / München).
/// Names that still do not resolve are reported, never guessed.
class NameResolver {
public:
    NameResolver() = default;

    /// Reads fold.tsv (character -> ASCII replacement) and exonyms.tsv
    /// (alias -> name) from `dir`. Lines starting with '#' are comments.
    static NameResolver load(const std::filesystem::path& dir) {
        NameResolver r;
        for_each_row(dir / "fold.tsv", [&](const std::string& a, const std::string& b) {
            const auto cps = text::decode_utf8(a);
            if (cps.size() != 1) throw Error(Errc::malformed_record, "fold.tsv: '" + a + "' is not one character");
            r.fold_[cps[0]] = b;
        });
        for_each_row(dir / "exonyms.tsv", [&](const std::string& a, const std::string& b) { r.add_alias(a, b); });
        return r;
    }

    /// Aliases are symmetric.
    void add_alias(const std::string& a, const std::string& b) {
        const auto fa = fold(a), fb = fold(b);
        aliases_[fa].insert(fb);
        aliases_[fb].insert(fa);
    }

    void add_fold(char32_t c, std::string replacement) { fold_[c] = std::move(replacement); }

    /// Lowercase, diacritics folded, whitespace collapsed, trailing dots dropped.
    std::string fold(std::string_view name) const {
        std::string out;
        bool space = false;
        for (char32_t c : text::decode_utf8(text::trim(name))) {
            if (c == ' ' || c == '\t' || c == '-') {
                space = !out.empty();
                continue;
            }
            if (space) out += ' ';
            space = false;
            if (auto it = fold_.find(c); it != fold_.end()) {
                out += it->second;
            } else {
                text::append_utf8(out, text::to_lower(c));
            }
        }
        while (!out.empty() && out.back() == '.') out.pop_back();
        return out;
    }

    std::optional<std::string> resolve(const std::string& raw, const KnowledgeBase& kb) const {
        for (const auto& candidate : candidates(raw)) {
            if (auto id = resolve_exact(candidate, kb)) return id;
        }
        return std::nullopt;
    }

private:
    template <typename Fn>
    static void for_each_row(const std::filesystem::path& path, Fn&& fn) {
        std::ifstream in(path);
        if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw Error(Errc::malformed_record, path.string() + ": expected two columns");
            fn(std::string(text::trim(std::string_view(line).substr(0, tab))),
               std::string(text::trim(std::string_view(line).substr(tab + 1))));
        }
    }

    /// The name as given, without a parenthetical suffix, without a ", Country" suffix.
    static std::vector<std::string> candidates(const std::string& raw) {
        std::vector<std::string> out{std::string(text::trim(raw))};
        std::string s = out.front();
        if (auto p = s.find('('); p != std::string::npos && p > 0) {
            s = std::string(text::trim(std::string_view(s).substr(0, p)));
            out.push_back(s);
        }
        if (auto c = s.find(','); c != std::string::npos && c > 0)
            out.emplace_back(text::trim(std::string_view(s).substr(0, c)));
        return out;
    }

    std::optional<std::string> resolve_exact(const std::string& name, const KnowledgeBase& kb) const {
        const std::string lower = text::to_lower(name);
        for (const auto& [id, c] : kb.cities())
            if (text::to_lower(c.name) == lower) return id;
        const std::string folded = fold(name);
        std::map<std::string, std::string> by_fold;
        for (const auto& [id, c] : kb.cities()) by_fold.emplace(fold(c.name), id);
        if (auto it = by_fold.find(folded); it != by_fold.end()) return it->second;
        if (auto al = aliases_.find(folded); al != aliases_.end()) {
            for (const auto& alt : al->second)
                if (auto it = by_fold.find(alt); it != by_fold.end()) return it->second;
        }
        return std::nullopt;
    }

    std::map<char32_t, std::string> fold_;
    std::map<std::string, std::set<std::string>> aliases_;
};

/// KB city names in id order, as offered to the recommender.
inline std::vector<std::string> kb_city_names(const KnowledgeBase& kb) {
    std::vector<std::string> names;
    for (const auto& [id, c] : kb.cities()) names.push_back(c.name);
    return names;
}

/// Resolves each recommended name; duplicates resolve once.
inline std::vector<std::string> resolve_names(const std::vector<std::string>& names, const KnowledgeBase& kb,
                                              const NameResolver& resolver,
                                              std::vector<std::string>* unresolved = nullptr) {
    std::vector<std::string> ids;
    for (const auto& n : names) {
        if (auto id = resolver.resolve(n, kb)) {
            if (std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.push_back(*id);
        } else if (unresolved) {
            unresolved->push_back(n);
        }
    }
    return ids;
}

struct RecommendOptions {
    unsigned shots = 0;
    bool grounding_requested = false;
};

inline RecResult recommend(const QueryRecord& query, const KnowledgeBase& kb, const Gateway& gateway,
                           const PromptFactory& prompts, const NameResolver& resolver, const GenerationParams& params,
                           const RecommendOptions& opts = {}, std::vector<std::string>* unresolved = nullptr) {
    const PromptBundle bundle = prompts.recommendation(query.query_text, kb_city_names(kb), opts.shots);
    const RawCompletion rc = gateway.complete(bundle, params);
    RecResult r;
    r.query_id = query.query_id;
    r.shots = opts.shots;
    r.model_id = rc.model_id;
    r.grounding_requested = opts.grounding_requested;
    r.recommended = parse_city_list(rc.text);
    r.matched_city_ids = resolve_names(r.recommended, kb, resolver, unresolved);
    return r;
}

/// Per (recommender model, shots): mean list length, share of recommended
/// names found in the KB, and share of matched cities in the high popularity
/// tier, overall and on queries that asked for low popularity. Shares pool
/// all names (or matched ids) of the group. `popularity_of` maps query ids to
/// the popularity filter of their key function.
inline std::vector<MetricReport> bias_report(const std::vector<RecResult>& results, const KnowledgeBase& kb,
                                             const std::map<std::string, Level>& popularity_of) {
    if (results.empty()) throw Error(Errc::empty_input, "bias report over no results");
    std::map<std::pair<std::string, unsigned>, std::vector<const RecResult*>> groups;
    for (const auto& r : results) groups[{r.model_id, r.shots}].push_back(&r);

    std::vector<MetricReport> out;
    for (const auto& [key, rs] : groups) {
        const std::string section = "shots=" + std::to_string(key.second);
        std::vector<double> lengths;
        std::size_t names = 0, matched = 0, high = 0, low_q_matched = 0, low_q_high = 0;
        for (const auto* r : rs) {
            lengths.push_back(static_cast<double>(r->recommended.size()));
            names += r->recommended.size();
            matched += r->matched_city_ids.size();
            const auto pop = popularity_of.find(r->query_id);
            const bool low_query = pop != popularity_of.end() && pop->second == Level::low;
            for (const auto& id : r->matched_city_ids) {
                const bool is_high = kb.popularity_tier(id) == Level::high;
                high += is_high;
                if (low_query) {
                    ++low_q_matched;
                    low_q_high += is_high;
                }
            }
        }
        auto add = [&](const std::string& metric, double value, std::size_t n) {
            MetricReport m = make_report(key.first, "all", "all", metric, value, n);
            m.section = section;
            out.push_back(std::move(m));
        };
        auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
        add("rec_mean_list_length", stable_mean(lengths), rs.size());
        if (names > 0) add("rec_in_kb_fraction", frac(matched, names), names);
        if (matched > 0) add("rec_high_popularity_share", frac(high, matched), matched);
        if (low_q_matched > 0) add("rec_high_popularity_share_low_queries", frac(low_q_high, low_q_matched), low_q_matched);
    }
    std::size_t kb_high = 0;
    for (const auto& [id, tier] : kb.popularity_tiers()) kb_high += tier == Level::high;
    MetricReport ref = make_report("kb", "all", "all", "kb_high_tier_share",
                                   static_cast<double>(kb_high) / static_cast<double>(kb.size()), kb.size());
    out.push_back(ref);
    return out;
}

}  // namespace synthtrips
