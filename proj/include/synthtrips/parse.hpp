#pragma once

// Turning raw completions into clean queries, judge verdicts and city lists.

#include "synthtrips/filters.hpp"
#include "synthtrips/llm.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/text.hpp"
#include "synthtrips/types.hpp"

#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <variant>
#include <vector>

namespace synthtrips {

struct ParsedQuery {
    std::string query_text;
    ParsePath parse_path = ParsePath::needs_manual;
    std::optional<std::string> notes;

    bool operator==(const ParsedQuery&) const = default;
};

/// Secondary extraction call; returns the model's answer for an extraction prompt.
using Extractor = std::function<std::string(const std::string& raw_text)>;

namespace parse_detail {

inline std::vector<std::string> lines_of(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto end = s.find('\n', pos);
        if (end == std::string_view::npos) end = s.size();
        out.emplace_back(text::trim(s.substr(pos, end - pos)));
        pos = end + 1;
    }
    return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && text::ascii_lower(s.substr(0, prefix.size())) == prefix;
}

inline const std::vector<std::string_view>& quote_pairs() {
    static const std::vector<std::string_view> q{"\"\"", "\u201c\u201d", "''", "**"};
    return q;
}

/// Removes one layer of matching quotes or emphasis markers around the text.
inline std::string unquote(std::string_view s) {
    s = text::trim(s);
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        for (std::string_view pair : quote_pairs()) {
            const std::size_t half = pair.size() / 2;
            const auto open = pair.substr(0, half), close = pair.substr(half);
            if (s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
                s.substr(s.size() - close.size()) == close) {
                s = text::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
                changed = true;
            }
        }
    }
    return std::string(s);
}

inline std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

inline std::optional<std::string> fenced_block(const std::string& s) {
    const auto a = s.find("```");
    if (a == std::string::npos) return std::nullopt;
    auto body_start = s.find('\n', a);
    const auto b = s.find("```", a + 3);
    if (b == std::string::npos) return std::nullopt;
    if (body_start == std::string::npos || body_start > b) body_start = a + 3;
    std::string body(text::trim(std::string_view(s).substr(body_start, b - body_start)));
    body = unquote(body);
    if (body.empty() || body.find('\n') != std::string::npos) return std::nullopt;
    return body;
}

/// "Query: ..." on one line, or a bare "Query:" label followed by the query on the next non-empty line.
inline std::optional<std::string> labeled_span(const std::string& s) {
    static const std::regex label(R"((?:^|[^A-Za-z])query(?:\s*\([^)]*\))?\**\s*:\s*\**\s*(.*))", std::regex::icase);
    const auto lines = lines_of(s);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::smatch m;
        if (!std::regex_search(lines[i], m, label)) continue;
        std::string v = unquote(m[1].str());
        if (!v.empty()) return v;
        for (std::size_t j = i + 1; j < lines.size(); ++j)
            if (!lines[j].empty()) return unquote(lines[j]);
    }
    return std::nullopt;
}

inline std::optional<std::string> quoted_span(const std::string& s) {
    static const std::regex quoted("\"([^\"\\n]+)\"|\u201c((?:(?!\u201d)[^\\n])+)\u201d");
    std::optional<std::string> best;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), quoted); it != std::sregex_iterator(); ++it) {
        std::string v(text::trim((*it)[1].matched ? (*it)[1].str() : (*it)[2].str()));
        if (word_count(v) >= 3 && (!best || v.size() > best->size())) best = v;
    }
    return best;
}

/// Single line with no preamble, label, fence, wrapping quotes or embedded quoted sentence.
inline bool is_clean_query(std::string_view s) {
    s = text::trim(s);
    if (s.empty() || s.find('\n') != std::string_view::npos) return false;
    if (s.find("```") != std::string_view::npos) return false;
    static const std::vector<std::string_view> preambles{"sure", "certainly", "of course", "okay", "here is",
                                                         "here's", "query:", "user query:", "answer:"};
    for (auto p : preambles)
        if (starts_with_ci(s, p)) return false;
    if (s.find(":\"") != std::string_view::npos || s.find(": \"") != std::string_view::npos ||
        s.find(": \u201c") != std::string_view::npos)
        return false;
    if (const auto colon = s.find(':'); colon != std::string_view::npos &&
                                        text::ascii_lower(s.substr(0, colon)).find("query") != std::string::npos)
        return false;
    if (quoted_span(std::string(s))) return false;
    return unquote(s) == s;
}

}  // namespace parse_detail

/// Fixed cascade: direct acceptance, pattern extraction, LLM extraction, manual.
inline ParsedQuery parse_query(const std::string& raw, const Extractor& extractor = nullptr) {
    using namespace parse_detail;
    if (is_clean_query(raw)) return {std::string(text::trim(raw)), ParsePath::direct, std::nullopt};

    for (auto stage : {&fenced_block, &labeled_span, &quoted_span}) {
        if (auto q = stage(raw); q && is_clean_query(*q)) return {*q, ParsePath::pattern_extracted, std::nullopt};
    }

    std::string note = "no direct or pattern match";
    if (extractor) {
        try {
            std::string q = unquote(extractor(raw));
            if (is_clean_query(q)) return {q, ParsePath::llm_extracted, std::nullopt};
            note = "extraction call returned no usable query";
        } catch (const std::exception& e) {
            note = std::string("extraction call failed: ") + e.what();
        }
    }
    return {"", ParsePath::needs_manual, note};
}

/// Extractor that routes through a gateway using the extraction template.
inline Extractor make_llm_extractor(const Gateway& gateway, const PromptFactory& prompts, GenerationParams params) {
    return [&gateway, &prompts, params](const std::string& raw) {
        return gateway.complete(prompts.extraction(raw), params).text;
    };
}

// ---------------------------------------------------------------------------
// Judge verdicts

struct JudgeVerdict {
    std::string query_id;
    JudgeTask task = JudgeTask::filter_groundedness;
    std::vector<std::string> matched_filters;  // filter task: labels, in filter-set order
    std::size_t filter_count = 0;              // filter task: |filters| judged
    std::optional<PersonaRating> rating;       // persona task
    std::string explanation;

    bool operator==(const JudgeVerdict&) const = default;
};

inline json to_json(const JudgeVerdict& v) {
    json j{{"query_id", v.query_id}, {"task", std::string(to_string(v.task))}, {"explanation", v.explanation}};
    if (v.task == JudgeTask::filter_groundedness) {
        j["matched_filters"] = v.matched_filters;
        j["filter_count"] = v.filter_count;
    } else {
        j["rating"] = v.rating ? json(std::string(to_string(*v.rating))) : json(nullptr);
    }
    return j;
}

inline JudgeVerdict judge_verdict_from_json(const json& j) {
    JudgeVerdict v;
    v.query_id = j.at("query_id").get<std::string>();
    v.task = parse_judge_task(j.at("task").get<std::string>());
    v.explanation = j.value("explanation", std::string{});
    if (v.task == JudgeTask::filter_groundedness) {
        v.matched_filters = j.at("matched_filters").get<std::vector<std::string>>();
        v.filter_count = j.at("filter_count").get<std::size_t>();
    } else if (j.contains("rating") && !j["rating"].is_null()) {
        v.rating = parse_enum<PersonaRating>(j["rating"].get<std::string>());
    }
    return v;
}

namespace parse_detail {

inline std::optional<std::string> field(const std::string& s, std::string_view name) {
    for (const auto& line : lines_of(s)) {
        std::string_view l = line;
        while (!l.empty() && (l.front() == '*' || l.front() == '-')) l.remove_prefix(1);
        l = text::trim(l);
        if (starts_with_ci(l, name) && l.size() > name.size() && l[name.size()] == ':')
            return unquote(l.substr(name.size() + 1));
    }
    return std::nullopt;
}

}  // namespace parse_detail

/// Reads "matched: a, b" and "explanation: ..." lines. Labels outside the
/// filter set are dropped, so the result is always a subset of it.
inline JudgeVerdict parse_filter_verdict(const std::string& raw, const FilterSet& filters) {
    JudgeVerdict v;
    v.task = JudgeTask::filter_groundedness;
    v.filter_count = filters.filter_count();
    v.explanation = parse_detail::field(raw, "explanation").value_or("");
    const auto matched = parse_detail::field(raw, "matched");
    if (!matched) return v;
    std::vector<std::string> said;
    for (auto& token : text::tokenize(*matched)) said.push_back(token);
    for (const auto& lp : filter_phrases(filters))
        if (std::find(said.begin(), said.end(), lp.label) != said.end()) v.matched_filters.push_back(lp.label);
    return v;
}

/// Reads the "rating:" line; unreadable answers count as Unclear.
inline JudgeVerdict parse_persona_verdict(const std::string& raw) {
    JudgeVerdict v;
    v.task = JudgeTask::persona_alignment;
    v.explanation = parse_detail::field(raw, "explanation").value_or("");
    const std::string hay = text::ascii_lower(parse_detail::field(raw, "rating").value_or(raw));
    // Longer labels first: "partially aligned" and "not aligned" contain "aligned".
    static const std::vector<std::pair<std::string_view, PersonaRating>> order{
        {"partially aligned", PersonaRating::partially_aligned},
        {"not aligned", PersonaRating::not_aligned},
        {"unclear", PersonaRating::unclear},
        {"aligned", PersonaRating::aligned}};
    v.rating = PersonaRating::unclear;
    for (const auto& [label, r] : order) {
        if (hay.find(label) != std::string::npos) {
            v.rating = r;
            break;
        }
    }
    return v;
}

/// Ranked city names from numbered, bulleted or comma-separated output.
inline std::vector<std::string> parse_city_list(const std::string& raw) {
    static const std::regex marker("^(?:\\d+[.)]|-|\\*|\u2022)\\s*");
    std::vector<std::string> out;
    auto lines = parse_detail::lines_of(raw);
    lines.erase(std::remove(lines.begin(), lines.end(), std::string{}), lines.end());
    if (lines.size() == 1 && lines[0].find(',') != std::string::npos) {
        std::vector<std::string> parts;
        std::size_t pos = 0;
        const std::string& l = lines[0];
        while (pos <= l.size()) {
            auto end = l.find(',', pos);
            if (end == std::string::npos) end = l.size();
            parts.emplace_back(text::trim(std::string_view(l).substr(pos, end - pos)));
            pos = end + 1;
        }
        lines = parts;
    }
    for (auto& line : lines) {
        std::string name = std::regex_replace(line, marker, "");
        name = parse_detail::unquote(name);
        if (name.empty() || name.back() == ':' || parse_detail::word_count(name) > 6) continue;
        out.push_back(name);
    }
    return out;
}

enum class ExpectedForm { single_query, judge_verdict, city_list };

using ParsedOutput = std::variant<ParsedQuery, JudgeVerdict, std::vector<std::string>>;

/// Dispatches on the expected form. Judge verdicts need the filter set for the
/// filter task; without one the text is read as a persona verdict.
inline ParsedOutput parse_output(const RawCompletion& raw, ExpectedForm form, const Extractor& extractor = nullptr,
                                 const std::optional<FilterSet>& filters = std::nullopt) {
    switch (form) {
    case ExpectedForm::single_query: return parse_query(raw.text, extractor);
    case ExpectedForm::judge_verdict:
        return filters ? parse_filter_verdict(raw.text, *filters) : parse_persona_verdict(raw.text);
    case ExpectedForm::city_list: return parse_city_list(raw.text);
    }
    return ParsedQuery{};
}

}  // namespace synthtrips
