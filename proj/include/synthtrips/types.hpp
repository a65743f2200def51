#pragma once

#include "synthtrips/error.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace synthtrips {

/// Three-valued ordinal used for cost labels, budgets and popularity tiers.
enum class Level { low, medium, high };

enum class Month { jan, feb, mar, apr, may, jun, jul, aug, sep, oct, nov, dec };

enum class Season { low, shoulder, peak };

enum class Activity { see, do_, eat, drink, sleep, go };

enum class Interest { arts_entertainment, outdoors_recreation, food, nightlife_spot, shops_services };

enum class Complexity { easy, medium, hard, sustainable };

/// Generation setting: vanilla (no persona), persona zero-shot, persona one-shot.
enum class Setting { vanilla, persona_zero_shot, persona_one_shot };

enum class PersonaRating { not_aligned, partially_aligned, aligned, unclear };

enum class ParsePath { direct, pattern_extracted, llm_extracted, needs_manual };

namespace detail {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

template <typename E, std::size_t N>
constexpr std::string_view name_of(const NameTable<E, N>& table, E value) {
    for (const auto& [e, name] : table)
        if (e == value) return name;
    return "?";
}

template <typename E, std::size_t N>
constexpr std::optional<E> lookup(const NameTable<E, N>& table, std::string_view name) {
    for (const auto& [e, n] : table)
        if (n == name) return e;
    return std::nullopt;
}

inline constexpr NameTable<Level, 3> level_names{{
    {Level::low, "low"}, {Level::medium, "medium"}, {Level::high, "high"}}};

inline constexpr NameTable<Month, 12> month_names{{
    {Month::jan, "Jan"}, {Month::feb, "Feb"}, {Month::mar, "Mar"}, {Month::apr, "Apr"},
    {Month::may, "May"}, {Month::jun, "Jun"}, {Month::jul, "Jul"}, {Month::aug, "Aug"},
    {Month::sep, "Sep"}, {Month::oct, "Oct"}, {Month::nov, "Nov"}, {Month::dec, "Dec"}}};

inline constexpr NameTable<Season, 3> season_names{{
    {Season::low, "low"}, {Season::shoulder, "shoulder"}, {Season::peak, "peak"}}};

inline constexpr NameTable<Activity, 6> activity_names{{
    {Activity::see, "see"}, {Activity::do_, "do"}, {Activity::eat, "eat"},
    {Activity::drink, "drink"}, {Activity::sleep, "sleep"}, {Activity::go, "go"}}};

inline constexpr NameTable<Interest, 5> interest_names{{
    {Interest::arts_entertainment, "arts_entertainment"},
    {Interest::outdoors_recreation, "outdoors_recreation"},
    {Interest::food, "food"},
    {Interest::nightlife_spot, "nightlife_spot"},
    {Interest::shops_services, "shops_services"}}};

inline constexpr NameTable<Complexity, 4> complexity_names{{
    {Complexity::easy, "easy"}, {Complexity::medium, "medium"},
    {Complexity::hard, "hard"}, {Complexity::sustainable, "sustainable"}}};

inline constexpr NameTable<Setting, 3> setting_names{{
    {Setting::vanilla, "vanilla"},
    {Setting::persona_zero_shot, "persona_zero_shot"},
    {Setting::persona_one_shot, "persona_one_shot"}}};

// Wire names keep the option wording used in judge prompts and the rating UI.
inline constexpr NameTable<PersonaRating, 4> persona_rating_names{{
    {PersonaRating::not_aligned, "Not Aligned"},
    {PersonaRating::partially_aligned, "Partially Aligned"},
    {PersonaRating::aligned, "Aligned"},
    {PersonaRating::unclear, "Unclear"}}};

inline constexpr NameTable<ParsePath, 4> parse_path_names{{
    {ParsePath::direct, "direct"},
    {ParsePath::pattern_extracted, "pattern_extracted"},
    {ParsePath::llm_extracted, "llm_extracted"},
    {ParsePath::needs_manual, "needs_manual"}}};

}  // namespace detail

inline constexpr std::array<Level, 3> all_levels{Level::low, Level::medium, Level::high};
inline constexpr std::array<Month, 12> all_months{
    Month::jan, Month::feb, Month::mar, Month::apr, Month::may, Month::jun,
    Month::jul, Month::aug, Month::sep, Month::oct, Month::nov, Month::dec};
inline constexpr std::array<Interest, 5> all_interests{
    Interest::arts_entertainment, Interest::outdoors_recreation, Interest::food,
    Interest::nightlife_spot, Interest::shops_services};
inline constexpr std::array<Complexity, 4> all_complexities{
    Complexity::easy, Complexity::medium, Complexity::hard, Complexity::sustainable};
inline constexpr std::array<Setting, 3> all_settings{
    Setting::vanilla, Setting::persona_zero_shot, Setting::persona_one_shot};
inline constexpr std::array<PersonaRating, 4> all_persona_ratings{
    PersonaRating::not_aligned, PersonaRating::partially_aligned, PersonaRating::aligned,
    PersonaRating::unclear};

constexpr std::string_view to_string(Level v) { return detail::name_of(detail::level_names, v); }
constexpr std::string_view to_string(Month v) { return detail::name_of(detail::month_names, v); }
constexpr std::string_view to_string(Season v) { return detail::name_of(detail::season_names, v); }
constexpr std::string_view to_string(Activity v) { return detail::name_of(detail::activity_names, v); }
constexpr std::string_view to_string(Interest v) { return detail::name_of(detail::interest_names, v); }
constexpr std::string_view to_string(Complexity v) { return detail::name_of(detail::complexity_names, v); }
constexpr std::string_view to_string(Setting v) { return detail::name_of(detail::setting_names, v); }
constexpr std::string_view to_string(PersonaRating v) {
    return detail::name_of(detail::persona_rating_names, v);
}
constexpr std::string_view to_string(ParsePath v) { return detail::name_of(detail::parse_path_names, v); }

/// Parses a wire name into an enum; throws Error{malformed_record} on an unknown name.
template <typename E>
E parse_enum(std::string_view name);

#define SYNTHTRIPS_PARSE_ENUM(E, table)                                                   \
    template <>                                                                           \
    inline E parse_enum<E>(std::string_view name) {                                       \
        if (auto v = detail::lookup(detail::table, name)) return *v;                      \
        throw Error(Errc::malformed_record, "unknown " #E " value '" + std::string(name) + "'"); \
    }

SYNTHTRIPS_PARSE_ENUM(Level, level_names)
SYNTHTRIPS_PARSE_ENUM(Month, month_names)
SYNTHTRIPS_PARSE_ENUM(Season, season_names)
SYNTHTRIPS_PARSE_ENUM(Activity, activity_names)
SYNTHTRIPS_PARSE_ENUM(Interest, interest_names)
SYNTHTRIPS_PARSE_ENUM(Complexity, complexity_names)
SYNTHTRIPS_PARSE_ENUM(Setting, setting_names)
SYNTHTRIPS_PARSE_ENUM(PersonaRating, persona_rating_names)
SYNTHTRIPS_PARSE_ENUM(ParsePath, parse_path_names)

#undef SYNTHTRIPS_PARSE_ENUM

constexpr std::size_t index_of(Month m) { return static_cast<std::size_t>(m); }

constexpr std::string_view month_full_name(Month m) {
    constexpr std::array<std::string_view, 12> names{
        "January", "February", "March",     "April",   "May",      "June",
        "July",    "August",   "September", "October", "November", "December"};
    return names[index_of(m)];
}

constexpr bool uses_persona(Setting s) { return s != Setting::vanilla; }

}  // namespace synthtrips
