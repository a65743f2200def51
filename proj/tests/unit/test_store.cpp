#include "support.hpp"

#include <gtest/gtest.h>

using namespace synthtrips;
using testing_support::make_query;
using testing_support::TempDir;

namespace {

StoreOptions fast() { return {StoreMode::write, false, fixed_clock()}; }

Errc error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::empty_input;  // sentinel: nothing thrown
}

}  // namespace

TEST(Store, PutGetAndIdempotentReput) {
    TempDir tmp;
    DatasetStore store(tmp / "s", fast());
    const auto q = make_query("k1", Setting::persona_zero_shot, "m", "cheap food in May");
    EXPECT_TRUE(store.put_query(q));
    EXPECT_FALSE(store.put_query(q));
    auto again = q;
    again.created_at = "2020-05-05T00:00:00Z";
    EXPECT_FALSE(store.put_query(again));
    EXPECT_TRUE(store.has_query("k1", Setting::persona_zero_shot, "m"));
    EXPECT_FALSE(store.has_query("k1", Setting::vanilla, "m"));
    ASSERT_EQ(store.get_queries().size(), 1u);
    EXPECT_EQ(store.get_queries()[0], q);
}

TEST(Store, ConflictingRecordRejected) {
    TempDir tmp;
    DatasetStore store(tmp / "s", fast());
    store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "one"));
    EXPECT_EQ(error_of([&] { store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "two")); }),
              Errc::conflicting_record);
}

TEST(Store, FilterQueries) {
    TempDir tmp;
    DatasetStore store(tmp / "s", fast());
    store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
    store.put_query(make_query("k1", Setting::vanilla, "m", "b"));
    store.put_query(make_query("k2", Setting::vanilla, "n", "c"));
    EXPECT_EQ(store.get_queries({std::string("k1"), {}, {}}).size(), 2u);
    EXPECT_EQ(store.get_queries({{}, Setting::vanilla, {}}).size(), 2u);
    EXPECT_EQ(store.get_queries({{}, {}, std::string("n")}).size(), 1u);
}

TEST(Store, ReopenSeesPersistedRecords) {
    TempDir tmp;
    {
        DatasetStore store(tmp / "s", fast());
        store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
    }
    DatasetStore store(tmp / "s", {StoreMode::read, false, fixed_clock()});
    EXPECT_EQ(store.get_queries().size(), 1u);
    EXPECT_EQ(error_of([&] { store.put_query(make_query("k2", Setting::persona_zero_shot, "m", "b")); }), Errc::io_error);
}

TEST(Store, TornTailDiscardedAndRepaired) {
    TempDir tmp;
    {
        DatasetStore store(tmp / "s", fast());
        store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
    }
    const auto file = tmp / "s" / "queries.jsonl";
    const std::string intact = jsonl::read_file(file);
    jsonl::write_file(file, intact + R"({"query_id":"q2","key_id":"k2","se)");
    {
        DatasetStore store(tmp / "s", fast());
        EXPECT_EQ(store.get_queries().size(), 1u);
        EXPECT_EQ(jsonl::read_file(file), intact);
        store.put_query(make_query("k2", Setting::persona_zero_shot, "m", "b"));
    }
    DatasetStore store(tmp / "s", fast());
    EXPECT_EQ(store.get_queries().size(), 2u);
}

TEST(Store, CorruptMiddleLineIsAnError) {
    TempDir tmp;
    {
        DatasetStore store(tmp / "s", fast());
        store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
    }
    const auto file = tmp / "s" / "queries.jsonl";
    jsonl::write_file(file, "{not json\n" + jsonl::read_file(file));
    EXPECT_EQ(error_of([&] { DatasetStore s(tmp / "s", fast()); }), Errc::malformed_record);
}

TEST(Store, SecondWriterIsLockedOut) {
    TempDir tmp;
    DatasetStore first(tmp / "s", fast());
    EXPECT_EQ(error_of([&] { DatasetStore second(tmp / "s", fast()); }), Errc::io_error);
    EXPECT_NO_THROW(DatasetStore(tmp / "s", {StoreMode::read, false, fixed_clock()}));
}

TEST(Store, ExportImportRoundTripIsByteExact) {
    TempDir tmp;
    {
        DatasetStore store(tmp / "a", fast());
        // inserted out of key order; exports are sorted
        store.put_query(make_query("k3", Setting::vanilla, "m", "c"));
        store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
        store.put_query(make_query("k2", Setting::persona_one_shot, "n", "b"));
        KeyFunction k{"k1", "p01", FilterSet{}, true};
        store.put_key(k);
        store.export_to(tmp / "export1");
    }
    DatasetStore copy(tmp / "b", fast());
    copy.import_from(tmp / "export1");
    copy.export_to(tmp / "export2");
    for (const char* f : {"queries.jsonl", "keys.jsonl", "manifest.json", "sessions.jsonl"})
        EXPECT_EQ(jsonl::read_file(tmp / "export1" / f), jsonl::read_file(tmp / "export2" / f)) << f;
    const std::string exported = jsonl::read_file(tmp / "export1" / "queries.jsonl");
    EXPECT_LT(exported.find("\"k1\""), exported.find("\"k3\""));
    EXPECT_EQ(jsonl::read_json_file(tmp / "export1" / "manifest.json")["counts"]["queries"], 3);
}

TEST(Store, ImportRejectsWrongSchema) {
    TempDir tmp;
    jsonl::write_file(tmp / "x" / "manifest.json", R"({"schema_version":"9"})");
    DatasetStore store(tmp / "s", fast());
    EXPECT_EQ(error_of([&] { store.import_from(tmp / "x"); }), Errc::malformed_record);
}

TEST(Store, StatsCountsAndEmptyStore) {
    TempDir tmp;
    DatasetStore store(tmp / "s", fast());
    EXPECT_EQ(error_of([&] { compute_stats(store); }), Errc::empty_store);
    FilterSet f;
    f.popularity = Level::high;
    f.prefs = {PrefFilter::budget(Level::low)};
    store.put_key({"k1", "p01", f, true});
    store.put_query(make_query("k1", Setting::persona_zero_shot, "m", "a"));
    store.put_query(make_query("k1", Setting::vanilla, "m", "b"));
    auto q = make_query("k2", Setting::vanilla, "n", "");
    q.parse_path = ParsePath::needs_manual;
    q.ground_truth_cities = {"x"};
    store.put_query(q);
    const auto s = compute_stats(store);
    EXPECT_EQ(s.total_queries, 3u);
    EXPECT_EQ(s.total_keys, 2u);
    EXPECT_EQ(s.keys_per_tier.at(Level::high), 1u);
    EXPECT_EQ(s.queries_per_setting.at(Setting::vanilla), 2u);
    EXPECT_EQ(s.queries_per_model.at("m"), 2u);
    EXPECT_EQ(s.queries_per_parse_path.at(ParsePath::needs_manual), 1u);
    EXPECT_NEAR(s.mean_ground_truth_size, 5.0 / 3.0, 1e-12);
    EXPECT_EQ(to_json(s)["keys_per_tier"]["low"], 0);
}

TEST(Store, TypedRecordsRoundTrip) {
    TempDir tmp;
    DatasetStore store(tmp / "s", fast());
    JudgeVerdict v;
    v.query_id = "q1";
    v.filter_count = 3;
    v.matched_filters = {"budget"};
    store.put_verdict({v, "judge", ""});
    ASSERT_EQ(store.get_verdicts().size(), 1u);
    EXPECT_EQ(store.get_verdicts()[0].verdict, v);
    EXPECT_EQ(store.get_verdicts()[0].created_at, "2000-01-01T00:00:00Z");
    store.put_rec_result({"q1", {"Paris"}, {"paris"}, 2, "rec", true, ""});
    EXPECT_EQ(store.get_rec_results()[0].shots, 2u);
    store.put_session({"s1", "alice", {"q1"}, json{{"m", 1}}, 5, ""});
    store.put_rating({"s1", {"alice", "q1", 3, PersonaRating::aligned, 4, 5}, ""});
    EXPECT_EQ(store.get_ratings()[0].rating.persona_rating, PersonaRating::aligned);
    EXPECT_EQ(store.get_sessions()[0].seed, 5u);
}
