#pragma once

#include "synthtrips/synthtrips.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

namespace fs = std::filesystem;
namespace st = synthtrips;

inline fs::path data_dir() { return SYNTHTRIPS_DATA_DIR; }
inline fs::path fixture(const std::string& name) { return data_dir() / "fixtures" / name; }

inline const st::KnowledgeBase& kb12() {
    static const st::KnowledgeBase kb = st::load_kb(fixture("kb12.jsonl"));
    return kb;
}

inline const st::PersonaCatalog& personas6() {
    static const st::PersonaCatalog p = st::load_personas(fixture("personas6.jsonl"));
    return p;
}

inline const st::PromptFactory& prompts() {
    static const st::PromptFactory f(st::TemplateSet::load(data_dir() / "templates" / "v1"));
    return f;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("synthtrips-test-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

/// A mock-only run configuration over the fixtures, writing into `dir`.
inline st::json desk_config(const fs::path& dir) {
    return st::json{
        {"kb", fixture("kb12.jsonl").string()},
        {"personas", fixture("personas6.jsonl").string()},
        {"templates_dir", (data_dir() / "templates" / "v1").string()},
        {"names_dir", (data_dir() / "names").string()},
        {"store_dir", (dir / "store").string()},
        {"output_dir", (dir / "out").string()},
        {"seed", 7},
        {"backends",
         {{{"name", "mock-a"}, {"kind", "mock"}, {"model_id", "mock-a"}, {"seed", 1}},
          {{"name", "mock-b"}, {"kind", "mock"}, {"model_id", "mock-b"}, {"seed", 2}}}},
        {"judge", {{"kind", "mock"}, {"model_id", "mock-judge"}, {"seed", 3}}},
        {"recommender", {{"kind", "mock"}, {"model_id", "mock-rec"}, {"seed", 4}}},
        {"embedding", {{"kind", "mock"}, {"seed", 5}, {"dim", 256}}},
        {"timestamps", "fixed"},
        {"rec_shots", {0, 2}},
        {"retry", {{"max_attempts", 1}, {"base_delay_ms", 1}}},
    };
}

inline st::Config write_config(const fs::path& dir, const st::json& j) {
    const auto path = dir / "config.json";
    st::jsonl::write_file(path, j.dump(2));
    return st::load_config(path);
}

inline st::CityRecord make_city(const std::string& id, long long reviews, st::Level cost = st::Level::medium) {
    st::CityRecord c;
    c.city_id = id;
    c.name = id;
    c.country = "X";
    c.cost_label = cost;
    c.walkability = 50;
    c.aqi = 40;
    c.seasonality.fill(st::Season::shoulder);
    c.review_count = reviews;
    return c;
}

/// A stored query over a synthetic key; the persona only for persona settings.
inline st::QueryRecord make_query(const std::string& key_id, st::Setting setting, const std::string& model,
                                  const std::string& text, const std::string& persona = "p01") {
    st::QueryRecord q;
    q.key_id = key_id;
    q.setting = setting;
    q.model_id = model;
    q.query_id = st::make_query_id(key_id, setting, model);
    q.persona_id = st::uses_persona(setting) ? persona : "";
    q.query_text = text;
    q.raw_text = text;
    q.params.model_id = model;
    q.template_version = "v1";
    q.parse_path = st::ParsePath::direct;
    q.ground_truth_cities = {"paris", "tartu"};
    q.created_at = "2000-01-01T00:00:00Z";
    return q;
}

}  // namespace testing_support
