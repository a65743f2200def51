#pragma once

// Append-only JSONL dataset store: key functions, contexts, queries, judge
// verdicts, recommendation results, expert ratings and evaluation sessions.

#include "synthtrips/error.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/llm.hpp"
#include "synthtrips/metrics.hpp"
#include "synthtrips/parse.hpp"
#include "synthtrips/types.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

inline constexpr const char* store_schema_version = "1";

// ---------------------------------------------------------------------------
// Clock

using Clock = std::function<std::string()>;

inline std::string rfc3339_utc(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Clock system_clock() {
    return [] { return rfc3339_utc(std::chrono::system_clock::now()); };
}

/// Always the same instant; makes exports byte-reproducible.
inline Clock fixed_clock(std::string timestamp = "2000-01-01T00:00:00Z") {
    return [ts = std::move(timestamp)] { return ts; };
}

// ---------------------------------------------------------------------------
// Records

struct QueryRecord {
    std::string query_id;
    std::string key_id;
    std::string persona_id;
    Setting setting = Setting::vanilla;
    std::string query_text;
    std::string raw_text;
    std::string model_id;
    GenerationParams params;
    std::string template_version;
    ParsePath parse_path = ParsePath::needs_manual;
    std::vector<std::string> ground_truth_cities;
    std::string created_at;

    bool operator==(const QueryRecord&) const = default;
};

inline std::string make_query_id(const std::string& key_id, Setting setting, const std::string& model_id) {
    return "q" + hash_parts({key_id, to_string(setting), model_id}).substr(0, 16);
}

inline json to_json(const QueryRecord& q) {
    return json{{"query_id", q.query_id},
                {"key_id", q.key_id},
                {"persona_id", q.persona_id},
                {"setting", to_string(q.setting)},
                {"query_text", q.query_text},
                {"raw_text", q.raw_text},
                {"model_id", q.model_id},
                {"params", to_json(q.params)},
                {"template_version", q.template_version},
                {"parse_path", to_string(q.parse_path)},
                {"ground_truth_cities", q.ground_truth_cities},
                {"created_at", q.created_at}};
}

inline QueryRecord query_record_from_json(const json& j) {
    QueryRecord q;
    q.query_id = j.at("query_id").get<std::string>();
    q.key_id = j.at("key_id").get<std::string>();
    q.persona_id = j.value("persona_id", std::string{});
    q.setting = parse_enum<Setting>(j.at("setting").get<std::string>());
    q.query_text = j.at("query_text").get<std::string>();
    q.raw_text = j.value("raw_text", std::string{});
    q.model_id = j.at("model_id").get<std::string>();
    q.params = generation_params_from_json(j.at("params"));
    q.template_version = j.at("template_version").get<std::string>();
    q.parse_path = parse_enum<ParsePath>(j.at("parse_path").get<std::string>());
    q.ground_truth_cities = j.at("ground_truth_cities").get<std::vector<std::string>>();
    q.created_at = j.value("created_at", std::string{});
    return q;
}

struct StoredVerdict {
    JudgeVerdict verdict;
    std::string judge_model_id;
    std::string created_at;

    bool operator==(const StoredVerdict&) const = default;
};

inline json to_json(const StoredVerdict& v) {
    json j = to_json(v.verdict);
    j["judge_model_id"] = v.judge_model_id;
    j["created_at"] = v.created_at;
    return j;
}

inline StoredVerdict stored_verdict_from_json(const json& j) {
    return {judge_verdict_from_json(j), j.at("judge_model_id").get<std::string>(), j.value("created_at", std::string{})};
}

struct RecResult {
    std::string query_id;
    std::vector<std::string> recommended;
    std::vector<std::string> matched_city_ids;
    unsigned shots = 0;
    std::string model_id;
    bool grounding_requested = false;
    std::string created_at;

    bool operator==(const RecResult&) const = default;
};

inline json to_json(const RecResult& r) {
    return json{{"query_id", r.query_id},
                {"recommended", r.recommended},
                {"matched_city_ids", r.matched_city_ids},
                {"shots", r.shots},
                {"model_id", r.model_id},
                {"grounding_requested", r.grounding_requested},
                {"created_at", r.created_at}};
}

inline RecResult rec_result_from_json(const json& j) {
    RecResult r;
    r.query_id = j.at("query_id").get<std::string>();
    r.recommended = j.at("recommended").get<std::vector<std::string>>();
    r.matched_city_ids = j.at("matched_city_ids").get<std::vector<std::string>>();
    r.shots = j.at("shots").get<unsigned>();
    r.model_id = j.at("model_id").get<std::string>();
    r.grounding_requested = j.value("grounding_requested", false);
    r.created_at = j.value("created_at", std::string{});
    return r;
}

struct RatingRecord {
    std::string session_id;
    ExpertRating rating;
    std::string created_at;

    bool operator==(const RatingRecord&) const = default;
};

inline json to_json(const RatingRecord& r) {
    json j = to_json(r.rating);
    j["session_id"] = r.session_id;
    j["created_at"] = r.created_at;
    return j;
}

inline RatingRecord rating_record_from_json(const json& j) {
    return {j.at("session_id").get<std::string>(), expert_rating_from_json(j), j.value("created_at", std::string{})};
}

struct SessionRecord {
    std::string session_id;
    std::string rater_id;
    std::vector<std::string> assigned_query_ids;
    json sample_spec;
    std::uint64_t seed = 0;
    std::string created_at;

    bool operator==(const SessionRecord&) const = default;
};

inline json to_json(const SessionRecord& s) {
    return json{{"session_id", s.session_id},   {"rater_id", s.rater_id},
                {"assigned_query_ids", s.assigned_query_ids}, {"sample_spec", s.sample_spec},
                {"seed", s.seed},                {"created_at", s.created_at}};
}

inline SessionRecord session_record_from_json(const json& j) {
    SessionRecord s;
    s.session_id = j.at("session_id").get<std::string>();
    s.rater_id = j.at("rater_id").get<std::string>();
    s.assigned_query_ids = j.at("assigned_query_ids").get<std::vector<std::string>>();
    s.sample_spec = j.value("sample_spec", json::object());
    s.seed = j.value("seed", std::uint64_t{0});
    s.created_at = j.value("created_at", std::string{});
    return s;
}

// ---------------------------------------------------------------------------
// Tables

namespace store_detail {

/// Record content without its write timestamp; re-puts compare on this.
inline json content_of(json j) {
    if (j.is_object()) j.erase("created_at");
    return j;
}

inline void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ENOSPC || errno == EDQUOT) throw Error(Errc::storage_full, "no space left writing " + path.string());
            throw Error(Errc::io_error, "write to " + path.string() + " failed: " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

}  // namespace store_detail

/// One JSONL file with a unique-key index kept in memory.
class Table {
public:
    Table(std::filesystem::path path, std::function<std::string(const json&)> key_of)
        : path_(std::move(path)), key_of_(std::move(key_of)) {}

    ~Table() {
        if (fd_ >= 0) ::close(fd_);
    }
    Table(const Table&) = delete;
    Table& operator=(const Table&) = delete;

    /// Reads the file. A torn final line (crash mid-append) is discarded and
    /// cut from the file when `repair` is set; any other bad line is an error.
    void load(bool repair) {
        rows_.clear();
        if (!std::filesystem::exists(path_)) return;
        const std::string content = jsonl::read_file(path_);
        std::size_t pos = 0, line_no = 0, good_end = 0;
        while (pos < content.size()) {
            ++line_no;
            const auto nl = content.find('\n', pos);
            if (nl == std::string::npos) break;  // unterminated tail: the append never finished
            const bool last = nl + 1 == content.size();
            json j;
            try {
                j = json::parse(content.substr(pos, nl - pos));
            } catch (const json::exception&) {
                if (last) break;
                throw Error(Errc::malformed_record, path_.string() + ":" + std::to_string(line_no) + ": unreadable record");
            }
            insert_loaded(j);
            good_end = pos = nl + 1;
        }
        if (good_end < content.size() && repair) std::filesystem::resize_file(path_, good_end);
    }

    /// Returns true when the record was new. Identical re-puts are no-ops;
    /// a different record under an existing key is a conflict.
    bool put(const json& record, bool durable) {
        const std::string key = key_of_(record);
        if (auto it = rows_.find(key); it != rows_.end()) {
            if (store_detail::content_of(it->second) == store_detail::content_of(record)) return false;
            throw Error(Errc::conflicting_record, path_.filename().string() + ": key '" + key + "' already holds a different record");
        }
        if (fd_ < 0) {
            std::filesystem::create_directories(path_.parent_path());
            fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
            if (fd_ < 0) throw Error(Errc::io_error, "cannot open " + path_.string() + ": " + std::strerror(errno));
        }
        store_detail::write_all(fd_, jsonl::dump(record) + "\n", path_);
        if (durable && ::fsync(fd_) != 0) throw Error(Errc::io_error, "fsync " + path_.string() + " failed");
        rows_.emplace(key, record);
        return true;
    }

    const json* get(const std::string& key) const {
        auto it = rows_.find(key);
        return it == rows_.end() ? nullptr : &it->second;
    }

    /// Records in ascending key order.
    const std::map<std::string, json>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    std::string export_text() const {
        std::string out;
        for (const auto& [k, j] : rows_) out += jsonl::dump(j) + "\n";
        return out;
    }

private:
    void insert_loaded(const json& j) {
        const std::string key = key_of_(j);
        if (auto it = rows_.find(key); it != rows_.end()) {
            if (store_detail::content_of(it->second) != store_detail::content_of(j))
                throw Error(Errc::conflicting_record, path_.string() + ": conflicting records under key '" + key + "'");
            return;
        }
        rows_.emplace(key, j);
    }

    std::filesystem::path path_;
    std::function<std::string(const json&)> key_of_;
    std::map<std::string, json> rows_;
    int fd_ = -1;
};

enum class RecordType { keys, contexts, queries, verdicts, rec_results, ratings, sessions };

inline constexpr std::array<RecordType, 7> all_record_types{RecordType::keys,     RecordType::contexts,
                                                            RecordType::queries,  RecordType::verdicts,
                                                            RecordType::rec_results, RecordType::ratings,
                                                            RecordType::sessions};

constexpr std::string_view to_string(RecordType t) {
    switch (t) {
    case RecordType::keys: return "keys";
    case RecordType::contexts: return "contexts";
    case RecordType::queries: return "queries";
    case RecordType::verdicts: return "verdicts";
    case RecordType::rec_results: return "rec_results";
    case RecordType::ratings: return "ratings";
    case RecordType::sessions: return "sessions";
    }
    return "?";
}

inline std::string record_key(RecordType t, const json& j) {
    auto s = [&](const char* f) { return j.at(f).get<std::string>(); };
    switch (t) {
    case RecordType::keys: return s("key_id");
    case RecordType::contexts: return s("key_id");
    case RecordType::queries: return s("key_id") + "|" + s("setting") + "|" + s("model_id");
    case RecordType::verdicts: return s("query_id") + "|" + s("task") + "|" + s("judge_model_id");
    case RecordType::rec_results:
        return s("query_id") + "|" + std::to_string(j.at("shots").get<unsigned>()) + "|" + s("model_id");
    case RecordType::ratings: return s("session_id") + "|" + s("query_id");
    case RecordType::sessions: return s("session_id");
    }
    return {};
}

struct QueryFilter {
    std::optional<std::string> key_id;
    std::optional<Setting> setting;
    std::optional<std::string> model_id;
};

struct DatasetStats {
    std::size_t total_queries = 0;
    std::size_t total_keys = 0;
    std::map<Level, std::size_t> keys_per_tier;
    std::map<Setting, std::size_t> queries_per_setting;
    std::map<std::string, std::size_t> queries_per_model;
    std::map<ParsePath, std::size_t> queries_per_parse_path;
    double mean_ground_truth_size = 0;

    bool operator==(const DatasetStats&) const = default;
};

inline json to_json(const DatasetStats& s) {
    json tiers = json::object(), settings = json::object(), paths = json::object();
    for (Level l : all_levels) tiers[std::string(to_string(l))] = s.keys_per_tier.count(l) ? s.keys_per_tier.at(l) : 0;
    for (Setting st : all_settings)
        settings[std::string(to_string(st))] = s.queries_per_setting.count(st) ? s.queries_per_setting.at(st) : 0;
    for (const auto& [p, n] : s.queries_per_parse_path) paths[std::string(to_string(p))] = n;
    return json{{"total_queries", s.total_queries},
                {"total_keys", s.total_keys},
                {"keys_per_tier", tiers},
                {"queries_per_setting", settings},
                {"queries_per_model", s.queries_per_model},
                {"queries_per_parse_path", paths},
                {"mean_ground_truth_size", s.mean_ground_truth_size}};
}

enum class StoreMode { read, write };

struct StoreOptions {
    StoreMode mode = StoreMode::write;
    bool durable = true;  // fsync after every append
    Clock clock = system_clock();
};

/// Directory of JSONL tables. Writers take an exclusive advisory lock on the
/// directory; readers do not lock and see the snapshot taken at open time.
class DatasetStore {
public:
    using Mode = StoreMode;
    using Options = StoreOptions;

    explicit DatasetStore(std::filesystem::path dir, Options opts = {}) : dir_(std::move(dir)), opts_(std::move(opts)) {
        if (opts_.mode == Mode::write) {
            std::filesystem::create_directories(dir_);
            lock_fd_ = ::open((dir_ / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
            if (lock_fd_ < 0) throw Error(Errc::io_error, "cannot create lock in " + dir_.string());
            if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
                ::close(lock_fd_);
                throw Error(Errc::io_error, "store " + dir_.string() + " is locked by another writer");
            }
        }
        for (RecordType t : all_record_types) {
            auto table = std::make_unique<Table>(dir_ / (std::string(to_string(t)) + ".jsonl"),
                                                 [t](const json& j) { return record_key(t, j); });
            table->load(opts_.mode == Mode::write);
            tables_.emplace(t, std::move(table));
        }
    }

    ~DatasetStore() {
        if (lock_fd_ >= 0) {
            ::flock(lock_fd_, LOCK_UN);
            ::close(lock_fd_);
        }
    }
    DatasetStore(const DatasetStore&) = delete;
    DatasetStore& operator=(const DatasetStore&) = delete;

    const std::filesystem::path& dir() const { return dir_; }
    std::string now() const { return opts_.clock(); }

    bool put(RecordType t, const json& record) {
        if (opts_.mode != Mode::write) throw Error(Errc::io_error, "store opened read-only");
        std::lock_guard lock(mu_);
        return tables_.at(t)->put(record, opts_.durable);
    }

    std::size_t count(RecordType t) const {
        std::lock_guard lock(mu_);
        return tables_.at(t)->size();
    }

    std::optional<json> get(RecordType t, const std::string& key) const {
        std::lock_guard lock(mu_);
        const json* j = tables_.at(t)->get(key);
        return j ? std::optional<json>(*j) : std::nullopt;
    }

    std::vector<json> all(RecordType t) const {
        std::lock_guard lock(mu_);
        std::vector<json> out;
        for (const auto& [k, j] : tables_.at(t)->rows()) out.push_back(j);
        return out;
    }

    // Typed helpers ---------------------------------------------------------

    bool put_key(const KeyFunction& k) { return put(RecordType::keys, to_json(k)); }
    bool put_context(const GroundingContext& c) { return put(RecordType::contexts, to_json(c)); }

    bool put_query(QueryRecord q) {
        if (q.created_at.empty()) q.created_at = now();
        return put(RecordType::queries, to_json(q));
    }

    bool has_query(const std::string& key_id, Setting s, const std::string& model_id) const {
        return get(RecordType::queries, key_id + "|" + std::string(to_string(s)) + "|" + model_id).has_value();
    }

    std::vector<QueryRecord> get_queries(const QueryFilter& f = {}) const {
        std::vector<QueryRecord> out;
        for (const auto& j : all(RecordType::queries)) {
            QueryRecord q = query_record_from_json(j);
            if (f.key_id && q.key_id != *f.key_id) continue;
            if (f.setting && q.setting != *f.setting) continue;
            if (f.model_id && q.model_id != *f.model_id) continue;
            out.push_back(std::move(q));
        }
        return out;
    }

    std::vector<KeyFunction> get_keys() const {
        std::vector<KeyFunction> out;
        for (const auto& j : all(RecordType::keys)) out.push_back(key_function_from_json(j));
        return out;
    }

    std::map<std::string, GroundingContext> get_contexts() const {
        std::map<std::string, GroundingContext> out;
        for (const auto& j : all(RecordType::contexts)) {
            auto c = grounding_context_from_json(j);
            out.emplace(c.key_id, std::move(c));
        }
        return out;
    }

    bool put_verdict(StoredVerdict v) {
        if (v.created_at.empty()) v.created_at = now();
        return put(RecordType::verdicts, to_json(v));
    }

    std::vector<StoredVerdict> get_verdicts() const {
        std::vector<StoredVerdict> out;
        for (const auto& j : all(RecordType::verdicts)) out.push_back(stored_verdict_from_json(j));
        return out;
    }

    bool put_rec_result(RecResult r) {
        if (r.created_at.empty()) r.created_at = now();
        return put(RecordType::rec_results, to_json(r));
    }

    std::vector<RecResult> get_rec_results() const {
        std::vector<RecResult> out;
        for (const auto& j : all(RecordType::rec_results)) out.push_back(rec_result_from_json(j));
        return out;
    }

    bool put_rating(RatingRecord r) {
        if (r.created_at.empty()) r.created_at = now();
        return put(RecordType::ratings, to_json(r));
    }

    std::vector<RatingRecord> get_ratings() const {
        std::vector<RatingRecord> out;
        for (const auto& j : all(RecordType::ratings)) out.push_back(rating_record_from_json(j));
        return out;
    }

    bool put_session(SessionRecord s) {
        if (s.created_at.empty()) s.created_at = now();
        return put(RecordType::sessions, to_json(s));
    }

    std::vector<SessionRecord> get_sessions() const {
        std::vector<SessionRecord> out;
        for (const auto& j : all(RecordType::sessions)) out.push_back(session_record_from_json(j));
        return out;
    }

    // Export / import ---------------------------------------------------------

    /// One file per record type, sorted by key, plus manifest.json.
    void export_to(const std::filesystem::path& out_dir) const {
        std::lock_guard lock(mu_);
        std::filesystem::create_directories(out_dir);
        json counts = json::object();
        for (RecordType t : all_record_types) {
            const auto& table = *tables_.at(t);
            jsonl::write_file(out_dir / (std::string(to_string(t)) + ".jsonl"), table.export_text());
            counts[std::string(to_string(t))] = table.size();
        }
        jsonl::write_file(out_dir / "manifest.json",
                          json{{"schema_version", store_schema_version}, {"counts", counts}}.dump(2) + "\n");
    }

    /// Loads an export into this store; records already present must match.
    void import_from(const std::filesystem::path& in_dir) {
        const json manifest = jsonl::read_json_file(in_dir / "manifest.json");
        if (manifest.value("schema_version", std::string{}) != store_schema_version)
            throw Error(Errc::malformed_record, "export schema_version mismatch");
        for (RecordType t : all_record_types) {
            const auto path = in_dir / (std::string(to_string(t)) + ".jsonl");
            if (!std::filesystem::exists(path)) continue;
            jsonl::for_each(path, [&](const json& j, std::size_t) { put(t, j); });
        }
    }

private:
    std::filesystem::path dir_;
    Options opts_;
    int lock_fd_ = -1;
    mutable std::mutex mu_;
    std::map<RecordType, std::unique_ptr<Table>> tables_;
};

/// Counts over the stored queries; key tiers come from the key table.
inline DatasetStats compute_stats(const DatasetStore& store) {
    const auto queries = store.get_queries();
    if (queries.empty()) throw Error(Errc::empty_store, "store has no queries");
    std::map<std::string, Level> tier_of;
    for (const auto& k : store.get_keys()) tier_of[k.key_id] = k.filters.popularity;

    DatasetStats s;
    std::set<std::string> keys;
    std::vector<double> gt_sizes;
    for (const auto& q : queries) {
        ++s.total_queries;
        ++s.queries_per_setting[q.setting];
        ++s.queries_per_model[q.model_id];
        ++s.queries_per_parse_path[q.parse_path];
        gt_sizes.push_back(static_cast<double>(q.ground_truth_cities.size()));
        if (keys.insert(q.key_id).second) {
            auto it = tier_of.find(q.key_id);
            if (it != tier_of.end()) ++s.keys_per_tier[it->second];
        }
    }
    s.total_keys = keys.size();
    s.mean_ground_truth_size = stable_mean(gt_sizes);
    return s;
}

}  // namespace synthtrips
