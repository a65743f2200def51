#pragma once

// Embedding providers, a persistent vector cache and an exact cosine index
// over per-city context documents.

#include "synthtrips/error.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/kb.hpp"
#include "synthtrips/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace synthtrips {

struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

inline double l2_norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Scales to unit length; the zero vector stays zero.
inline std::vector<double> normalized(std::vector<double> v) {
    const double n = l2_norm(v);
    if (n > 0)
        for (double& x : v) x /= n;
    return v;
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw Error(Errc::dimension_mismatch,
                    "cosine of vectors with dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    /// Raw vectors, one per text, in order. Normalization happens in embed().
    virtual std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) = 0;
};

/// One unit vector per text, in order. Every vector must share one dimension.
inline std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider) {
    if (texts.empty()) throw Error(Errc::empty_input, "embed needs at least one text");
    auto raw = provider.encode(texts);
    if (raw.size() != texts.size())
        throw Error(Errc::transport, "provider returned " + std::to_string(raw.size()) + " vectors for " +
                                         std::to_string(texts.size()) + " texts");
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (auto& v : raw) {
        if (v.empty() || (!out.empty() && v.size() != out.front().dim()))
            throw Error(Errc::dimension_mismatch, "provider " + provider.id() + " changed dimension mid-batch");
        out.push_back({normalized(std::move(v)), provider.id()});
    }
    return out;
}

inline EmbeddingVector embed_one(const std::string& text, EmbeddingProvider& provider) {
    return embed({text}, provider).front();
}

/// Seeded random projection of the token multiset: every distinct token maps
/// to a fixed pseudo-random direction, weighted by its count.
class MockEmbeddingProvider : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::uint64_t seed, std::size_t dim = 256) : seed_(seed), dim_(dim) {
        if (dim_ == 0) throw Error(Errc::config_invalid, "embedding dimension must be positive");
    }

    std::string id() const override { return "mock-embed:" + std::to_string(dim_) + ":" + std::to_string(seed_); }

    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(encode_one(t));
        return out;
    }

    /// Pseudo-random direction of one token, components uniform in [-1, 1).
    std::vector<double> token_direction(const std::string& token) const {
        Rng rng(hash64({std::to_string(seed_), token}));
        std::vector<double> v(dim_);
        for (double& x : v) x = 2.0 * rng.unit() - 1.0;
        return v;
    }

private:
    std::vector<double> encode_one(const std::string& text) const {
        std::map<std::string, int> counts;
        for (auto& tok : text::tokenize(text)) ++counts[tok];
        if (counts.empty()) counts["<empty>"] = 1;
        std::vector<double> v(dim_, 0.0);
        for (const auto& [tok, n] : counts) {
            const auto d = token_direction(tok);
            for (std::size_t i = 0; i < dim_; ++i) v[i] += n * d[i];
        }
        return v;
    }

    std::uint64_t seed_;
    std::size_t dim_;
};

/// Memoizes an inner provider. Entries are keyed by (provider id, text hash)
/// and optionally persisted as one JSONL file.
class CachedEmbeddingProvider : public EmbeddingProvider {
public:
    explicit CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                     std::optional<std::filesystem::path> cache_file = std::nullopt)
        : inner_(std::move(inner)), file_(std::move(cache_file)) {
        if (file_ && std::filesystem::exists(*file_)) {
            jsonl::for_each(*file_, [&](const json& j, std::size_t) {
                cache_[j.at("key").get<std::string>()] = j.at("values").get<std::vector<double>>();
            });
        }
    }

    std::string id() const override { return inner_->id(); }

    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        std::lock_guard lock(mu_);
        std::vector<std::string> keys, missing;
        for (const auto& t : texts) {
            keys.push_back(hash_parts({inner_->id(), sha256_hex(t)}));
            if (!cache_.count(keys.back()) &&
                std::find(missing.begin(), missing.end(), t) == missing.end())
                missing.push_back(t);
        }
        if (!missing.empty()) {
            auto fresh = inner_->encode(missing);
            std::string lines;
            for (std::size_t i = 0; i < missing.size(); ++i) {
                const auto key = hash_parts({inner_->id(), sha256_hex(missing[i])});
                cache_[key] = fresh.at(i);
                lines += jsonl::dump(json{{"key", key}, {"values", fresh[i]}}) + "\n";
            }
            if (file_) append(lines);
        }
        std::vector<std::vector<double>> out;
        for (const auto& k : keys) out.push_back(cache_.at(k));
        return out;
    }

    std::size_t size() const { return cache_.size(); }

private:
    void append(const std::string& lines) {
        std::filesystem::create_directories(file_->parent_path().empty() ? "." : file_->parent_path());
        std::ofstream os(*file_, std::ios::binary | std::ios::app);
        os << lines;
        if (!os) throw Error(Errc::io_error, "cannot append to " + file_->string());
    }

    std::shared_ptr<EmbeddingProvider> inner_;
    std::optional<std::filesystem::path> file_;
    std::map<std::string, std::vector<double>> cache_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Index

struct ContextDocument {
    std::string doc_id;
    std::string city_id;
    std::string rendered_text;

    bool operator==(const ContextDocument&) const = default;
};

struct ScoredDocument {
    ContextDocument doc;
    double score = 0;
};

/// Exact cosine search; immutable once built.
class VectorIndex {
public:
    VectorIndex() = default;

    VectorIndex(std::vector<ContextDocument> docs, std::vector<EmbeddingVector> vectors)
        : docs_(std::move(docs)), vectors_(std::move(vectors)) {
        if (docs_.size() != vectors_.size()) throw Error(Errc::dimension_mismatch, "documents and vectors differ in count");
        std::set<std::string> ids;
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            if (docs_[i].rendered_text.empty())
                throw Error(Errc::malformed_record, "document '" + docs_[i].doc_id + "' has no text");
            if (!ids.insert(docs_[i].doc_id).second)
                throw Error(Errc::malformed_record, "document id '" + docs_[i].doc_id + "' repeated");
            if (vectors_[i].dim() != vectors_.front().dim())
                throw Error(Errc::dimension_mismatch, "index vectors differ in dimension");
        }
    }

    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    const std::vector<ContextDocument>& documents() const { return docs_; }
    const std::vector<EmbeddingVector>& vectors() const { return vectors_; }

    /// Top-k by cosine; ties go to the smaller doc_id.
    std::vector<ScoredDocument> search(const EmbeddingVector& query, std::size_t k) const {
        if (docs_.empty()) throw Error(Errc::empty_index, "index has no documents");
        std::vector<ScoredDocument> scored;
        scored.reserve(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) scored.push_back({docs_[i], cosine(query, vectors_[i])});
        const auto better = [](const ScoredDocument& a, const ScoredDocument& b) {
            return a.score != b.score ? a.score > b.score : a.doc.doc_id < b.doc.doc_id;
        };
        const std::size_t n = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
        scored.resize(n);
        return scored;
    }

private:
    std::vector<ContextDocument> docs_;
    std::vector<EmbeddingVector> vectors_;
};

/// The document text for one city: its complete fact rendering.
inline std::string city_document_text(const KnowledgeBase& kb, const std::string& city_id,
                                      std::size_t pois_per_interest = 3) {
    return render_city_facts(kb, city_id, FactView::full(), pois_per_interest);
}

/// One document per city, doc_id = city_id.
inline VectorIndex build_index(const KnowledgeBase& kb, EmbeddingProvider& provider, std::size_t pois_per_interest = 3) {
    std::vector<ContextDocument> docs;
    std::vector<std::string> texts;
    for (const auto& [id, c] : kb.cities()) {
        docs.push_back({id, id, city_document_text(kb, id, pois_per_interest)});
        texts.push_back(docs.back().rendered_text);
    }
    return VectorIndex(std::move(docs), embed(texts, provider));
}

inline std::vector<ScoredDocument> semantic_retrieve(const VectorIndex& index, const std::string& query_text,
                                                     std::size_t k, EmbeddingProvider& provider) {
    if (index.empty()) throw Error(Errc::empty_index, "index has no documents");
    if (k == 0) throw Error(Errc::empty_input, "k must be positive");
    return index.search(embed_one(query_text, provider), k);
}

}  // namespace synthtrips
