#include "support.hpp"

#include <gtest/gtest.h>

using namespace synthtrips;
using testing_support::kb12;
using testing_support::TempDir;

namespace {

/// Counts calls; answers with fixed vectors by text length.
class CountingProvider : public EmbeddingProvider {
public:
    std::string id() const override { return "counting"; }
    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        calls += texts.size();
        std::vector<std::vector<double>> out;
        for (const auto& t : texts) out.push_back({double(t.size()), 1.0, 0.5});
        return out;
    }
    std::size_t calls = 0;
};

class ShiftyProvider : public EmbeddingProvider {
public:
    std::string id() const override { return "shifty"; }
    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(std::vector<double>(2 + i, 1.0));
        return out;
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(Cosine, HandValues) {
    const EmbeddingVector x{{1, 0}, "t"}, y{{0, 1}, "t"}, z{{-1, 0}, "t"}, w{{3, 4}, "t"};
    EXPECT_DOUBLE_EQ(cosine(x, x), 1.0);
    EXPECT_DOUBLE_EQ(cosine(x, y), 0.0);
    EXPECT_DOUBLE_EQ(cosine(x, z), -1.0);
    EXPECT_NEAR(cosine(x, w), 0.6, 1e-12);
    EXPECT_THROW(cosine(x, EmbeddingVector{{1, 0, 0}, "t"}), Error);
}

TEST(MockEmbedding, DeterministicUnitVectors) {
    MockEmbeddingProvider a(3, 64), b(3, 64), c(4, 64);
    const auto va = embed({"cheap food in May", "quiet walkable town"}, a);
    const auto vb = embed({"cheap food in May", "quiet walkable town"}, b);
    for (std::size_t i = 0; i < va.size(); ++i) {
        EXPECT_EQ(va[i].values, vb[i].values);
        EXPECT_NEAR(l2_norm(va[i].values), 1.0, 1e-12);
        EXPECT_EQ(va[i].dim(), 64u);
    }
    EXPECT_NE(embed_one("cheap food", a).values, embed_one("cheap food", c).values);
}

TEST(MockEmbedding, BagOfWordsSemantics) {
    MockEmbeddingProvider p(1);
    EXPECT_NEAR(cosine(embed_one("food cheap", p), embed_one("Cheap, food!", p)), 1.0, 1e-12);
    const double near = cosine(embed_one("cheap food market", p), embed_one("cheap food stalls", p));
    const double far = cosine(embed_one("cheap food market", p), embed_one("alpine glacier hiking", p));
    EXPECT_GT(near, far);
}

TEST(MockEmbedding, LinearInTokenCounts) {
    MockEmbeddingProvider p(2, 16);
    const auto raw = p.encode({"a b a"})[0];
    const auto da = p.token_direction("a"), db = p.token_direction("b");
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(raw[i], 2 * da[i] + db[i], 1e-12);
}

TEST(Embed, RejectsEmptyBatchAndShiftingDimensions) {
    MockEmbeddingProvider p(1);
    EXPECT_THROW(embed({}, p), Error);
    ShiftyProvider s;
    try {
        embed({"a", "b"}, s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    }
}

TEST(Cache, AvoidsRecomputationAndPersists) {
    TempDir tmp;
    auto inner = std::make_shared<CountingProvider>();
    {
        CachedEmbeddingProvider cache(inner, tmp / "cache.jsonl");
        embed({"abc", "de", "abc"}, cache);
        EXPECT_EQ(inner->calls, 2u);
        embed({"de"}, cache);
        EXPECT_EQ(inner->calls, 2u);
    }
    CachedEmbeddingProvider reopened(inner, tmp / "cache.jsonl");
    EXPECT_EQ(reopened.size(), 2u);
    const auto v = embed({"abc"}, reopened);
    EXPECT_EQ(inner->calls, 2u);
    EXPECT_EQ(reopened.id(), "counting");
}

TEST(Index, SearchMatchesLinearScan) {
    MockEmbeddingProvider p(9);
    const auto index = build_index(kb12(), p);
    ASSERT_EQ(index.size(), 12u);
    const std::vector<std::string> queries{"cheap food markets", "jazz cellar nightlife", "botanical garden trail",
                                           "peak season in July", "Paris"};
    for (const auto& q : queries) {
        const auto qv = embed_one(q, p);
        std::vector<std::pair<double, std::string>> scan;
        for (std::size_t i = 0; i < index.size(); ++i)
            scan.push_back({-dot(qv.values, index.vectors()[i].values), index.documents()[i].doc_id});
        std::sort(scan.begin(), scan.end());
        const auto hits = semantic_retrieve(index, q, 5, p);
        ASSERT_EQ(hits.size(), 5u);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            EXPECT_EQ(hits[i].doc.doc_id, scan[i].second) << q;
            EXPECT_NEAR(hits[i].score, -scan[i].first, 1e-12);
        }
    }
}

TEST(Index, TiesBreakOnDocId) {
    const VectorIndex index({{"b", "b", "x"}, {"a", "a", "x"}, {"c", "c", "y"}},
                            {{{1, 0}, "t"}, {{1, 0}, "t"}, {{0, 1}, "t"}});
    const auto hits = index.search({{1, 0}, "t"}, 2);
    EXPECT_EQ(hits[0].doc.doc_id, "a");
    EXPECT_EQ(hits[1].doc.doc_id, "b");
}

TEST(Index, KLargerThanIndexReturnsAll) {
    MockEmbeddingProvider p(9);
    EXPECT_EQ(semantic_retrieve(build_index(kb12(), p), "x", 100, p).size(), 12u);
}

TEST(Index, EmptyAndMalformed) {
    MockEmbeddingProvider p(1);
    EXPECT_THROW(VectorIndex().search({{1}, "t"}, 1), Error);
    EXPECT_THROW(VectorIndex({{"a", "a", ""}}, {{{1}, "t"}}), Error);
    EXPECT_THROW(VectorIndex({{"a", "a", "x"}, {"a", "a", "y"}}, {{{1}, "t"}, {{1}, "t"}}), Error);
    EXPECT_THROW(VectorIndex({{"a", "a", "x"}}, {}), Error);
    EXPECT_THROW(semantic_retrieve(build_index(kb12(), p), "x", 0, p), Error);
}

TEST(Index, DocumentsAreFullCityRenderings) {
    MockEmbeddingProvider p(1);
    const auto index = build_index(kb12(), p);
    const auto& doc = index.documents().front();
    EXPECT_EQ(doc.rendered_text, city_document_text(kb12(), doc.city_id));
    EXPECT_NE(doc.rendered_text.find("walkability"), std::string::npos);
    EXPECT_NE(doc.rendered_text.find("seasons:"), std::string::npos);
}
