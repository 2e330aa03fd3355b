#include "longctx/clustering.hpp"
#include "longctx/mock.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::bpe;
using Points = std::vector<std::vector<double>>;

namespace {

double partition_inertia(const Points& pts, const std::vector<int>& labels, std::size_t k) {
    const std::size_t dim = pts[0].size();
    Points sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) sums[labels[i]][d] += pts[i][d];
        ++counts[labels[i]];
    }
    double s = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t d = 0; d < dim; ++d) {
            const double m = sums[labels[i]][d] / static_cast<double>(counts[labels[i]]);
            s += (pts[i][d] - m) * (pts[i][d] - m);
        }
    return s;
}

// Exhaustive search over all k^n labelings.
double optimal_inertia(const Points& pts, std::size_t k) {
    const std::size_t n = pts.size();
    std::vector<int> labels(n, 0);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        best = std::min(best, partition_inertia(pts, labels, k));
        std::size_t i = 0;
        while (i < n && labels[i] == static_cast<int>(k) - 1) labels[i++] = 0;
        if (i == n) break;
        ++labels[i];
    }
    return best;
}

}  // namespace

TEST(KMeans, MatchesBruteForceOptimumOnSmallInstances) {
    Rng rng(2024);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = 2 + rng.below(7);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(3, n));
        Points pts(n, std::vector<double>(2));
        for (auto& p : pts)
            for (auto& x : p) x = rng.uniform(-5, 5);
        KMeansOptions o;
        o.k = k;
        o.seed = derive_seed(7, std::to_string(inst));
        const auto r = kmeans(pts, o);
        const double opt = optimal_inertia(pts, k);
        EXPECT_LE(r.inertia, 1.05 * opt + 1e-12) << "instance " << inst << " n=" << n << " k=" << k;
        EXPECT_NEAR(r.inertia, partition_inertia(pts, r.labels, k), 1e-9);
    }
}

TEST(KMeans, FourPointFixture) {
    const Points pts = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
    KMeansOptions o;
    o.k = 2;
    const auto r = kmeans(pts, o);
    EXPECT_EQ(r.labels[0], r.labels[1]);
    EXPECT_EQ(r.labels[2], r.labels[3]);
    EXPECT_NE(r.labels[0], r.labels[2]);
    EXPECT_DOUBLE_EQ(r.inertia, 1.0);
}

TEST(KMeans, DeterministicAndTraceNonIncreasing) {
    Rng rng(1);
    Points pts(40, std::vector<double>(3));
    for (auto& p : pts)
        for (auto& x : p) x = rng.normal();
    KMeansOptions o;
    o.k = 4;
    o.seed = 11;
    const auto a = kmeans(pts, o), b = kmeans(pts, o);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.inertia, b.inertia);
    for (std::size_t i = 1; i < a.trace.size(); ++i) EXPECT_LE(a.trace[i], a.trace[i - 1] + 1e-12);
}

TEST(KMeans, Preconditions) {
    KMeansOptions o;
    o.k = 3;
    EXPECT_THROW(kmeans({{0.0}, {1.0}}, o), PreconditionError);
    o.k = 1;
    EXPECT_THROW(kmeans({{0.0}, {1.0, 2.0}}, o), PreconditionError);
    EXPECT_EQ(default_cluster_count(1), 1u);
    EXPECT_EQ(default_cluster_count(17), 3u);
}

TEST(Embeddings, BatchedCachedAndOrdered) {
    test::TempDir tmp;
    EndpointConfig ep;
    ep.id = "emb";
    ep.model_name = "m";
    ep.embedding_model = "e";
    auto transport = mock::embedder_transport(64);
    Gateway gw(ep, transport);
    EmbeddingCache cache(tmp / "emb.jsonl");
    std::vector<std::string> texts = {"sea harbour lantern", "sky cloud wind", "sea harbour lantern", "garden rose"};
    EmbedOptions eo;
    eo.batch_size = 2;
    const auto first = embed_batch(texts, gw, cache, eo, {"a", "b", "c", "d"});
    ASSERT_EQ(first.size(), 4u);
    for (const auto& it : first) ASSERT_TRUE(it.ok()) << it.error;
    EXPECT_EQ(first[0].value->values, first[2].value->values);
    EXPECT_EQ(first[3].value->doc_id, "d");
    EXPECT_EQ(transport->calls(), 2);  // three distinct texts, batch size 2

    EmbeddingCache reopened(tmp / "emb.jsonl");
    const auto second = embed_batch(texts, gw, reopened, eo);
    EXPECT_EQ(transport->calls(), 2);
    EXPECT_EQ(second[1].value->values, first[1].value->values);
}

TEST(Embeddings, FailedChunkReportedPerItem) {
    test::TempDir tmp;
    EndpointConfig ep;
    ep.model_name = "m";
    ep.retry.max_attempts = 1;
    Gateway gw(ep, std::make_shared<MockTransport>([](const std::string&, const json&) { return HttpResult{400, "bad", {}}; }));
    EmbeddingCache cache(tmp / "e.jsonl");
    const auto r = embed_batch({"x", "y"}, gw, cache);
    for (const auto& it : r) {
        EXPECT_FALSE(it.ok());
        EXPECT_NE(it.error.find("HTTP 400"), std::string::npos);
    }
}

TEST(Clustering, SeparatesTopicsAndRoundTrips) {
    std::vector<EmbeddingVector> vecs;
    const std::vector<std::string> sea = {"harbour tide gull sail", "tide sail harbour keel", "gull keel tide harbour"};
    const std::vector<std::string> garden = {"rose soil spade bloom", "bloom rose hedge soil", "spade hedge bloom rose"};
    for (std::size_t i = 0; i < 3; ++i) {
        vecs.push_back(EmbeddingVector::make("s" + std::to_string(i), hashed_bow_embedding(sea[i], 64)));
        vecs.push_back(EmbeddingVector::make("g" + std::to_string(i), hashed_bow_embedding(garden[i], 64)));
    }
    KMeansOptions o;
    o.k = 2;
    const auto a = cluster_documents(vecs, o);
    EXPECT_EQ(a.assignments.at("s0"), a.assignments.at("s1"));
    EXPECT_EQ(a.assignments.at("s0"), a.assignments.at("s2"));
    EXPECT_EQ(a.assignments.at("g0"), a.assignments.at("g2"));
    EXPECT_NE(a.assignments.at("s0"), a.assignments.at("g0"));
    const auto back = ClusterAssignment::from_json(json::parse(a.to_json().dump()));
    EXPECT_EQ(back.assignments, a.assignments);
    EXPECT_EQ(back.members(a.assignments.at("g1")).size(), 3u);
}

TEST(Clustering, EmbeddingMatrixRoundTrip) {
    test::TempDir tmp;
    std::vector<EmbeddingVector> vecs = {EmbeddingVector::make("a", {1.0, 2.0, 3.0}),
                                         EmbeddingVector::make("bb", {-1.5, 0.25, 4.0})};
    write_embedding_matrix(tmp / "m.bin", vecs);
    const auto back = read_embedding_matrix(tmp / "m.bin");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].doc_id, "bb");
    EXPECT_EQ(back[1].values, vecs[1].values);
    EXPECT_EQ(read_file(tmp / "m.bin").substr(0, 8), "LCEMBED1");
}

TEST(Pools, HeterogeneousContextsMixDocumentsInsideWindow) {
    std::vector<Document> docs;
    Rng rng(4);
    for (int i = 0; i < 8; ++i) {
        const auto& th = toy::themes()[0];
        docs.push_back(make_document("papers/p" + std::to_string(i) + ".txt", DocKind::paper,
                                     toy::body_text(rng, th, {}, 120 + 40 * (i % 3)), bpe()));
    }
    const CorpusIndex corpus(docs);
    ClusterAssignment ca;
    ca.k = 2;
    for (std::size_t i = 0; i < docs.size(); ++i) ca.assignments[docs[i].id] = i < 6 ? 0 : 1;
    AssemblyOptions ao;
    ao.window = {640, 800};
    const auto pools = form_heterogeneous_pools(ca, corpus, bpe(), 6, ao);
    ASSERT_FALSE(pools.assemblies.empty());
    for (const auto& a : pools.assemblies) {
        EXPECT_EQ(a.flavor, Flavor::heterogeneous);
        EXPECT_GE(a.doc_ids().size(), 2u);
        EXPECT_TRUE(ao.window.contains(a.total_tokens)) << a.total_tokens;
        const int c = ca.assignments.at(*a.doc_ids().begin());
        for (const auto& id : a.doc_ids()) EXPECT_EQ(ca.assignments.at(id), c);
    }
    EXPECT_THROW(form_heterogeneous_pools(ca, corpus, bpe(), 1, ao), PreconditionError);
}
