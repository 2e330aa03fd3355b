#include "longctx/packing.hpp"
#include "longctx/toydata.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::bpe;

namespace {

struct Fixture {
    std::vector<Document> docs;
    std::unique_ptr<CorpusIndex> corpus;
    ContextAssembly a;

    explicit Fixture(std::size_t words) {
        Rng rng(9);
        docs.push_back(make_document("books/x.txt", DocKind::book, toy::body_text(rng, toy::themes()[1], {"Ada Brook"}, words), bpe()));
        corpus = std::make_unique<CorpusIndex>(docs);
        a.pieces = {{docs[0].id, 0, docs[0].text.size()}};
        finalize(a, *corpus, bpe());
    }

    SynthRecord record(std::size_t n_pairs) const {
        SynthRecord r;
        r.assembly_id = a.id;
        r.task = TaskKind::MultiDetailQAHomogeneous;
        r.prompt_digest = "d";
        for (std::size_t i = 0; i < n_pairs; ++i)
            r.pairs.push_back({"Question number " + std::to_string(i) + " about the river?", "Answer " + std::to_string(i) + " is the tide.", {}});
        return r;
    }
};

}  // namespace

TEST(Pack, LayoutAlternatesAndStartsWithContext) {
    Fixture f(200);
    PackOptions po;
    po.window = {1, 100000};
    const auto out = pack_conversation(f.a, f.record(3), *f.corpus, bpe(), po);
    ASSERT_TRUE(out.sample) << out.skip_reason;
    const auto& s = *out.sample;
    ASSERT_EQ(s.turns.size(), 6u);
    EXPECT_TRUE(starts_with(s.turns[0].content, f.docs[0].text));
    EXPECT_NE(s.turns[0].content.find(std::string(kAnswerPreamble) + "\n\nQuestion number 0"), std::string::npos);
    EXPECT_EQ(s.turns[3].content, "Answer 1 is the tide.");
    EXPECT_EQ(s.total_tokens, count_turn_tokens(s.turns, bpe()));
    EXPECT_TRUE(validate_sample(s, po.window).empty());
}

TEST(Pack, DropsTrailingPairsToFitAndSkipsWhenImpossible) {
    Fixture f(200);
    PackOptions po;
    const std::size_t ctx = f.a.total_tokens;
    po.window = {ctx, ctx + 40};
    const auto out = pack_conversation(f.a, f.record(5), *f.corpus, bpe(), po);
    ASSERT_TRUE(out.sample) << out.skip_reason;
    EXPECT_LT(out.sample->turns.size(), 10u);
    EXPECT_EQ(out.warnings.size(), 1u);
    EXPECT_LE(out.sample->total_tokens, ctx + 40);

    po.window = {ctx / 2, ctx};
    const auto none = pack_conversation(f.a, f.record(2), *f.corpus, bpe(), po);
    EXPECT_FALSE(none.sample);
    EXPECT_NE(none.skip_reason.find("above window maximum"), std::string::npos);

    po.window = {ctx * 4, ctx * 5};
    const auto small = pack_conversation(f.a, f.record(2), *f.corpus, bpe(), po);
    EXPECT_FALSE(small.sample);
    EXPECT_NE(small.skip_reason.find("below window minimum"), std::string::npos);
}

TEST(Pack, Preconditions) {
    Fixture f(50);
    auto r = f.record(0);
    EXPECT_THROW(pack_conversation(f.a, r, *f.corpus, bpe()), PreconditionError);
    r = f.record(1);
    r.assembly_id = "ctx-other";
    EXPECT_THROW(pack_conversation(f.a, r, *f.corpus, bpe()), PreconditionError);
}

TEST(Validate, DetectsStructuralViolations) {
    ConversationSample s;
    s.id = "x";
    s.turns = {{"user", "a"}, {"user", "b"}};
    auto v = validate_sample(s, std::nullopt);
    EXPECT_EQ(v.size(), 2u);  // alternation and last turn
    s.turns = {{"assistant", "a"}};
    EXPECT_FALSE(validate_sample(s, std::nullopt).empty());
    s.origin = Origin::redpajama;
    EXPECT_TRUE(validate_sample(s, std::nullopt).empty());
    s.origin = Origin::synthetic;
    s.turns = {{"user", "q"}, {"assistant", "a"}};
    s.total_tokens = 10;
    EXPECT_FALSE(validate_sample(s, Window{20, 30}).empty());
    EXPECT_TRUE(validate_sample(s, Window{5, 30}).empty());
}

TEST(Dataset, WriteReadAndManifest) {
    test::TempDir tmp;
    Fixture f(100);
    PackOptions po;
    po.window = {1, 100000};
    const auto s = *pack_conversation(f.a, f.record(2), *f.corpus, bpe(), po).sample;
    const auto digest = write_dataset({s}, tmp / "d.jsonl", {{"note", "x"}});
    EXPECT_EQ(digest, sha256_hex(read_file(tmp / "d.jsonl")));
    EXPECT_EQ(read_dataset(tmp / "d.jsonl")[0], s);
    const auto m = json::parse(read_file(manifest_path(tmp / "d.jsonl")));
    EXPECT_EQ(m["note"], "x");
    write_file(tmp / "old.jsonl", "{\"schema_version\": 0, \"id\": \"x\"}\n");
    EXPECT_THROW(read_dataset(tmp / "old.jsonl"), ParseError);
}
