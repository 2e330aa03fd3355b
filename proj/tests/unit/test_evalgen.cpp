#include "longctx/evalgen.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::bpe;

TEST(Niah, DeskGridShapeAndInvariants) {
    const auto grid = NiahGrid::desk();
    ASSERT_EQ(grid.lengths.size(), 10u);
    EXPECT_EQ(grid.lengths.front(), 1024u);
    EXPECT_EQ(grid.lengths.back(), 16384u);
    ASSERT_EQ(grid.depths.size(), 11u);
    const auto xs = gen_niah(grid, bpe());
    ASSERT_EQ(xs.size(), 110u);
    std::set<std::string> ids;
    for (const auto& x : xs) {
        ids.insert(x.id);
        const auto c = check_niah_instance(x, grid.needle, bpe());
        EXPECT_TRUE(c.ok()) << x.id << ": " << c.detail;
        EXPECT_EQ(x.expected, grid.answer);
        EXPECT_EQ(x.question, grid.question);
    }
    EXPECT_EQ(ids.size(), 110u);
}

TEST(Niah, DepthExtremesAndDeterminism) {
    NiahGrid g;
    g.lengths = {2048};
    g.depths = {0.0, 1.0};
    const auto xs = gen_niah(g, bpe());
    EXPECT_TRUE(starts_with(xs[0].context, g.needle));
    const std::string tail(trim(xs[1].context));
    EXPECT_EQ(tail.substr(tail.size() - g.needle.size()), g.needle);
    EXPECT_EQ(gen_niah(g, bpe())[1].context, xs[1].context);
    EXPECT_EQ(xs[0].id, "niah-L2048-d000");
}

TEST(Niah, CheckerCatchesViolations) {
    NiahGrid g;
    g.lengths = {1024};
    g.depths = {0.5};
    auto x = gen_niah(g, bpe())[0];
    auto twice = x;
    twice.context += " " + g.needle;
    EXPECT_FALSE(check_niah_instance(twice, g.needle, bpe()).contained_once);
    auto longer = x;
    longer.meta["context_len"] = 2048;
    EXPECT_FALSE(check_niah_instance(longer, g.needle, bpe()).length_ok);
    auto moved = x;
    moved.meta["target_token_index"] = 10;
    moved.meta["needle_token_index"] = 10;
    EXPECT_FALSE(check_niah_instance(moved, g.needle, bpe()).placement_ok);
}

TEST(Niah, GridValidation) {
    NiahGrid g;
    g.lengths = {4096, 2048};
    EXPECT_THROW(g.validate(), PreconditionError);
    g = NiahGrid();
    g.depths = {0.5, 1.5};
    EXPECT_THROW(g.validate(), PreconditionError);
    g = NiahGrid();
    g.answer = "not in the needle";
    EXPECT_THROW(g.validate(), PreconditionError);
    EXPECT_EQ(linear_lengths(1024, 16384, 10)[1], 2731u);
}

TEST(Topics, FirstTopicIsVerbatimAndCountsMatch) {
    const auto pool = toy::topic_pool();
    const auto xs = gen_topic_retrieval(pool, default_topic_counts(), 7);
    ASSERT_EQ(xs.size(), 10u);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto n = default_topic_counts()[i];
        EXPECT_EQ(topic_sections(xs[i].context), n);
        EXPECT_NE(xs[i].context.find(xs[i].expected), std::string::npos);
        const auto first_user = xs[i].context.find("USER: ");
        EXPECT_NE(xs[i].context.find(xs[i].expected, first_user), std::string::npos);
        EXPECT_LT(xs[i].context.find(xs[i].expected), xs[i].context.find("ASSISTANT: "));
        const auto topics = xs[i].meta.at("topics").get<std::vector<std::string>>();
        EXPECT_EQ(std::set<std::string>(topics.begin(), topics.end()).size(), n);
    }
    EXPECT_EQ(gen_topic_retrieval(pool, {20}, 7)[0].context, xs[3].context);
    EXPECT_NE(gen_topic_retrieval(pool, {20}, 8)[0].context, xs[3].context);
}

TEST(Topics, Preconditions) {
    const auto pool = toy::topic_pool();
    EXPECT_THROW(gen_topic_retrieval(pool, {91}, 1), PreconditionError);
    EXPECT_THROW(gen_topic_retrieval(pool, {0}, 1), PreconditionError);
    auto dup = pool;
    dup[1].topic = dup[0].topic;
    EXPECT_THROW(gen_topic_retrieval(dup, {5}, 1), PreconditionError);
}

TEST(Instances, RoundTrip) {
    test::TempDir tmp;
    const auto xs = gen_topic_retrieval(toy::topic_pool(), {5, 10}, 7);
    write_instances(tmp / "x.jsonl", xs);
    const auto back = read_instances(tmp / "x.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].context, xs[1].context);
    EXPECT_EQ(back[1].meta, xs[1].meta);
}
