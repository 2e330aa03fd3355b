#include "longctx/mixing.hpp"
#include "longctx/toydata.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::bpe;

namespace {

std::vector<ConversationSample> pool(const std::string& prefix, std::size_t n, Origin origin) {
    std::vector<ConversationSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        ConversationSample s;
        s.id = prefix + std::to_string(i);
        s.origin = origin;
        s.turns = origin == Origin::redpajama ? std::vector<ChatMessage>{{"assistant", "text"}}
                                              : std::vector<ChatMessage>{{"user", "q"}, {"assistant", "a"}};
        s.total_tokens = 2;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST(Mix, ExactCountsDeterministicAndShuffled) {
    const auto syn = pool("s", 60, Origin::synthetic), rp = pool("r", 80, Origin::redpajama), la = pool("l", 150, Origin::longalpaca);
    const MixSpec spec{35, 50, 120, 42};
    const auto a = mix(spec, syn, rp, la), b = mix(spec, syn, rp, la);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.samples.size(), 205u);
    EXPECT_EQ(a.manifest["per_origin"]["synthetic"], 35);
    EXPECT_EQ(a.manifest["per_origin"]["redpajama"], 50);
    EXPECT_EQ(a.manifest["per_origin"]["longalpaca"], 120);
    std::size_t first_block_synthetic = 0;
    for (std::size_t i = 0; i < 35; ++i) first_block_synthetic += a.samples[i].origin == Origin::synthetic;
    EXPECT_LT(first_block_synthetic, 35u);
    const auto c = mix({35, 50, 120, 43}, syn, rp, la);
    EXPECT_NE(a.samples, c.samples);
}

TEST(Mix, NoteRecordsTheTwoTotals) {
    const MixSpec spec;
    EXPECT_EQ(spec.synthetic_count + spec.redpajama_count + spec.longalpaca_count, 20500u);
    const auto note = composition_note(spec);
    EXPECT_NE(note.find("20000"), std::string::npos);
    EXPECT_NE(note.find("20500"), std::string::npos);
}

TEST(Mix, Failures) {
    const auto syn = pool("s", 5, Origin::synthetic), rp = pool("r", 5, Origin::redpajama), la = pool("l", 5, Origin::longalpaca);
    try {
        mix({6, 1, 1, 1}, syn, rp, la);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("requested 6"), std::string::npos);
    }
    auto tagged = syn;
    tagged[0].origin = Origin::longalpaca;
    EXPECT_THROW(mix({1, 1, 1, 1}, tagged, rp, la), Error);
    auto dup = la;
    dup[1].id = rp[0].id;
    EXPECT_THROW(mix({5, 5, 5, 1}, syn, rp, dup), Error);
}

TEST(Pools, AdaptersConvertNativeLayouts) {
    test::TempDir tmp;
    write_file(tmp / "rp.jsonl", to_jsonl(toy::redpajama_rows(4)));
    write_file(tmp / "la.jsonl", to_jsonl(toy::longalpaca_rows(3)));
    const auto rp = load_pool(tmp / "rp.jsonl", PoolAdapter::redpajama_text, Origin::redpajama, bpe());
    ASSERT_EQ(rp.size(), 4u);
    EXPECT_EQ(rp[0].turns.size(), 1u);
    EXPECT_EQ(rp[0].turns[0].role, "assistant");
    EXPECT_TRUE(validate_sample(rp[0], std::nullopt).empty());
    const auto la = load_pool(tmp / "la.jsonl", PoolAdapter::longalpaca, Origin::longalpaca, bpe());
    ASSERT_EQ(la.size(), 3u);
    EXPECT_EQ(la[0].turns[0].role, "user");
    EXPECT_TRUE(validate_sample(la[0], std::nullopt).empty());
    EXPECT_GT(la[0].total_tokens, 0u);
    EXPECT_THROW(pool_adapter_from_string("parquet"), ConfigError);
}

TEST(TrainConfig, ReferenceDefaultsAndDeviations) {
    test::TempDir tmp;
    TrainConfig c;
    EXPECT_TRUE(c.validate().empty());
    EXPECT_TRUE(c.deviations().empty());
    emit_train_config(c, tmp / "t.json");
    const auto j = json::parse(read_file(tmp / "t.json"));
    EXPECT_EQ(j["lora_rank"], 32);
    EXPECT_EQ(j["lora_alpha"], 16);
    EXPECT_EQ(j["rope_base"], 200000000);
    EXPECT_EQ(j["max_seq_len"], 81920);
    EXPECT_EQ(j["deviates_from_reference_recipe"], json::array());
    EXPECT_EQ(TrainConfig::from_json(j).to_json(), c.to_json());

    const auto changed = TrainConfig::from_json({{"lora_rank", 8}});
    ASSERT_EQ(changed.deviations().size(), 1u);
    EXPECT_NE(changed.deviations()[0].find("lora_rank"), std::string::npos);
    EXPECT_THROW(TrainConfig::from_json({{"lora_rnak", 8}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"lora_rank", "eight"}}), ConfigError);
    const auto bad = TrainConfig::from_json({{"rope_base", 1000.0}, {"lora_targets", {"mlp"}}});
    EXPECT_EQ(bad.validate().size(), 2u);
    EXPECT_THROW(emit_train_config(bad, tmp / "bad.json"), ConfigError);
}
