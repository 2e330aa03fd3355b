#include "longctx/pipeline.hpp"

#include <sys/wait.h>

#include "test_util.hpp"

using namespace longctx;

namespace {

int cli(const std::string& args) {
    const std::string cmd = std::string(LONGCTX_CLI) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

RunConfig toy_config(const fs::path& dir, std::vector<std::string> overrides = {}, bool mock = true) {
    toy::CorpusSpec spec;
    const auto p = write_toy_setup(dir, spec, 40, 40, {20, 20, 20, 42});
    ConfigSource src;
    src.file = p;
    src.mock = mock;
    src.overrides = std::move(overrides);
    return load_run_config(src);
}

}  // namespace

TEST(Config, DefaultsParse) {
    const auto c = load_run_config({}, false);
    EXPECT_EQ(c.window.min_tokens, 65536u);
    EXPECT_EQ(c.window.max_tokens, 81920u);
    EXPECT_EQ(c.context_window().max_tokens, 81920u - 10240u);
    EXPECT_EQ(c.mix.synthetic_count + c.mix.redpajama_count + c.mix.longalpaca_count, 20500u);
    EXPECT_EQ(c.niah.depths.size(), 11u);
    EXPECT_EQ(c.topic_counts, default_topic_counts());
    EXPECT_TRUE(c.endpoints.at("model").mock.empty());
}

TEST(Config, LayeringOverridesAndMocks) {
    test::TempDir tmp;
    write_file(tmp / "c.json", R"({"window": {"max_tokens": 90000}, "seed": 5, "output_dir": "o"})");
    ConfigSource src;
    src.file = tmp / "c.json";
    src.overrides = {"seed=9", "synthesis.temperature=0.2", "endpoints.model.mock=fail-deep"};
    src.mock = true;
    const auto c = load_run_config(src, false);
    EXPECT_EQ(c.window.max_tokens, 90000u);
    EXPECT_EQ(c.window.min_tokens, 65536u);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_DOUBLE_EQ(c.synth.prompt.temperature, 0.2);
    EXPECT_EQ(c.output_dir, (tmp / "o").lexically_normal());
    EXPECT_EQ(c.endpoints.at("model").mock, "fail-deep");
    EXPECT_EQ(c.endpoints.at("teacher").mock, "teacher");
    EXPECT_EQ(c.raw["seed"], 9);
}

TEST(Config, ErrorsNameTheField) {
    test::TempDir tmp;
    write_file(tmp / "u.json", R"({"window": {"max_tokenz": 1}})");
    try {
        load_run_config({tmp / "u.json", {}, false, {}}, false);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("window.max_tokenz"), std::string::npos);
    }
    EXPECT_THROW(load_run_config({std::nullopt, {"nope.x=1"}, false, {}}, false), ConfigError);
    EXPECT_THROW(load_run_config({std::nullopt, {"seed"}, false, {}}, false), ConfigError);
    EXPECT_THROW(load_run_config({tmp / "missing.json", {}, false, {}}, false), ConfigError);
    write_file(tmp / "bad.json", "{not json");
    EXPECT_THROW(load_run_config({tmp / "bad.json", {}, false, {}}, false), ConfigError);
    try {
        load_run_config({std::nullopt, {"window.min_tokens=\"many\"", "tokenizer.name=sentencepiece"}, false, {}}, false);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("window"), std::string::npos);
        EXPECT_NE(w.find("tokenizer"), std::string::npos);
    }
}

TEST(Config, SecretsAreNotSerialized) {
    ::setenv("LONGCTX_TEST_KEY", "sk-very-secret", 1);
    const auto c = load_run_config({std::nullopt, {"endpoints.teacher.api_key_env=LONGCTX_TEST_KEY"}, false, {}}, false);
    EXPECT_EQ(c.raw.dump().find("sk-very-secret"), std::string::npos);
    EXPECT_EQ(c.endpoints.at("teacher").to_json().dump().find("sk-very-secret"), std::string::npos);
}

TEST(Pipeline, ToyRunIsDeterministic) {
    test::TempDir tmp;
    const auto a = toy_config(tmp / "a");
    const auto b = toy_config(tmp / "b");
    const auto ra = run_data_pipeline(a);
    run_data_pipeline(b);
    ASSERT_EQ(ra.size(), 5u);
    EXPECT_EQ(ra[4].summary["records"], 60);
    const auto da = read_file(a.stage_dir("mix") / "train.jsonl"), db = read_file(b.stage_dir("mix") / "train.jsonl");
    EXPECT_EQ(sha256_hex(da), sha256_hex(db));
    for (const auto& s : read_dataset(a.stage_dir("mix") / "train.jsonl"))
        if (s.origin == Origin::synthetic) {
            EXPECT_TRUE(validate_sample(s, a.window).empty()) << s.id;
        }
    const auto m = json::parse(read_file(a.stage_dir("mix") / "manifest.json"));
    EXPECT_EQ(m["outputs"]["dataset"]["sha256"], sha256_hex(da));
    EXPECT_EQ(m["config_digest"], json_digest(a.raw));
}

TEST(Pipeline, StagesRequireTheirInputs) {
    test::TempDir tmp;
    const auto c = toy_config(tmp.path());
    EXPECT_THROW(stage_pack(c), Error);
    EXPECT_THROW(stage_mix(c), Error);
    EXPECT_THROW(stage_run_eval(c, EvalTask::niah), Error);
    EXPECT_THROW(stage_report(c, EvalTask::topic_retrieval), Error);
}

TEST(Eval, OneFailureInTenIsRecorded) {
    test::TempDir tmp;
    const auto c = toy_config(tmp.path(), {"endpoints.model.mock=fail-every-10th"});
    stage_evalgen(c, EvalTask::topic_retrieval);
    const auto r = stage_run_eval(c, EvalTask::topic_retrieval);
    EXPECT_EQ(r.summary["failures"], 1);
    const auto rows = read_jsonl(outputs_path(c, EvalTask::topic_retrieval));
    ASSERT_EQ(rows.size(), 10u);
    std::size_t ok = 0;
    for (const auto& row : rows) ok += !row["output"].is_null();
    EXPECT_EQ(ok, 9u);
    EXPECT_FALSE(rows[9]["error"].get<std::string>().empty());
    const auto s = stage_score(c, EvalTask::topic_retrieval, std::nullopt);
    EXPECT_EQ(s.summary["withheld"], 1);
    EXPECT_DOUBLE_EQ(s.summary["overall"].get<double>(), 1.0);
}

TEST(Eval, MajorityFailureAborts) {
    test::TempDir tmp;
    // Nothing listens on the discard port, so every request fails.
    const auto c = toy_config(tmp.path(), {"endpoints.model.base_url=http://127.0.0.1:9",
                                           "endpoints.model.retry.max_attempts=1", "endpoints.model.timeout_s=2"}, false);
    stage_evalgen(c, EvalTask::topic_retrieval);
    EXPECT_THROW(stage_run_eval(c, EvalTask::topic_retrieval), Error);
    // Outputs are still written so the failures can be inspected.
    EXPECT_EQ(read_jsonl(outputs_path(c, EvalTask::topic_retrieval)).size(), 10u);
}

TEST(Eval, PerTaskManifestsAccumulate) {
    test::TempDir tmp;
    const auto c = toy_config(tmp.path());
    stage_evalgen(c, EvalTask::topic_retrieval);
    auto small = c;
    small.niah.lengths = {1024, 2048};
    stage_evalgen(small, EvalTask::niah);
    const auto m = json::parse(read_file(c.stage_dir("eval") / "manifest.json"));
    EXPECT_TRUE(m["tasks"].contains("niah"));
    EXPECT_TRUE(m["tasks"].contains("topic_retrieval"));
}

TEST(Cli, ExitCodes) {
    test::TempDir tmp;
    const auto cfg = write_toy_setup(tmp.path(), {}, 10, 10);
    const std::string c = "-c " + cfg.string();
    EXPECT_EQ(cli("validate -q " + c), 0);
    EXPECT_EQ(cli("validate -q " + c + " --set window.bogus=1"), 2);
    EXPECT_EQ(cli("no-such-command"), 2);
    EXPECT_EQ(cli("mix --mock " + c), 1);
    EXPECT_EQ(cli("rope-plan " + c), 0);
    EXPECT_TRUE(fs::exists(tmp / "out/rope/report.json"));
    EXPECT_EQ(cli("emit-train-config " + c + " --out " + (tmp / "t.json").string()), 0);
    EXPECT_TRUE(fs::exists(tmp / "t.json"));
    EXPECT_EQ(cli("evalgen topics --mock " + c + " --set endpoints.model.mock=fail-every-10th"), 0);
    EXPECT_EQ(cli("run-eval -t topics --mock " + c + " --set endpoints.model.mock=fail-every-10th"), 0);
    EXPECT_EQ(cli("run-eval -t topics --mock " + c +
                  " --set endpoints.model.mock=fail-every-10th --set eval.max_failure_fraction=0.05"),
              1);
}
