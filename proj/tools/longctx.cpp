// longctx: command-line front end for the data pipeline and evaluation suite.
//
// Exit status: 0 success, 1 runtime failure (message names the stage),
// 2 invalid configuration or usage.

#include <iostream>

#include "CLI11.hpp"
#include "longctx/pipeline.hpp"

using namespace longctx;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    bool mock = false;
    std::string output_dir;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "run config (JSON)");
    app->add_option("--set", c.sets, "override a config field, key.path=value")->take_all();
    app->add_flag("--mock", c.mock, "use offline mock endpoints where none is configured");
    app->add_option("-o,--output-dir", c.output_dir, "override output_dir");
}

RunConfig load(const Common& c, bool check_paths = true) {
    ConfigSource src;
    if (!c.config.empty()) src.file = c.config;
    src.overrides = c.sets;
    src.mock = c.mock;
    if (!c.output_dir.empty()) src.output_dir = c.output_dir;
    return load_run_config(src, check_paths);
}

void print(const StageReport& r) { std::cout << r.stage << ": " << r.summary.dump() << "\n"; }

// Runs fn, mapping failures onto the exit-status contract.
int guarded(const std::string& stage, const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: stage " << stage << ": " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-context data synthesis and evaluation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Common common;
    std::string stage_name;
    std::function<void()> action;

    const auto stage_cmd = [&](const std::string& name, const std::string& help, auto fn) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, common);
        sub->callback([&, name, fn] {
            stage_name = name;
            action = [&, fn] { print(fn(load(common))); };
        });
        return sub;
    };

    auto* validate = app.add_subcommand("validate", "check a run config and print the merged snapshot");
    add_common(validate, common);
    bool quiet = false;
    validate->add_flag("-q,--quiet", quiet, "print nothing on success");
    validate->callback([&] {
        stage_name = "validate";
        action = [&] {
            const auto cfg = load(common);
            if (!quiet) std::cout << cfg.raw.dump(2) << "\n";
        };
    });

    stage_cmd("ingest", "normalize and tokenize the corpus", [](const RunConfig& c) { return stage_ingest(c); });
    stage_cmd("cluster", "embed documents and cluster them", [](const RunConfig& c) { return stage_cluster(c); });
    stage_cmd("synth", "assemble contexts and synthesize QA pairs", [](const RunConfig& c) { return stage_synth(c); });
    stage_cmd("pack", "pack QA records into multi-turn samples", [](const RunConfig& c) { return stage_pack(c); });
    stage_cmd("mix", "mix synthetic and auxiliary pools", [](const RunConfig& c) { return stage_mix(c); });
    stage_cmd("rope-plan", "analyse rotary base extension", [](const RunConfig& c) { return stage_rope_plan(c); });

    auto* pipeline = app.add_subcommand("pipeline", "run ingest, cluster, synth, pack and mix");
    add_common(pipeline, common);
    pipeline->callback([&] {
        stage_name = "pipeline";
        action = [&] {
            const auto cfg = load(common);
            const std::vector<std::pair<std::string, StageReport (*)(const RunConfig&)>> stages = {
                {"ingest", stage_ingest}, {"cluster", stage_cluster}, {"synth", stage_synth},
                {"pack", stage_pack},     {"mix", stage_mix}};
            for (const auto& [name, fn] : stages) {
                stage_name = name;
                try {
                    print(fn(cfg));
                } catch (const ConfigError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw StageError(name, e.what());
                }
            }
        };
    });

    auto* evalgen = app.add_subcommand("evalgen", "generate evaluation instances");
    evalgen->require_subcommand(1);
    for (const auto& [name, task] : {std::pair{"niah", EvalTask::niah}, std::pair{"topics", EvalTask::topic_retrieval}}) {
        auto* sub = evalgen->add_subcommand(name, task == EvalTask::niah ? "needle-in-a-haystack grid" : "topic retrieval");
        add_common(sub, common);
        sub->callback([&, task] {
            stage_name = "evalgen";
            action = [&, task] { print(stage_evalgen(load(common), task)); };
        });
    }

    std::string task_name = "niah";
    std::string method_name;
    const auto eval_cmd = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, common);
        sub->add_option("-t,--task", task_name, "niah|topics")->check(CLI::IsMember({"niah", "topics", "topic_retrieval"}));
        return sub;
    };
    eval_cmd("run-eval", "query the evaluated model endpoint")->callback([&] {
        stage_name = "run-eval";
        action = [&] { print(stage_run_eval(load(common), eval_task_from_string(task_name))); };
    });
    auto* score = eval_cmd("score", "score model outputs");
    score->add_option("-m,--method", method_name, "judge|verbatim|rouge_f1 (default depends on task)");
    score->callback([&] {
        stage_name = "score";
        action = [&] {
            std::optional<ScoreMethod> m;
            if (!method_name.empty()) m = score_method_from_string(method_name);
            print(stage_score(load(common), eval_task_from_string(task_name), m));
        };
    });
    eval_cmd("report", "render score matrices as CSV and SVG")->callback([&] {
        stage_name = "report";
        action = [&] { print(stage_report(load(common), eval_task_from_string(task_name))); };
    });

    auto* emit = app.add_subcommand("emit-train-config", "write the training configuration for the trainer");
    add_common(emit, common);
    std::string emit_out;
    emit->add_option("--out", emit_out, "destination file (default output_dir/train/train_config.json)");
    emit->callback([&] {
        stage_name = "emit-train-config";
        action = [&] {
            std::optional<fs::path> out;
            if (!emit_out.empty()) out = fs::path(emit_out);
            print(stage_emit_train_config(load(common), out));
        };
    });

    auto* toy_cmd = app.add_subcommand("toy-data", "write a small offline corpus, pools and run config");
    std::string toy_dir;
    toy::CorpusSpec spec;
    std::size_t rp_rows = 100, la_rows = 200;
    toy_cmd->add_option("dir", toy_dir, "destination directory")->required();
    toy_cmd->add_option("--books", spec.books, "number of books");
    toy_cmd->add_option("--papers", spec.papers, "number of papers");
    toy_cmd->add_option("--seed", spec.seed, "generator seed");
    toy_cmd->add_option("--redpajama-rows", rp_rows, "rows in the pretraining text pool");
    toy_cmd->add_option("--longalpaca-rows", la_rows, "rows in the instruction pool");
    toy_cmd->callback([&] {
        stage_name = "toy-data";
        action = [&] { std::cout << "wrote " << write_toy_setup(toy_dir, spec, rp_rows, la_rows).string() << "\n"; };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    return guarded(stage_name, action);
}
