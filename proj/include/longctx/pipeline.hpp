#pragma once

// Run configuration and the pipeline stages behind the command-line tool:
// ingest -> cluster -> synth -> pack -> mix, plus rope-plan, evalgen, run-eval,
// score, report and emit-train-config.
//
// Configuration precedence (lowest first): built-in defaults, the config file,
// --set key.path=value overrides, then dedicated flags such as --mock.
// Relative paths in the file resolve against the file's directory; the cache
// directory resolves against output_dir. Every stage writes only under
// output_dir/<stage>/ and leaves a manifest.json there.

#include "longctx/http_transport.hpp"
#include "longctx/mixing.hpp"
#include "longctx/mock.hpp"
#include "longctx/rope.hpp"

namespace longctx {

/// A failure inside a named stage (exit status 1).
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& msg) : Error("stage " + stage + ": " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// ---------------------------------------------------------------------------
// Config

inline json default_run_config() {
    const auto endpoint = [](std::string id, std::string model) {
        EndpointConfig e;
        e.id = std::move(id);
        e.model_name = std::move(model);
        return e.to_json();
    };
    json ep_embed = endpoint("embedder", "text-embedding-3-small");
    ep_embed["embedding_model"] = "text-embedding-3-small";
    json train = TrainConfig{}.to_json();
    train.erase("schema_version");
    return {
        {"corpus_paths", json::array()},
        {"tokenizer", {{"name", "bpe"}, {"vocab_source", ""}}},
        {"window", {{"min_tokens", 65536}, {"max_tokens", 81920}}},
        {"assembly",
         {{"qa_reserve_fraction", 0.125},
          {"anchor_budget", 4096},
          {"max_anchors_per_doc", 4},
          {"fill_policy", "concatenate-same-cluster"},
          {"docs_per_context", 8}}},
        {"cluster", {{"k", 0}, {"n_init", 10}, {"max_iters", 100}, {"embed_batch_size", 32}}},
        {"tasks",
         {{"single_detail_qa", -1},
          {"multi_detail_qa_homogeneous", -1},
          {"multi_detail_qa_heterogeneous", -1},
          {"biography_summarization", -1}}},
        {"synthesis",
         {{"min_pairs", 3},
          {"max_pairs", 5},
          {"teacher_input_budget", 32768},
          {"temperature", 0.7},
          {"max_new_tokens", 2048},
          {"max_reasks", 1},
          {"concurrency", 4}}},
        {"endpoints",
         {{"teacher", endpoint("teacher", "gpt-4")},
          {"embedder", ep_embed},
          {"judge", endpoint("judge", "gpt-3.5-turbo")},
          {"model", endpoint("model", "evaluated-model")}}},
        {"cache", {{"mode", "read-write"}, {"dir", "cache"}}},
        {"mix",
         {{"synthetic_count", 3500},
          {"redpajama_count", 5000},
          {"longalpaca_count", 12000},
          {"seed", 42},
          {"redpajama_path", ""},
          {"redpajama_adapter", "redpajama-text"},
          {"longalpaca_path", ""},
          {"longalpaca_adapter", "longalpaca"}}},
        {"rope",
         {{"head_dim", 128},
          {"base_old", 500000.0},
          {"base_new", 200000000.0},
          {"native_len", 8192},
          {"target_len", 81920}}},
        {"niah",
         {{"lengths", NiahGrid().lengths},
          {"depths", default_depths()},
          {"needle", kDefaultNeedle},
          {"question", kDefaultNeedleQuestion},
          {"answer", kDefaultNeedleAnswer},
          {"haystack_path", ""}}},
        {"topics", {{"counts", default_topic_counts()}, {"seed", 7}, {"pool_path", ""}}},
        {"eval",
         {{"concurrency", 4},
          {"training_length", 81920},
          {"max_failure_fraction", 0.5},
          {"rouge_variant", "rougeL"}}},
        {"train", train},
        {"seed", 1234},
        {"output_dir", "runs/default"},
    };
}

/// Recursive merge: objects merge key by key, everything else replaces.
/// Keys absent from `base` are reported in `unknown` as dotted paths.
inline void merge_config(json& base, const json& over, const std::string& prefix, std::vector<std::string>& unknown) {
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        const bool open_map = prefix == "endpoints" || prefix == "train";
        if (!base.contains(it.key())) {
            if (!open_map) {
                unknown.push_back(path);
                continue;
            }
            base[it.key()] = it.value();
            continue;
        }
        auto& slot = base[it.key()];
        if (slot.is_object() && it.value().is_object()) merge_config(slot, it.value(), path, unknown);
        else slot = it.value();
    }
}

/// Apply "a.b.c=value"; value parses as JSON, falling back to a plain string.
inline void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            if (!node->is_object() || !node->contains(part))
                throw ConfigError("--set: unknown config field '" + key + "'");
            (*node)[part] = value;
            return;
        }
        if (!node->is_object() || !node->contains(part) || !(*node)[part].is_object())
            throw ConfigError("--set: unknown config field '" + key + "'");
        node = &(*node)[part];
        start = dot + 1;
    }
}

struct RunConfig {
    json raw;            // merged snapshot (defaults + file + overrides)
    fs::path base_dir;   // relative paths in the file resolve here

    std::vector<fs::path> corpus_paths;
    TokenizerSpec tokenizer;
    Window window;
    double qa_reserve_fraction = 0.125;
    std::size_t anchor_budget = 4096;
    std::size_t max_anchors_per_doc = 4;
    FillPolicy fill = FillPolicy::concatenate_same_cluster;
    std::size_t docs_per_context = 8;
    std::size_t cluster_k = 0;
    int n_init = 10, max_iters = 100;
    std::size_t embed_batch_size = 32;
    std::map<TaskKind, long> task_quotas;
    SynthOptions synth;
    int synth_concurrency = 4;
    std::map<std::string, EndpointConfig> endpoints;
    CacheMode cache_mode = CacheMode::read_write;
    fs::path cache_dir;
    MixSpec mix;
    fs::path redpajama_path, longalpaca_path;
    PoolAdapter redpajama_adapter = PoolAdapter::redpajama_text, longalpaca_adapter = PoolAdapter::longalpaca;
    rope::RopePlan rope;
    NiahGrid niah;
    fs::path haystack_path;
    std::vector<std::size_t> topic_counts;
    std::uint64_t topic_seed = 7;
    fs::path topic_pool_path;
    int eval_concurrency = 4;
    double training_length = 81920;
    double max_failure_fraction = 0.5;
    RougeVariant rouge_variant = RougeVariant::rougeL;
    TrainConfig train;
    std::uint64_t seed = 1234;
    fs::path output_dir;

    fs::path stage_dir(const std::string& stage) const { return output_dir / stage; }

    /// Context window for assemblies: the sample window minus room for QA turns.
    Window context_window() const {
        const auto reserve = static_cast<std::size_t>(std::floor(static_cast<double>(window.max_tokens) * qa_reserve_fraction));
        return {window.min_tokens, window.max_tokens - reserve};
    }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path q(p);
    return q.is_absolute() ? q : (base / q).lexically_normal();
}

}  // namespace detail

/// Typed view of a merged config. Every problem is reported with its field path;
/// the ConfigError lists them all.
inline RunConfig parse_run_config(const json& merged, const fs::path& base_dir, bool check_paths = true) {
    RunConfig c;
    c.raw = merged;
    c.base_dir = base_dir;
    std::vector<std::string> errs;
    const auto field = [&](const std::string& path, auto&& fn) {
        try {
            fn();
        } catch (const json::exception& e) {
            errs.push_back(path + ": wrong type or missing (" + std::string(e.what()) + ")");
        } catch (const Error& e) {
            errs.push_back(path + ": " + e.what());
        }
    };
    const json& j = merged;
    field("corpus_paths", [&] {
        for (const auto& p : j.at("corpus_paths")) c.corpus_paths.push_back(detail::resolve(base_dir, p.get<std::string>()));
    });
    field("tokenizer", [&] {
        c.tokenizer = TokenizerSpec::from_json(j.at("tokenizer"));
        if (c.tokenizer.name != "whitespace" && c.tokenizer.name != "bpe")
            throw ConfigError("name must be whitespace|bpe, got '" + c.tokenizer.name + "'");
        if (!c.tokenizer.vocab_source.empty())
            c.tokenizer.vocab_source = detail::resolve(base_dir, c.tokenizer.vocab_source).string();
    });
    field("window", [&] {
        c.window.min_tokens = j.at("window").at("min_tokens").get<std::size_t>();
        c.window.max_tokens = j.at("window").at("max_tokens").get<std::size_t>();
        if (c.window.min_tokens == 0 || c.window.min_tokens > c.window.max_tokens)
            throw ConfigError("need 0 < min_tokens <= max_tokens");
    });
    const json& as = j.at("assembly");
    field("assembly.qa_reserve_fraction", [&] {
        c.qa_reserve_fraction = as.at("qa_reserve_fraction").get<double>();
        if (!(c.qa_reserve_fraction >= 0 && c.qa_reserve_fraction < 1)) throw ConfigError("must be in [0, 1)");
        if (c.context_window().max_tokens < c.window.min_tokens)
            throw ConfigError("leaves a context maximum below window.min_tokens");
    });
    field("assembly.anchor_budget", [&] {
        c.anchor_budget = as.at("anchor_budget").get<std::size_t>();
        if (c.anchor_budget < 64) throw ConfigError("must be >= 64");
    });
    field("assembly.max_anchors_per_doc", [&] { c.max_anchors_per_doc = as.at("max_anchors_per_doc").get<std::size_t>(); });
    field("assembly.fill_policy", [&] { c.fill = fill_policy_from_string(as.at("fill_policy").get<std::string>()); });
    field("assembly.docs_per_context", [&] {
        c.docs_per_context = as.at("docs_per_context").get<std::size_t>();
        if (c.docs_per_context < 2) throw ConfigError("must be >= 2");
    });
    field("cluster", [&] {
        c.cluster_k = j.at("cluster").at("k").get<std::size_t>();
        c.n_init = j.at("cluster").at("n_init").get<int>();
        c.max_iters = j.at("cluster").at("max_iters").get<int>();
        c.embed_batch_size = j.at("cluster").at("embed_batch_size").get<std::size_t>();
        if (c.n_init < 1 || c.max_iters < 1 || c.embed_batch_size < 1) throw ConfigError("n_init, max_iters and embed_batch_size must be >= 1");
    });
    field("tasks", [&] {
        for (auto it = j.at("tasks").begin(); it != j.at("tasks").end(); ++it) {
            TaskKind t;
            try {
                t = task_from_string(it.key());
            } catch (const ParseError&) {
                throw ConfigError("unknown task '" + it.key() + "'");
            }
            c.task_quotas[t] = it.value().get<long>();
        }
    });
    const json& sy = j.at("synthesis");
    field("synthesis", [&] {
        c.synth.prompt.min_pairs = sy.at("min_pairs").get<std::size_t>();
        c.synth.prompt.max_pairs = sy.at("max_pairs").get<std::size_t>();
        c.synth.prompt.teacher_input_budget = sy.at("teacher_input_budget").get<std::size_t>();
        c.synth.prompt.temperature = sy.at("temperature").get<double>();
        c.synth.prompt.max_new_tokens = sy.at("max_new_tokens").get<int>();
        c.synth.max_reasks = sy.at("max_reasks").get<int>();
        c.synth_concurrency = sy.at("concurrency").get<int>();
        if (c.synth.prompt.min_pairs < 1 || c.synth.prompt.min_pairs > c.synth.prompt.max_pairs)
            throw ConfigError("need 1 <= min_pairs <= max_pairs");
        if (c.synth_concurrency < 1) throw ConfigError("concurrency must be >= 1");
        if (c.synth.max_reasks < 0) throw ConfigError("max_reasks must be >= 0");
    });
    for (auto it = j.at("endpoints").begin(); it != j.at("endpoints").end(); ++it) {
        field("endpoints." + it.key(), [&] {
            auto e = EndpointConfig::from_json(it.value());
            if (e.id.empty() || e.id == "default") e.id = it.key();
            if (!e.mock.empty()) {
                const auto& known = mock::known_mocks();
                if (std::find(known.begin(), known.end(), e.mock) == known.end())
                    throw ConfigError("unknown mock '" + e.mock + "' (" + join(known, "|") + ")");
            }
            c.endpoints[it.key()] = e;
        });
    }
    field("cache.mode", [&] { c.cache_mode = cache_mode_from_string(j.at("cache").at("mode").get<std::string>()); });
    field("output_dir", [&] {
        const auto o = j.at("output_dir").get<std::string>();
        if (o.empty()) throw ConfigError("must not be empty");
        c.output_dir = detail::resolve(base_dir, o);
    });
    field("cache.dir", [&] { c.cache_dir = detail::resolve(c.output_dir, j.at("cache").at("dir").get<std::string>()); });
    const json& mx = j.at("mix");
    field("mix", [&] {
        c.mix.synthetic_count = mx.at("synthetic_count").get<std::size_t>();
        c.mix.redpajama_count = mx.at("redpajama_count").get<std::size_t>();
        c.mix.longalpaca_count = mx.at("longalpaca_count").get<std::size_t>();
        c.mix.seed = mx.at("seed").get<std::uint64_t>();
        c.redpajama_path = detail::resolve(base_dir, mx.at("redpajama_path").get<std::string>());
        c.longalpaca_path = detail::resolve(base_dir, mx.at("longalpaca_path").get<std::string>());
    });
    field("mix.redpajama_adapter", [&] { c.redpajama_adapter = pool_adapter_from_string(mx.at("redpajama_adapter").get<std::string>()); });
    field("mix.longalpaca_adapter", [&] { c.longalpaca_adapter = pool_adapter_from_string(mx.at("longalpaca_adapter").get<std::string>()); });
    field("rope", [&] {
        const json& r = j.at("rope");
        c.rope.head_dim = r.at("head_dim").get<int>();
        c.rope.base_old = r.at("base_old").get<double>();
        c.rope.base_new = r.at("base_new").get<double>();
        c.rope.native_len = r.at("native_len").get<std::int64_t>();
        c.rope.target_len = r.at("target_len").get<std::int64_t>();
        try {
            c.rope.validate();
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
    });
    field("niah", [&] {
        const json& n = j.at("niah");
        c.niah.lengths = n.at("lengths").get<std::vector<std::size_t>>();
        c.niah.depths = n.at("depths").get<std::vector<double>>();
        c.niah.needle = n.at("needle").get<std::string>();
        c.niah.question = n.at("question").get<std::string>();
        c.niah.answer = n.at("answer").get<std::string>();
        c.haystack_path = detail::resolve(base_dir, n.at("haystack_path").get<std::string>());
        try {
            c.niah.validate();
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
    });
    field("topics", [&] {
        c.topic_counts = j.at("topics").at("counts").get<std::vector<std::size_t>>();
        c.topic_seed = j.at("topics").at("seed").get<std::uint64_t>();
        c.topic_pool_path = detail::resolve(base_dir, j.at("topics").at("pool_path").get<std::string>());
        if (c.topic_counts.empty()) throw ConfigError("counts must not be empty");
    });
    field("eval", [&] {
        const json& e = j.at("eval");
        c.eval_concurrency = e.at("concurrency").get<int>();
        c.training_length = e.at("training_length").get<double>();
        c.max_failure_fraction = e.at("max_failure_fraction").get<double>();
        c.rouge_variant = rouge_variant_from_string(e.at("rouge_variant").get<std::string>());
        if (c.eval_concurrency < 1) throw ConfigError("concurrency must be >= 1");
    });
    field("train", [&] {
        c.train = TrainConfig::from_json(j.at("train"));
        for (const auto& e : c.train.validate()) errs.push_back("train." + e);
    });
    field("seed", [&] { c.seed = j.at("seed").get<std::uint64_t>(); });

    if (check_paths) {
        for (std::size_t i = 0; i < c.corpus_paths.size(); ++i)
            if (!fs::is_directory(c.corpus_paths[i]))
                errs.push_back("corpus_paths[" + std::to_string(i) + "]: no such directory '" + c.corpus_paths[i].string() + "'");
        const auto must_exist = [&](const std::string& name, const fs::path& p) {
            if (!p.empty() && !fs::exists(p)) errs.push_back(name + ": no such file '" + p.string() + "'");
        };
        must_exist("tokenizer.vocab_source", c.tokenizer.vocab_source);
        must_exist("mix.redpajama_path", c.redpajama_path);
        must_exist("mix.longalpaca_path", c.longalpaca_path);
        must_exist("niah.haystack_path", c.haystack_path);
        must_exist("topics.pool_path", c.topic_pool_path);
    }
    if (!errs.empty()) throw ConfigError("invalid config:\n  " + join(errs, "\n  "));
    return c;
}

struct ConfigSource {
    std::optional<fs::path> file;
    std::vector<std::string> overrides;  // key.path=value
    bool mock = false;                   // mock every endpoint that has no mock set
    std::optional<std::string> output_dir;
};

inline RunConfig load_run_config(const ConfigSource& src, bool check_paths = true) {
    json cfg = default_run_config();
    fs::path base = fs::current_path();
    if (src.file) {
        if (!fs::exists(*src.file)) throw ConfigError("config file not found: " + src.file->string());
        json file;
        try {
            file = json::parse(read_file(*src.file));
        } catch (const json::exception& e) {
            throw ConfigError("config file " + src.file->string() + " is not valid JSON: " + e.what());
        }
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        std::vector<std::string> unknown;
        merge_config(cfg, file, "", unknown);
        if (!unknown.empty()) throw ConfigError("invalid config:\n  unknown field(s): " + join(unknown, ", "));
        base = fs::absolute(*src.file).parent_path();
    }
    for (const auto& o : src.overrides) apply_override(cfg, o);
    if (src.output_dir) cfg["output_dir"] = fs::absolute(*src.output_dir).string();
    if (src.mock) {
        const std::map<std::string, std::string> role_mock = {
            {"teacher", "teacher"}, {"embedder", "embedder"}, {"judge", "judge"}, {"model", "perfect"}};
        for (auto& [role, mk] : role_mock)
            if (cfg["endpoints"].contains(role) && cfg["endpoints"][role].value("mock", "").empty())
                cfg["endpoints"][role]["mock"] = mk;
    }
    return parse_run_config(cfg, base, check_paths);
}

// ---------------------------------------------------------------------------
// Manifests

inline std::string file_digest(const fs::path& p) { return sha256_hex(read_file(p)); }

/// Writes output_dir/<stage>/manifest.json. Stages run once per eval task pass
/// `task`; their inputs, outputs and extras go under "tasks.<task>" and entries
/// for other tasks already in the manifest are kept.
inline void write_stage_manifest(const RunConfig& cfg, const std::string& stage, const std::map<std::string, fs::path>& inputs,
                                 const std::map<std::string, fs::path>& outputs, const json& extra = json::object(),
                                 const std::string& task = "") {
    json in = json::object(), out = json::object();
    for (const auto& [k, p] : inputs) in[k] = {{"path", p.string()}, {"sha256", fs::exists(p) ? file_digest(p) : ""}};
    for (const auto& [k, p] : outputs) out[k] = {{"path", fs::relative(p, cfg.stage_dir(stage)).generic_string()}, {"sha256", file_digest(p)}};
    json m = {{"stage", stage},
              {"tool_version", kVersion},
              {"seed", cfg.seed},
              {"config_digest", json_digest(cfg.raw)},
              {"config", cfg.raw}};
    json body = {{"inputs", in}, {"outputs", out}};
    for (auto it = extra.begin(); it != extra.end(); ++it) body[it.key()] = it.value();
    const fs::path path = cfg.stage_dir(stage) / "manifest.json";
    if (task.empty()) {
        m.update(body);
    } else {
        json tasks = json::object();
        if (fs::exists(path)) {
            try {
                tasks = json::parse(read_file(path)).value("tasks", json::object());
            } catch (const json::exception&) {
            }
        }
        tasks[task] = body;
        m["tasks"] = tasks;
    }
    write_file(path, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Endpoints

inline const EndpointConfig& endpoint_for(const RunConfig& cfg, const std::string& role) {
    auto it = cfg.endpoints.find(role);
    if (it == cfg.endpoints.end()) throw ConfigError("endpoints." + role + " is not configured");
    return it->second;
}

/// Gateway for `role`, backed by a mock or HTTP transport, with its replay log at
/// cache_dir/<endpoint id>.jsonl (cache_dir/<endpoint id>.mock-<name>.jsonl for
/// mocks, so swapping the mock never replays another mock's answers).
inline std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg, const std::string& role,
                                             const std::vector<EvalInstance>& instances = {}) {
    EndpointConfig ep = endpoint_for(cfg, role);
    ep.validate();
    std::shared_ptr<Transport> transport;
    if (!ep.mock.empty()) transport = mock::make_transport(ep.mock, instances);
    else transport = std::make_shared<HttpTransport>(ep.base_url);
    std::shared_ptr<ReplayLog> log;
    if (cfg.cache_mode != CacheMode::off) {
        const std::string file = ep.mock.empty() ? ep.id + ".jsonl" : ep.id + ".mock-" + ep.mock + ".jsonl";
        log = std::make_shared<ReplayLog>(cfg.cache_dir / file);
    }
    return std::make_unique<Gateway>(ep, transport, log, cfg.cache_mode);
}

inline TokenizerPtr run_tokenizer(const RunConfig& cfg) { return load_tokenizer(cfg.tokenizer); }

// ---------------------------------------------------------------------------
// Stages

struct StageReport {
    std::string stage;
    json summary = json::object();
};

inline StageReport stage_ingest(const RunConfig& cfg) {
    if (cfg.corpus_paths.empty()) throw ConfigError("corpus_paths: at least one corpus directory is required");
    const auto tok = run_tokenizer(cfg);
    std::vector<Document> docs;
    std::vector<json> errors;
    std::map<std::string, fs::path> inputs;
    for (std::size_t i = 0; i < cfg.corpus_paths.size(); ++i) {
        auto r = ingest_dir(cfg.corpus_paths[i], *tok);
        for (auto& d : r.documents) docs.push_back(std::move(d));
        for (auto& e : r.errors) errors.push_back({{"path", e.path}, {"error", e.message}});
        inputs["corpus_paths[" + std::to_string(i) + "]"] = cfg.corpus_paths[i];
    }
    std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < docs.size(); ++i)
        if (docs[i].id == docs[i - 1].id) throw Error("duplicate document id " + docs[i].id + " across corpus paths");
    const fs::path dir = cfg.stage_dir("ingest");
    write_corpus(dir / "corpus.jsonl", docs);
    write_file(dir / "errors.jsonl", to_jsonl(errors));
    std::size_t tokens = 0;
    for (const auto& d : docs) tokens += d.token_count;
    json summary = {{"documents", docs.size()}, {"errors", errors.size()}, {"tokens", tokens}, {"tokenizer", tok->name()}};
    // Directories are not digested; their contents are reflected in corpus.jsonl.
    write_stage_manifest(cfg, "ingest", {}, {{"corpus", dir / "corpus.jsonl"}, {"errors", dir / "errors.jsonl"}},
                         {{"summary", summary}, {"corpus_paths", cfg.raw["corpus_paths"]}});
    return {"ingest", summary};
}

inline std::vector<Document> load_stage_corpus(const RunConfig& cfg) {
    const fs::path p = cfg.stage_dir("ingest") / "corpus.jsonl";
    if (!fs::exists(p)) throw Error("missing " + p.string() + " (run ingest first)");
    return read_corpus(p);
}

inline StageReport stage_cluster(const RunConfig& cfg) {
    const auto docs = load_stage_corpus(cfg);
    auto gw = make_gateway(cfg, "embedder");
    EmbeddingCache cache(cfg.cache_dir / ("embeddings_" + gw->config().id + ".jsonl"));
    std::vector<std::string> texts, ids;
    for (const auto& d : docs) {
        texts.push_back(d.text);
        ids.push_back(d.id);
    }
    EmbedOptions eo;
    eo.batch_size = cfg.embed_batch_size;
    const auto items = embed_batch(texts, *gw, cache, eo, ids);
    std::vector<EmbeddingVector> vecs;
    std::vector<std::string> failed;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].ok()) vecs.push_back(*items[i].value);
        else failed.push_back(ids[i] + ": " + items[i].error);
    }
    if (vecs.empty()) throw Error("no document could be embedded; first error: " + (failed.empty() ? "" : failed[0]));
    KMeansOptions ko;
    ko.k = cfg.cluster_k ? cfg.cluster_k : default_cluster_count(vecs.size());
    ko.seed = derive_seed(cfg.seed, "cluster");
    ko.n_init = cfg.n_init;
    ko.max_iters = cfg.max_iters;
    const auto assignment = cluster_documents(vecs, ko);
    const CorpusIndex corpus(docs);
    const fs::path dir = cfg.stage_dir("cluster");
    write_embedding_matrix(dir / "embeddings.bin", vecs);
    write_file(dir / "clusters.json", assignment.to_json().dump(2) + "\n");
    write_file(dir / "report.json", json(cluster_report(assignment, corpus)).dump(2) + "\n");
    json summary = {{"documents", docs.size()}, {"embedded", vecs.size()}, {"failed", failed}, {"k", assignment.k},
                    {"inertia", assignment.inertia}};
    write_stage_manifest(cfg, "cluster", {{"corpus", cfg.stage_dir("ingest") / "corpus.jsonl"}},
                         {{"embeddings", dir / "embeddings.bin"}, {"clusters", dir / "clusters.json"}, {"report", dir / "report.json"}},
                         {{"summary", summary}, {"gateway", gw->stats().to_json()}});
    return {"cluster", summary};
}

/// Every assembly and the tasks it feeds, in a deterministic order.
struct AssemblyPlan {
    std::vector<ContextAssembly> assemblies;
    std::vector<std::pair<std::size_t, TaskKind>> jobs;  // (assembly index, task)
    std::vector<std::string> skipped;
};

inline AssemblyPlan plan_assemblies(const RunConfig& cfg, const CorpusIndex& corpus, const std::vector<Document>& docs,
                                    const ClusterAssignment& clusters, const Tokenizer& tok) {
    AssemblyPlan plan;
    AssemblyOptions ao;
    ao.window = cfg.context_window();
    ao.fill = cfg.fill;
    ao.separator = cfg.synth.separator;
    std::set<std::string> seen;
    const auto add = [&](ContextAssembly a, std::vector<TaskKind> tasks) {
        if (!seen.insert(a.id).second) return;
        plan.assemblies.push_back(std::move(a));
        for (auto t : tasks) plan.jobs.emplace_back(plan.assemblies.size() - 1, t);
    };
    const auto quota_enabled = [&](TaskKind t) {
        auto it = cfg.task_quotas.find(t);
        return it == cfg.task_quotas.end() || it->second != 0;
    };
    for (const auto& d : docs) {
        std::vector<const Document*> fill;
        auto cit = clusters.assignments.find(d.id);
        if (cit != clusters.assignments.end())
            for (const auto& id : clusters.members(cit->second))
                if (id != d.id) fill.push_back(&corpus.at(id));

        auto whole = build_homogeneous_context(d, corpus, tok, ao, fill);
        if (!whole) {
            plan.skipped.push_back(whole.skip_reason);
            continue;
        }
        std::vector<TaskKind> tasks;
        if (whole.assembly->flavor == Flavor::homogeneous) {
            tasks.push_back(TaskKind::MultiDetailQAHomogeneous);
            if (d.kind == DocKind::book) tasks.push_back(TaskKind::BiographySummarization);
        } else {
            tasks.push_back(TaskKind::MultiDetailQAHeterogeneous);
        }
        add(*whole.assembly, tasks);

        if (!quota_enabled(TaskKind::SingleDetailQA)) continue;
        std::vector<std::string> warnings;
        auto segs = slice_segments(d, cfg.anchor_budget, BoundaryRule::sentence, tok, &warnings);
        for (auto& w : warnings) plan.skipped.push_back(w);
        // Anchors need enough text for several questions.
        std::erase_if(segs, [&](const Segment& s) { return s.token_count < cfg.anchor_budget / 4; });
        if (cfg.max_anchors_per_doc && segs.size() > cfg.max_anchors_per_doc) {
            Rng rng(derive_seed(cfg.seed, "anchors:" + d.id));
            rng.shuffle(segs);
            segs.resize(cfg.max_anchors_per_doc);
            std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.index < b.index; });
        }
        for (const auto& s : segs) {
            auto r = build_homogeneous_context(d, corpus, tok, ao, fill, s);
            if (!r) {
                plan.skipped.push_back(r.skip_reason + " (anchor " + std::to_string(s.index) + ")");
                continue;
            }
            try {
                auto a = embed_anchor(*r.assembly, s, corpus, tok, ao);
                if (!ao.window.contains(a.total_tokens)) {
                    plan.skipped.push_back("anchored assembly for " + d.id + " segment " + std::to_string(s.index) +
                                           " left the window");
                    continue;
                }
                add(std::move(a), {TaskKind::SingleDetailQA});
            } catch (const Error& e) {
                plan.skipped.push_back(std::string(e.what()) + " (anchor " + std::to_string(s.index) + ")");
            }
        }
    }
    auto pools = form_heterogeneous_pools(clusters, corpus, tok, cfg.docs_per_context, ao);
    for (auto& a : pools.assemblies) add(std::move(a), {TaskKind::MultiDetailQAHeterogeneous});
    for (auto& s : pools.skipped) plan.skipped.push_back(std::move(s));

    // Per-task quotas: a seeded subset, kept in plan order.
    std::vector<std::pair<std::size_t, TaskKind>> kept;
    for (auto t : kAllTasks) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < plan.jobs.size(); ++i)
            if (plan.jobs[i].second == t) idx.push_back(i);
        auto it = cfg.task_quotas.find(t);
        const long q = it == cfg.task_quotas.end() ? -1 : it->second;
        if (q >= 0 && idx.size() > static_cast<std::size_t>(q)) {
            Rng rng(derive_seed(cfg.seed, "quota:" + to_string(t)));
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(q));
        }
        for (auto i : idx) kept.push_back(plan.jobs[i]);
    }
    std::sort(kept.begin(), kept.end());
    plan.jobs = std::move(kept);
    return plan;
}

inline StageReport stage_synth(const RunConfig& cfg) {
    const auto docs = load_stage_corpus(cfg);
    const fs::path cpath = cfg.stage_dir("cluster") / "clusters.json";
    if (!fs::exists(cpath)) throw Error("missing " + cpath.string() + " (run cluster first)");
    const auto clusters = ClusterAssignment::from_json(json::parse(read_file(cpath)));
    const auto tok = run_tokenizer(cfg);
    const CorpusIndex corpus(docs);
    const auto plan = plan_assemblies(cfg, corpus, docs, clusters, *tok);

    auto gw = make_gateway(cfg, "teacher");
    std::vector<SynthJob> jobs;
    for (const auto& [i, t] : plan.jobs) jobs.push_back({&plan.assemblies[i], t});
    const int conc = std::min(cfg.synth_concurrency, gw->config().max_in_flight);
    const auto outcomes = synthesize_all(jobs, corpus, *tok, *gw, conc, cfg.synth);

    std::vector<SynthRecord> records;
    std::vector<json> skipped;
    for (const auto& s : plan.skipped) skipped.push_back({{"stage", "assembly"}, {"reason", s}});
    std::map<std::string, std::size_t> per_task;
    int reasks = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        reasks += outcomes[i].reasks;
        if (outcomes[i].record) {
            records.push_back(*outcomes[i].record);
            ++per_task[to_string(jobs[i].task)];
        } else {
            skipped.push_back({{"stage", "synthesis"}, {"assembly_id", jobs[i].assembly->id},
                               {"task", to_string(jobs[i].task)}, {"reason", outcomes[i].skip_reason}});
        }
    }
    const fs::path dir = cfg.stage_dir("synth");
    write_assemblies(dir / "assemblies.jsonl", plan.assemblies);
    write_synth_records(dir / "records.jsonl", records);
    write_file(dir / "skipped.jsonl", to_jsonl(skipped));
    json summary = {{"assemblies", plan.assemblies.size()}, {"jobs", jobs.size()}, {"records", records.size()},
                    {"per_task", per_task}, {"skipped", skipped.size()}, {"reasks", reasks},
                    {"context_window", cfg.context_window().to_json()}};
    write_stage_manifest(cfg, "synth", {{"corpus", cfg.stage_dir("ingest") / "corpus.jsonl"}, {"clusters", cpath}},
                         {{"assemblies", dir / "assemblies.jsonl"}, {"records", dir / "records.jsonl"},
                          {"skipped", dir / "skipped.jsonl"}},
                         {{"summary", summary}, {"gateway", gw->stats().to_json()}});
    return {"synth", summary};
}

inline StageReport stage_pack(const RunConfig& cfg) {
    const auto docs = load_stage_corpus(cfg);
    const fs::path sdir = cfg.stage_dir("synth");
    if (!fs::exists(sdir / "records.jsonl")) throw Error("missing " + (sdir / "records.jsonl").string() + " (run synth first)");
    const auto assemblies = read_assemblies(sdir / "assemblies.jsonl");
    const auto records = read_synth_records(sdir / "records.jsonl");
    const auto tok = run_tokenizer(cfg);
    const CorpusIndex corpus(docs);
    std::map<std::string, const ContextAssembly*> by_id;
    for (const auto& a : assemblies) by_id[a.id] = &a;

    PackOptions po;
    po.window = cfg.window;
    po.separator = cfg.synth.separator;
    std::vector<ConversationSample> samples;
    std::vector<json> skipped;
    std::vector<std::string> warnings;
    for (const auto& r : records) {
        auto it = by_id.find(r.assembly_id);
        if (it == by_id.end()) throw Error("synth record refers to unknown assembly " + r.assembly_id);
        auto out = pack_conversation(*it->second, r, corpus, *tok, po);
        for (auto& w : out.warnings) warnings.push_back(std::move(w));
        if (out.sample) samples.push_back(std::move(*out.sample));
        else skipped.push_back({{"assembly_id", r.assembly_id}, {"task", to_string(r.task)}, {"reason", out.skip_reason}});
    }
    std::vector<std::string> violations;
    for (const auto& s : samples)
        for (auto& v : validate_sample(s, cfg.window)) violations.push_back(std::move(v));
    if (!violations.empty()) throw Error("packed samples violate invariants: " + join(violations, "; "));

    const fs::path dir = cfg.stage_dir("pack");
    write_dataset(samples, dir / "synthetic.jsonl", {{"window", cfg.window.to_json()}, {"seed", cfg.seed}});
    write_file(dir / "skipped.jsonl", to_jsonl(skipped));
    json summary = {{"samples", samples.size()}, {"skipped", skipped.size()}, {"warnings", warnings.size()}};
    write_stage_manifest(cfg, "pack", {{"assemblies", sdir / "assemblies.jsonl"}, {"records", sdir / "records.jsonl"}},
                         {{"dataset", dir / "synthetic.jsonl"}, {"skipped", dir / "skipped.jsonl"}},
                         {{"summary", summary}, {"warnings", warnings}});
    return {"pack", summary};
}

inline StageReport stage_mix(const RunConfig& cfg) {
    const fs::path syn = cfg.stage_dir("pack") / "synthetic.jsonl";
    if (!fs::exists(syn)) throw Error("missing " + syn.string() + " (run pack first)");
    if (cfg.mix.redpajama_count && cfg.redpajama_path.empty()) throw ConfigError("mix.redpajama_path is required");
    if (cfg.mix.longalpaca_count && cfg.longalpaca_path.empty()) throw ConfigError("mix.longalpaca_path is required");
    const auto tok = run_tokenizer(cfg);
    const auto synthetic = read_dataset(syn);
    const auto rp = cfg.redpajama_path.empty() ? std::vector<ConversationSample>{}
                                               : load_pool(cfg.redpajama_path, cfg.redpajama_adapter, Origin::redpajama, *tok);
    const auto la = cfg.longalpaca_path.empty() ? std::vector<ConversationSample>{}
                                                : load_pool(cfg.longalpaca_path, cfg.longalpaca_adapter, Origin::longalpaca, *tok);
    auto result = mix(cfg.mix, synthetic, rp, la);
    const fs::path dir = cfg.stage_dir("mix");
    const std::string digest = write_dataset(result.samples, dir / "train.jsonl", result.manifest);
    std::map<std::string, fs::path> inputs = {{"synthetic", syn}};
    if (!cfg.redpajama_path.empty()) inputs["redpajama"] = cfg.redpajama_path;
    if (!cfg.longalpaca_path.empty()) inputs["longalpaca"] = cfg.longalpaca_path;
    json summary = {{"records", result.samples.size()}, {"per_origin", result.manifest["per_origin"]}, {"sha256", digest}};
    write_stage_manifest(cfg, "mix", inputs, {{"dataset", dir / "train.jsonl"}, {"dataset_manifest", manifest_path(dir / "train.jsonl")}},
                         {{"summary", summary}, {"notes", result.manifest["notes"]}});
    return {"mix", summary};
}

inline StageReport stage_rope_plan(const RunConfig& cfg) {
    const auto report = rope::plan_extension(cfg.rope);
    const fs::path dir = cfg.stage_dir("rope");
    write_file(dir / "report.json", report.to_json().dump(2) + "\n");
    write_file(dir / "wavelengths.csv", report.to_csv());
    write_file(dir / "report.txt", join(report.findings, "\n") + "\n");
    write_stage_manifest(cfg, "rope", {}, {{"report", dir / "report.json"}, {"wavelengths", dir / "wavelengths.csv"},
                                           {"text", dir / "report.txt"}});
    return {"rope-plan", report.to_json()};
}

inline std::vector<toy::TopicEntry> load_topic_pool(const fs::path& p) {
    std::vector<toy::TopicEntry> out;
    for (const auto& j : read_jsonl(p)) out.push_back({j.at("topic"), j.at("user"), j.at("assistant")});
    return out;
}

inline fs::path instances_path(const RunConfig& cfg, EvalTask t) { return cfg.stage_dir("eval") / (to_string(t) + ".jsonl"); }

inline StageReport stage_evalgen(const RunConfig& cfg, EvalTask task) {
    std::vector<EvalInstance> xs;
    std::map<std::string, fs::path> inputs;
    if (task == EvalTask::niah) {
        NiahGrid g = cfg.niah;
        if (!cfg.haystack_path.empty()) {
            g.haystack = normalize(read_file(cfg.haystack_path));
            g.haystack_source = cfg.haystack_path.filename().string();
            inputs["haystack"] = cfg.haystack_path;
        }
        const auto tok = run_tokenizer(cfg);
        xs = gen_niah(g, *tok);
    } else {
        const auto pool = cfg.topic_pool_path.empty() ? toy::topic_pool() : load_topic_pool(cfg.topic_pool_path);
        if (!cfg.topic_pool_path.empty()) inputs["topic_pool"] = cfg.topic_pool_path;
        xs = gen_topic_retrieval(pool, cfg.topic_counts, cfg.topic_seed);
    }
    const fs::path out = instances_path(cfg, task);
    write_instances(out, xs);
    json summary = {{"task", to_string(task)}, {"instances", xs.size()}};
    write_stage_manifest(cfg, "eval", inputs, {{"instances", out}}, {{"summary", summary}}, to_string(task));
    return {"evalgen", summary};
}

/// One output per instance in input order; failures are recorded, not thrown.
inline std::vector<ModelOutput> run_eval(const std::vector<EvalInstance>& instances, Gateway& gw, int concurrency) {
    std::vector<ChatRequest> reqs;
    for (const auto& x : instances) reqs.push_back(mock::eval_request(x));
    const auto items = gw.run_batch(reqs, std::clamp(concurrency, 1, gw.config().max_in_flight));
    std::vector<ModelOutput> out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        ModelOutput m;
        m.instance_id = instances[i].id;
        if (items[i].ok()) {
            m.output = items[i].value->content;
            m.cache_key = items[i].value->cache_key;
            m.attempts = items[i].value->attempts;
            m.from_cache = items[i].value->from_cache;
        } else {
            m.error = items[i].error;
        }
        out.push_back(std::move(m));
    }
    return out;
}

inline fs::path outputs_path(const RunConfig& cfg, EvalTask t) { return cfg.stage_dir("run") / ("outputs_" + to_string(t) + ".jsonl"); }

inline StageReport stage_run_eval(const RunConfig& cfg, EvalTask task) {
    const fs::path in = instances_path(cfg, task);
    if (!fs::exists(in)) throw Error("missing " + in.string() + " (run evalgen first)");
    const auto xs = read_instances(in);
    auto gw = make_gateway(cfg, "model", xs);
    const auto outs = run_eval(xs, *gw, cfg.eval_concurrency);
    std::vector<json> rows;
    std::size_t failures = 0;
    for (const auto& o : outs) {
        rows.push_back(o.to_json());
        if (!o.output) ++failures;
    }
    const fs::path out = outputs_path(cfg, task);
    write_file(out, to_jsonl(rows));
    json summary = {{"task", to_string(task)}, {"instances", xs.size()}, {"failures", failures},
                    {"gateway", gw->stats().to_json()}, {"transport", gw->config().mock.empty() ? gw->config().base_url : "mock:" + gw->config().mock}};
    write_stage_manifest(cfg, "run", {{"instances", in}}, {{"outputs", out}}, {{"summary", summary}}, to_string(task));
    if (!xs.empty() && static_cast<double>(failures) > cfg.max_failure_fraction * static_cast<double>(xs.size()))
        throw Error(std::to_string(failures) + " of " + std::to_string(xs.size()) + " instances failed");
    return {"run-eval", summary};
}

inline fs::path scores_path(const RunConfig& cfg, EvalTask t) { return cfg.stage_dir("score") / ("scores_" + to_string(t) + ".jsonl"); }

inline StageReport stage_score(const RunConfig& cfg, EvalTask task, std::optional<ScoreMethod> method) {
    const fs::path in = instances_path(cfg, task), outp = outputs_path(cfg, task);
    if (!fs::exists(outp)) throw Error("missing " + outp.string() + " (run run-eval first)");
    const auto xs = read_instances(in);
    std::vector<ModelOutput> outs;
    for (const auto& j : read_jsonl(outp)) outs.push_back(ModelOutput::from_json(j));
    ScoreOptions so;
    so.method = method;
    so.variant = cfg.rouge_variant;
    so.concurrency = cfg.eval_concurrency;
    const bool needs_judge = method.value_or(default_method(task)) == ScoreMethod::judge;
    std::unique_ptr<Gateway> judge_gw;
    if (needs_judge) {
        judge_gw = make_gateway(cfg, "judge");
        so.concurrency = std::min(so.concurrency, judge_gw->config().max_in_flight);
    }
    const auto records = score_outputs(xs, outs, judge_gw.get(), so);
    const auto matrix = aggregate(records);
    const fs::path dir = cfg.stage_dir("score");
    write_score_records(scores_path(cfg, task), records);
    write_file(dir / ("matrix_" + to_string(task) + ".json"), matrix.to_json().dump(2) + "\n");
    json summary = {{"task", to_string(task)}, {"records", records.size()}, {"withheld", matrix.withheld},
                    {"overall", matrix.overall()}};
    if (judge_gw) summary["judge_gateway"] = judge_gw->stats().to_json();
    write_stage_manifest(cfg, "score", {{"instances", in}, {"outputs", outp}},
                         {{"scores", scores_path(cfg, task)}, {"matrix", dir / ("matrix_" + to_string(task) + ".json")}},
                         {{"summary", summary}}, to_string(task));
    return {"score", summary};
}

inline StageReport stage_report(const RunConfig& cfg, EvalTask task) {
    const fs::path in = scores_path(cfg, task);
    if (!fs::exists(in)) throw Error("missing " + in.string() + " (run score first)");
    const auto matrix = aggregate(read_score_records(in));
    const auto files = render_report(matrix, cfg.stage_dir("report"), cfg.training_length);
    write_stage_manifest(cfg, "report", {{"scores", in}}, {{"csv", files.csv}, {"svg", files.svg}}, json::object(), to_string(task));
    return {"report", {{"csv", files.csv.string()}, {"svg", files.svg.string()}, {"overall", matrix.overall()}}};
}

inline StageReport stage_emit_train_config(const RunConfig& cfg, std::optional<fs::path> out = std::nullopt) {
    const fs::path p = out.value_or(cfg.stage_dir("train") / "train_config.json");
    emit_train_config(cfg.train, p);
    if (!out) write_stage_manifest(cfg, "train", {}, {{"train_config", p}});
    return {"emit-train-config", {{"path", p.string()}, {"deviations", cfg.train.deviations()}}};
}

/// ingest -> cluster -> synth -> pack -> mix.
inline std::vector<StageReport> run_data_pipeline(const RunConfig& cfg) {
    return {stage_ingest(cfg), stage_cluster(cfg), stage_synth(cfg), stage_pack(cfg), stage_mix(cfg)};
}

// ---------------------------------------------------------------------------
// Toy setup

/// Writes a toy corpus, auxiliary pools and a matching run config under `dir`.
/// The window is scaled to 640-800 tokens.
inline fs::path write_toy_setup(const fs::path& dir, const toy::CorpusSpec& spec = {}, std::size_t rp_rows = 100,
                                std::size_t la_rows = 200, MixSpec mix_spec = {35, 50, 120, 42}) {
    toy::write_toy_dataset(dir, spec, rp_rows, la_rows);
    json cfg = {
        {"corpus_paths", {"corpus"}},
        {"tokenizer", {{"name", "bpe"}}},
        {"window", {{"min_tokens", 640}, {"max_tokens", 800}}},
        {"assembly", {{"qa_reserve_fraction", 0.15}, {"anchor_budget", 128}, {"max_anchors_per_doc", 4}, {"docs_per_context", 6}}},
        {"synthesis", {{"teacher_input_budget", 2048}, {"max_new_tokens", 512}}},
        {"mix",
         {{"synthetic_count", mix_spec.synthetic_count},
          {"redpajama_count", mix_spec.redpajama_count},
          {"longalpaca_count", mix_spec.longalpaca_count},
          {"seed", mix_spec.seed},
          {"redpajama_path", "pools/redpajama.jsonl"},
          {"longalpaca_path", "pools/longalpaca.jsonl"}}},
        {"niah", {{"lengths", NiahGrid::desk().lengths}}},
        {"eval", {{"training_length", 8192}}},
        {"seed", spec.seed},
        {"output_dir", "out"},
    };
    const fs::path p = dir / "run.json";
    write_file(p, cfg.dump(2) + "\n");
    return p;
}

}  // namespace longctx
