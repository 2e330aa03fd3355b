#pragma once

// Training-set composition and the fine-tuning hyperparameter file.

#include <set>

#include "longctx/packing.hpp"

namespace longctx {

struct MixSpec {
    std::size_t synthetic_count = 3500;
    std::size_t redpajama_count = 5000;
    std::size_t longalpaca_count = 12000;
    std::uint64_t seed = 42;

    json to_json() const {
        return {{"synthetic_count", synthetic_count},
                {"redpajama_count", redpajama_count},
                {"longalpaca_count", longalpaca_count},
                {"seed", seed}};
    }
};

inline constexpr std::size_t kReferenceStatedTotal = 20000;

inline std::string composition_note(const MixSpec& spec) {
    const std::size_t sum = spec.synthetic_count + spec.redpajama_count + spec.longalpaca_count;
    return "reference recipe quotes a total of " + std::to_string(kReferenceStatedTotal) +
           " instances while its component quotas (3500 synthetic + 5000 redpajama + 12000 longalpaca) sum to 20500; "
           "this mix uses the component quotas as given (" +
           std::to_string(sum) + " records requested)";
}

// ---------------------------------------------------------------------------
// Auxiliary pools

enum class PoolAdapter { chat, redpajama_text, longalpaca };

inline PoolAdapter pool_adapter_from_string(std::string_view s) {
    if (s == "chat") return PoolAdapter::chat;
    if (s == "redpajama-text") return PoolAdapter::redpajama_text;
    if (s == "longalpaca") return PoolAdapter::longalpaca;
    throw ConfigError("unknown pool adapter '" + std::string(s) + "' (chat|redpajama-text|longalpaca)");
}

/// Load an auxiliary pool, converting from its native layout:
///   chat            this project's dataset schema
///   redpajama-text  {"text": ...} per line -> one plain-text assistant turn
///   longalpaca      {"instruction": ..., "input"?: ..., "output": ...} -> user/assistant pair
inline std::vector<ConversationSample> load_pool(const fs::path& path, PoolAdapter adapter, Origin origin,
                                                 const Tokenizer& tok) {
    if (adapter == PoolAdapter::chat) {
        auto samples = read_dataset(path);
        for (auto& s : samples) s.origin = origin;
        return samples;
    }
    std::vector<ConversationSample> out;
    std::size_t idx = 0;
    for (const auto& j : read_jsonl(path)) {
        ConversationSample s;
        s.origin = origin;
        if (adapter == PoolAdapter::redpajama_text) {
            const std::string text = j.at("text").get<std::string>();
            s.turns = {{"assistant", text}};
        } else {
            std::string prompt = j.at("instruction").get<std::string>();
            if (j.contains("input") && !j["input"].get<std::string>().empty()) prompt += "\n\n" + j["input"].get<std::string>();
            s.turns = {{"user", prompt}, {"assistant", j.at("output").get<std::string>()}};
        }
        s.total_tokens = count_turn_tokens(s.turns, tok);
        const std::string prefix = origin == Origin::redpajama ? "rp-" : origin == Origin::longalpaca ? "la-" : "aux-";
        s.id = prefix + sha256_hex(std::to_string(idx++) + '\0' + json_digest(messages_json(s.turns))).substr(0, 16);
        out.push_back(std::move(s));
    }
    return out;
}

/// Uniform sample of `n` records without replacement, deterministic for `seed`,
/// re-tagged with `origin`. Selected records come out in shuffled order.
inline std::vector<ConversationSample> sample_auxiliary(const std::vector<ConversationSample>& pool, std::size_t n,
                                                        std::uint64_t seed, Origin origin) {
    if (n > pool.size())
        throw PreconditionError("sample_auxiliary: requested " + std::to_string(n) + " " + to_string(origin) +
                                " records but the pool holds only " + std::to_string(pool.size()));
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset in random order.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<ConversationSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(pool[idx[i]]);
        out.back().origin = origin;
    }
    return out;
}

struct MixResult {
    std::vector<ConversationSample> samples;
    json manifest;
};

/// Concatenate the selected synthetic and auxiliary records and shuffle globally.
inline MixResult mix(const MixSpec& spec, const std::vector<ConversationSample>& synthetic,
                     const std::vector<ConversationSample>& redpajama_pool,
                     const std::vector<ConversationSample>& longalpaca_pool) {
    for (const auto& s : synthetic)
        if (s.origin != Origin::synthetic)
            throw Error("mix: origin tag collision: record " + s.id + " in the synthetic input is tagged " +
                        to_string(s.origin));

    MixResult r;
    const auto add = [&](std::vector<ConversationSample> part) {
        for (auto& s : part) r.samples.push_back(std::move(s));
    };
    add(sample_auxiliary(synthetic, spec.synthetic_count, derive_seed(spec.seed, "synthetic"), Origin::synthetic));
    add(sample_auxiliary(redpajama_pool, spec.redpajama_count, derive_seed(spec.seed, "redpajama"), Origin::redpajama));
    add(sample_auxiliary(longalpaca_pool, spec.longalpaca_count, derive_seed(spec.seed, "longalpaca"), Origin::longalpaca));

    std::set<std::string> ids;
    for (const auto& s : r.samples)
        if (!ids.insert(s.id).second) throw Error("mix: duplicate record id " + s.id);

    Rng rng(derive_seed(spec.seed, "global-shuffle"));
    rng.shuffle(r.samples);

    std::map<std::string, std::size_t> per_origin = {{"synthetic", 0}, {"redpajama", 0}, {"longalpaca", 0}};
    for (const auto& s : r.samples) ++per_origin[to_string(s.origin)];
    r.manifest = {{"mix_spec", spec.to_json()},
                  {"per_origin", per_origin},
                  {"record_count", r.samples.size()},
                  {"token_histogram", token_histogram(r.samples)},
                  {"notes", json::array({composition_note(spec)})}};
    return r;
}

// ---------------------------------------------------------------------------
// Training hyperparameters

struct TrainConfig {
    // Integral values are written without a fractional part.
    static json number(double v) {
        if (std::floor(v) == v && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
        return v;
    }

    std::string base_model = "meta-llama/Meta-Llama-3-8B-Instruct";
    int lora_rank = 32;
    int lora_alpha = 16;
    std::vector<std::string> lora_targets = {"q_proj", "k_proj", "v_proj", "o_proj"};
    bool train_embeddings = true;
    bool load_in_4bit = true;
    double learning_rate = 5e-5;
    std::string lr_schedule = "linear";
    int warmup_steps = 0;
    int batch_size = 8;
    int epochs = 1;
    bool gradient_checkpointing = true;
    double rope_base = 200000000.0;
    double original_rope_base = 500000.0;
    int max_seq_len = 81920;

    json to_json() const {
        return {{"schema_version", 1},
                {"base_model", base_model},
                {"lora_rank", lora_rank},
                {"lora_alpha", lora_alpha},
                {"lora_targets", lora_targets},
                {"train_embeddings", train_embeddings},
                {"load_in_4bit", load_in_4bit},
                {"learning_rate", learning_rate},
                {"lr_schedule", lr_schedule},
                {"warmup_steps", warmup_steps},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"gradient_checkpointing", gradient_checkpointing},
                {"rope_base", number(rope_base)},
                {"original_rope_base", number(original_rope_base)},
                {"max_seq_len", max_seq_len}};
    }

    /// Apply overrides from a JSON object; unknown keys are rejected.
    static TrainConfig from_json(const json& j) {
        TrainConfig c;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = it.value();
            try {
                if (k == "schema_version" || k == "deviates_from_reference_recipe") continue;
                if (k == "base_model") c.base_model = v;
                else if (k == "lora_rank") c.lora_rank = v;
                else if (k == "lora_alpha") c.lora_alpha = v;
                else if (k == "lora_targets") c.lora_targets = v.get<std::vector<std::string>>();
                else if (k == "train_embeddings") c.train_embeddings = v;
                else if (k == "load_in_4bit") c.load_in_4bit = v;
                else if (k == "learning_rate") c.learning_rate = v;
                else if (k == "lr_schedule") c.lr_schedule = v;
                else if (k == "warmup_steps") c.warmup_steps = v;
                else if (k == "batch_size") c.batch_size = v;
                else if (k == "epochs") c.epochs = v;
                else if (k == "gradient_checkpointing") c.gradient_checkpointing = v;
                else if (k == "rope_base") c.rope_base = v;
                else if (k == "original_rope_base") c.original_rope_base = v;
                else if (k == "max_seq_len") c.max_seq_len = v;
                else throw ConfigError("train config: unknown field '" + k + "'");
            } catch (const json::exception& e) {
                throw ConfigError("train config: field '" + k + "' has the wrong type: " + e.what());
            }
        }
        return c;
    }

    /// Field-level validation errors (empty when valid).
    std::vector<std::string> validate() const {
        std::vector<std::string> errs;
        if (lora_rank <= 0) errs.push_back("lora_rank must be positive");
        if (lora_alpha <= 0) errs.push_back("lora_alpha must be positive");
        if (!(learning_rate > 0)) errs.push_back("learning_rate must be positive");
        if (warmup_steps < 0) errs.push_back("warmup_steps must be non-negative");
        if (batch_size <= 0) errs.push_back("batch_size must be positive");
        if (epochs <= 0) errs.push_back("epochs must be positive");
        if (max_seq_len <= 0) errs.push_back("max_seq_len must be positive");
        if (!(original_rope_base > 1)) errs.push_back("original_rope_base must exceed 1");
        if (!(rope_base >= original_rope_base)) errs.push_back("rope_base must be >= original_rope_base");
        if (lr_schedule != "linear" && lr_schedule != "constant" && lr_schedule != "cosine")
            errs.push_back("lr_schedule must be linear|constant|cosine");
        static const std::set<std::string> allowed = {"q_proj", "k_proj", "v_proj", "o_proj",
                                                      "gate_proj", "up_proj", "down_proj"};
        if (lora_targets.empty()) errs.push_back("lora_targets must not be empty");
        for (const auto& t : lora_targets)
            if (!allowed.count(t)) errs.push_back("lora_targets: unknown module '" + t + "'");
        return errs;
    }

    /// Fields that differ from the reference recipe, as "field: value != reference".
    std::vector<std::string> deviations() const {
        const json mine = to_json(), ref = TrainConfig{}.to_json();
        std::vector<std::string> out;
        for (auto it = ref.begin(); it != ref.end(); ++it)
            if (mine.at(it.key()) != it.value())
                out.push_back(it.key() + ": " + mine.at(it.key()).dump() + " != " + it.value().dump());
        return out;
    }
};

/// Write the hyperparameter file consumed by the training kit.
inline void emit_train_config(const TrainConfig& cfg, const fs::path& path) {
    const auto errs = cfg.validate();
    if (!errs.empty()) throw ConfigError("invalid train config: " + join(errs, "; "));
    json j = cfg.to_json();
    j["deviates_from_reference_recipe"] = cfg.deviations();
    write_file(path, j.dump(2) + "\n");
}

}  // namespace longctx
