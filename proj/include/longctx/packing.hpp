#pragma once

// Packs a long context and its QA pairs into one multi-turn chat sample, and
// reads/writes chat datasets.
//
// Dataset record (one JSON object per line, UTF-8):
//   {"schema_version": 1, "id": str, "origin": "synthetic"|"redpajama"|"longalpaca",
//    "task": str|null, "total_tokens": int,
//    "messages": [{"role": "user"|"assistant"|"system", "content": str}, ...]}
// A sidecar <file>.manifest.json carries counts, the file digest and a token histogram.

#include "longctx/synthesis.hpp"

namespace longctx {

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr std::string_view kAnswerPreamble = "Answer based on the document above.";

enum class Origin { synthetic, redpajama, longalpaca };

inline std::string to_string(Origin o) {
    switch (o) {
        case Origin::synthetic: return "synthetic";
        case Origin::redpajama: return "redpajama";
        case Origin::longalpaca: return "longalpaca";
    }
    return {};
}

inline Origin origin_from_string(std::string_view s) {
    if (s == "synthetic") return Origin::synthetic;
    if (s == "redpajama") return Origin::redpajama;
    if (s == "longalpaca") return Origin::longalpaca;
    throw ParseError("unknown origin '" + std::string(s) + "'");
}

struct ConversationSample {
    std::string id;
    std::vector<ChatMessage> turns;
    std::size_t total_tokens = 0;
    Origin origin = Origin::synthetic;
    std::optional<TaskKind> task;

    bool operator==(const ConversationSample&) const = default;

    json to_json() const {
        return {{"schema_version", kDatasetSchemaVersion},
                {"id", id},
                {"origin", to_string(origin)},
                {"task", task ? json(to_string(*task)) : json(nullptr)},
                {"total_tokens", total_tokens},
                {"messages", messages_json(turns)}};
    }

    static ConversationSample from_json(const json& j) {
        const int v = j.value("schema_version", -1);
        if (v != kDatasetSchemaVersion)
            throw ParseError("dataset schema_version " + std::to_string(v) + " does not match expected " +
                             std::to_string(kDatasetSchemaVersion));
        ConversationSample s;
        s.id = j.at("id");
        s.origin = origin_from_string(j.at("origin").get<std::string>());
        if (!j.at("task").is_null()) s.task = task_from_string(j.at("task").get<std::string>());
        s.total_tokens = j.at("total_tokens");
        for (const auto& m : j.at("messages")) s.turns.push_back({m.at("role"), m.at("content")});
        return s;
    }
};

inline std::size_t count_turn_tokens(const std::vector<ChatMessage>& turns, const Tokenizer& tok) {
    std::size_t n = 0;
    for (const auto& t : turns) n += tok.count(t.content);
    return n;
}

/// Structural checks. Chat samples must start with a user turn, alternate, and end
/// with an assistant turn; plain-text (redpajama) samples are one assistant turn;
/// synthetic samples must also sit inside `window`.
inline std::vector<std::string> validate_sample(const ConversationSample& s, const std::optional<Window>& window) {
    std::vector<std::string> v;
    if (s.turns.empty()) v.push_back(s.id + ": no turns");
    for (const auto& t : s.turns)
        if (!valid_role(t.role)) v.push_back(s.id + ": invalid role '" + t.role + "'");
    if (s.origin == Origin::redpajama) {
        if (s.turns.size() != 1 || s.turns[0].role != "assistant")
            v.push_back(s.id + ": plain-text sample must be a single assistant turn");
    } else if (!s.turns.empty()) {
        if (s.turns.front().role != "user") v.push_back(s.id + ": first turn must be user");
        if (s.turns.back().role != "assistant") v.push_back(s.id + ": last turn must be assistant");
        for (std::size_t i = 0; i < s.turns.size(); ++i) {
            const char* want = i % 2 == 0 ? "user" : "assistant";
            if (s.turns[i].role != want) {
                v.push_back(s.id + ": role alternation broken at turn " + std::to_string(i));
                break;
            }
        }
    }
    if (s.origin == Origin::synthetic && window && !window->contains(s.total_tokens))
        v.push_back(s.id + ": total_tokens " + std::to_string(s.total_tokens) + " outside window [" +
                    std::to_string(window->min_tokens) + ", " + std::to_string(window->max_tokens) + "]");
    return v;
}

struct PackOptions {
    Window window;
    std::string separator = std::string(kDefaultSeparator);
    std::string preamble = std::string(kAnswerPreamble);
};

struct PackOutcome {
    std::optional<ConversationSample> sample;
    std::vector<std::string> warnings;
    std::string skip_reason;
};

inline std::vector<ChatMessage> layout_turns(const std::string& context, const std::vector<QAPair>& pairs,
                                             std::size_t n_pairs, const std::string& preamble) {
    std::vector<ChatMessage> turns;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        std::string user = i == 0 ? context + "\n\n" + preamble + "\n\n" + pairs[0].question : pairs[i].question;
        turns.push_back({"user", std::move(user)});
        turns.push_back({"assistant", pairs[i].answer});
    }
    return turns;
}

/// Build the training conversation: turn 1 is context + preamble + first question,
/// then alternating answers and questions. Trailing pairs are dropped while the
/// sample exceeds the window maximum; the context itself is never cut.
inline PackOutcome pack_conversation(const ContextAssembly& a, const SynthRecord& r, const CorpusIndex& corpus,
                                     const Tokenizer& tok, const PackOptions& opts = {}) {
    if (r.pairs.empty()) throw PreconditionError("pack_conversation: record has no pairs");
    if (r.assembly_id != a.id) throw PreconditionError("pack_conversation: record belongs to assembly " + r.assembly_id);
    PackOutcome out;
    const std::string context = render(a, corpus, opts.separator);
    // Pair token costs are additive over turns, so count once and trim arithmetically.
    const std::size_t ctx_turn =
        tok.count(context + "\n\n" + opts.preamble + "\n\n" + r.pairs[0].question) + tok.count(r.pairs[0].answer);
    std::size_t total = ctx_turn;
    std::size_t keep = 1;
    for (std::size_t i = 1; i < r.pairs.size(); ++i) {
        const std::size_t cost = tok.count(r.pairs[i].question) + tok.count(r.pairs[i].answer);
        if (total + cost > opts.window.max_tokens) break;
        total += cost;
        keep = i + 1;
    }
    if (keep < r.pairs.size())
        out.warnings.push_back("assembly " + a.id + ": dropped " + std::to_string(r.pairs.size() - keep) +
                               " trailing pair(s) to fit " + std::to_string(opts.window.max_tokens) + " tokens");

    ConversationSample s;
    s.turns = layout_turns(context, r.pairs, keep, opts.preamble);
    s.total_tokens = count_turn_tokens(s.turns, tok);
    s.origin = Origin::synthetic;
    s.task = r.task;
    s.id = "syn-" + sha256_hex(a.id + '\0' + to_string(r.task) + '\0' + r.prompt_digest).substr(0, 16);
    if (s.total_tokens > opts.window.max_tokens) {
        out.skip_reason = "assembly " + a.id + ": context plus one pair needs " + std::to_string(s.total_tokens) +
                          " tokens, above window maximum " + std::to_string(opts.window.max_tokens);
        return out;
    }
    if (s.total_tokens < opts.window.min_tokens) {
        out.skip_reason = "assembly " + a.id + ": sample has " + std::to_string(s.total_tokens) +
                          " tokens, below window minimum " + std::to_string(opts.window.min_tokens);
        return out;
    }
    out.sample = std::move(s);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset files

inline fs::path manifest_path(const fs::path& dataset) { return fs::path(dataset.string() + ".manifest.json"); }

inline json token_histogram(const std::vector<ConversationSample>& samples) {
    static constexpr std::size_t kEdges[] = {1024, 2048, 4096, 8192, 16384, 32768, 65536, 81920, 131072};
    std::map<std::string, std::size_t> bins;
    for (const auto& s : samples) {
        std::string label = ">131072";
        for (auto e : kEdges) {
            if (s.total_tokens <= e) {
                label = "<=" + std::to_string(e);
                break;
            }
        }
        ++bins[label];
    }
    return bins;
}

inline std::string serialize_dataset(const std::vector<ConversationSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += s.to_json().dump();
        out += '\n';
    }
    return out;
}

/// Write samples plus manifest sidecar; returns the sha256 of the dataset bytes.
inline std::string write_dataset(const std::vector<ConversationSample>& samples, const fs::path& path,
                                 const json& extra_manifest = json::object()) {
    const std::string payload = serialize_dataset(samples);
    const std::string digest = sha256_hex(payload);
    write_file(path, payload);
    std::map<std::string, std::size_t> per_origin;
    for (const auto& s : samples) ++per_origin[to_string(s.origin)];
    json manifest = {{"schema_version", kDatasetSchemaVersion},
                     {"record_count", samples.size()},
                     {"sha256", digest},
                     {"per_origin", per_origin},
                     {"token_histogram", token_histogram(samples)}};
    for (auto it = extra_manifest.begin(); it != extra_manifest.end(); ++it) manifest[it.key()] = it.value();
    write_file(manifest_path(path), manifest.dump(2) + "\n");
    return digest;
}

inline std::vector<ConversationSample> read_dataset(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset " + path.string());
    std::vector<ConversationSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(ConversationSample::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line.substr(0, 200));
        }
    }
    return out;
}

}  // namespace longctx
