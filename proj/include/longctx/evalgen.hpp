#pragma once

// Synthetic long-context evaluations: needle-in-a-haystack grids and
// topic-retrieval conversations.
//
// Instance record (one JSON object per line):
//   {"schema_version": 1, "id": str, "task": "niah"|"topic_retrieval",
//    "context": str, "question": str, "expected": str, "meta": {...}}
// NIAH meta: context_len, depth, actual_tokens, needle_token_index, target_token_index.
// Topic meta: topic_count, first_topic, topics.

#include "longctx/chunking.hpp"
#include "longctx/toydata.hpp"

namespace longctx {

enum class EvalTask { niah, topic_retrieval };

inline std::string to_string(EvalTask t) { return t == EvalTask::niah ? "niah" : "topic_retrieval"; }

inline EvalTask eval_task_from_string(std::string_view s) {
    if (s == "niah") return EvalTask::niah;
    if (s == "topic_retrieval" || s == "topics") return EvalTask::topic_retrieval;
    throw ParseError("unknown eval task '" + std::string(s) + "'");
}

struct EvalInstance {
    std::string id;
    EvalTask task = EvalTask::niah;
    std::string context;
    std::string question;
    std::string expected;
    json meta = json::object();

    bool operator==(const EvalInstance&) const = default;

    /// Prompt sent to the evaluated model.
    std::string prompt() const { return context + "\n\n" + question; }

    json to_json() const {
        return {{"schema_version", 1}, {"id", id},           {"task", to_string(task)}, {"context", context},
                {"question", question}, {"expected", expected}, {"meta", meta}};
    }
    static EvalInstance from_json(const json& j) {
        if (j.value("schema_version", -1) != 1) throw ParseError("eval instance schema_version mismatch");
        return {j.at("id"), eval_task_from_string(j.at("task").get<std::string>()), j.at("context"), j.at("question"),
                j.at("expected"), j.value("meta", json::object())};
    }
};

inline void write_instances(const fs::path& p, const std::vector<EvalInstance>& xs) {
    std::vector<json> rows;
    for (const auto& x : xs) rows.push_back(x.to_json());
    write_file(p, to_jsonl(rows));
}

inline std::vector<EvalInstance> read_instances(const fs::path& p) {
    std::vector<EvalInstance> out;
    for (const auto& j : read_jsonl(p)) out.push_back(EvalInstance::from_json(j));
    return out;
}

// ---------------------------------------------------------------------------
// Needle in a haystack

inline constexpr std::string_view kDefaultNeedle =
    "The best thing to do in San Francisco is eat a sandwich and sit in Dolores Park on a sunny day.";
inline constexpr std::string_view kDefaultNeedleQuestion = "What is the best thing to do in San Francisco?";
inline constexpr std::string_view kDefaultNeedleAnswer = "eat a sandwich and sit in Dolores Park on a sunny day";

/// `count` lengths evenly spaced over [lo, hi], rounded to integers.
inline std::vector<std::size_t> linear_lengths(std::size_t lo, std::size_t hi, std::size_t count) {
    std::vector<std::size_t> out;
    if (count == 1) return {lo};
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(lo + static_cast<std::size_t>(std::llround(static_cast<double>(hi - lo) * i / (count - 1))));
    return out;
}

/// Depths 0.0, 0.1, ..., 1.0 computed as i/10 (exact endpoints).
inline std::vector<double> default_depths(std::size_t steps = 10) {
    std::vector<double> d;
    for (std::size_t i = 0; i <= steps; ++i) d.push_back(static_cast<double>(i) / static_cast<double>(steps));
    return d;
}

struct NiahGrid {
    std::vector<std::size_t> lengths = {4096};
    std::vector<double> depths = default_depths();
    std::string needle = std::string(kDefaultNeedle);
    std::string question = std::string(kDefaultNeedleQuestion);
    std::string answer = std::string(kDefaultNeedleAnswer);
    std::string haystack;         // text; the bundled essay filler when empty
    std::string haystack_source;  // label recorded in instance meta

    NiahGrid() {
        lengths = {4096};
        for (std::size_t l = 8192; l <= 131072; l += 8192) lengths.push_back(l);
    }

    /// Ten lengths from 1K to 16K: a desk-scale sweep.
    static NiahGrid desk() {
        NiahGrid g;
        g.lengths = linear_lengths(1024, 16384, 10);
        return g;
    }

    void validate() const {
        if (lengths.empty()) throw PreconditionError("niah grid: no lengths");
        if (depths.empty()) throw PreconditionError("niah grid: no depths");
        for (std::size_t i = 1; i < lengths.size(); ++i)
            if (lengths[i] <= lengths[i - 1]) throw PreconditionError("niah grid: lengths must be strictly ascending");
        for (std::size_t i = 0; i < depths.size(); ++i) {
            if (!(depths[i] >= 0.0 && depths[i] <= 1.0)) throw PreconditionError("niah grid: depths must lie in [0, 1]");
            if (i && depths[i] <= depths[i - 1]) throw PreconditionError("niah grid: depths must be strictly ascending");
        }
        if (trim(needle).empty()) throw PreconditionError("niah grid: needle is empty");
        if (answer.empty() || needle.find(answer) == std::string::npos)
            throw PreconditionError("niah grid: answer must be a span of the needle");
    }
};

inline std::string niah_id(std::size_t length, double depth) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "niah-L%zu-d%03d", length, static_cast<int>(std::lround(depth * 100)));
    return buf;
}

namespace detail {

/// Sentence-start offsets of `text` (plus 0 and text.size()).
inline std::vector<std::size_t> sentence_boundaries(std::string_view text) {
    std::vector<std::size_t> out = {0};
    for (std::size_t p = 1; p < text.size(); ++p)
        if (sentence_start(text, p)) out.push_back(p);
    out.push_back(text.size());
    return out;
}

inline std::string niah_context(std::string_view hay, std::size_t pos, std::string_view needle) {
    if (pos == 0) return std::string(needle) + " " + std::string(hay);
    if (pos >= hay.size()) return std::string(hay) + " " + std::string(needle);
    return std::string(hay.substr(0, pos)) + std::string(needle) + " " + std::string(hay.substr(pos));
}

}  // namespace detail

/// One instance per (length, depth). The haystack is cut to the length left after
/// the needle, and the needle goes in at the sentence boundary nearest
/// floor(depth * length) tokens.
inline std::vector<EvalInstance> gen_niah(const NiahGrid& grid, const Tokenizer& tok) {
    grid.validate();
    const std::size_t max_len = grid.lengths.back();
    const std::string hay_full = grid.haystack.empty() ? toy::haystack(max_len + max_len / 4 + 64) : grid.haystack;
    if (hay_full.find(grid.needle) != std::string::npos)
        throw PreconditionError("niah: haystack already contains the needle");
    const TokenizedText tt(hay_full, tok);
    if (tt.spans().size() < max_len)
        throw PreconditionError("niah: haystack has " + std::to_string(tt.spans().size()) + " tokens; the grid needs " +
                                std::to_string(max_len));
    const std::size_t needle_tokens = tok.count(grid.needle);

    std::vector<EvalInstance> out;
    for (std::size_t len : grid.lengths) {
        if (len <= needle_tokens + 8)
            throw PreconditionError("niah: length " + std::to_string(len) + " leaves no room beside the needle");
        // Cut the haystack; shrink the budget if boundary merges overshoot.
        std::size_t budget = len - needle_tokens;
        std::string hay;
        for (int round = 0; round < 8; ++round) {
            const auto fit = tt.fit(0, budget, budget > 6 ? budget - 6 : 0, BoundaryRule::sentence);
            hay = std::string(trim(std::string_view(hay_full).substr(0, fit.end)));
            if (!hay.empty() && !detail::is_terminator(hay.back()) && !detail::is_closer(hay.back())) hay += '.';
            const std::size_t total = tok.count(hay) + needle_tokens;
            if (total <= len || budget == 1) break;
            budget -= std::min(budget - 1, total - len);
        }
        const auto bounds = detail::sentence_boundaries(hay);
        const TokenizedText htt(hay, tok);
        std::vector<std::size_t> bound_tok;
        for (auto b : bounds) bound_tok.push_back(b == 0 ? 0 : htt.count(0, b));

        for (double depth : grid.depths) {
            const auto target = static_cast<std::size_t>(std::floor(depth * static_cast<double>(len)));
            std::size_t best = 0;
            for (std::size_t i = 1; i < bounds.size(); ++i) {
                const auto dist = [&](std::size_t k) {
                    return bound_tok[k] > target ? bound_tok[k] - target : target - bound_tok[k];
                };
                if (dist(i) < dist(best)) best = i;
            }
            EvalInstance x;
            x.id = niah_id(len, depth);
            x.task = EvalTask::niah;
            x.context = detail::niah_context(hay, bounds[best], grid.needle);
            x.question = grid.question;
            x.expected = grid.answer;
            const std::size_t needle_pos = x.context.find(grid.needle);
            x.meta = {{"context_len", len},
                      {"depth", depth},
                      {"actual_tokens", tok.count(x.context)},
                      {"needle_token_index", tok.count(std::string_view(x.context).substr(0, needle_pos))},
                      {"target_token_index", target},
                      {"haystack_source", grid.haystack_source.empty() ? "bundled essay filler" : grid.haystack_source}};
            out.push_back(std::move(x));
        }
    }
    return out;
}

struct NiahCheck {
    bool contained_once = false;
    bool length_ok = false;
    bool placement_ok = false;
    std::string detail;

    bool ok() const { return contained_once && length_ok && placement_ok; }
};

/// Re-tokenizes an instance and checks the needle invariants: present exactly once,
/// context within `slack` tokens of the requested length, and the needle starting at
/// the sentence boundary nearest the target (recorded index within `slack` of a
/// fresh count, and no other boundary strictly closer to the target).
inline NiahCheck check_niah_instance(const EvalInstance& x, std::string_view needle, const Tokenizer& tok,
                                     std::size_t slack = 8) {
    NiahCheck c;
    const std::size_t first = x.context.find(needle);
    c.contained_once = first != std::string::npos && x.context.find(needle, first + 1) == std::string::npos;
    const std::size_t len = x.meta.at("context_len");
    const std::size_t actual = tok.count(x.context);
    c.length_ok = actual + slack >= len && actual <= len + slack;
    if (!c.contained_once) {
        c.detail = "needle occurrences != 1";
        return c;
    }
    const std::size_t target = x.meta.at("target_token_index");
    const std::size_t idx = tok.count(std::string_view(x.context).substr(0, first));
    const std::size_t recorded = x.meta.at("needle_token_index");
    // The haystack without the needle, as the generator saw it.
    std::string hay = x.context.substr(0, first);
    std::string tail = x.context.substr(first + needle.size());
    if (!tail.empty() && tail[0] == ' ') tail.erase(0, 1);
    if (first > 0 && tail.empty() && !hay.empty() && hay.back() == ' ') hay.pop_back();
    const std::string stripped = hay + tail;
    const std::size_t dist = idx > target ? idx - target : target - idx;
    bool nearest = true;
    for (auto b : detail::sentence_boundaries(stripped)) {
        const std::size_t bt = tok.count(std::string_view(stripped).substr(0, b));
        const std::size_t d = bt > target ? bt - target : target - bt;
        // Merges across the insertion point can shift counts by a token or two.
        if (d + 2 < dist) nearest = false;
    }
    const std::size_t drift = idx > recorded ? idx - recorded : recorded - idx;
    c.placement_ok = nearest && drift <= slack;
    if (!c.ok())
        c.detail = "actual_tokens=" + std::to_string(actual) + " needle_index=" + std::to_string(idx) +
                   " target=" + std::to_string(target) + (nearest ? "" : " (a closer boundary exists)");
    return c;
}

// ---------------------------------------------------------------------------
// Topic retrieval

inline const std::vector<std::size_t>& default_topic_counts() {
    static const std::vector<std::size_t> c = {5, 10, 15, 20, 25, 30, 40, 50, 60, 70};
    return c;
}

inline constexpr std::string_view kTopicQuestion =
    "What is the first topic we discussed? Only give me the topic name. Do not summarize yourself.";

inline std::string topic_id(std::size_t n) { return "topics-n" + std::to_string(n); }

/// One conversation per count: n distinct topics sampled without replacement (seeded),
/// rendered as alternating USER/ASSISTANT turns; the expected answer is the first topic.
inline std::vector<EvalInstance> gen_topic_retrieval(const std::vector<toy::TopicEntry>& pool,
                                                     const std::vector<std::size_t>& counts, std::uint64_t seed) {
    if (counts.empty()) throw PreconditionError("topic retrieval: no counts");
    for (auto n : counts) {
        if (n == 0) throw PreconditionError("topic retrieval: counts must be positive");
        if (n > pool.size())
            throw PreconditionError("topic retrieval: pool has " + std::to_string(pool.size()) + " topics; count " +
                                    std::to_string(n) + " needs more");
    }
    std::set<std::string> distinct;
    for (const auto& t : pool) distinct.insert(t.topic);
    if (distinct.size() != pool.size()) throw PreconditionError("topic retrieval: pool topics are not distinct");

    std::vector<EvalInstance> out;
    for (auto n : counts) {
        Rng rng(derive_seed(seed, "topics-" + std::to_string(n)));
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        std::string ctx = "Below is a record of our previous conversation on " + std::to_string(n) +
                          " different topics.\n\n";
        std::vector<std::string> topics;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& e = pool[idx[i]];
            topics.push_back(e.topic);
            ctx += "USER: " + e.user + "\nASSISTANT: " + e.assistant + "\n\n";
        }
        EvalInstance x;
        x.id = topic_id(n);
        x.task = EvalTask::topic_retrieval;
        x.context = std::string(trim(ctx));
        x.question = std::string(kTopicQuestion);
        x.expected = topics.front();
        x.meta = {{"topic_count", n}, {"first_topic", topics.front()}, {"topics", topics}};
        out.push_back(std::move(x));
    }
    return out;
}

/// Count of "USER:" sections in a topic-retrieval context.
inline std::size_t topic_sections(std::string_view context) {
    std::size_t n = 0;
    for (std::size_t p = context.find("USER: "); p != std::string_view::npos; p = context.find("USER: ", p + 1)) ++n;
    return n;
}

}  // namespace longctx
