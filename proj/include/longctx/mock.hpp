#pragma once

// Offline endpoints: a rule-based teacher, a hashed bag-of-words embedder, a
// rubric-following judge, and scripted evaluation responders. All replies are
// pure functions of the request, so replay logs from mock runs are stable.

#include "longctx/clustering.hpp"
#include "longctx/scoring.hpp"

namespace longctx::mock {

inline HttpResult chat_reply(const std::string& content, std::int64_t prompt_tokens = 0) {
    const json body = {{"id", "mock-" + sha256_hex(content).substr(0, 12)},
                       {"object", "chat.completion"},
                       {"choices",
                        json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", content}}},
                                      {"finish_reason", "stop"}}})},
                       {"usage",
                        {{"prompt_tokens", prompt_tokens},
                         {"completion_tokens", static_cast<std::int64_t>(split_ws(content).size())}}}};
    return {200, body.dump(), {}};
}

inline std::string first_user_message(const json& body) {
    for (const auto& m : body.at("messages"))
        if (m.at("role") == "user") return m.at("content").get<std::string>();
    throw PreconditionError("mock: request has no user message");
}

inline std::int64_t word_count(const json& body) {
    std::int64_t n = 0;
    for (const auto& m : body.at("messages")) n += static_cast<std::int64_t>(split_ws(m.at("content").get<std::string>()).size());
    return n;
}

/// Text between the first `open` and the following `close`; empty when absent.
inline std::string between(std::string_view text, std::string_view open, std::string_view close) {
    const auto b = text.find(open);
    if (b == std::string_view::npos) return {};
    const auto start = b + open.size();
    const auto e = text.find(close, start);
    if (e == std::string_view::npos) return {};
    return std::string(text.substr(start, e - start));
}

/// Sentences of at least `min_words` words, whitespace-collapsed.
inline std::vector<std::string> sentences(std::string_view text, std::size_t min_words = 5) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        const bool end = detail::is_terminator(text[i]) && (i + 1 == text.size() || is_space(text[i + 1]));
        if (end || i + 1 == text.size()) {
            std::string s = join(split_ws(cur), " ");
            if (s.find("[excerpt") == 0) s = s.substr(s.find(']') + 1);
            s = std::string(trim(s));
            if (split_ws(s).size() >= min_words && s.find("-----") == std::string::npos) out.push_back(s);
            cur.clear();
        }
    }
    return out;
}

inline std::string opening(const std::string& s, std::size_t words = 4) {
    auto w = split_ws(s);
    w.resize(std::min(words, w.size()));
    return join(w, " ");
}

/// Two-word capitalized names that occur at least twice, most frequent first.
inline std::vector<std::string> character_candidates(std::string_view text, std::size_t max_names = 3) {
    static const std::set<std::string> skip = {"The", "In", "After", "Everyone", "Chapter", "Author", "A", "An",
                                               "On", "We", "Record", "It", "This", "Sure"};
    const auto words = split_ws(text);
    const auto is_cap = [](const std::string& w) {
        if (w.size() < 2 || !std::isupper(static_cast<unsigned char>(w[0]))) return false;
        for (std::size_t i = 1; i < w.size(); ++i)
            if (!std::islower(static_cast<unsigned char>(w[i]))) return false;
        return true;
    };
    const auto strip = [](std::string w) {
        while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
        return w;
    };
    std::map<std::string, std::size_t> freq;
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        if (!words[i].empty() && std::ispunct(static_cast<unsigned char>(words[i].back()))) continue;
        const std::string a = words[i], b = strip(words[i + 1]);
        if (is_cap(a) && is_cap(b) && !skip.count(a)) ++freq[a + " " + b];
    }
    std::vector<std::pair<std::string, std::size_t>> v;
    for (const auto& kv : freq)
        if (kv.second >= 2) v.push_back(kv);
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(max_names, v.size()); ++i) out.push_back(v[i].first);
    return out;
}

/// Rule-based stand-in for the teacher model. Reads the task from the prompt's
/// opening line and writes pairs in the numbered Q:/A: grammar.
inline std::string teacher_reply(const std::string& prompt) {
    Rng rng(derive_seed(0, sha256_hex(prompt)));
    std::vector<QAPair> pairs;
    const auto pick_sentences = [&](const std::vector<std::string>& ss, std::size_t n) {
        std::vector<std::string> out;
        if (ss.empty()) return out;
        // One sentence from each of n equal strata, so picks spread over the material.
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i * ss.size() / n, hi = (i + 1) * ss.size() / n;
            out.push_back(ss[std::min(ss.size() - 1, lo + rng.below(std::max<std::size_t>(1, hi - lo)))]);
        }
        return out;
    };
    if (starts_with(prompt, "You are given a passage")) {
        const auto ss = sentences(between(prompt, "<passage>\n", "\n</passage>"));
        for (const auto& s : pick_sentences(ss, std::min<std::size_t>(3, ss.size())))
            pairs.push_back({"Which detail does the passage give in the sentence that begins \"" + opening(s) + "\"?", s, {}});
    } else if (starts_with(prompt, "You are given a long text")) {
        const auto ss = sentences(between(prompt, "<text>\n", "\n</text>"));
        const auto picked = pick_sentences(ss, std::min<std::size_t>(6, ss.size()));
        for (std::size_t i = 0; i + 1 < picked.size(); i += 2)
            pairs.push_back({"How do the passages beginning \"" + opening(picked[i]) + "\" and \"" +
                                 opening(picked[i + 1]) + "\" relate across the text?",
                             "Early on the text says: " + picked[i] + " Later it says: " + picked[i + 1], {}});
    } else if (starts_with(prompt, "You are given a book")) {
        const std::string book = between(prompt, "<book>\n", "\n</book>");
        const auto ss = sentences(book);
        for (const auto& name : character_candidates(book)) {
            std::vector<std::string> mentions;
            for (const auto& s : ss)
                if (s.find(name) != std::string::npos && mentions.size() < 3) mentions.push_back(s);
            pairs.push_back({biography_question(name), name + " is a character in the book. " + join(mentions, " "), {}});
        }
    } else if (prompt.find("independent texts") != std::string::npos) {
        std::vector<std::vector<std::string>> texts;
        for (std::size_t i = 1;; ++i) {
            const std::string body = between(prompt, "<text id=\"" + std::to_string(i) + "\">\n", "\n</text>");
            if (body.empty()) break;
            texts.push_back(sentences(body));
        }
        for (std::size_t i = 0; i + 1 < texts.size() && pairs.size() < 3; ++i) {
            if (texts[i].empty() || texts[i + 1].empty()) continue;
            const auto& a = texts[i][rng.below(texts[i].size())];
            const auto& b = texts[i + 1][rng.below(texts[i + 1].size())];
            pairs.push_back({"What do text " + std::to_string(i + 1) + " and text " + std::to_string(i + 2) +
                                 " each describe, and how do they differ?",
                             "Text " + std::to_string(i + 1) + " says: " + a + " Text " + std::to_string(i + 2) +
                                 " says: " + b,
                             {}});
        }
    }
    if (pairs.empty()) return "I could not find enough material to write question-answer pairs.";
    return format_pairs(pairs);
}

/// Teacher endpoint. With `flaky`, the first reply of every conversation is chatter
/// without pairs, which exercises the re-ask path.
inline std::shared_ptr<MockTransport> teacher_transport(bool flaky = false) {
    return std::make_shared<MockTransport>(
        [flaky](const std::string& path, const json& body) -> HttpResult {
            if (path != "/chat/completions") return {404, "unknown path " + path, {}};
            const auto& msgs = body.at("messages");
            if (flaky && msgs.size() == 1) return chat_reply("Sure, here are some thoughts about the text.");
            return chat_reply(teacher_reply(first_user_message(body)), word_count(body));
        },
        flaky ? "mock-teacher-flaky" : "mock-teacher");
}

/// Embedding endpoint returning hashed bag-of-words vectors.
inline std::shared_ptr<MockTransport> embedder_transport(std::size_t dim = 256) {
    return std::make_shared<MockTransport>(
        [dim](const std::string& path, const json& body) -> HttpResult {
            if (path != "/embeddings") return {404, "unknown path " + path, {}};
            json data = json::array();
            std::size_t i = 0;
            for (const auto& t : body.at("input")) {
                const auto v = hashed_bow_embedding(t.get<std::string>(), dim);
                data.push_back({{"index", i++}, {"embedding", std::vector<float>(v.begin(), v.end())}});
            }
            return {200, json{{"data", data}, {"model", body.value("model", "")}}.dump(), {}};
        },
        "mock-embedder");
}

/// Judge endpoint applying the rubric mechanically: CORRECT when the reference
/// appears in the model answer or covers at least 80% of its words by unigram recall.
inline std::shared_ptr<MockTransport> judge_transport() {
    return std::make_shared<MockTransport>(
        [](const std::string& path, const json& body) -> HttpResult {
            if (path != "/chat/completions") return {404, "unknown path " + path, {}};
            const std::string prompt = first_user_message(body);
            const std::string ref = between(prompt, "Reference answer: ", "\nModel answer: ");
            const std::string out = between(prompt, "Model answer: ", "\n\nThe model answer is CORRECT");
            const bool ok = !trim(out).empty() &&
                            (verbatim_match(ref, out) > 0 || rouge(out, ref, RougeVariant::rouge1).recall >= 0.8);
            return chat_reply(ok ? "CORRECT" : "INCORRECT");
        },
        "mock-judge");
}

// ---------------------------------------------------------------------------
// Scripted evaluation responders

inline ChatRequest eval_request(const EvalInstance& x) {
    ChatRequest req;
    req.messages = {{"user", x.prompt()}};
    req.temperature = 0.0;
    req.max_new_tokens = 128;
    req.request_id = x.id;
    return req;
}

/// Replies are looked up by the digest of the prompt; a missing reply (nullopt)
/// answers with HTTP 400, i.e. a permanent per-instance failure.
using Script = std::function<std::optional<std::string>(const EvalInstance&, std::size_t index)>;

inline std::shared_ptr<MockTransport> scripted_transport(const std::vector<EvalInstance>& instances, const Script& script,
                                                         std::string name = "mock-scripted") {
    auto replies = std::make_shared<std::map<std::string, std::optional<std::string>>>();
    for (std::size_t i = 0; i < instances.size(); ++i) (*replies)[sha256_hex(instances[i].prompt())] = script(instances[i], i);
    return std::make_shared<MockTransport>(
        [replies](const std::string& path, const json& body) -> HttpResult {
            if (path != "/chat/completions") return {404, "unknown path " + path, {}};
            auto it = replies->find(sha256_hex(first_user_message(body)));
            if (it == replies->end()) return chat_reply("I do not know.");
            if (!it->second) return {400, "scripted failure", {}};
            return chat_reply(*it->second);
        },
        std::move(name));
}

/// Answers every instance with its expected answer.
inline std::optional<std::string> perfect(const EvalInstance& x, std::size_t) {
    if (x.task == EvalTask::niah) return "The best thing to do is " + x.expected + ".";
    return x.expected;
}

/// Perfect except for needles deeper than half the context.
inline std::optional<std::string> fails_deep(const EvalInstance& x, std::size_t i) {
    if (x.task == EvalTask::niah && x.meta.value("depth", 0.0) > 0.5) return std::string("I could not find that in the document.");
    return perfect(x, i);
}

/// Perfect except that every tenth instance fails at the transport level.
inline std::optional<std::string> fails_every_tenth(const EvalInstance& x, std::size_t i) {
    if (i % 10 == 9) return std::nullopt;
    return perfect(x, i);
}

inline const std::vector<std::string>& known_mocks() {
    static const std::vector<std::string> m = {"teacher", "teacher-flaky", "embedder", "judge",
                                               "perfect", "fail-deep",     "fail-every-10th"};
    return m;
}

/// Transport for a named mock; scripted responders need the instance list.
inline std::shared_ptr<Transport> make_transport(const std::string& name, const std::vector<EvalInstance>& instances = {}) {
    if (name == "teacher") return teacher_transport(false);
    if (name == "teacher-flaky") return teacher_transport(true);
    if (name == "embedder") return embedder_transport();
    if (name == "judge") return judge_transport();
    if (name == "perfect") return scripted_transport(instances, perfect, "mock-perfect");
    if (name == "fail-deep") return scripted_transport(instances, fails_deep, "mock-fail-deep");
    if (name == "fail-every-10th") return scripted_transport(instances, fails_every_tenth, "mock-fail-every-10th");
    throw ConfigError("unknown mock endpoint '" + name + "' (" + join(known_mocks(), "|") + ")");
}

}  // namespace longctx::mock
