#pragma once

// Teacher-model synthesis for the three long-context task families.
//
// Teacher replies use one fixed grammar: numbered "Q:" / "A:" line pairs.
//
//   reply    := { chatter | pair }
//   pair     := [number ("." | ")")] "Q:" text [" A:" text] NL
//               { question-continuation }
//               [number] "A:" text NL { answer-continuation }
//
// An answer runs until a blank line or the next "Q:" line; continuation lines
// are joined with a single space. Text outside pairs (leading remarks, anything
// after a blank line that does not start a new pair) is ignored.

#include <regex>

#include "longctx/chunking.hpp"
#include "longctx/gateway.hpp"
#include "longctx/templates_gen.hpp"

namespace longctx {

enum class TaskKind { SingleDetailQA, MultiDetailQAHomogeneous, MultiDetailQAHeterogeneous, BiographySummarization };

inline constexpr TaskKind kAllTasks[] = {TaskKind::SingleDetailQA, TaskKind::MultiDetailQAHomogeneous,
                                         TaskKind::MultiDetailQAHeterogeneous, TaskKind::BiographySummarization};

inline std::string to_string(TaskKind t) {
    switch (t) {
        case TaskKind::SingleDetailQA: return "single_detail_qa";
        case TaskKind::MultiDetailQAHomogeneous: return "multi_detail_qa_homogeneous";
        case TaskKind::MultiDetailQAHeterogeneous: return "multi_detail_qa_heterogeneous";
        case TaskKind::BiographySummarization: return "biography_summarization";
    }
    return {};
}

inline TaskKind task_from_string(std::string_view s) {
    for (auto t : kAllTasks)
        if (to_string(t) == s) return t;
    throw ParseError("unknown task kind '" + std::string(s) + "'");
}

inline std::string template_id(TaskKind t) { return to_string(t) + "_v1"; }

inline const std::string& prompt_template(const std::string& id) {
    const auto& all = generated::prompt_templates();
    auto it = all.find(id);
    if (it == all.end()) throw ConfigError("missing prompt template '" + id + "'");
    return it->second;
}

inline std::string fill_template(std::string tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& [k, v] : vars) tmpl = replace_all(std::move(tmpl), "{{" + k + "}}", v);
    return tmpl;
}

struct QAPair {
    std::string question;
    std::string answer;
    std::string evidence_hint;

    bool operator==(const QAPair&) const = default;
};

struct SynthRecord {
    std::string assembly_id;
    TaskKind task = TaskKind::SingleDetailQA;
    std::vector<QAPair> pairs;
    std::string teacher_model;
    std::string prompt_digest;
    std::string template_id;
    bool material_excerpted = false;
    int reasks = 0;

    bool operator==(const SynthRecord&) const = default;

    json to_json() const {
        json ps = json::array();
        for (const auto& p : pairs) {
            json j = {{"question", p.question}, {"answer", p.answer}};
            if (!p.evidence_hint.empty()) j["evidence_hint"] = p.evidence_hint;
            ps.push_back(j);
        }
        return {{"schema_version", 1},
                {"assembly_id", assembly_id},
                {"task", to_string(task)},
                {"pairs", ps},
                {"teacher_model", teacher_model},
                {"prompt_digest", prompt_digest},
                {"template_id", template_id},
                {"material_excerpted", material_excerpted},
                {"reasks", reasks}};
    }

    static SynthRecord from_json(const json& j) {
        if (j.value("schema_version", -1) != 1) throw ParseError("synth record schema_version mismatch");
        SynthRecord r;
        r.assembly_id = j.at("assembly_id");
        r.task = task_from_string(j.at("task").get<std::string>());
        for (const auto& p : j.at("pairs"))
            r.pairs.push_back({p.at("question"), p.at("answer"), p.value("evidence_hint", "")});
        r.teacher_model = j.at("teacher_model");
        r.prompt_digest = j.at("prompt_digest");
        r.template_id = j.value("template_id", "");
        r.material_excerpted = j.value("material_excerpted", false);
        r.reasks = j.value("reasks", 0);
        return r;
    }
};

// ---------------------------------------------------------------------------
// Prompt rendering

struct PromptOptions {
    std::size_t min_pairs = 3;
    std::size_t max_pairs = 5;
    std::size_t teacher_input_budget = 32 * 1024;  // tokens of material the teacher accepts
    double temperature = 0.7;
    int max_new_tokens = 2048;
};

struct RenderedPrompt {
    ChatRequest request;
    std::string template_id;
    std::string digest;
};

inline std::string biography_question(std::string_view name) { return "Write a biography of " + std::string(name) + "."; }

/// Render the teacher prompt for `task` over `material` (one piece per text).
inline RenderedPrompt render_prompt(TaskKind task, const std::vector<std::string>& material, const Tokenizer& tok,
                                    const PromptOptions& opts = {}) {
    if (material.empty() || std::all_of(material.begin(), material.end(), [](const auto& m) { return trim(m).empty(); }))
        throw PreconditionError("render_prompt: material is empty");
    if (task == TaskKind::SingleDetailQA && material.size() != 1)
        throw PreconditionError("render_prompt: single-detail QA takes exactly one anchor segment");

    std::string body;
    if (task == TaskKind::MultiDetailQAHeterogeneous) {
        for (std::size_t i = 0; i < material.size(); ++i) {
            if (i) body += "\n\n";
            body += "<text id=\"" + std::to_string(i + 1) + "\">\n" + material[i] + "\n</text>";
        }
    } else {
        body = join(material, std::string(kDefaultSeparator));
    }
    const std::size_t tokens = tok.count(body);
    if (tokens > opts.teacher_input_budget)
        throw PreconditionError("render_prompt: material has " + std::to_string(tokens) +
                                " tokens, exceeding the teacher input budget of " +
                                std::to_string(opts.teacher_input_budget) + " by " +
                                std::to_string(tokens - opts.teacher_input_budget));

    const std::string id = template_id(task);
    const std::string text = fill_template(prompt_template(id), {{"material", body},
                                                                 {"min_pairs", std::to_string(opts.min_pairs)},
                                                                 {"max_pairs", std::to_string(opts.max_pairs)},
                                                                 {"text_count", std::to_string(material.size())}});
    RenderedPrompt out;
    out.request.messages = {{"user", text}};
    out.request.temperature = opts.temperature;
    out.request.max_new_tokens = opts.max_new_tokens;
    out.template_id = id;
    out.digest = sha256_hex(json{{"template_id", id}, {"messages", messages_json(out.request.messages)}}.dump());
    return out;
}

/// Evenly strided excerpts covering every piece, fitting `budget` tokens overall.
inline std::vector<std::string> excerpt_material(const std::vector<std::string>& pieces, std::size_t budget,
                                                 const Tokenizer& tok, std::size_t excerpt_tokens = 1024) {
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto& p : pieces) {
        sizes.push_back(tok.count(p));
        total += sizes.back();
    }
    // Leave headroom for labels and boundary merges.
    const std::size_t usable = budget * 9 / 10;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const std::size_t share = std::max<std::size_t>(1, total ? usable * sizes[i] / total : usable);
        if (sizes[i] <= share) {
            out.push_back(pieces[i]);
            continue;
        }
        const TokenizedText tt(pieces[i], tok);
        const std::size_t n = tt.spans().size();
        const std::size_t count = std::max<std::size_t>(1, share / excerpt_tokens);
        const std::size_t each = share / count;
        std::vector<std::string> parts;
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t start = tt.token_begin(j * n / count);
            const auto fit = tt.fit(start, each, each / 2, BoundaryRule::sentence);
            parts.push_back("[excerpt " + std::to_string(j + 1) + "/" + std::to_string(count) + "] " +
                            std::string(trim(pieces[i].substr(start, fit.end - start))));
        }
        out.push_back(join(parts, "\n[...]\n"));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string clean_field(std::string_view s) {
    std::string out;
    bool space = false;
    for (char ch : trim(s)) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x20 || c == 0x7F) {
            space = true;
            continue;
        }
        if (ch == ' ') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(ch);
    }
    return out;
}

/// Strip an optional "12." / "12)" / "-" / "*" list marker.
inline std::string_view strip_marker(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) return trim(s.substr(i + 1));
    if (!s.empty() && (s[0] == '-' || s[0] == '*') && s.size() > 1 && s[1] == ' ') return trim(s.substr(2));
    return s;
}

inline std::string strip_bold(std::string_view s) { return replace_all(std::string(s), "**", ""); }

}  // namespace detail

/// Strict parse of the numbered Q:/A: grammar. Malformed blocks raise ParseError
/// carrying the offending line; a reply with no pairs raises ParseError too.
inline std::vector<QAPair> parse_teacher_output(std::string_view raw, TaskKind task) {
    std::vector<QAPair> pairs;
    std::optional<std::string> q, a;
    std::string q_line;
    bool in_answer = false;

    const auto finish = [&] {
        if (!q) return;
        if (!a) throw ParseError("question without an answer", q_line);
        QAPair p{detail::clean_field(*q), detail::clean_field(*a), {}};
        if (p.question.empty()) throw ParseError("empty question", q_line);
        if (p.answer.empty()) throw ParseError("empty answer", q_line);
        if (task == TaskKind::BiographySummarization) {
            static const std::regex bio(R"(^Write a biography of (.+)\.$)");
            if (!std::regex_match(p.question, bio))
                throw ParseError("biography question must read 'Write a biography of <name>.'", q_line);
        }
        pairs.push_back(std::move(p));
        q.reset();
        a.reset();
        in_answer = false;
    };

    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t nl = raw.find('\n', pos);
        if (nl == std::string_view::npos) nl = raw.size();
        const std::string line_raw(raw.substr(pos, nl - pos));
        pos = nl + 1;
        const std::string line = detail::strip_bold(trim(line_raw));
        const std::string_view body = detail::strip_marker(line);

        if (starts_with(body, "Q:")) {
            finish();
            std::string_view rest = body.substr(2);
            q_line = line;
            const auto inline_a = rest.find(" A:");
            if (inline_a != std::string_view::npos) {
                q = std::string(rest.substr(0, inline_a));
                a = std::string(rest.substr(inline_a + 3));
                in_answer = true;
            } else {
                q = std::string(rest);
            }
        } else if (starts_with(body, "A:")) {
            if (!q || a) throw ParseError("answer without a preceding question", line);
            a = std::string(body.substr(2));
            in_answer = true;
        } else if (line.empty()) {
            if (q && !a) throw ParseError("question without an answer", q_line);
            in_answer = false;
        } else if (in_answer) {
            *a += " " + line;
        } else if (q && !a) {
            *q += " " + line;
        }
        if (nl == raw.size()) break;
    }
    finish();
    if (pairs.empty()) throw ParseError("teacher reply contains no question-answer pairs");
    return pairs;
}

/// Render pairs in the teacher grammar; parse_teacher_output inverts this.
inline std::string format_pairs(const std::vector<QAPair>& pairs) {
    std::string out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out += std::to_string(i + 1) + ". Q: " + pairs[i].question + "\n";
        out += "   A: " + pairs[i].answer + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis

struct SynthOptions {
    PromptOptions prompt;
    int max_reasks = 1;
    std::string separator = std::string(kDefaultSeparator);
};

struct SynthOutcome {
    std::optional<SynthRecord> record;
    std::string skip_reason;
    int reasks = 0;
};

inline bool task_accepts(TaskKind task, const ContextAssembly& a) {
    switch (task) {
        case TaskKind::SingleDetailQA: return a.anchor.has_value();
        case TaskKind::MultiDetailQAHeterogeneous: return a.flavor == Flavor::heterogeneous;
        case TaskKind::MultiDetailQAHomogeneous:
        case TaskKind::BiographySummarization: return a.flavor == Flavor::homogeneous;
    }
    return false;
}

/// Material the teacher sees for `task`, excerpted when it exceeds the teacher budget.
inline std::pair<std::vector<std::string>, bool> task_material(TaskKind task, const ContextAssembly& a,
                                                               const CorpusIndex& corpus, const Tokenizer& tok,
                                                               const SynthOptions& opts) {
    std::vector<std::string> material;
    if (task == TaskKind::SingleDetailQA) {
        const auto& s = *a.anchor;
        material.push_back(corpus.at(s.doc_id).text.substr(s.begin, s.end - s.begin));
        return {material, false};
    }
    if (task == TaskKind::MultiDetailQAHeterogeneous) {
        for (const auto& p : a.pieces) material.push_back(corpus.at(p.doc_id).text.substr(p.begin, p.end - p.begin));
    } else {
        material.push_back(render(a, corpus, opts.separator));
    }
    std::size_t total = 0;
    for (const auto& m : material) total += tok.count(m);
    if (total <= opts.prompt.teacher_input_budget * 9 / 10) return {material, false};
    return {excerpt_material(material, opts.prompt.teacher_input_budget, tok), true};
}

/// Generate one SynthRecord. The caller's precondition is task/flavor compatibility;
/// teacher failures (transport or twice-unparseable replies) become skip reasons.
inline SynthOutcome synthesize(const ContextAssembly& a, TaskKind task, const CorpusIndex& corpus, const Tokenizer& tok,
                               Gateway& gw, const SynthOptions& opts = {}) {
    if (!task_accepts(task, a))
        throw PreconditionError("synthesize: task " + to_string(task) + " is incompatible with " + to_string(a.flavor) +
                                " assembly " + a.id + (task == TaskKind::SingleDetailQA ? " (no anchor)" : ""));
    SynthOutcome out;
    const auto [material, excerpted] = task_material(task, a, corpus, tok, opts);
    const RenderedPrompt prompt = render_prompt(task, material, tok, opts.prompt);
    ChatRequest req = prompt.request;
    req.request_id = a.id + ":" + to_string(task);

    std::string last_error;
    for (int attempt = 0; attempt <= opts.max_reasks; ++attempt) {
        ChatResponse resp;
        try {
            resp = gw.chat(req);
        } catch (const std::exception& e) {
            out.skip_reason = "assembly " + a.id + ": teacher call failed: " + e.what();
            return out;
        }
        try {
            SynthRecord r;
            r.assembly_id = a.id;
            r.task = task;
            r.pairs = parse_teacher_output(resp.content, task);
            r.teacher_model = gw.config().model_name;
            r.prompt_digest = prompt.digest;
            r.template_id = prompt.template_id;
            r.material_excerpted = excerpted;
            r.reasks = out.reasks;
            out.record = std::move(r);
            return out;
        } catch (const ParseError& e) {
            last_error = e.what();
            if (!e.offending_line().empty()) last_error += " at line '" + e.offending_line() + "'";
            if (attempt == opts.max_reasks) break;
            ++out.reasks;
            req.messages.push_back({"assistant", resp.content});
            req.messages.push_back({"user", fill_template(prompt_template("reask_v1"), {{"error", last_error}})});
        }
    }
    out.skip_reason = "assembly " + a.id + ": unparseable teacher reply after " + std::to_string(out.reasks) +
                      " re-ask(s): " + last_error;
    return out;
}

struct SynthJob {
    const ContextAssembly* assembly;
    TaskKind task;
};

/// Ordered batch synthesis; parallelism is bounded by `concurrency` and the gateway.
inline std::vector<SynthOutcome> synthesize_all(const std::vector<SynthJob>& jobs, const CorpusIndex& corpus,
                                                const Tokenizer& tok, Gateway& gw, int concurrency,
                                                const SynthOptions& opts = {}) {
    std::vector<SynthOutcome> out(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            try {
                out[i] = synthesize(*jobs[i].assembly, jobs[i].task, corpus, tok, gw, opts);
            } catch (const std::exception& e) {
                out[i].skip_reason = e.what();
            }
        }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, concurrency)), jobs.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    if (n > 0) worker();
    for (auto& t : threads) t.join();
    return out;
}

inline void write_synth_records(const fs::path& p, const std::vector<SynthRecord>& rs) {
    std::vector<json> rows;
    for (const auto& r : rs) rows.push_back(r.to_json());
    write_file(p, to_jsonl(rows));
}

inline std::vector<SynthRecord> read_synth_records(const fs::path& p) {
    std::vector<SynthRecord> out;
    for (const auto& j : read_jsonl(p)) out.push_back(SynthRecord::from_json(j));
    return out;
}

}  // namespace longctx
