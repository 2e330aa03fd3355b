#pragma once

// Scoring of model outputs (LLM judge, verbatim match, rouge F1), aggregation
// into score matrices, and CSV/SVG report rendering.

#include "longctx/evalgen.hpp"
#include "longctx/synthesis.hpp"

namespace longctx {

enum class ScoreMethod { judge, verbatim, rouge_f1 };

inline std::string to_string(ScoreMethod m) {
    switch (m) {
        case ScoreMethod::judge: return "judge";
        case ScoreMethod::verbatim: return "verbatim";
        case ScoreMethod::rouge_f1: return "rouge_f1";
    }
    return {};
}

inline ScoreMethod score_method_from_string(std::string_view s) {
    if (s == "judge") return ScoreMethod::judge;
    if (s == "verbatim") return ScoreMethod::verbatim;
    if (s == "rouge_f1" || s == "rouge") return ScoreMethod::rouge_f1;
    throw ConfigError("unknown scoring method '" + std::string(s) + "' (judge|verbatim|rouge_f1)");
}

inline ScoreMethod default_method(EvalTask t) { return t == EvalTask::niah ? ScoreMethod::judge : ScoreMethod::verbatim; }

// ---------------------------------------------------------------------------
// Local scorers

/// Lowercase and collapse whitespace runs to single spaces.
inline std::string normalize_answer(std::string_view s) { return to_lower(join(split_ws(s), " ")); }

/// 1 iff `expected` occurs in `output` after whitespace/case normalization.
inline double verbatim_match(std::string_view expected, std::string_view output) {
    const std::string e = normalize_answer(expected), o = normalize_answer(output);
    return o.find(e) != std::string::npos ? 1.0 : 0.0;
}

enum class RougeVariant { rouge1, rougeL };

inline std::string to_string(RougeVariant v) { return v == RougeVariant::rouge1 ? "rouge1" : "rougeL"; }

inline RougeVariant rouge_variant_from_string(std::string_view s) {
    if (s == "rouge1") return RougeVariant::rouge1;
    if (s == "rougeL" || s == "rougel") return RougeVariant::rougeL;
    throw ConfigError("unknown rouge variant '" + std::string(s) + "' (rouge1|rougeL)");
}

struct RougeScore {
    double precision = 0, recall = 0, f1 = 0;
};

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Precision/recall/F1 over lowercased whitespace tokens. Empty vs empty is 1;
/// empty vs non-empty is 0.
inline RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
    const auto c = split_ws(to_lower(candidate)), r = split_ws(to_lower(reference));
    if (c.empty() && r.empty()) return {1, 1, 1};
    if (c.empty() || r.empty()) return {0, 0, 0};
    std::size_t hits = 0;
    if (variant == RougeVariant::rouge1) {
        std::map<std::string, std::size_t> rc;
        for (const auto& w : r) ++rc[w];
        for (const auto& w : c) {
            auto it = rc.find(w);
            if (it != rc.end() && it->second > 0) {
                --it->second;
                ++hits;
            }
        }
    } else {
        hits = lcs_length(c, r);
    }
    RougeScore s;
    s.precision = static_cast<double>(hits) / static_cast<double>(c.size());
    s.recall = static_cast<double>(hits) / static_cast<double>(r.size());
    s.f1 = hits ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

inline double rouge_f1(std::string_view candidate, std::string_view reference, RougeVariant v = RougeVariant::rougeL) {
    return rouge(candidate, reference, v).f1;
}

/// Keep the prefix of `text` within `max_tokens`, cut at a sentence boundary when one
/// lies in the last tenth of the budget.
inline std::string truncate_prefix(std::string_view text, std::size_t max_tokens, const Tokenizer& tok) {
    const TokenizedText tt(text, tok);
    const auto fit = tt.fit(0, max_tokens, max_tokens - max_tokens / 10, BoundaryRule::sentence);
    return std::string(text.substr(0, fit.end));
}

// ---------------------------------------------------------------------------
// Judge

struct JudgeOptions {
    int max_reasks = 1;
    int max_new_tokens = 8;
};

struct JudgeResult {
    std::optional<double> score;  // withheld when the verdict stayed unparseable
    std::string cache_key;
    std::string error;
    int reasks = 0;
};

/// Maps a verdict reply to a score: CORRECT -> 1, INCORRECT -> 0, else nothing.
inline std::optional<double> parse_verdict(std::string_view reply) {
    std::string w;
    for (char ch : trim(reply)) {
        if (std::isalpha(static_cast<unsigned char>(ch))) w.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
        else if (!w.empty()) break;
    }
    if (w == "CORRECT") return 1.0;
    if (w == "INCORRECT") return 0.0;
    return std::nullopt;
}

inline ChatRequest judge_request(std::string_view question, std::string_view expected, std::string_view output,
                                 const JudgeOptions& opts = {}) {
    ChatRequest req;
    req.messages = {{"user", fill_template(prompt_template("judge_v1"), {{"question", std::string(question)},
                                                                        {"expected", std::string(expected)},
                                                                        {"output", std::string(output)}})}};
    req.temperature = 0.0;
    req.max_new_tokens = opts.max_new_tokens;
    return req;
}

/// Binary LLM judgement at temperature 0. An empty model output scores 0 without a
/// call (the rubric marks empty answers incorrect).
inline JudgeResult judge(Gateway& gw, std::string_view question, std::string_view expected, std::string_view output,
                         const JudgeOptions& opts = {}) {
    JudgeResult r;
    if (trim(output).empty()) {
        r.score = 0.0;
        return r;
    }
    ChatRequest req = judge_request(question, expected, output, opts);
    for (int attempt = 0; attempt <= opts.max_reasks; ++attempt) {
        ChatResponse resp;
        try {
            resp = gw.chat(req);
        } catch (const std::exception& e) {
            r.error = std::string("judge call failed: ") + e.what();
            return r;
        }
        r.cache_key = resp.cache_key;
        if ((r.score = parse_verdict(resp.content))) {
            r.error.clear();
            return r;
        }
        r.error = "unparseable verdict '" + std::string(trim(resp.content)).substr(0, 80) + "'";
        if (attempt == opts.max_reasks) break;
        ++r.reasks;
        req.messages.push_back({"assistant", resp.content});
        req.messages.push_back({"user", "Reply with a single word: CORRECT or INCORRECT."});
    }
    return r;
}

// ---------------------------------------------------------------------------
// Records

struct ScoreRecord {
    std::string instance_id;
    EvalTask task = EvalTask::niah;
    std::string raw_output;
    std::optional<double> score;
    ScoreMethod method = ScoreMethod::judge;
    std::string variant;         // rouge variant when method is rouge_f1
    std::string judge_exchange;  // replay cache key of the judge call
    std::string error;
    json meta = json::object();  // the instance's axes

    json to_json() const {
        return {{"schema_version", 1},
                {"instance_id", instance_id},
                {"task", to_string(task)},
                {"raw_output", raw_output},
                {"score", score ? json(*score) : json(nullptr)},
                {"method", to_string(method)},
                {"variant", variant},
                {"judge_exchange", judge_exchange.empty() ? json(nullptr) : json(judge_exchange)},
                {"error", error},
                {"meta", meta}};
    }
    static ScoreRecord from_json(const json& j) {
        if (j.value("schema_version", -1) != 1) throw ParseError("score record schema_version mismatch");
        ScoreRecord r;
        r.instance_id = j.at("instance_id");
        r.task = eval_task_from_string(j.at("task").get<std::string>());
        r.raw_output = j.at("raw_output");
        if (!j.at("score").is_null()) r.score = j.at("score").get<double>();
        r.method = score_method_from_string(j.at("method").get<std::string>());
        r.variant = j.value("variant", "");
        if (j.contains("judge_exchange") && !j["judge_exchange"].is_null()) r.judge_exchange = j["judge_exchange"];
        r.error = j.value("error", "");
        r.meta = j.value("meta", json::object());
        return r;
    }
};

inline void write_score_records(const fs::path& p, const std::vector<ScoreRecord>& rs) {
    std::vector<json> rows;
    for (const auto& r : rs) rows.push_back(r.to_json());
    write_file(p, to_jsonl(rows));
}

inline std::vector<ScoreRecord> read_score_records(const fs::path& p) {
    std::vector<ScoreRecord> out;
    for (const auto& j : read_jsonl(p)) out.push_back(ScoreRecord::from_json(j));
    return out;
}

/// Model output for one instance, as produced by an evaluation run.
struct ModelOutput {
    std::string instance_id;
    std::optional<std::string> output;
    std::string error;
    std::string cache_key;
    int attempts = 0;
    bool from_cache = false;

    json to_json() const {
        return {{"instance_id", instance_id},
                {"output", output ? json(*output) : json(nullptr)},
                {"error", error},
                {"cache_key", cache_key},
                {"attempts", attempts},
                {"from_cache", from_cache}};
    }
    static ModelOutput from_json(const json& j) {
        ModelOutput m;
        m.instance_id = j.at("instance_id");
        if (!j.at("output").is_null()) m.output = j.at("output").get<std::string>();
        m.error = j.value("error", "");
        m.cache_key = j.value("cache_key", "");
        m.attempts = j.value("attempts", 0);
        m.from_cache = j.value("from_cache", false);
        return m;
    }
};

struct ScoreOptions {
    std::optional<ScoreMethod> method;  // per-task default when unset
    RougeVariant variant = RougeVariant::rougeL;
    JudgeOptions judge;
    int concurrency = 1;
};

/// Score every output against its instance. Outputs that carry a run error become
/// records with the score withheld. `judge_gw` is required only for judge scoring.
inline std::vector<ScoreRecord> score_outputs(const std::vector<EvalInstance>& instances,
                                              const std::vector<ModelOutput>& outputs, Gateway* judge_gw,
                                              const ScoreOptions& opts = {}) {
    std::map<std::string, const EvalInstance*> by_id;
    for (const auto& x : instances) by_id[x.id] = &x;
    std::vector<ScoreRecord> out(outputs.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::string first_error;
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < outputs.size();) {
            const auto& o = outputs[i];
            auto it = by_id.find(o.instance_id);
            if (it == by_id.end()) {
                std::lock_guard lock(err_mu);
                if (first_error.empty()) first_error = "output for unknown instance " + o.instance_id;
                continue;
            }
            const EvalInstance& x = *it->second;
            ScoreRecord& r = out[i];
            r.instance_id = x.id;
            r.task = x.task;
            r.meta = x.meta;
            r.method = opts.method.value_or(default_method(x.task));
            if (r.method == ScoreMethod::rouge_f1) r.variant = to_string(opts.variant);
            if (!o.output) {
                r.error = "no model output: " + o.error;
                continue;
            }
            r.raw_output = *o.output;
            switch (r.method) {
                case ScoreMethod::verbatim: r.score = verbatim_match(x.expected, r.raw_output); break;
                case ScoreMethod::rouge_f1: r.score = rouge_f1(r.raw_output, x.expected, opts.variant); break;
                case ScoreMethod::judge: {
                    if (!judge_gw) throw ConfigError("judge scoring requires a judge endpoint");
                    const auto j = judge(*judge_gw, x.question, x.expected, r.raw_output, opts.judge);
                    r.score = j.score;
                    r.judge_exchange = j.cache_key;
                    if (!j.score) r.error = j.error;
                    break;
                }
            }
        }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.concurrency)), outputs.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    if (n > 0) worker();
    for (auto& t : threads) t.join();
    if (!first_error.empty()) throw Error(first_error);
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct ScoreMatrix {
    EvalTask task = EvalTask::niah;
    std::string row_axis, col_axis;  // "depth" x "context_len" for NIAH; "" x "topic_count" for topics
    std::vector<double> rows;
    std::vector<double> cols;
    std::vector<std::vector<std::optional<double>>> means;
    std::vector<std::vector<std::size_t>> counts;
    std::size_t withheld = 0;  // records without a score

    std::optional<double> at(double row, double col) const {
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                if (rows[i] == row && cols[j] == col) return means[i][j];
        return std::nullopt;
    }

    double overall() const {
        double s = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                if (means[i][j]) {
                    s += *means[i][j] * static_cast<double>(counts[i][j]);
                    n += counts[i][j];
                }
        return n ? s / static_cast<double>(n) : 0.0;
    }

    json to_json() const {
        json m = json::array();
        for (const auto& row : means) {
            json r = json::array();
            for (const auto& v : row) r.push_back(v ? json(*v) : json(nullptr));
            m.push_back(r);
        }
        return {{"task", to_string(task)}, {"row_axis", row_axis}, {"col_axis", col_axis}, {"rows", rows},
                {"cols", cols},            {"means", m},           {"counts", counts},     {"withheld", withheld}};
    }
};

/// Per-cell means. NIAH cells are (depth, context_len); topic cells are topic_count.
inline ScoreMatrix aggregate(const std::vector<ScoreRecord>& records) {
    if (records.empty()) throw PreconditionError("aggregate: empty record set");
    ScoreMatrix m;
    m.task = records.front().task;
    const bool niah = m.task == EvalTask::niah;
    m.row_axis = niah ? "depth" : "";
    m.col_axis = niah ? "context_len" : "topic_count";
    std::set<double> rows, cols;
    for (const auto& r : records) {
        if (r.task != m.task) throw PreconditionError("aggregate: records mix tasks");
        if (!r.meta.contains(m.col_axis) || (niah && !r.meta.contains("depth")))
            throw PreconditionError("aggregate: record " + r.instance_id + " lacks axis fields");
        rows.insert(niah ? r.meta.at("depth").get<double>() : 0.0);
        cols.insert(r.meta.at(m.col_axis).get<double>());
    }
    m.rows.assign(rows.begin(), rows.end());
    m.cols.assign(cols.begin(), cols.end());
    std::vector<std::vector<double>> sums(m.rows.size(), std::vector<double>(m.cols.size(), 0.0));
    m.counts.assign(m.rows.size(), std::vector<std::size_t>(m.cols.size(), 0));
    const auto index = [](const std::vector<double>& v, double x) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    for (const auto& r : records) {
        if (!r.score) {
            ++m.withheld;
            continue;
        }
        const double s = std::clamp(*r.score, 0.0, 1.0);
        const std::size_t i = index(m.rows, niah ? r.meta.at("depth").get<double>() : 0.0);
        const std::size_t j = index(m.cols, r.meta.at(m.col_axis).get<double>());
        sums[i][j] += s;
        ++m.counts[i][j];
    }
    m.means.assign(m.rows.size(), std::vector<std::optional<double>>(m.cols.size()));
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols.size(); ++j)
            if (m.counts[i][j]) m.means[i][j] = sums[i][j] / static_cast<double>(m.counts[i][j]);
    return m;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

inline std::string length_label(double v) {
    if (v >= 1024 && std::fmod(v, 1024) == 0) return fmt(v / 1024, 6) + "K";
    if (v >= 1000) return fmt(v / 1024, 3) + "K";
    return fmt(v, 6);
}

/// Red (0) through yellow to green (1).
inline std::string heat_color(double s) {
    s = std::clamp(s, 0.0, 1.0);
    int r, g;
    if (s < 0.5) {
        r = 230;
        g = static_cast<int>(60 + 2 * s * 160);
    } else {
        r = static_cast<int>(230 - (s - 0.5) * 2 * 170);
        g = 220;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, 80);
    return buf;
}

}  // namespace detail

/// Long-format CSV: one line per cell.
inline std::string matrix_csv(const ScoreMatrix& m) {
    std::string out = (m.row_axis.empty() ? std::string() : m.row_axis + ",") + m.col_axis + ",mean,count\n";
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols.size(); ++j) {
            if (!m.row_axis.empty()) out += detail::fmt(m.rows[i], 6) + ",";
            out += detail::fmt(m.cols[j], 10) + "," + (m.means[i][j] ? detail::fmt(*m.means[i][j], 6) : "") + "," +
                   std::to_string(m.counts[i][j]) + "\n";
        }
    return out;
}

/// Standalone SVG heatmap (columns = context length, rows = depth) with a vertical
/// marker at `marker_len` (the training length). The marker is interpolated between
/// column centres and omitted when outside the swept range.
inline std::string heatmap_svg(const ScoreMatrix& m, double marker_len = 81920, std::string title = "") {
    const int cw = 44, ch = 26, left = 70, top = 50, bottom = 60, right = 110;
    const int w = left + cw * static_cast<int>(m.cols.size()) + right;
    const int h = top + ch * static_cast<int>(m.rows.size()) + bottom;
    if (title.empty()) title = "Needle retrieval accuracy";
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n";
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const int y = top + ch * static_cast<int>(i);
        s << "<text x=\"" << left - 6 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"end\">"
          << detail::fmt(m.rows[i] * 100, 3) << "%</text>\n";
        for (std::size_t j = 0; j < m.cols.size(); ++j) {
            const int x = left + cw * static_cast<int>(j);
            const auto& v = m.means[i][j];
            s << "<rect class=\"cell\" data-row=\"" << i << "\" data-col=\"" << j << "\" data-mean=\""
              << (v ? detail::fmt(*v, 6) : "") << "\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw
              << "\" height=\"" << ch << "\" fill=\"" << (v ? detail::heat_color(*v) : "#dddddd")
              << "\" stroke=\"white\"/>\n";
        }
    }
    const int grid_bottom = top + ch * static_cast<int>(m.rows.size());
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
        const int x = left + cw * static_cast<int>(j) + cw / 2;
        s << "<text x=\"" << x << "\" y=\"" << grid_bottom + 16 << "\" text-anchor=\"middle\">"
          << detail::length_label(m.cols[j]) << "</text>\n";
    }
    s << "<text x=\"" << left + cw * static_cast<int>(m.cols.size()) / 2 << "\" y=\"" << grid_bottom + 38
      << "\" text-anchor=\"middle\">context length (tokens)</text>\n";
    s << "<text x=\"16\" y=\"" << top + ch * static_cast<int>(m.rows.size()) / 2
      << "\" transform=\"rotate(-90 16 " << top + ch * static_cast<int>(m.rows.size()) / 2
      << ")\" text-anchor=\"middle\">needle depth</text>\n";
    // Training-length marker.
    if (!m.cols.empty() && marker_len >= m.cols.front() && marker_len <= m.cols.back()) {
        double pos = 0;
        for (std::size_t j = 0; j + 1 < m.cols.size(); ++j) {
            if (marker_len >= m.cols[j] && marker_len <= m.cols[j + 1]) {
                pos = static_cast<double>(j) + (marker_len - m.cols[j]) / (m.cols[j + 1] - m.cols[j]);
                break;
            }
        }
        if (m.cols.size() == 1 || marker_len == m.cols.back()) pos = static_cast<double>(m.cols.size() - 1);
        const double x = left + cw * pos + cw / 2.0;
        s << "<line class=\"training-length\" data-tokens=\"" << detail::fmt(marker_len, 10) << "\" x1=\"" << x
          << "\" y1=\"" << top - 6 << "\" x2=\"" << x << "\" y2=\"" << grid_bottom + 4
          << "\" stroke=\"#1f4fd8\" stroke-width=\"2.5\"/>\n";
    }
    // Legend.
    const int lx = left + cw * static_cast<int>(m.cols.size()) + 24;
    for (int k = 0; k <= 10; ++k) {
        s << "<rect x=\"" << lx << "\" y=\"" << top + (10 - k) * 12 << "\" width=\"16\" height=\"12\" fill=\""
          << detail::heat_color(k / 10.0) << "\"/>\n";
    }
    s << "<text x=\"" << lx + 22 << "\" y=\"" << top + 10 << "\">1.0</text>\n";
    s << "<text x=\"" << lx + 22 << "\" y=\"" << top + 130 << "\">0.0</text>\n";
    s << "</svg>\n";
    return s.str();
}

/// Standalone SVG line chart of mean score per column (topic retrieval accuracy).
inline std::string curve_svg(const ScoreMatrix& m, std::string title = "") {
    const int w = 560, h = 340, left = 60, right = 20, top = 40, bottom = 50;
    const int pw = w - left - right, ph = h - top - bottom;
    if (title.empty()) title = "Topic retrieval accuracy";
    const double x0 = m.cols.empty() ? 0 : m.cols.front(), x1 = m.cols.empty() ? 1 : m.cols.back();
    const auto X = [&](double v) { return left + (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5) * pw; };
    const auto Y = [&](double v) { return top + (1.0 - v) * ph; };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = k / 4.0;
        s << "<text x=\"" << left - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << detail::fmt(v * 100, 3)
          << "%</text>\n";
    }
    std::string pts;
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
        const auto& v = m.means.empty() ? std::nullopt : m.means[0][j];
        s << "<text x=\"" << X(m.cols[j]) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
          << detail::fmt(m.cols[j], 6) << "</text>\n";
        if (!v) continue;
        pts += detail::fmt(X(m.cols[j]), 8) + "," + detail::fmt(Y(*v), 8) + " ";
        s << "<circle class=\"point\" data-x=\"" << detail::fmt(m.cols[j], 6) << "\" data-mean=\""
          << detail::fmt(*v, 6) << "\" cx=\"" << X(m.cols[j]) << "\" cy=\"" << Y(*v)
          << "\" r=\"3.5\" fill=\"#1f4fd8\"/>\n";
    }
    s << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"#1f4fd8\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">"
      << (m.col_axis == "topic_count" ? "number of topics" : m.col_axis) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

struct ReportFiles {
    fs::path csv, svg;
};

/// Heatmap for NIAH matrices, curve for everything else.
inline ReportFiles render_report(const ScoreMatrix& m, const fs::path& dir, double marker_len = 81920) {
    ReportFiles f;
    const std::string stem = m.task == EvalTask::niah ? "niah_heatmap" : "topic_retrieval_curve";
    f.csv = dir / (stem + ".csv");
    f.svg = dir / (stem + ".svg");
    write_file(f.csv, matrix_csv(m));
    write_file(f.svg, m.task == EvalTask::niah ? heatmap_svg(m, marker_len) : curve_svg(m));
    return f;
}

}  // namespace longctx
