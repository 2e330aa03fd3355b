#pragma once

// Token-budgeted segmentation and long-context assembly.
//
// All cut points are byte offsets into a Document's normalized text. A cut is
// placed at the start of a word so that slicing and re-concatenating is the
// identity on text.

#include <optional>
#include <set>

#include "longctx/corpus.hpp"

namespace longctx {

inline constexpr int kAssemblySchemaVersion = 1;
inline constexpr std::string_view kDefaultSeparator = "\n\n-----\n\n";

enum class BoundaryRule { paragraph, sentence, hard };

inline BoundaryRule boundary_rule_from_string(std::string_view s) {
    if (s == "paragraph") return BoundaryRule::paragraph;
    if (s == "sentence") return BoundaryRule::sentence;
    if (s == "hard") return BoundaryRule::hard;
    throw ConfigError("unknown boundary rule '" + std::string(s) + "'");
}

struct Window {
    std::size_t min_tokens = 64 * 1024;
    std::size_t max_tokens = 80 * 1024;

    bool contains(std::size_t n) const { return n >= min_tokens && n <= max_tokens; }
    json to_json() const { return {{"min_tokens", min_tokens}, {"max_tokens", max_tokens}}; }
};

struct Segment {
    std::string doc_id;
    std::size_t index = 0;
    std::size_t begin = 0;  // byte offsets into the normalized text
    std::size_t end = 0;
    std::size_t token_count = 0;

    bool operator==(const Segment&) const = default;

    json to_json() const {
        return {{"doc_id", doc_id}, {"index", index}, {"begin", begin}, {"end", end}, {"token_count", token_count}};
    }
    static Segment from_json(const json& j) {
        return {j.at("doc_id"), j.at("index"), j.at("begin"), j.at("end"), j.at("token_count")};
    }
};

enum class Flavor { homogeneous, heterogeneous };

inline std::string to_string(Flavor f) { return f == Flavor::homogeneous ? "homogeneous" : "heterogeneous"; }

inline Flavor flavor_from_string(std::string_view s) {
    if (s == "homogeneous") return Flavor::homogeneous;
    if (s == "heterogeneous") return Flavor::heterogeneous;
    throw ParseError("unknown flavor '" + std::string(s) + "'");
}

struct Piece {
    std::string doc_id;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const Piece&) const = default;
};

struct ContextAssembly {
    std::string id;
    std::vector<Piece> pieces;
    std::size_t total_tokens = 0;
    Flavor flavor = Flavor::homogeneous;
    std::optional<Segment> anchor;

    bool operator==(const ContextAssembly&) const = default;

    std::set<std::string> doc_ids() const {
        std::set<std::string> ids;
        for (const auto& p : pieces) ids.insert(p.doc_id);
        return ids;
    }

    json to_json() const {
        json ps = json::array();
        for (const auto& p : pieces) ps.push_back({{"doc_id", p.doc_id}, {"begin", p.begin}, {"end", p.end}});
        return {{"schema_version", kAssemblySchemaVersion},
                {"id", id},
                {"pieces", ps},
                {"total_tokens", total_tokens},
                {"flavor", to_string(flavor)},
                {"anchor", anchor ? anchor->to_json() : json(nullptr)}};
    }

    static ContextAssembly from_json(const json& j) {
        if (j.value("schema_version", -1) != kAssemblySchemaVersion)
            throw ParseError("assembly record schema_version mismatch");
        ContextAssembly a;
        a.id = j.at("id");
        for (const auto& p : j.at("pieces")) a.pieces.push_back({p.at("doc_id"), p.at("begin"), p.at("end")});
        a.total_tokens = j.at("total_tokens");
        a.flavor = flavor_from_string(j.at("flavor").get<std::string>());
        if (!j.at("anchor").is_null()) a.anchor = Segment::from_json(j.at("anchor"));
        return a;
    }
};

// ---------------------------------------------------------------------------
// Boundary detection

namespace detail {

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

/// p starts a word: text[p] is non-space and text[p-1] is space.
inline bool word_start(std::string_view t, std::size_t p) {
    return p > 0 && p < t.size() && !is_space(t[p]) && is_space(t[p - 1]);
}

/// p starts a sentence: a word start whose preceding non-space run ends in a terminator
/// (optionally followed by closing quotes/brackets).
inline bool sentence_start(std::string_view t, std::size_t p) {
    if (!word_start(t, p)) return false;
    std::size_t q = p;
    while (q > 0 && is_space(t[q - 1])) --q;
    while (q > 0 && is_closer(t[q - 1])) --q;
    return q > 0 && is_terminator(t[q - 1]);
}

/// p starts a paragraph: a word start preceded by a whitespace run containing a blank line.
inline bool paragraph_start(std::string_view t, std::size_t p) {
    if (!word_start(t, p)) return false;
    int newlines = 0;
    for (std::size_t q = p; q > 0 && is_space(t[q - 1]); --q)
        if (t[q - 1] == '\n') ++newlines;
    return newlines >= 2;
}

inline std::size_t token_at_or_after(const std::vector<TokenSpan>& spans, std::size_t pos) {
    auto it = std::lower_bound(spans.begin(), spans.end(), pos,
                               [](const TokenSpan& s, std::size_t v) { return s.begin < v; });
    return static_cast<std::size_t>(it - spans.begin());
}

}  // namespace detail

/// Precomputed view of one text for repeated budget fitting.
class TokenizedText {
public:
    TokenizedText(std::string_view text, const Tokenizer& tok) : text_(text), tok_(&tok), spans_(tok.spans(text)) {}

    std::string_view text() const { return text_; }
    const std::vector<TokenSpan>& spans() const { return spans_; }
    const Tokenizer& tokenizer() const { return *tok_; }
    std::size_t count(std::size_t b, std::size_t e) const { return tok_->count(text_.substr(b, e - b)); }
    std::size_t token_index(std::size_t pos) const { return detail::token_at_or_after(spans_, pos); }

    /// Byte position where the token with index `i` starts (text end when past the last token).
    std::size_t token_begin(std::size_t i) const { return i < spans_.size() ? spans_[i].begin : text_.size(); }

    struct Fit {
        std::size_t end = 0;
        std::size_t tokens = 0;
        bool hard_cut = false;
    };

    /// Choose an end offset for a piece starting at `begin` holding at most `max_tokens`
    /// tokens. Boundaries are preferred in the order paragraph, sentence, word; a
    /// preferred boundary is only taken if it keeps at least `min_tokens` tokens.
    /// Falls back to a cut at a token boundary (hard cut) when no word start exists.
    Fit fit(std::size_t begin, std::size_t max_tokens, std::size_t min_tokens, BoundaryRule rule) const {
        const std::size_t first = token_index(begin);
        const std::size_t n = spans_.size();
        if (max_tokens == 0) return {begin, 0, false};
        if (n - first <= max_tokens) {
            const auto c = count(begin, text_.size());
            if (c <= max_tokens) return {text_.size(), c, false};
        }
        std::size_t limit_tok = std::min(n, first + max_tokens);
        for (;;) {
            const std::size_t limit = token_begin(limit_tok);
            std::optional<std::size_t> cut;
            bool hard = false;
            const std::size_t floor_pos = token_begin(std::min(n, first + std::min(min_tokens, max_tokens)));
            const auto search = [&](auto pred, std::size_t lo) -> std::optional<std::size_t> {
                for (std::size_t p = limit; p > lo; --p)
                    if (pred(text_, p)) return p;
                return std::nullopt;
            };
            if (rule == BoundaryRule::paragraph) cut = search(detail::paragraph_start, floor_pos);
            if (!cut && rule != BoundaryRule::hard) cut = search(detail::sentence_start, floor_pos);
            if (!cut && rule != BoundaryRule::hard) cut = search(detail::word_start, begin);
            if (!cut) {
                cut = limit;
                hard = rule != BoundaryRule::hard;
            }
            if (*cut <= begin) cut = limit, hard = true;
            const auto c = count(begin, *cut);
            if (c <= max_tokens && *cut > begin) return {*cut, c, hard};
            // Boundary merges pushed the count over; retry one token earlier.
            if (limit_tok <= first + 1) return {token_begin(first + 1), count(begin, token_begin(first + 1)), true};
            --limit_tok;
        }
    }

private:
    std::string_view text_;
    const Tokenizer* tok_;
    std::vector<TokenSpan> spans_;
};

// ---------------------------------------------------------------------------
// Segmentation

/// Split a document into contiguous segments each holding fewer than `budget` tokens.
inline std::vector<Segment> slice_segments(const Document& doc, std::size_t budget, BoundaryRule rule,
                                           const Tokenizer& tok, std::vector<std::string>* warnings = nullptr) {
    if (budget < 64) throw PreconditionError("slice_segments: budget must be >= 64 tokens");
    const TokenizedText tt(doc.text, tok);
    std::vector<Segment> out;
    std::size_t begin = 0;
    bool warned = false;
    while (begin < doc.text.size()) {
        const auto fit = tt.fit(begin, budget - 1, budget / 2, rule);
        if (fit.hard_cut && !warned && warnings) {
            warnings->push_back("document " + doc.id + ": no word boundary within budget " + std::to_string(budget) +
                                " near byte " + std::to_string(begin) + "; hard cut applied");
            warned = true;
        }
        out.push_back({doc.id, out.size(), begin, fit.end, fit.tokens});
        begin = fit.end;
    }
    if (out.empty()) out.push_back({doc.id, 0, 0, 0, 0});
    return out;
}

// ---------------------------------------------------------------------------
// Assembly

enum class FillPolicy { reject, concatenate_same_cluster };

inline FillPolicy fill_policy_from_string(std::string_view s) {
    if (s == "reject") return FillPolicy::reject;
    if (s == "concatenate-same-cluster") return FillPolicy::concatenate_same_cluster;
    throw ConfigError("unknown fill policy '" + std::string(s) + "'");
}

struct AssemblyOptions {
    Window window;
    FillPolicy fill = FillPolicy::concatenate_same_cluster;
    std::string separator = std::string(kDefaultSeparator);
};

/// Either an assembly or the reason none was produced.
struct AssemblyResult {
    std::optional<ContextAssembly> assembly;
    std::string skip_reason;

    explicit operator bool() const { return assembly.has_value(); }
};

inline std::string render(const ContextAssembly& a, const CorpusIndex& corpus,
                          std::string_view separator = kDefaultSeparator) {
    std::string out;
    for (std::size_t i = 0; i < a.pieces.size(); ++i) {
        if (i) out += separator;
        const auto& p = a.pieces[i];
        out += std::string_view(corpus.at(p.doc_id).text).substr(p.begin, p.end - p.begin);
    }
    return out;
}

/// Digest of the piece layout plus the anchor span, so two anchors over the same
/// window get distinct ids.
inline std::string assembly_id(const std::vector<Piece>& pieces, const std::optional<Segment>& anchor = std::nullopt) {
    json j = json::array();
    for (const auto& p : pieces) j.push_back({p.doc_id, p.begin, p.end});
    if (anchor) j.push_back({"anchor", anchor->doc_id, anchor->begin, anchor->end});
    return "ctx-" + json_digest(j).substr(0, 16);
}

/// Recompute id, flavor and total_tokens from the pieces.
inline void finalize(ContextAssembly& a, const CorpusIndex& corpus, const Tokenizer& tok,
                     std::string_view separator = kDefaultSeparator) {
    a.id = assembly_id(a.pieces, a.anchor);
    a.flavor = a.doc_ids().size() > 1 ? Flavor::heterogeneous : Flavor::homogeneous;
    a.total_tokens = tok.count(render(a, corpus, separator));
}

namespace detail {

/// Window of `doc` of at most `max_tokens` tokens (and, when the document allows, at
/// least `min_tokens`) that contains [anchor_b, anchor_e) if given, else the prefix.
inline Piece window_piece(const Document& doc, const TokenizedText& tt, std::size_t min_tokens,
                          std::size_t max_tokens, std::optional<std::pair<std::size_t, std::size_t>> anchor) {
    const std::size_t n = tt.spans().size();
    std::size_t start_tok = 0;
    if (anchor) {
        const std::size_t a_first = tt.token_index(anchor->first);
        const std::size_t a_last = tt.token_index(anchor->second);
        const std::size_t a_len = a_last - a_first;
        const std::size_t slack = max_tokens > a_len ? (max_tokens - a_len) / 2 : 0;
        start_tok = a_first > slack ? a_first - slack : 0;
        // Keep the window full when the anchor sits near the end of the document.
        if (n > max_tokens && start_tok + max_tokens > n) start_tok = n - max_tokens;
        start_tok = std::min(start_tok, a_first);
    }
    std::size_t begin = tt.token_begin(start_tok);
    // Snap the start back to a sentence start when one is close.
    if (begin > 0) {
        const std::size_t floor_tok = start_tok > 64 ? start_tok - 64 : 0;
        const std::size_t floor_pos = tt.token_begin(floor_tok);
        for (std::size_t p = begin; p > floor_pos; --p) {
            if (sentence_start(tt.text(), p)) {
                begin = p;
                break;
            }
        }
    }
    auto fit = tt.fit(begin, max_tokens, min_tokens, BoundaryRule::paragraph);
    if (anchor && fit.end < anchor->second) {
        // The snap moved the start too far back; anchor-align the window instead.
        begin = tt.token_begin(start_tok);
        fit = tt.fit(begin, max_tokens, min_tokens, BoundaryRule::paragraph);
        if (fit.end < anchor->second) begin = anchor->first, fit = tt.fit(begin, max_tokens, 0, BoundaryRule::paragraph);
    }
    return {doc.id, begin, fit.end};
}

/// Shrink the tail of piece `idx` so that it loses at least `tokens` tokens.
/// Returns false when the piece would become empty.
inline bool shrink_piece_tail(Piece& piece, const Document& doc, const Tokenizer& tok, std::size_t tokens) {
    const std::string_view body = std::string_view(doc.text).substr(piece.begin, piece.end - piece.begin);
    const TokenizedText tt(body, tok);
    const std::size_t have = tt.spans().size();
    if (tokens >= have) return false;
    const auto fit = tt.fit(0, have - tokens, (have - tokens) * 9 / 10, BoundaryRule::sentence);
    if (fit.end == 0) return false;
    piece.end = piece.begin + fit.end;
    return true;
}

}  // namespace detail

/// Trim non-anchor pieces from the tail until the rendered context fits `max_tokens`.
inline void trim_to_max(ContextAssembly& a, const CorpusIndex& corpus, const Tokenizer& tok, std::size_t max_tokens,
                        std::string_view separator = kDefaultSeparator) {
    finalize(a, corpus, tok, separator);
    const auto is_anchor_piece = [&](const Piece& p) {
        return a.anchor && p.doc_id == a.anchor->doc_id && p.begin <= a.anchor->begin && p.end >= a.anchor->end;
    };
    while (a.total_tokens > max_tokens) {
        const std::size_t overflow = a.total_tokens - max_tokens;
        std::optional<std::size_t> victim;
        for (std::size_t i = a.pieces.size(); i-- > 0;) {
            if (!is_anchor_piece(a.pieces[i])) {
                victim = i;
                break;
            }
        }
        if (!victim) throw Error("cannot trim assembly below " + std::to_string(max_tokens) + " tokens: only anchor left");
        auto& piece = a.pieces[*victim];
        if (!detail::shrink_piece_tail(piece, corpus.at(piece.doc_id), tok, overflow + 1))
            a.pieces.erase(a.pieces.begin() + static_cast<std::ptrdiff_t>(*victim));
        finalize(a, corpus, tok, separator);
    }
}

/// Build a single-document long context. Documents inside the window are taken
/// whole; longer ones yield a contiguous window (around the anchor when given,
/// else the prefix); shorter ones are rejected or padded from `fill_pool`
/// depending on the fill policy.
inline AssemblyResult build_homogeneous_context(const Document& doc, const CorpusIndex& corpus, const Tokenizer& tok,
                                                const AssemblyOptions& opts,
                                                const std::vector<const Document*>& fill_pool = {},
                                                const std::optional<Segment>& anchor = std::nullopt) {
    const Window& w = opts.window;
    if (w.min_tokens > w.max_tokens) throw PreconditionError("window min exceeds max");
    ContextAssembly a;
    if (doc.token_count > w.max_tokens) {
        const TokenizedText tt(doc.text, tok);
        std::optional<std::pair<std::size_t, std::size_t>> span;
        if (anchor) span = std::make_pair(anchor->begin, anchor->end);
        a.pieces.push_back(detail::window_piece(doc, tt, w.min_tokens, w.max_tokens, span));
    } else {
        a.pieces.push_back({doc.id, 0, doc.text.size()});
    }
    if (anchor) a.anchor = anchor;
    finalize(a, corpus, tok, opts.separator);

    if (a.total_tokens < w.min_tokens) {
        if (opts.fill == FillPolicy::reject)
            return {std::nullopt, "document " + doc.id + " has " + std::to_string(a.total_tokens) +
                                      " tokens, below window minimum " + std::to_string(w.min_tokens)};
        for (const Document* other : fill_pool) {
            if (a.total_tokens >= w.min_tokens) break;
            if (other->id == doc.id) continue;
            a.pieces.push_back({other->id, 0, other->text.size()});
            finalize(a, corpus, tok, opts.separator);
        }
        if (a.total_tokens < w.min_tokens)
            return {std::nullopt, "document " + doc.id + " cannot reach window minimum " +
                                      std::to_string(w.min_tokens) + " even with " + std::to_string(fill_pool.size()) +
                                      " same-cluster fill documents"};
    }
    trim_to_max(a, corpus, tok, w.max_tokens, opts.separator);
    if (!w.contains(a.total_tokens))
        return {std::nullopt, "document " + doc.id + ": trimmed assembly fell to " + std::to_string(a.total_tokens) +
                                  " tokens, outside the window"};
    return {std::move(a), {}};
}

/// Mark `segment` as the QA anchor of the assembly, moving or inserting context so
/// that the segment text is contained verbatim in the rendered context.
inline ContextAssembly embed_anchor(ContextAssembly a, const Segment& segment, const CorpusIndex& corpus,
                                    const Tokenizer& tok, const AssemblyOptions& opts) {
    a.anchor = segment;
    for (const auto& p : a.pieces) {
        if (p.doc_id == segment.doc_id && p.begin <= segment.begin && p.end >= segment.end) {
            finalize(a, corpus, tok, opts.separator);
            return a;
        }
    }
    const Document& doc = corpus.at(segment.doc_id);
    auto same_doc = std::find_if(a.pieces.begin(), a.pieces.end(),
                                 [&](const Piece& p) { return p.doc_id == segment.doc_id; });
    if (same_doc != a.pieces.end()) {
        // Shift this document's window so it covers the anchor, keeping its size.
        const std::size_t piece_tokens =
            tok.count(std::string_view(doc.text).substr(same_doc->begin, same_doc->end - same_doc->begin));
        const TokenizedText tt(doc.text, tok);
        const std::size_t budget = std::max(piece_tokens, segment.token_count + 1);
        *same_doc = detail::window_piece(doc, tt, budget * 9 / 10, budget,
                                         std::make_pair(segment.begin, segment.end));
    } else {
        const auto mid = a.pieces.begin() + static_cast<std::ptrdiff_t>(a.pieces.size() / 2);
        a.pieces.insert(mid, Piece{segment.doc_id, segment.begin, segment.end});
    }
    trim_to_max(a, corpus, tok, opts.window.max_tokens, opts.separator);
    return a;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_assemblies(const fs::path& p, const std::vector<ContextAssembly>& as) {
    std::vector<json> rows;
    for (const auto& a : as) rows.push_back(a.to_json());
    write_file(p, to_jsonl(rows));
}

inline std::vector<ContextAssembly> read_assemblies(const fs::path& p) {
    std::vector<ContextAssembly> out;
    for (const auto& j : read_jsonl(p)) out.push_back(ContextAssembly::from_json(j));
    return out;
}

}  // namespace longctx
