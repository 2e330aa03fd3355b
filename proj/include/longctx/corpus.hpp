#pragma once

// Document ingestion: text normalization, stable ids, and token accounting.

#include <atomic>
#include <future>
#include <optional>
#include <map>
#include <thread>

#include "longctx/common.hpp"
#include "longctx/tokenizer.hpp"

namespace longctx {

inline constexpr int kCorpusSchemaVersion = 1;

enum class DocKind { book, paper, generic };

inline std::string to_string(DocKind k) {
    switch (k) {
        case DocKind::book: return "book";
        case DocKind::paper: return "paper";
        case DocKind::generic: return "generic";
    }
    return "generic";
}

inline DocKind doc_kind_from_string(std::string_view s) {
    if (s == "book") return DocKind::book;
    if (s == "paper") return DocKind::paper;
    if (s == "generic") return DocKind::generic;
    throw ConfigError("unknown document kind '" + std::string(s) + "'");
}

struct Document {
    std::string id;
    std::string source_path;
    DocKind kind = DocKind::generic;
    std::string text;
    std::size_t token_count = 0;
    std::map<std::string, std::string> meta;

    bool operator==(const Document&) const = default;

    json to_json() const {
        return {{"schema_version", kCorpusSchemaVersion},
                {"id", id},
                {"source_path", source_path},
                {"kind", to_string(kind)},
                {"text", text},
                {"token_count", token_count},
                {"meta", meta}};
    }

    static Document from_json(const json& j) {
        if (j.value("schema_version", -1) != kCorpusSchemaVersion)
            throw ParseError("corpus record schema_version mismatch (expected " +
                             std::to_string(kCorpusSchemaVersion) + ")");
        Document d;
        d.id = j.at("id").get<std::string>();
        d.source_path = j.at("source_path").get<std::string>();
        d.kind = doc_kind_from_string(j.at("kind").get<std::string>());
        d.text = j.at("text").get<std::string>();
        d.token_count = j.at("token_count").get<std::size_t>();
        d.meta = j.value("meta", std::map<std::string, std::string>{});
        return d;
    }
};

// ---------------------------------------------------------------------------
// Normalization

class DecodeError : public Error {
public:
    DecodeError(std::size_t offset, const std::string& what)
        : Error("undecodable byte at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Returns the byte offset of the first invalid UTF-8 sequence, or npos.
inline std::size_t find_invalid_utf8(std::string_view s) {
    std::size_t i = 0;
    const auto at = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    while (i < s.size()) {
        const unsigned char c = at(i);
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return i;
        }
        if (i + len > s.size()) return i;
        for (std::size_t k = 1; k < len; ++k) {
            if ((at(i + k) & 0xC0) != 0x80) return i;
            cp = (cp << 6) | (at(i + k) & 0x3F);
        }
        const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
        if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
        i += len;
    }
    return std::string_view::npos;
}

/// Decode raw bytes in the declared encoding into UTF-8.
inline std::string decode_text(std::string_view raw, std::string_view encoding = "utf-8") {
    const std::string enc = to_lower(encoding);
    if (enc == "utf-8" || enc == "utf8") {
        if (auto bad = find_invalid_utf8(raw); bad != std::string_view::npos)
            throw DecodeError(bad, "invalid UTF-8 sequence");
        return std::string(raw);
    }
    if (enc == "latin-1" || enc == "latin1" || enc == "iso-8859-1") {
        std::string out;
        out.reserve(raw.size());
        for (unsigned char c : raw) {
            if (c < 0x80) {
                out.push_back(static_cast<char>(c));
            } else {
                out.push_back(static_cast<char>(0xC0 | (c >> 6)));
                out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
            }
        }
        return out;
    }
    if (enc == "ascii") {
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (static_cast<unsigned char>(raw[i]) >= 0x80) throw DecodeError(i, "non-ASCII byte");
        return std::string(raw);
    }
    throw ConfigError("unsupported encoding '" + std::string(encoding) + "'");
}

/// Whitespace/control normalization. Unifies line endings, strips control
/// characters other than newline and tab, drops a leading BOM, and collapses
/// runs of more than two blank lines down to two. Idempotent.
inline std::string normalize(std::string_view raw) {
    if (auto bad = find_invalid_utf8(raw); bad != std::string_view::npos)
        throw DecodeError(bad, "invalid UTF-8 sequence");
    if (starts_with(raw, "\xEF\xBB\xBF")) raw.remove_prefix(3);

    std::string s;
    s.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(raw[i]);
        if (c == '\r') {
            s.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
        } else if (c == '\n' || c == '\t' || (c >= 0x20 && c != 0x7F)) {
            s.push_back(static_cast<char>(c));
        }
    }

    std::string out;
    out.reserve(s.size());
    int blank_run = 0;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t nl = s.find('\n', pos);
        const bool last = nl == std::string::npos;
        if (last) nl = s.size();
        const std::string_view line(s.data() + pos, nl - pos);
        // The final fragment after the last newline is not a line of its own.
        const bool is_blank = trim(line).empty() && !last;
        blank_run = is_blank ? blank_run + 1 : 0;
        if (blank_run <= 2) {
            out.append(line);
            if (!last) out.push_back('\n');
        }
        if (last) break;
        pos = nl + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestOptions {
    std::vector<DocKind> kinds;  // empty = accept all
    std::string encoding = "utf-8";
    unsigned threads = 0;        // 0 = hardware concurrency
};

struct IngestError {
    std::string path;
    std::string message;
};

struct IngestResult {
    std::vector<Document> documents;  // sorted by id
    std::vector<IngestError> errors;
};

/// Document id: digest over the root-relative source path and the content digest.
inline std::string document_id(std::string_view source_path, std::string_view normalized_text) {
    const std::string content = sha256_hex(normalized_text);
    return "doc-" + sha256_hex(std::string(source_path) + '\0' + content).substr(0, 16);
}

inline DocKind infer_kind(const fs::path& rel) {
    for (const auto& part : rel.parent_path()) {
        const auto p = to_lower(part.string());
        if (p == "books" || p == "book") return DocKind::book;
        if (p == "papers" || p == "paper") return DocKind::paper;
    }
    return DocKind::generic;
}

inline std::map<std::string, std::string> infer_meta(std::string_view text) {
    std::map<std::string, std::string> meta;
    std::size_t pos = 0;
    for (int line_no = 0; line_no < 20 && pos < text.size(); ++line_no) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty()) continue;
        if (!meta.count("title")) {
            std::string t(line.substr(0, 120));
            if (starts_with(t, "# ")) t = t.substr(2);
            meta["title"] = t;
        } else if (starts_with(line, "Author:") && !meta.count("author")) {
            meta["author"] = std::string(trim(line.substr(7)));
        }
    }
    return meta;
}

inline Document make_document(std::string source_path, DocKind kind, std::string_view raw_text,
                              const Tokenizer& tok) {
    Document d;
    d.text = normalize(raw_text);
    d.id = document_id(source_path, d.text);
    d.source_path = std::move(source_path);
    d.kind = kind;
    d.token_count = tok.count(d.text);
    d.meta = infer_meta(d.text);
    return d;
}

/// Ingest every .txt/.md file under `root` (recursively). Unreadable files are
/// reported per file; an empty result is a hard error.
inline IngestResult ingest_dir(const fs::path& root, const Tokenizer& tok, const IngestOptions& opts = {}) {
    if (!fs::is_directory(root)) throw ConfigError("corpus path is not a readable directory: " + root.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = to_lower(entry.path().extension().string());
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    struct Outcome {
        std::optional<Document> doc;
        std::optional<IngestError> err;
    };
    const auto work = [&](const fs::path& p) -> Outcome {
        const auto rel = fs::relative(p, root).generic_string();
        const DocKind kind = infer_kind(fs::relative(p, root));
        if (!opts.kinds.empty() && std::find(opts.kinds.begin(), opts.kinds.end(), kind) == opts.kinds.end())
            return {};
        try {
            const std::string raw = read_file(p);
            return {make_document(rel, kind, decode_text(raw, opts.encoding), tok), std::nullopt};
        } catch (const std::exception& e) {
            return {std::nullopt, IngestError{rel, e.what()}};
        }
    };

    unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    std::vector<Outcome> outcomes(files.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(threads, files.size()); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < files.size();) outcomes[i] = work(files[i]);
        });
    }
    for (auto& th : pool) th.join();

    IngestResult result;
    for (auto& o : outcomes) {
        if (o.doc) result.documents.push_back(std::move(*o.doc));
        if (o.err) result.errors.push_back(std::move(*o.err));
    }
    std::sort(result.documents.begin(), result.documents.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });
    if (result.documents.empty())
        throw Error("zero documents accepted from " + root.string() + " (" + std::to_string(files.size()) +
                    " candidate files, " + std::to_string(result.errors.size()) + " errors)");
    return result;
}

// ---------------------------------------------------------------------------
// Corpus store (one Document per line)

inline std::string serialize_corpus(const std::vector<Document>& docs) {
    std::string out;
    for (const auto& d : docs) {
        out += d.to_json().dump();
        out += '\n';
    }
    return out;
}

inline void write_corpus(const fs::path& p, const std::vector<Document>& docs) {
    write_file(p, serialize_corpus(docs));
}

inline std::vector<Document> read_corpus(const fs::path& p) {
    std::vector<Document> docs;
    for (const auto& j : read_jsonl(p)) docs.push_back(Document::from_json(j));
    return docs;
}

/// Id lookup over an immutable corpus.
class CorpusIndex {
public:
    explicit CorpusIndex(const std::vector<Document>& docs) {
        for (const auto& d : docs) by_id_.emplace(d.id, &d);
    }
    const Document& at(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw Error("unknown document id " + id);
        return *it->second;
    }
    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

private:
    std::map<std::string, const Document*> by_id_;
};

}  // namespace longctx
