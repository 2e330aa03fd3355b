#pragma once

// Pluggable token counters. Every budget in the pipeline (segment size,
// context window, needle depth) is measured with one of these.

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "longctx/common.hpp"

namespace longctx {

/// Half-open byte range [begin, end) of one token within the counted text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct TokenizerSpec {
    std::string name = "whitespace";  // "whitespace" | "bpe"
    std::string vocab_source;         // merges file for "bpe"

    json to_json() const { return {{"name", name}, {"vocab_source", vocab_source}}; }
    static TokenizerSpec from_json(const json& j) {
        TokenizerSpec s;
        s.name = j.value("name", "whitespace");
        s.vocab_source = j.value("vocab_source", "");
        return s;
    }
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return spans(text).size(); }
};

using TokenizerPtr = std::shared_ptr<const Tokenizer>;

/// Counts maximal runs of non-whitespace bytes.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::string name() const override { return "whitespace"; }

    std::vector<TokenSpan> spans(std::string_view text) const override {
        std::vector<TokenSpan> out;
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && is_space(text[i])) ++i;
            const std::size_t b = i;
            while (i < text.size() && !is_space(text[i])) ++i;
            if (i > b) out.push_back({b, i});
        }
        return out;
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        bool in_word = false;
        for (char c : text) {
            const bool sp = is_space(c);
            if (!sp && !in_word) ++n;
            in_word = !sp;
        }
        return n;
    }
};

namespace detail {

/// GPT-2 byte-to-unicode table: printable bytes map to themselves, the rest to U+0100 upward.
inline const std::array<std::string, 256>& byte_symbols() {
    static const std::array<std::string, 256> table = [] {
        std::array<int, 256> code{};
        std::vector<bool> direct(256, false);
        for (int b = '!'; b <= '~'; ++b) direct[b] = true;
        for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
        for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
        int n = 0;
        for (int b = 0; b < 256; ++b) code[b] = direct[b] ? b : 256 + n++;
        std::array<std::string, 256> out;
        for (int b = 0; b < 256; ++b) {
            const int cp = code[b];
            std::string s;
            if (cp < 0x80) {
                s.push_back(static_cast<char>(cp));
            } else {
                s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
            out[b] = s;
        }
        return out;
    }();
    return table;
}

inline bool bpe_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
inline bool bpe_digit(unsigned char c) { return std::isdigit(c) != 0; }

/// Pre-tokenizer following the GPT-2 split pattern
///   's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?[^\sLN]+|\s+(?!\S)|\s+
/// with L = ASCII letters plus any non-ASCII byte.
inline std::vector<TokenSpan> pretokenize(std::string_view t) {
    std::vector<TokenSpan> out;
    const auto at = [&](std::size_t i) { return static_cast<unsigned char>(t[i]); };
    std::size_t i = 0;
    const std::size_t n = t.size();
    while (i < n) {
        const std::size_t b = i;
        if (t[i] == '\'') {
            static constexpr std::string_view kSuffixes[] = {"s", "t", "re", "ve", "m", "ll", "d"};
            bool matched = false;
            for (auto suf : kSuffixes) {
                if (t.substr(i + 1, suf.size()) == suf) {
                    i += 1 + suf.size();
                    matched = true;
                    break;
                }
            }
            if (matched) {
                out.push_back({b, i});
                continue;
            }
        }
        std::size_t j = i;
        if (t[j] == ' ' && j + 1 < n && !is_space(t[j + 1])) ++j;
        if (j < n && !is_space(t[j])) {
            const unsigned char c = at(j);
            if (bpe_letter(c)) {
                while (j < n && bpe_letter(at(j))) ++j;
            } else if (bpe_digit(c)) {
                while (j < n && bpe_digit(at(j))) ++j;
            } else {
                while (j < n && !is_space(t[j]) && !bpe_letter(at(j)) && !bpe_digit(at(j))) ++j;
            }
            i = j;
            out.push_back({b, i});
            continue;
        }
        // Whitespace run. Leave the final char for the next token when it is
        // followed by non-whitespace (the (?!\S) lookahead).
        while (j < n && is_space(t[j])) ++j;
        if (j < n && j - i >= 2) --j;
        i = j;
        out.push_back({b, i});
    }
    return out;
}

}  // namespace detail

/// Byte-level BPE counter driven by a GPT-2 style merges file.
class BpeTokenizer final : public Tokenizer {
public:
    explicit BpeTokenizer(const fs::path& merges_path) : source_(merges_path.string()) {
        std::ifstream in(merges_path);
        if (!in) throw ConfigError("bpe tokenizer: cannot read merges file " + merges_path.string());
        std::string line;
        int rank = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto sp = line.find(' ');
            if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
                throw ConfigError("bpe tokenizer: malformed merge line '" + line + "'");
            ranks_.emplace(line, rank++);
        }
        if (ranks_.empty()) throw ConfigError("bpe tokenizer: merges file has no entries");
    }

    std::string name() const override { return "bpe"; }
    std::size_t merge_count() const { return ranks_.size(); }

    std::vector<TokenSpan> spans(std::string_view text) const override {
        std::vector<TokenSpan> out;
        for (const auto& w : detail::pretokenize(text)) {
            const auto sizes = word_piece_sizes(text.substr(w.begin, w.end - w.begin));
            std::size_t pos = w.begin;
            for (auto sz : *sizes) {
                out.push_back({pos, pos + sz});
                pos += sz;
            }
        }
        return out;
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        for (const auto& w : detail::pretokenize(text))
            n += word_piece_sizes(text.substr(w.begin, w.end - w.begin))->size();
        return n;
    }

private:
    using Sizes = std::vector<std::uint32_t>;

    /// Byte lengths of the BPE pieces of one pre-token, memoised.
    std::shared_ptr<const Sizes> word_piece_sizes(std::string_view word) const {
        {
            std::shared_lock lock(cache_mu_);
            if (auto it = cache_.find(std::string(word)); it != cache_.end()) return it->second;
        }
        auto sizes = std::make_shared<const Sizes>(encode_word(word));
        std::unique_lock lock(cache_mu_);
        if (cache_.size() > 500000) cache_.clear();
        cache_.emplace(std::string(word), sizes);
        return sizes;
    }

    Sizes encode_word(std::string_view word) const {
        const auto& table = detail::byte_symbols();
        std::vector<std::string> syms;
        Sizes sizes;
        syms.reserve(word.size());
        for (unsigned char c : word) {
            syms.push_back(table[c]);
            sizes.push_back(1);
        }
        std::string key;
        while (syms.size() > 1) {
            int best_rank = std::numeric_limits<int>::max();
            std::size_t best = 0;
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                key.assign(syms[i]).append(" ").append(syms[i + 1]);
                auto it = ranks_.find(key);
                if (it != ranks_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best = i;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            // Merge every occurrence of the best pair, left to right.
            const std::string left = syms[best], right = syms[best + 1];
            std::vector<std::string> nsyms;
            Sizes nsizes;
            for (std::size_t i = 0; i < syms.size();) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    nsyms.push_back(left + right);
                    nsizes.push_back(sizes[i] + sizes[i + 1]);
                    i += 2;
                } else {
                    nsyms.push_back(syms[i]);
                    nsizes.push_back(sizes[i]);
                    ++i;
                }
            }
            syms = std::move(nsyms);
            sizes = std::move(nsizes);
        }
        return sizes;
    }

    std::string source_;
    std::unordered_map<std::string, int> ranks_;
    mutable std::shared_mutex cache_mu_;
    mutable std::unordered_map<std::string, std::shared_ptr<const Sizes>> cache_;
};

#ifndef LONGCTX_DATA_DIR
#define LONGCTX_DATA_DIR "data"
#endif

/// Directory holding bundled assets (merges table).
inline fs::path data_dir() {
    if (const char* env = std::getenv("LONGCTX_DATA_DIR")) return env;
    return LONGCTX_DATA_DIR;
}

inline fs::path bundled_merges_path() { return data_dir() / "tokenizer" / "merges.txt"; }

/// Resolve a TokenizerSpec. Unknown names are configuration errors.
inline TokenizerPtr load_tokenizer(const TokenizerSpec& spec) {
    if (spec.name == "whitespace") return std::make_shared<WhitespaceTokenizer>();
    if (spec.name == "bpe") {
        const fs::path p = spec.vocab_source.empty() || spec.vocab_source == "bundled"
                               ? bundled_merges_path()
                               : fs::path(spec.vocab_source);
        static std::mutex mu;
        static std::map<std::string, TokenizerPtr> loaded;
        std::lock_guard lock(mu);
        auto& slot = loaded[fs::absolute(p).string()];
        if (!slot) slot = std::make_shared<BpeTokenizer>(p);
        return slot;
    }
    throw ConfigError("unknown tokenizer name '" + spec.name + "' (expected whitespace|bpe)");
}

inline std::size_t count_tokens(std::string_view text, const Tokenizer& tok) { return tok.count(text); }

inline std::size_t count_tokens(std::string_view text, const TokenizerSpec& spec) {
    return load_tokenizer(spec)->count(text);
}

}  // namespace longctx
