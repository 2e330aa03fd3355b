#pragma once

// Document embeddings, seeded k-means, and same-cluster heterogeneous pools.

#include <bit>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "longctx/chunking.hpp"
#include "longctx/gateway.hpp"

namespace longctx {

struct EmbeddingVector {
    std::string doc_id;
    std::vector<double> values;
    double norm = 0.0;

    static EmbeddingVector make(std::string id, std::vector<double> v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return {std::move(id), std::move(v), std::sqrt(s)};
    }

    EmbeddingVector normalized() const {
        EmbeddingVector out = *this;
        if (norm > 0)
            for (auto& x : out.values) x /= norm;
        out.norm = norm > 0 ? 1.0 : 0.0;
        return out;
    }
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size()) throw PreconditionError("cosine: dimension mismatch");
    if (a.norm == 0 || b.norm == 0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return dot / (a.norm * b.norm);
}

// ---------------------------------------------------------------------------
// Offline embedder

inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",    "an",   "the",  "and",  "or",   "but",   "of",    "to",   "in",    "on",   "at",   "by",
        "for",  "with", "from", "as",   "is",   "are",   "was",   "were", "be",    "been", "being", "it",
        "its",  "this", "that", "these", "those", "he",  "she",   "they", "them",  "his",  "her",  "their",
        "we",   "you",  "i",    "me",   "my",   "our",   "your",  "not",  "no",    "so",   "if",   "then",
        "than", "there", "here", "which", "who", "whom", "what", "when", "where", "how",  "all",  "any",
        "each", "had",  "has",  "have", "do",   "does",  "did",   "will", "would", "can",  "could", "should",
        "into", "about", "over", "after", "before", "also", "very", "more", "most", "some", "such", "only"};
    return words;
}

/// Lowercased alphanumeric words.
inline std::vector<std::string> content_words(std::string_view text, bool drop_stopwords = true) {
    std::vector<std::string> out;
    std::string cur;
    const auto flush = [&] {
        if (!cur.empty() && (!drop_stopwords || !stopwords().count(cur))) out.push_back(cur);
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            cur.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Deterministic hashed bag-of-words embedding (signed feature hashing).
inline std::vector<double> hashed_bow_embedding(std::string_view text, std::size_t dim = 256) {
    std::vector<double> v(dim, 0.0);
    for (const auto& w : content_words(text)) {
        const std::uint64_t h = fnv1a64(w);
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Embedding cache and batch embedding

/// Persistent cache keyed by (endpoint id, model name, content digest).
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(fs::path path) : path_(std::move(path)) {
        if (fs::exists(path_))
            for (const auto& j : read_jsonl(path_)) map_[j.at("key").get<std::string>()] = j.at("values").get<std::vector<double>>();
    }

    static std::string key(const EndpointConfig& ep, std::string_view text) {
        const std::string model = ep.embedding_model.empty() ? ep.model_name : ep.embedding_model;
        return sha256_hex(ep.id + '\0' + model + '\0' + sha256_hex(text));
    }

    std::optional<std::vector<double>> find(const std::string& k) const {
        std::lock_guard lock(mu_);
        auto it = map_.find(k);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& k, const std::vector<double>& v) {
        std::lock_guard lock(mu_);
        if (!map_.emplace(k, v).second) return;
        if (path_.empty()) return;
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        out << json{{"key", k}, {"values", v}}.dump() << '\n';
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return map_.size();
    }

    std::int64_t hits = 0;

private:
    fs::path path_;
    mutable std::mutex mu_;
    std::map<std::string, std::vector<double>> map_;
};

struct EmbedOptions {
    std::size_t batch_size = 32;
    int concurrency = 1;
};

/// Embed texts through the gateway, order-preserving, with content-digest caching.
/// `ids` (optional) labels the resulting vectors.
inline std::vector<BatchItem<EmbeddingVector>> embed_batch(const std::vector<std::string>& texts, Gateway& gw,
                                                           EmbeddingCache& cache, const EmbedOptions& opts = {},
                                                           const std::vector<std::string>& ids = {}) {
    std::vector<BatchItem<EmbeddingVector>> out(texts.size());
    if (texts.empty()) return out;
    const auto id_of = [&](std::size_t i) { return i < ids.size() ? ids[i] : std::to_string(i); };

    std::vector<std::string> keys(texts.size());
    std::vector<std::size_t> pending;  // first index of each distinct uncached key
    std::map<std::string, std::size_t> first_of;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        keys[i] = EmbeddingCache::key(gw.config(), texts[i]);
        if (cache.find(keys[i])) continue;
        if (first_of.emplace(keys[i], i).second) pending.push_back(i);
    }

    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t b = 0; b < pending.size(); b += opts.batch_size)
        chunks.emplace_back(pending.begin() + static_cast<std::ptrdiff_t>(b),
                            pending.begin() + static_cast<std::ptrdiff_t>(std::min(pending.size(), b + opts.batch_size)));
    std::map<std::string, std::string> chunk_errors;
    std::mutex err_mu;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t c; (c = next.fetch_add(1)) < chunks.size();) {
            std::vector<std::string> batch;
            for (auto i : chunks[c]) batch.push_back(texts[i]);
            try {
                const auto vecs = gw.embed(batch);
                for (std::size_t j = 0; j < vecs.size(); ++j)
                    cache.put(keys[chunks[c][j]], std::vector<double>(vecs[j].begin(), vecs[j].end()));
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mu);
                for (auto i : chunks[c]) chunk_errors[keys[i]] = e.what();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.concurrency)), chunks.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
    if (n_threads > 0) worker();
    for (auto& t : threads) t.join();

    std::optional<std::size_t> dim;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (auto v = cache.find(keys[i])) {
            if (dim && *dim != v->size())
                throw Error("embed_batch: dimension mismatch (" + std::to_string(*dim) + " vs " +
                            std::to_string(v->size()) + ")");
            dim = v->size();
            out[i].value = EmbeddingVector::make(id_of(i), std::move(*v));
        } else {
            auto it = chunk_errors.find(keys[i]);
            out[i].error = it != chunk_errors.end() ? it->second : "embedding unavailable";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
    std::size_t k = 0;
    std::vector<int> labels;                     // per input point
    std::vector<std::vector<double>> centroids;  // k vectors
    double inertia = 0.0;
    std::vector<double> trace;  // inertia after each assignment step of the winning run
    int iterations = 0;
};

namespace detail {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& pts, std::size_t k,
                                                      Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[rng.below(n)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(pts[i], centers[0]);
    while (centers.size() < k) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.below(n);
        } else {
            double r = rng.uniform() * total;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(pts[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(pts[i], centers.back()));
    }
    return centers;
}

inline KMeansResult lloyd(const std::vector<std::vector<double>>& pts, std::vector<std::vector<double>> centers,
                          int max_iters) {
    const std::size_t n = pts.size(), k = centers.size(), dim = pts[0].size();
    KMeansResult r;
    r.k = k;
    r.labels.assign(n, -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sqdist(pts[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sqdist(pts[i], centers[c]);
                if (d < bd) bd = d, best = static_cast<int>(c);
            }
            if (r.labels[i] != best) changed = true;
            r.labels[i] = best;
            inertia += bd;
        }
        r.trace.push_back(inertia);
        r.inertia = inertia;
        r.iterations = it + 1;
        if (!changed && it > 0) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(r.labels[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += pts[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Empty cluster: re-seed at the point farthest from its own centroid.
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = sqdist(pts[i], centers[static_cast<std::size_t>(r.labels[i])]);
                    if (d > fd) fd = d, far = i;
                }
                centers[c] = pts[far];
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
    }
    r.centroids = std::move(centers);
    return r;
}

}  // namespace detail

struct KMeansOptions {
    std::size_t k = 1;
    std::uint64_t seed = 0;
    int max_iters = 100;
    int n_init = 10;  // independent k-means++ restarts; lowest inertia wins
};

/// Lloyd's algorithm with seeded k-means++ initialization. Deterministic for a fixed seed.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& pts, const KMeansOptions& opts) {
    if (opts.k < 1 || opts.k > pts.size())
        throw PreconditionError("kmeans: need 1 <= k <= number of points (k=" + std::to_string(opts.k) +
                                ", n=" + std::to_string(pts.size()) + ")");
    const std::size_t dim = pts[0].size();
    for (const auto& p : pts)
        if (p.size() != dim) throw PreconditionError("kmeans: all points must share one dimensionality");
    Rng rng(opts.seed);
    std::optional<KMeansResult> best;
    for (int run = 0; run < std::max(1, opts.n_init); ++run) {
        auto r = detail::lloyd(pts, detail::kmeanspp_init(pts, opts.k, rng), std::max(1, opts.max_iters));
        if (!best || r.inertia < best->inertia) best = std::move(r);
    }
    return *best;
}

struct ClusterAssignment {
    std::size_t k = 0;
    std::map<std::string, int> assignments;  // doc_id -> cluster
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::vector<double> trace;

    std::vector<std::string> members(int cluster) const {
        std::vector<std::string> out;
        for (const auto& [id, c] : assignments)
            if (c == cluster) out.push_back(id);
        return out;
    }

    json to_json() const {
        return {{"k", k}, {"assignments", assignments}, {"centroids", centroids}, {"inertia", inertia}, {"trace", trace}};
    }
    static ClusterAssignment from_json(const json& j) {
        ClusterAssignment a;
        a.k = j.at("k");
        a.assignments = j.at("assignments").get<std::map<std::string, int>>();
        a.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
        a.inertia = j.at("inertia");
        a.trace = j.value("trace", std::vector<double>{});
        return a;
    }
};

inline std::size_t default_cluster_count(std::size_t corpus_size) {
    return std::max<std::size_t>(1, (corpus_size + 7) / 8);
}

/// Cluster document embeddings on the unit sphere.
inline ClusterAssignment cluster_documents(const std::vector<EmbeddingVector>& vecs, KMeansOptions opts) {
    std::vector<std::vector<double>> pts;
    for (const auto& v : vecs) pts.push_back(v.normalized().values);
    opts.k = std::min(opts.k, pts.size());
    const auto r = kmeans(pts, opts);
    ClusterAssignment a;
    a.k = r.k;
    for (std::size_t i = 0; i < vecs.size(); ++i) a.assignments[vecs[i].doc_id] = r.labels[i];
    a.centroids = r.centroids;
    a.inertia = r.inertia;
    a.trace = r.trace;
    return a;
}

/// Most frequent content words across a cluster's members.
inline std::vector<std::string> top_terms(const std::vector<const Document*>& docs, std::size_t n = 8) {
    std::map<std::string, std::size_t> freq;
    for (const auto* d : docs)
        for (const auto& w : content_words(d->text))
            if (w.size() > 2 && !std::isdigit(static_cast<unsigned char>(w[0]))) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> v(freq.begin(), freq.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, v.size()); ++i) out.push_back(v[i].first);
    return out;
}

inline std::vector<json> cluster_report(const ClusterAssignment& a, const CorpusIndex& corpus) {
    std::vector<json> rows;
    for (int c = 0; c < static_cast<int>(a.k); ++c) {
        const auto ids = a.members(c);
        std::vector<const Document*> docs;
        for (const auto& id : ids) docs.push_back(&corpus.at(id));
        rows.push_back({{"cluster", c}, {"size", ids.size()}, {"members", ids}, {"top_terms", top_terms(docs)}});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Heterogeneous pools

struct PoolResult {
    std::vector<ContextAssembly> assemblies;
    std::vector<std::string> skipped;  // reasons
};

/// Group same-cluster documents into heterogeneous contexts of >= 2 documents.
/// Each document contributes at most half the window maximum (a prefix window
/// for long documents) so that every context mixes several texts.
inline PoolResult form_heterogeneous_pools(const ClusterAssignment& assignment, const CorpusIndex& corpus,
                                           const Tokenizer& tok, std::size_t docs_per_context,
                                           const AssemblyOptions& opts) {
    if (docs_per_context < 2) throw PreconditionError("form_heterogeneous_pools: docs_per_context must be >= 2");
    const Window& w = opts.window;
    PoolResult out;
    for (int c = 0; c < static_cast<int>(assignment.k); ++c) {
        const auto ids = assignment.members(c);
        if (ids.size() < 2) {
            out.skipped.push_back("cluster " + std::to_string(c) + ": " + std::to_string(ids.size()) +
                                  " document(s), need at least 2");
            continue;
        }
        ContextAssembly cur;
        const auto flush_skip = [&](const std::string& why) {
            if (!cur.pieces.empty())
                out.skipped.push_back("cluster " + std::to_string(c) + ": group of " +
                                      std::to_string(cur.pieces.size()) + " document(s) " + why);
            cur = {};
        };
        for (const auto& id : ids) {
            const Document& d = corpus.at(id);
            Piece piece{d.id, 0, d.text.size()};
            if (d.token_count > w.max_tokens / 2) {
                const TokenizedText tt(d.text, tok);
                piece.end = tt.fit(0, w.max_tokens / 2, w.max_tokens / 4, BoundaryRule::paragraph).end;
            }
            cur.pieces.push_back(piece);
            finalize(cur, corpus, tok, opts.separator);
            if (cur.total_tokens >= w.min_tokens && cur.pieces.size() >= 2) {
                trim_to_max(cur, corpus, tok, w.max_tokens, opts.separator);
                if (w.contains(cur.total_tokens) && cur.doc_ids().size() >= 2) {
                    out.assemblies.push_back(std::move(cur));
                    cur = {};
                } else {
                    flush_skip("fell outside the window after trimming");
                }
            } else if (cur.pieces.size() >= docs_per_context) {
                flush_skip("reached docs_per_context=" + std::to_string(docs_per_context) + " with only " +
                           std::to_string(cur.total_tokens) + " tokens");
            }
        }
        if (!cur.pieces.empty())
            flush_skip("left over with " + std::to_string(cur.total_tokens) + " tokens, below window minimum " +
                       std::to_string(w.min_tokens));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary embedding matrix
//
// Layout (little-endian):
//   bytes 0-7   magic "LCEMBED1"
//   u32         dim
//   u32         dtype (1 = float32)
//   u64         count
//   count x     { u32 id_len, id bytes }
//   count*dim   float32 values, row-major

inline void write_embedding_matrix(const fs::path& p, const std::vector<EmbeddingVector>& vecs) {
    static_assert(std::endian::native == std::endian::little, "embedding matrix writer assumes little-endian");
    const std::uint32_t dim = vecs.empty() ? 0 : static_cast<std::uint32_t>(vecs[0].values.size());
    std::string buf = "LCEMBED1";
    const auto put = [&](const auto& v) { buf.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put(dim);
    put(std::uint32_t{1});
    put(static_cast<std::uint64_t>(vecs.size()));
    for (const auto& v : vecs) {
        if (v.values.size() != dim) throw PreconditionError("embedding matrix: dimension mismatch");
        put(static_cast<std::uint32_t>(v.doc_id.size()));
        buf += v.doc_id;
    }
    for (const auto& v : vecs)
        for (double x : v.values) put(static_cast<float>(x));
    write_file(p, buf);
}

inline std::vector<EmbeddingVector> read_embedding_matrix(const fs::path& p) {
    const std::string buf = read_file(p);
    std::size_t off = 0;
    const auto get = [&](auto& v) {
        if (off + sizeof v > buf.size()) throw ParseError("embedding matrix truncated: " + p.string());
        std::memcpy(&v, buf.data() + off, sizeof v);
        off += sizeof v;
    };
    if (buf.compare(0, 8, "LCEMBED1") != 0) throw ParseError("embedding matrix: bad magic in " + p.string());
    off = 8;
    std::uint32_t dim = 0, dtype = 0;
    std::uint64_t count = 0;
    get(dim);
    get(dtype);
    get(count);
    if (dtype != 1) throw ParseError("embedding matrix: unsupported dtype " + std::to_string(dtype));
    std::vector<std::string> ids(count);
    for (auto& id : ids) {
        std::uint32_t len = 0;
        get(len);
        if (off + len > buf.size()) throw ParseError("embedding matrix truncated: " + p.string());
        id = buf.substr(off, len);
        off += len;
    }
    std::vector<EmbeddingVector> out;
    for (std::uint64_t r = 0; r < count; ++r) {
        std::vector<double> v(dim);
        for (auto& x : v) {
            float f = 0;
            get(f);
            x = f;
        }
        out.push_back(EmbeddingVector::make(ids[r], std::move(v)));
    }
    return out;
}

}  // namespace longctx
