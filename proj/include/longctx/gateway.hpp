#pragma once

// Client for OpenAI-compatible chat-completion and embedding endpoints.
//
// The gateway is the only component that performs network I/O. It adds bounded
// concurrency, retries with exponential backoff and jitter, and a
// content-addressed replay log so that any logged run can be repeated offline.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "longctx/common.hpp"

namespace longctx {

struct RetryPolicy {
    int max_attempts = 5;
    double backoff_base_s = 0.5;
    double backoff_cap_s = 20.0;
};

struct EndpointConfig {
    std::string id = "default";
    std::string base_url;
    std::string model_name;
    std::string embedding_model;
    std::string api_key_env = "OPENAI_API_KEY";
    int max_in_flight = 4;
    double timeout_s = 120.0;
    RetryPolicy retry;
    std::string mock;  // non-empty selects a built-in offline responder

    /// Secrets are never part of this: only the name of the variable holding the key.
    json to_json() const {
        return {{"id", id},
                {"base_url", base_url},
                {"model_name", model_name},
                {"embedding_model", embedding_model},
                {"api_key_env", api_key_env},
                {"max_in_flight", max_in_flight},
                {"timeout_s", timeout_s},
                {"retry",
                 {{"max_attempts", retry.max_attempts},
                  {"backoff_base_s", retry.backoff_base_s},
                  {"backoff_cap_s", retry.backoff_cap_s}}},
                {"mock", mock}};
    }

    static EndpointConfig from_json(const json& j) {
        EndpointConfig c;
        c.id = j.value("id", c.id);
        c.base_url = j.value("base_url", "");
        c.model_name = j.value("model_name", "");
        c.embedding_model = j.value("embedding_model", "");
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
            c.retry.backoff_base_s = r.value("backoff_base_s", c.retry.backoff_base_s);
            c.retry.backoff_cap_s = r.value("backoff_cap_s", c.retry.backoff_cap_s);
        }
        c.mock = j.value("mock", "");
        return c;
    }

    void validate() const {
        if (max_in_flight < 1) throw ConfigError("endpoint " + id + ": max_in_flight must be >= 1");
        if (retry.max_attempts < 1) throw ConfigError("endpoint " + id + ": retry.max_attempts must be >= 1");
        if (timeout_s <= 0) throw ConfigError("endpoint " + id + ": timeout_s must be positive");
        if (mock.empty() && base_url.empty()) throw ConfigError("endpoint " + id + ": base_url is required");
        if (model_name.empty()) throw ConfigError("endpoint " + id + ": model_name is required");
    }
};

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    int max_new_tokens = 1024;
    std::string request_id;  // caller bookkeeping; not part of the cache key
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    std::string finish_reason;
    Usage usage;
    std::string cache_key;
    int attempts = 0;
    bool from_cache = false;
};

inline bool valid_role(std::string_view r) { return r == "system" || r == "user" || r == "assistant"; }

inline json messages_json(const std::vector<ChatMessage>& msgs) {
    json arr = json::array();
    for (const auto& m : msgs) arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
}

/// Cache key: digest over everything that determines the response, temperature included.
inline std::string chat_cache_key(const std::string& model, const ChatRequest& req) {
    return sha256_hex(json{{"kind", "chat"},
                           {"model", model},
                           {"messages", messages_json(req.messages)},
                           {"temperature", req.temperature},
                           {"max_tokens", req.max_new_tokens}}
                          .dump());
}

class GatewayError : public Error {
public:
    enum class Kind { permanent, exhausted, cache_miss, malformed_response };
    GatewayError(Kind k, const std::string& what) : Error(what), kind_(k) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpResult {
    int status = 0;           // 0 when the request never completed
    std::string body;
    std::string error;        // transport-level failure description
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResult post(const std::string& path, const std::string& body, const std::string& api_key,
                            double timeout_s) = 0;
    virtual bool needs_api_key() const { return true; }
    virtual std::string describe() const = 0;
};

/// In-process endpoint driven by a handler function. Tracks call counts and the
/// in-flight high-water mark so tests can assert on traffic.
class MockTransport final : public Transport {
public:
    using Handler = std::function<HttpResult(const std::string& path, const json& body)>;

    explicit MockTransport(Handler h, std::string name = "mock") : handler_(std::move(h)), name_(std::move(name)) {}

    HttpResult post(const std::string& path, const std::string& body, const std::string&, double) override {
        const int now = ++in_flight_;
        int prev = high_water_.load();
        while (now > prev && !high_water_.compare_exchange_weak(prev, now)) {}
        ++calls_;
        HttpResult r;
        try {
            r = handler_(path, json::parse(body));
        } catch (const std::exception& e) {
            r = {500, std::string("mock handler error: ") + e.what(), {}};
        }
        --in_flight_;
        return r;
    }
    bool needs_api_key() const override { return false; }
    std::string describe() const override { return name_; }

    int calls() const { return calls_.load(); }
    int high_water() const { return high_water_.load(); }

private:
    Handler handler_;
    std::string name_;
    std::atomic<int> in_flight_{0}, high_water_{0}, calls_{0};
};

// ---------------------------------------------------------------------------
// Replay log

enum class CacheMode { off, read_write, replay_only };

inline CacheMode cache_mode_from_string(std::string_view s) {
    if (s == "off") return CacheMode::off;
    if (s == "read-write" || s == "read_write") return CacheMode::read_write;
    if (s == "replay-only" || s == "replay_only" || s == "replay") return CacheMode::replay_only;
    throw ConfigError("unknown cache mode '" + std::string(s) + "'");
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Append-only line-delimited log of exchanges, indexed by cache key.
class ReplayLog {
public:
    ReplayLog() = default;
    explicit ReplayLog(fs::path path) : path_(std::move(path)) {
        if (fs::exists(path_))
            for (const auto& j : read_jsonl(path_)) entries_[j.at("cache_key").get<std::string>()] = j.at("response");
    }

    std::optional<json> find(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void append(const std::string& key, const json& request, const json& response, const std::string& started,
                const std::string& finished) {
        std::lock_guard lock(mu_);
        entries_[key] = response;
        if (path_.empty()) return;
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        out << json{{"cache_key", key},
                    {"request", request},
                    {"response", response},
                    {"started_at", started},
                    {"finished_at", finished}}
                   .dump()
            << '\n';
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    fs::path path_;
    mutable std::mutex mu_;
    std::map<std::string, json> entries_;
};

// ---------------------------------------------------------------------------
// Gateway

struct GatewayStats {
    std::int64_t requests = 0;
    std::int64_t cache_hits = 0;
    std::int64_t network_calls = 0;
    std::int64_t retries = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    json to_json() const {
        return {{"requests", requests},           {"cache_hits", cache_hits},
                {"network_calls", network_calls}, {"retries", retries},
                {"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}};
    }
};

template <class T>
struct BatchItem {
    std::optional<T> value;
    std::string error;

    bool ok() const { return value.has_value(); }
};

class Gateway {
public:
    Gateway(EndpointConfig cfg, std::shared_ptr<Transport> transport, std::shared_ptr<ReplayLog> log = nullptr,
            CacheMode mode = CacheMode::read_write)
        : cfg_(std::move(cfg)),
          transport_(std::move(transport)),
          log_(log ? std::move(log) : std::make_shared<ReplayLog>()),
          mode_(mode) {
        if (cfg_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
        if (!transport_) throw ConfigError("gateway: transport is required");
    }

    const EndpointConfig& config() const { return cfg_; }
    CacheMode mode() const { return mode_; }

    ChatResponse chat(const ChatRequest& req) {
        if (req.messages.empty()) throw PreconditionError("chat: message list is empty");
        for (const auto& m : req.messages)
            if (!valid_role(m.role)) throw PreconditionError("chat: invalid role '" + m.role + "'");
        bump(&GatewayStats::requests);

        const std::string key = chat_cache_key(cfg_.model_name, req);
        if (mode_ != CacheMode::off) {
            if (auto hit = log_->find(key)) {
                bump(&GatewayStats::cache_hits);
                return response_from_json(*hit, key, 0, true);
            }
            if (mode_ == CacheMode::replay_only)
                throw GatewayError(GatewayError::Kind::cache_miss, "replay-only mode: no cached response for " + key);
        }

        const json body = {{"model", cfg_.model_name},
                           {"messages", messages_json(req.messages)},
                           {"temperature", req.temperature},
                           {"max_tokens", req.max_new_tokens}};
        const std::string started = utc_timestamp();
        int attempts = 0;
        const HttpResult res = send("/chat/completions", body, key, attempts);
        json parsed;
        try {
            parsed = json::parse(res.body);
        } catch (const json::exception&) {
            throw GatewayError(GatewayError::Kind::malformed_response, "chat: response is not JSON: " + excerpt(res.body));
        }
        json stored;
        try {
            const auto& choice = parsed.at("choices").at(0);
            stored = {{"content", choice.at("message").at("content").get<std::string>()},
                      {"finish_reason", choice.value("finish_reason", "")},
                      {"usage",
                       {{"prompt_tokens", parsed.contains("usage") ? parsed["usage"].value("prompt_tokens", 0) : 0},
                        {"completion_tokens",
                         parsed.contains("usage") ? parsed["usage"].value("completion_tokens", 0) : 0}}}};
        } catch (const json::exception& e) {
            throw GatewayError(GatewayError::Kind::malformed_response,
                               std::string("chat: unexpected response shape: ") + e.what());
        }
        {
            std::lock_guard lock(stats_mu_);
            stats_.prompt_tokens += stored["usage"]["prompt_tokens"].get<std::int64_t>();
            stats_.completion_tokens += stored["usage"]["completion_tokens"].get<std::int64_t>();
        }
        if (mode_ != CacheMode::off) {
            json logged_req = body;
            logged_req["request_id"] = req.request_id;
            log_->append(key, logged_req, stored, started, utc_timestamp());
        }
        return response_from_json(stored, key, attempts, false);
    }

    /// Raw embeddings call (no caching here; see clustering's EmbeddingCache).
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) {
        if (texts.empty()) return {};
        const std::string model = cfg_.embedding_model.empty() ? cfg_.model_name : cfg_.embedding_model;
        const json body = {{"model", model}, {"input", texts}};
        int attempts = 0;
        const HttpResult res = send("/embeddings", body, "embed", attempts);
        std::vector<std::vector<float>> out(texts.size());
        try {
            const json parsed = json::parse(res.body);
            for (const auto& item : parsed.at("data")) {
                const std::size_t idx = item.value("index", std::size_t{0});
                if (idx >= out.size()) throw GatewayError(GatewayError::Kind::malformed_response, "embedding index out of range");
                out[idx] = item.at("embedding").get<std::vector<float>>();
            }
        } catch (const json::exception& e) {
            throw GatewayError(GatewayError::Kind::malformed_response, std::string("embeddings: ") + e.what());
        }
        for (const auto& v : out)
            if (v.empty()) throw GatewayError(GatewayError::Kind::malformed_response, "embeddings: missing vector");
        return out;
    }

    /// Ordered batch with at most `concurrency` requests in flight.
    std::vector<BatchItem<ChatResponse>> run_batch(const std::vector<ChatRequest>& reqs, int concurrency) {
        if (concurrency < 1 || concurrency > cfg_.max_in_flight)
            throw PreconditionError("run_batch: concurrency must be in [1, max_in_flight=" +
                                    std::to_string(cfg_.max_in_flight) + "]");
        std::vector<BatchItem<ChatResponse>> out(reqs.size());
        std::atomic<std::size_t> next{0};
        const auto worker = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < reqs.size();) {
                try {
                    out[i].value = chat(reqs[i]);
                } catch (const std::exception& e) {
                    out[i].error = e.what();
                }
            }
        };
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(concurrency), reqs.size());
        std::vector<std::thread> threads;
        for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
        if (n > 0) worker();
        for (auto& t : threads) t.join();
        return out;
    }

    GatewayStats stats() const {
        std::lock_guard lock(stats_mu_);
        return stats_;
    }

private:
    static std::string excerpt(const std::string& s) { return s.size() > 300 ? s.substr(0, 300) + "..." : s; }

    static ChatResponse response_from_json(const json& j, const std::string& key, int attempts, bool cached) {
        ChatResponse r;
        r.content = j.at("content").get<std::string>();
        r.finish_reason = j.value("finish_reason", "");
        if (j.contains("usage")) {
            r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        r.cache_key = key;
        r.attempts = attempts;
        r.from_cache = cached;
        return r;
    }

    void bump(std::int64_t GatewayStats::*field, std::int64_t by = 1) {
        std::lock_guard lock(stats_mu_);
        stats_.*field += by;
    }

    std::string api_key() const {
        if (!transport_->needs_api_key()) return {};
        const char* v = std::getenv(cfg_.api_key_env.c_str());
        if (!v || !*v) throw ConfigError("endpoint " + cfg_.id + ": environment variable " + cfg_.api_key_env + " is not set");
        return v;
    }

    // Bounded-parallelism slot, shared by every call on this gateway.
    class Slot {
    public:
        explicit Slot(Gateway& g) : g_(g) {
            std::unique_lock lock(g_.slot_mu_);
            g_.slot_cv_.wait(lock, [&] { return g_.in_flight_ < g_.cfg_.max_in_flight; });
            ++g_.in_flight_;
        }
        ~Slot() {
            {
                std::lock_guard lock(g_.slot_mu_);
                --g_.in_flight_;
            }
            g_.slot_cv_.notify_one();
        }

    private:
        Gateway& g_;
    };

    HttpResult send(const std::string& path, const json& body, const std::string& jitter_key, int& attempts) {
        const std::string key = api_key();
        const std::string payload = body.dump();
        Rng jitter(derive_seed(0, jitter_key));
        std::string last_error;
        for (attempts = 1; attempts <= cfg_.retry.max_attempts; ++attempts) {
            HttpResult res;
            {
                Slot slot(*this);
                bump(&GatewayStats::network_calls);
                res = transport_->post(path, payload, key, cfg_.timeout_s);
            }
            if (res.status >= 200 && res.status < 300) return res;
            const bool retryable = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
            last_error = res.status == 0 ? "transport error: " + res.error
                                         : "HTTP " + std::to_string(res.status) + ": " + excerpt(res.body);
            if (!retryable)
                throw GatewayError(GatewayError::Kind::permanent, "endpoint " + cfg_.id + " " + path + ": " + last_error);
            if (attempts == cfg_.retry.max_attempts) break;
            bump(&GatewayStats::retries);
            const double backoff = std::min(cfg_.retry.backoff_cap_s,
                                            cfg_.retry.backoff_base_s * std::pow(2.0, attempts - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff * (0.5 + 0.5 * jitter.uniform())));
        }
        throw GatewayError(GatewayError::Kind::exhausted, "endpoint " + cfg_.id + " " + path + ": retries exhausted after " +
                                                               std::to_string(cfg_.retry.max_attempts) +
                                                               " attempts; last error: " + last_error);
    }

    EndpointConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<ReplayLog> log_;
    CacheMode mode_;

    std::mutex slot_mu_;
    std::condition_variable slot_cv_;
    int in_flight_ = 0;

    mutable std::mutex stats_mu_;
    GatewayStats stats_;
};

}  // namespace longctx
