#pragma once

// cpp-httplib backed transport for real OpenAI-compatible endpoints.
// Kept out of gateway.hpp so offline users do not compile the HTTP stack.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "longctx/gateway.hpp"

namespace longctx {

class HttpTransport final : public Transport {
public:
    /// base_url like "https://api.openai.com/v1" or "http://127.0.0.1:8080/v1".
    explicit HttpTransport(const std::string& base_url) {
        const auto scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme: " + base_url);
        const auto path_start = base_url.find('/', scheme_end + 3);
        origin_ = base_url.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    HttpResult post(const std::string& path, const std::string& body, const std::string& api_key,
                    double timeout_s) override {
        httplib::Client cli(origin_);
        const auto secs = static_cast<time_t>(timeout_s);
        const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = cli.Post(prefix_ + path, headers, body, "application/json");
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, res->body, {}};
    }

    std::string describe() const override { return origin_ + prefix_; }

private:
    std::string origin_;
    std::string prefix_;
};

}  // namespace longctx
