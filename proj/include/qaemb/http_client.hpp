#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
// <resolv.h> (via httplib) defines `_res`, which breaks Eigen headers
// included afterwards.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "qaemb/completion.hpp"
#include "qaemb/error.hpp"
#include "qaemb/log.hpp"

namespace qaemb {

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{60};
};

/// OpenAI-compatible chat completions over HTTP(S).
///
/// Connection failures, 429 and 5xx are retried with exponential backoff;
/// 401/403 raise AuthError immediately.
class HttpCompletionClient final : public CompletionClient {
  public:
    HttpCompletionClient(std::string base_url, std::string api_key, RetryPolicy retry = {})
        : m_api_key(std::move(api_key)), m_retry(retry)
    {
        require(m_retry.attempts >= 1, ErrorCode::ConfigInvalid, "retry attempts must be >= 1");
        while (!base_url.empty() && base_url.back() == '/') {
            base_url.pop_back();
        }
        // Split "scheme://host[:port]" from an optional path prefix.
        const auto scheme_end = base_url.find("://");
        require(scheme_end != std::string::npos, ErrorCode::ConfigInvalid,
                "API base must include a scheme: " + base_url);
        const auto path_start = base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            m_origin = base_url;
        } else {
            m_origin = base_url.substr(0, path_start);
            m_path_prefix = base_url.substr(path_start);
        }
        // Accept bases that already end in /v1.
        if (m_path_prefix.size() >= 3 && m_path_prefix.compare(m_path_prefix.size() - 3, 3, "/v1") == 0) {
            m_path_prefix.resize(m_path_prefix.size() - 3);
        }
    }

    /// Reads QAEMB_API_BASE and QAEMB_API_KEY.
    static HttpCompletionClient from_env(RetryPolicy retry = {})
    {
        const char* base = std::getenv("QAEMB_API_BASE");
        require(base != nullptr && *base != '\0', ErrorCode::ConfigInvalid, "QAEMB_API_BASE is not set");
        const char* key = std::getenv("QAEMB_API_KEY");
        return {base, key != nullptr ? key : "", retry};
    }

    std::string complete(const CompletionRequest& request) override
    {
        const auto body = to_json(request).dump();
        const auto path = m_path_prefix + "/v1/chat/completions";
        auto backoff = m_retry.initial_backoff;
        std::string last_error;
        for (int attempt = 1; attempt <= m_retry.attempts; ++attempt) {
            httplib::Client cli(m_origin);
            cli.set_connection_timeout(m_retry.timeout);
            cli.set_read_timeout(m_retry.timeout);
            cli.set_write_timeout(m_retry.timeout);
            httplib::Headers headers;
            if (!m_api_key.empty()) {
                headers.emplace("Authorization", "Bearer " + m_api_key);
            }
            auto res = cli.Post(path, headers, body, "application/json");
            if (!res) {
                last_error = "connection failed: " + httplib::to_string(res.error());
            } else if (res->status == 401 || res->status == 403) {
                fail(ErrorCode::AuthError, "endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
            } else if (res->status == 200) {
                return extract_content(res->body);
            } else if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
            } else {
                fail(ErrorCode::TransportError, "HTTP " + std::to_string(res->status) + ": " + res->body);
            }
            if (attempt < m_retry.attempts) {
                log::warn("completion attempt " + std::to_string(attempt) + " failed (" + last_error + "), retrying");
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
        fail(ErrorCode::TransportError,
             "giving up after " + std::to_string(m_retry.attempts) + " attempts: " + last_error);
    }

    static std::string extract_content(const std::string& body)
    {
        try {
            auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::TransportError, std::string("malformed completion response: ") + e.what());
        }
    }

  private:
    std::string m_origin;
    std::string m_path_prefix;
    std::string m_api_key;
    RetryPolicy m_retry;
};

}  // namespace qaemb
