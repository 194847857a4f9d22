#pragma once

#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <string>

#include "json.hpp"
#include "oddkit/backend.hpp"

namespace oddkit {

/// Remote chat-completions profile. The credential is read from the
/// environment variable named by api_key_env, never from the file itself.
struct HttpBackendConfig {
    std::string base_url;                        // e.g. "https://api.example.com"
    std::string path{"/v1/chat/completions"};
    std::string model;
    std::string api_key_env{"ODDKIT_API_KEY"};
    double temperature{0.0};
    int max_output_tokens{4096};
    int max_retries{3};
    int backoff_base_ms{250};
    int backoff_cap_ms{8000};
    int timeout_seconds{120};
    int max_in_flight{4};

    static HttpBackendConfig from_json(const nlohmann::json& doc);
    static HttpBackendConfig load_file(const std::filesystem::path& path);
};

/// Chat-completions client over HTTP. Transient failures retry with capped
/// exponential backoff plus deterministic jitter; rate limiting is
/// distinguished from hard failure and honors Retry-After when present. An
/// internal limiter bounds concurrent in-flight requests.
class HttpVlmBackend : public VlmBackend {
public:
    explicit HttpVlmBackend(HttpBackendConfig config);

    RawResponse complete(const VlmRequest& request) override;
    std::string name() const override { return "remote:" + config_.model; }

private:
    class InflightGuard;

    HttpBackendConfig config_;
    std::string api_key_;

    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int inflight_{0};
};

/// File paths become base64 data URLs; http(s) and data URLs pass through.
std::string image_payload_url(const std::string& image_ref);

}  // namespace oddkit
