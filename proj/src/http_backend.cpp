#include "oddkit/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "oddkit/util.hpp"

namespace oddkit {

namespace {

std::string base64_encode(const std::string& input) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((input.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 2 < input.size()) {
        const unsigned v = (static_cast<unsigned char>(input[i]) << 16) |
                           (static_cast<unsigned char>(input[i + 1]) << 8) |
                           static_cast<unsigned char>(input[i + 2]);
        out += alphabet[(v >> 18) & 0x3f];
        out += alphabet[(v >> 12) & 0x3f];
        out += alphabet[(v >> 6) & 0x3f];
        out += alphabet[v & 0x3f];
        i += 3;
    }
    if (i + 1 == input.size()) {
        const unsigned v = static_cast<unsigned char>(input[i]) << 16;
        out += alphabet[(v >> 18) & 0x3f];
        out += alphabet[(v >> 12) & 0x3f];
        out += "==";
    } else if (i + 2 == input.size()) {
        const unsigned v = (static_cast<unsigned char>(input[i]) << 16) |
                           (static_cast<unsigned char>(input[i + 1]) << 8);
        out += alphabet[(v >> 18) & 0x3f];
        out += alphabet[(v >> 12) & 0x3f];
        out += alphabet[(v >> 6) & 0x3f];
        out += '=';
    }
    return out;
}

std::string mime_for(const std::filesystem::path& path) {
    const std::string ext = to_lower(path.extension().string());
    if (ext == ".png") return "image/png";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "image/jpeg";
}

bool retryable_status(int status) {
    return status == 408 || status == 409 || status == 429 || status >= 500;
}

std::string content_to_text(const nlohmann::json& content) {
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string text;
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text") {
                text += part.value("text", "");
            }
        }
        return text;
    }
    return {};
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_json(const nlohmann::json& doc) {
    HttpBackendConfig config;
    config.base_url = doc.value("base_url", "");
    config.path = doc.value("path", config.path);
    config.model = doc.value("model", "");
    config.api_key_env = doc.value("api_key_env", config.api_key_env);
    config.temperature = doc.value("temperature", config.temperature);
    config.max_output_tokens = doc.value("max_output_tokens", config.max_output_tokens);
    config.max_retries = doc.value("max_retries", config.max_retries);
    config.backoff_base_ms = doc.value("backoff_base_ms", config.backoff_base_ms);
    config.backoff_cap_ms = doc.value("backoff_cap_ms", config.backoff_cap_ms);
    config.timeout_seconds = doc.value("timeout_seconds", config.timeout_seconds);
    config.max_in_flight = doc.value("max_in_flight", config.max_in_flight);
    if (config.base_url.empty() || config.model.empty()) {
        throw BackendError(BackendError::Kind::Config,
                           "remote backend profile needs base_url and model");
    }
    return config;
}

HttpBackendConfig HttpBackendConfig::load_file(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendError::Kind::Config,
                           "malformed backend profile " + path.string() + ": " + e.what());
    }
}

std::string image_payload_url(const std::string& image_ref) {
    if (image_ref.rfind("http://", 0) == 0 || image_ref.rfind("https://", 0) == 0 ||
        image_ref.rfind("data:", 0) == 0) {
        return image_ref;
    }
    const std::filesystem::path path(image_ref);
    if (!std::filesystem::exists(path)) {
        throw BackendError(BackendError::Kind::Config,
                           "image file does not exist: " + image_ref);
    }
    return "data:" + mime_for(path) + ";base64," + base64_encode(read_file(path));
}

class HttpVlmBackend::InflightGuard {
public:
    explicit InflightGuard(HttpVlmBackend& backend) : backend_(backend) {
        std::unique_lock lock(backend_.inflight_mutex_);
        backend_.inflight_cv_.wait(
            lock, [&] { return backend_.inflight_ < backend_.config_.max_in_flight; });
        ++backend_.inflight_;
    }
    ~InflightGuard() {
        {
            std::lock_guard lock(backend_.inflight_mutex_);
            --backend_.inflight_;
        }
        backend_.inflight_cv_.notify_one();
    }

private:
    HttpVlmBackend& backend_;
};

HttpVlmBackend::HttpVlmBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
        api_key_ = key;
    }
    if (api_key_.empty()) {
        throw BackendError(BackendError::Kind::Auth,
                           "credential environment variable " + config_.api_key_env +
                               " is not set");
    }
    if (config_.max_in_flight < 1) config_.max_in_flight = 1;
}

RawResponse HttpVlmBackend::complete(const VlmRequest& request) {
    InflightGuard guard(*this);

    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt_text}});
    for (const std::string& image : request.images) {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_payload_url(image)}}}});
    }
    const nlohmann::json body = {
        {"model", config_.model},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
    };
    const std::string payload = body.dump();

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_default_headers({{"Authorization", "Bearer " + api_key_}});

    std::string last_error;
    bool rate_limited = false;
    const auto started = std::chrono::steady_clock::now();

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            long delay = static_cast<long>(config_.backoff_base_ms) * (1L << (attempt - 1));
            // Deterministic jitter keyed by request and attempt.
            delay += static_cast<long>(
                hash64(request.request_id + "#" + std::to_string(attempt)) %
                static_cast<std::uint64_t>(config_.backoff_base_ms + 1));
            delay = std::min(delay, static_cast<long>(config_.backoff_cap_ms));
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }

        auto result = client.Post(config_.path, payload, "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        const int status = result->status;
        if (status == 401 || status == 403) {
            throw BackendError(BackendError::Kind::Auth,
                               "authentication rejected (HTTP " + std::to_string(status) + ")");
        }
        if (status == 429) {
            rate_limited = true;
            last_error = "rate limited (HTTP 429)";
            if (result->has_header("Retry-After")) {
                const long wait = std::strtol(result->get_header_value("Retry-After").c_str(),
                                              nullptr, 10);
                if (wait > 0 && attempt < config_.max_retries) {
                    std::this_thread::sleep_for(std::chrono::seconds(
                        std::min(wait, static_cast<long>(config_.timeout_seconds))));
                }
            }
            continue;
        }
        if (retryable_status(status)) {
            rate_limited = false;
            last_error = "server error (HTTP " + std::to_string(status) + ")";
            continue;
        }
        if (status != 200) {
            throw BackendError(BackendError::Kind::Protocol,
                               "unexpected HTTP " + std::to_string(status) + ": " + result->body);
        }

        nlohmann::json doc =
            nlohmann::json::parse(result->body, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
            throw BackendError(BackendError::Kind::Protocol,
                               "response body is not a chat completion: " + result->body);
        }
        RawResponse response;
        response.text = content_to_text(doc["choices"][0]["message"]["content"]);
        if (doc.contains("usage")) {
            const auto& usage = doc["usage"];
            if (usage.contains("prompt_tokens")) {
                response.prompt_tokens = usage["prompt_tokens"].get<int>();
            }
            if (usage.contains("completion_tokens")) {
                response.completion_tokens = usage["completion_tokens"].get<int>();
            }
        }
        response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();
        return response;
    }

    throw BackendError(rate_limited ? BackendError::Kind::RateLimited
                                    : BackendError::Kind::Network,
                       "request " + request.request_id + " failed after " +
                           std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace oddkit
