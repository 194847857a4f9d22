#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oddkit/prompting.hpp"

namespace oddkit {

class BackendError : public std::runtime_error {
public:
    enum class Kind { Network, Auth, RateLimited, Timeout, Protocol, Config };

    BackendError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Routing metadata carried alongside the prompt so mock backends and the
/// audit log can key responses without re-parsing prompt text.
struct RequestMeta {
    std::string sample_id;
    std::string stage;
    std::string strategy;
    std::vector<std::string> label_scope;   // effective scope of the stage
    OutputSchema schema{OutputSchema::Labels};
    std::vector<std::string> road_types;    // choices for road classification
};

struct VlmRequest {
    std::string prompt_text;
    std::vector<std::string> images;  // at most one reference per stage call
    double temperature{0.0};
    int max_output_tokens{4096};
    std::string request_id;           // unique within a run
    RequestMeta meta;
};

struct RawResponse {
    std::string text;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
    long latency_ms{0};
};

/// Uniform completion contract. Implementations must be safe for
/// concurrent calls; callers key results by request_id.
class VlmBackend {
public:
    virtual ~VlmBackend() = default;

    virtual RawResponse complete(const VlmRequest& request) = 0;
    virtual std::string name() const = 0;
};

}  // namespace oddkit
