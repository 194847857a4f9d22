#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oddkit/backend.hpp"
#include "oddkit/mock_backend.hpp"
#include "oddkit/parsing.hpp"
#include "oddkit/predictions.hpp"
#include "oddkit/prompting.hpp"
#include "oddkit/retrieval.hpp"
#include "oddkit/taxonomy.hpp"

namespace oddkit {

struct SampleRef {
    std::string sample_id;
    std::string image_path;
};

/// Everything recorded about one executed stage.
struct StageRecord {
    std::string stage;
    PredictionSet predictions;
    std::string serialized_output;  // canonical document fed to later stages
    size_t estimated_prompt_tokens{0};
    std::optional<int> reported_prompt_tokens;
    std::optional<int> reported_completion_tokens;
    long latency_ms{0};
    bool attached_image{false};
};

/// Ordered per-stage outcomes plus the strategy-specific context values.
struct PipelineContext {
    std::vector<StageRecord> records;  // stage-plan order
    std::string road_type;
    std::vector<std::string> scoped_labels;  // resolved scope for road-dependent detection
    std::string scene_description;
    std::vector<KnowledgeBase::Hit> retrieved;
    bool failed{false};
    std::string failure_reason;

    const StageRecord* find(const std::string& stage) const;
    std::string digest() const;
};

struct TokenUsage {
    size_t estimated_prompt_tokens{0};
    size_t reported_prompt_tokens{0};
    size_t reported_completion_tokens{0};
    bool has_reported{false};
    int image_submissions{0};
};

struct RunOptions {
    bool detection_mode{false};
    std::optional<PersonaConfig> personas;
    const RoadContextTable* road_table{nullptr};
    bool fail_closed_on_unknown_road{false};
    const KnowledgeBase* knowledge_base{nullptr};  // required for persona_rag
    size_t retrieval_k{8};
    int stage_concurrency{1};
    double temperature{0.0};
    int max_output_tokens{4096};
};

struct RunResult {
    PredictionSet predictions;
    PipelineContext context;
    TokenUsage usage;
    std::vector<std::string> warnings;
};

/// Executes one strategy for one sample against a backend: renders stage
/// prompts, propagates context, merges persona outputs and enforces the
/// per-strategy output policies. Stateless; safe to share across threads.
class PipelineRunner {
public:
    PipelineRunner(const PromptEngine* engine, const Taxonomy* taxonomy);

    RunResult run(StrategyId strategy, const SampleRef& sample, VlmBackend& backend,
                  const RunOptions& options = {}) const;

    /// Deterministic disjoint union of per-persona outputs: stage order,
    /// then rank, then id. Overlapping scopes are a programming error.
    static PredictionSet merge_persona_outputs(
        const std::vector<std::pair<std::string, PredictionSet>>& per_stage);

private:
    const PromptEngine* engine_;
    const Taxonomy* taxonomy_;
};

/// One audit-log record per sample per strategy.
nlohmann::json audit_record(const SampleRef& sample, StrategyId strategy,
                            const RunResult& result);

}  // namespace oddkit
