#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oddkit/taxonomy.hpp"
#include "oddkit/tokenizer.hpp"

namespace oddkit {

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The nine prompting strategies. Closed set; each value compiles to
/// exactly one stage-plan shape.
enum class StrategyId {
    FlatTaxonomy,
    Reevaluate,
    RoadDependent,
    PersonaDecomposition,
    PersonaLabelAliasing,
    PersonaRag,
    PersonaCot,
    PersonaChainedCot,
    ChainedCotPerStageHeavy,
};

const std::vector<StrategyId>& all_strategies();
const std::string& strategy_to_string(StrategyId strategy);
StrategyId strategy_from_string(const std::string& name);

/// Reference image multiplicity k per strategy: fan-out strategies and
/// persona+RAG submit the image to each of five expert calls, the two-stage
/// strategies twice, single-prompt strategies once.
int reference_image_multiplicity(StrategyId strategy);

bool is_cot_strategy(StrategyId strategy);
bool is_persona_strategy(StrategyId strategy);

enum class OutputSchema { Labels, LabelsRanked, Points, RoadType, SceneDescription };

const std::string& schema_to_string(OutputSchema schema);
OutputSchema schema_from_string(const std::string& name);

struct Stage {
    std::string name;
    std::vector<std::string> label_scope;      // static scope, subset of taxonomy ids
    std::string template_id;
    std::vector<std::string> consumes_context; // names of strictly earlier stages
    bool attaches_image{true};
    OutputSchema output_schema{OutputSchema::Labels};
    std::string persona;                        // expert framing label, "" for none
    bool scope_from_context{false};             // effective scope resolved at run time
    std::vector<std::string> road_types;        // choice list for road classification
};

struct StagePlan {
    StrategyId strategy{StrategyId::FlatTaxonomy};
    std::vector<Stage> stages;
    int image_multiplicity{1};   // k: count of image-attaching stages
    bool parallel_stages{false}; // fan-out stages are independent

    const Stage* find_stage(const std::string& name) const;
};

struct RenderedPrompt {
    std::string text;
    std::string stage_name;
    size_t estimated_tokens{0};
};

/// P + k*I token budget; I stays symbolic.
struct TokenBudget {
    size_t fixed_prompt_tokens{0};  // P
    int image_multiplicity{1};      // k

    size_t total(size_t per_image_tokens) const {
        return fixed_prompt_tokens +
               static_cast<size_t>(image_multiplicity) * per_image_tokens;
    }
};

/// Everything a stage render may consume beyond the taxonomy. Prior-stage
/// outputs are pre-serialized structured documents in canonical key order.
struct RenderContext {
    std::map<std::string, std::string> stage_outputs;
    std::string road_type;                          // RoadDependent stage-1 result
    std::vector<std::string> scoped_labels;         // runtime scope for scope_from_context
    std::string scene_description;                  // PersonaRag describe result
    std::vector<std::string> retrieved_descriptions;
};

/// Template files plus the registry mapping (strategy, stage) -> template id.
class TemplateSet {
public:
    static TemplateSet load_dir(const std::filesystem::path& dir);

    const std::string& text(const std::string& template_id) const;
    std::string template_for(StrategyId strategy, const std::string& stage_name) const;
    const std::string& digest() const { return digest_; }

private:
    std::map<std::string, std::string> templates_;                  // id -> body
    std::map<std::string, std::map<std::string, std::string>> registry_;
    std::string digest_;
};

struct PlanOptions {
    std::vector<std::string> road_types;        // RoadDependent stage-1 choices
    bool detection_mode{false};                 // emit center points
    std::optional<PersonaConfig> personas;      // overrides the default partition
};

/// Compiles strategies to stage plans and renders stage prompts. Immutable
/// after construction; rendering is a pure function of its arguments.
class PromptEngine {
public:
    explicit PromptEngine(TemplateSet templates);

    static PromptEngine load_default();
    static PromptEngine load_dir(const std::filesystem::path& template_dir);

    StagePlan stage_plan(StrategyId strategy, const Taxonomy& taxonomy,
                         const PlanOptions& options = {}) const;

    /// Renders the stage prompt. Throws TemplateError when a consumed
    /// stage output is missing from the context.
    RenderedPrompt render(const Stage& stage, const Taxonomy& taxonomy,
                          const RenderContext& context) const;

    /// Fixed prompt cost P with empty context placeholders, plus k.
    TokenBudget budget(StrategyId strategy, const Taxonomy& taxonomy,
                       const TokenCounter& tokenizer,
                       const PlanOptions& options = {}) const;

    const TemplateSet& templates() const { return templates_; }

private:
    RenderedPrompt render_impl(const Stage& stage, const Taxonomy& taxonomy,
                               const RenderContext& context, bool allow_missing_context) const;

    TemplateSet templates_;
};

/// Shared prompt constants; every strategy renders these in this order
/// ahead of the template body.
std::string system_framing(const std::string& persona);
const std::string& reward_penalty_framing();
const std::string& behavioral_constraints();

/// Response-format instruction appended for a schema.
std::string schema_instruction(OutputSchema schema);

}  // namespace oddkit
