#include "oddkit/prompting.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "json.hpp"
#include "oddkit/util.hpp"

namespace oddkit {

namespace {

struct StrategyName {
    StrategyId id;
    std::string name;
    int multiplicity;
};

const std::vector<StrategyName>& strategy_table() {
    static const std::vector<StrategyName> table = {
        {StrategyId::FlatTaxonomy, "flat_taxonomy", 1},
        {StrategyId::Reevaluate, "reevaluate", 2},
        {StrategyId::RoadDependent, "road_dependent", 2},
        {StrategyId::PersonaDecomposition, "persona_decomposition", 5},
        {StrategyId::PersonaLabelAliasing, "persona_label_aliasing", 5},
        {StrategyId::PersonaRag, "persona_rag", 5},
        {StrategyId::PersonaCot, "persona_cot", 5},
        {StrategyId::PersonaChainedCot, "persona_chained_cot", 5},
        {StrategyId::ChainedCotPerStageHeavy, "chained_cot_per_stage_heavy", 1},
    };
    return table;
}

// Chained pipeline order: signage first to set semantic priors, markings,
// then scenery, weather, and trigger conditions last.
const std::vector<std::pair<std::string, std::string>>& default_persona_stages() {
    static const std::vector<std::pair<std::string, std::string>> stages = {
        {"signs", "sign_expert"},
        {"markings", "markings_expert"},
        {"scenery", "scenery_expert"},
        {"weather", "weather_expert"},
        {"trigger_conditions", "trigger_condition_expert"},
    };
    return stages;
}

std::string persona_display(const std::string& persona_key) {
    static const std::map<std::string, std::string> display = {
        {"sign_expert", "the Sign Expert"},
        {"markings_expert", "the Markings Expert"},
        {"scenery_expert", "the Scenery Expert"},
        {"weather_expert", "the Weather Expert"},
        {"trigger_condition_expert", "the Trigger Condition Expert"},
    };
    auto it = display.find(persona_key);
    if (it != display.end()) return it->second;
    return "the " + persona_key + " expert";
}

std::string bullet_list(const std::vector<std::string>& items) {
    std::string out;
    for (const std::string& item : items) {
        out += "- ";
        out += item;
        out += '\n';
    }
    if (!out.empty()) out.pop_back();
    return out;
}

const std::vector<std::string>& default_road_types() {
    static const std::vector<std::string> types = {"motorway", "rural_road", "urban_street"};
    return types;
}

OutputSchema detect_schema(StrategyId strategy, bool detection_mode) {
    if (detection_mode) return OutputSchema::Points;
    return is_cot_strategy(strategy) ? OutputSchema::LabelsRanked : OutputSchema::Labels;
}

}  // namespace

const std::vector<StrategyId>& all_strategies() {
    static const std::vector<StrategyId> ids = [] {
        std::vector<StrategyId> out;
        for (const auto& row : strategy_table()) out.push_back(row.id);
        return out;
    }();
    return ids;
}

const std::string& strategy_to_string(StrategyId strategy) {
    for (const auto& row : strategy_table()) {
        if (row.id == strategy) return row.name;
    }
    throw TemplateError("invalid strategy value");
}

StrategyId strategy_from_string(const std::string& name) {
    for (const auto& row : strategy_table()) {
        if (name == row.name) return row.id;
    }
    throw TemplateError("unknown strategy '" + name + "'");
}

int reference_image_multiplicity(StrategyId strategy) {
    for (const auto& row : strategy_table()) {
        if (row.id == strategy) return row.multiplicity;
    }
    throw TemplateError("invalid strategy value");
}

bool is_cot_strategy(StrategyId strategy) {
    return strategy == StrategyId::PersonaCot || strategy == StrategyId::PersonaChainedCot ||
           strategy == StrategyId::ChainedCotPerStageHeavy;
}

bool is_persona_strategy(StrategyId strategy) {
    switch (strategy) {
        case StrategyId::PersonaDecomposition:
        case StrategyId::PersonaLabelAliasing:
        case StrategyId::PersonaRag:
        case StrategyId::PersonaCot:
        case StrategyId::PersonaChainedCot:
            return true;
        default:
            return false;
    }
}

const std::string& schema_to_string(OutputSchema schema) {
    static const std::map<OutputSchema, std::string> names = {
        {OutputSchema::Labels, "labels"},
        {OutputSchema::LabelsRanked, "labels_ranked"},
        {OutputSchema::Points, "points"},
        {OutputSchema::RoadType, "road_type"},
        {OutputSchema::SceneDescription, "scene_description"},
    };
    return names.at(schema);
}

OutputSchema schema_from_string(const std::string& name) {
    for (OutputSchema s : {OutputSchema::Labels, OutputSchema::LabelsRanked, OutputSchema::Points,
                           OutputSchema::RoadType, OutputSchema::SceneDescription}) {
        if (schema_to_string(s) == name) return s;
    }
    throw TemplateError("unknown output schema '" + name + "'");
}

const Stage* StagePlan::find_stage(const std::string& name) const {
    for (const Stage& stage : stages) {
        if (stage.name == name) return &stage;
    }
    return nullptr;
}

std::string system_framing(const std::string& persona) {
    if (persona.empty()) {
        return "You are a professional scene understanding system for AV safety analysis.";
    }
    return "You are " + persona +
           ", one of the domain experts inside a professional scene understanding system for AV "
           "safety analysis.";
}

const std::string& reward_penalty_framing() {
    static const std::string text =
        "Every answer is scored: each correct detection earns a reward and each incorrect "
        "detection draws a penalty, so never guess beyond what the visual evidence supports.";
    return text;
}

const std::string& behavioral_constraints() {
    static const std::string text =
        "Responses must be confident, accurate, and structured. Use only the fixed terminology "
        "given below, exactly as written.";
    return text;
}

std::string schema_instruction(OutputSchema schema) {
    switch (schema) {
        case OutputSchema::Labels:
            return "Respond with JSON-structured data only, with no prose around it:\n"
                   "{\"labels\": [\"<label>\", ...]}\n"
                   "Use an empty list when nothing applies.";
        case OutputSchema::LabelsRanked:
            return "Respond with JSON-structured data only, with no prose around it:\n"
                   "{\"labels\": [{\"label\": \"<label>\", \"rank\": 1}, ...]}\n"
                   "Rank 1 is the most confident. When uncertain between alternatives for one "
                   "element, return up to two plausible labels ranked by confidence. Use an empty "
                   "list when nothing applies.";
        case OutputSchema::Points:
            return "Respond with JSON-structured data only, with no prose around it:\n"
                   "{\"detections\": [{\"label\": \"<label>\", \"center\": {\"x\": 0.5, \"y\": "
                   "0.5}, \"rank\": 1}, ...]}\n"
                   "Center coordinates are normalized to the image width and height, each in [0, "
                   "1]. Use an empty list when nothing applies.";
        case OutputSchema::RoadType:
            return "Respond with JSON-structured data only, with no prose around it:\n"
                   "{\"road_type\": \"<one of the listed types>\"}";
        case OutputSchema::SceneDescription:
            return "Respond with JSON-structured data only, with no prose around it:\n"
                   "{\"description\": \"<your scene description>\"}";
    }
    throw TemplateError("invalid output schema");
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
    const auto registry_path = dir / "registry.json";
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(registry_path));
    } catch (const std::exception& e) {
        throw TemplateError("cannot load strategy registry " + registry_path.string() + ": " +
                            e.what());
    }
    if (!doc.contains("templates") || !doc["templates"].is_object()) {
        throw TemplateError("strategy registry must carry a 'templates' object");
    }

    TemplateSet set;
    std::uint64_t digest = hash64(doc.dump());
    for (const auto& [strategy_name, stages] : doc["templates"].items()) {
        strategy_from_string(strategy_name);  // validates the key
        for (const auto& [stage_name, template_id] : stages.items()) {
            set.registry_[strategy_name][stage_name] = template_id.get<std::string>();
        }
    }
    // Load every referenced body once.
    static const std::regex placeholder_re(R"(\{\{([a-z_.]+)\}\})");
    static const std::set<std::string> known = {
        "labels", "aliased_labels", "context_labels", "context_all", "road_types",
        "road_type", "scene_description", "retrieved", "schema"};
    for (const auto& [strategy_name, stages] : set.registry_) {
        for (const auto& [stage_name, template_id] : stages) {
            if (set.templates_.count(template_id)) continue;
            const auto path = dir / (template_id + ".txt");
            std::string body;
            try {
                body = read_file(path);
            } catch (const std::exception& e) {
                throw TemplateError("registry references missing template '" + template_id +
                                    "': " + e.what());
            }
            for (auto it = std::sregex_iterator(body.begin(), body.end(), placeholder_re);
                 it != std::sregex_iterator(); ++it) {
                const std::string name = (*it)[1];
                if (!known.count(name) && name.rfind("context.", 0) != 0) {
                    throw TemplateError("template '" + template_id +
                                        "' uses unknown placeholder {{" + name + "}}");
                }
            }
            digest = hash64(body, digest);
            set.templates_[template_id] = std::move(body);
        }
    }
    set.digest_ = hex_digest(digest);
    return set;
}

const std::string& TemplateSet::text(const std::string& template_id) const {
    auto it = templates_.find(template_id);
    if (it == templates_.end()) {
        throw TemplateError("unknown template id '" + template_id + "'");
    }
    return it->second;
}

std::string TemplateSet::template_for(StrategyId strategy, const std::string& stage_name) const {
    auto sit = registry_.find(strategy_to_string(strategy));
    if (sit == registry_.end()) {
        throw TemplateError("strategy registry has no entry for " + strategy_to_string(strategy));
    }
    auto it = sit->second.find(stage_name);
    if (it == sit->second.end()) it = sit->second.find("*");
    if (it == sit->second.end()) {
        throw TemplateError("no template registered for stage '" + stage_name + "' of " +
                            strategy_to_string(strategy));
    }
    return it->second;
}

PromptEngine::PromptEngine(TemplateSet templates) : templates_(std::move(templates)) {}

PromptEngine PromptEngine::load_default() {
    return load_dir(std::filesystem::path(ODDKIT_DATA_DIR) / "templates");
}

PromptEngine PromptEngine::load_dir(const std::filesystem::path& template_dir) {
    return PromptEngine(TemplateSet::load_dir(template_dir));
}

StagePlan PromptEngine::stage_plan(StrategyId strategy, const Taxonomy& taxonomy,
                                   const PlanOptions& options) const {
    StagePlan plan;
    plan.strategy = strategy;

    const auto all_ids = taxonomy.all_ids();
    const OutputSchema detect = detect_schema(strategy, options.detection_mode);

    // Persona stages in plan order: the default partition follows the
    // chained pipeline order; custom partitions follow persona-name order.
    std::vector<std::pair<std::string, std::vector<std::string>>> personas;
    if (is_persona_strategy(strategy)) {
        if (options.personas) {
            for (auto& [persona, ids] : taxonomy.partition_by_persona(*options.personas)) {
                personas.emplace_back(persona, ids);
            }
        } else {
            auto partition = taxonomy.partition_by_persona();
            for (const auto& [stage_name, persona_key] : default_persona_stages()) {
                personas.emplace_back(stage_name, partition.at(persona_key));
            }
        }
    }
    auto persona_label = [&](const std::string& stage_name) {
        if (options.personas) return persona_display(stage_name);
        for (const auto& [name, key] : default_persona_stages()) {
            if (name == stage_name) return persona_display(key);
        }
        return persona_display(stage_name);
    };

    auto add_stage = [&](Stage stage) {
        stage.template_id = templates_.template_for(strategy, stage.name);
        plan.stages.push_back(std::move(stage));
    };

    switch (strategy) {
        case StrategyId::FlatTaxonomy: {
            add_stage({.name = "detect", .label_scope = all_ids, .output_schema = detect});
            break;
        }
        case StrategyId::Reevaluate: {
            add_stage({.name = "predict", .label_scope = all_ids, .output_schema = detect});
            add_stage({.name = "verify",
                       .label_scope = all_ids,
                       .consumes_context = {"predict"},
                       .output_schema = detect});
            break;
        }
        case StrategyId::RoadDependent: {
            Stage classify{.name = "classify_road_type", .output_schema = OutputSchema::RoadType};
            classify.road_types =
                options.road_types.empty() ? default_road_types() : options.road_types;
            add_stage(std::move(classify));
            add_stage({.name = "detect",
                       .label_scope = all_ids,
                       .consumes_context = {"classify_road_type"},
                       .output_schema = detect,
                       .scope_from_context = true});
            break;
        }
        case StrategyId::PersonaDecomposition:
        case StrategyId::PersonaLabelAliasing:
        case StrategyId::PersonaCot: {
            for (const auto& [name, ids] : personas) {
                add_stage({.name = name,
                           .label_scope = ids,
                           .output_schema = detect,
                           .persona = persona_label(name)});
            }
            plan.parallel_stages = true;
            break;
        }
        case StrategyId::PersonaRag: {
            // The five expert calls carry the image; the scene-description
            // call does not, keeping k at the five-expert budget.
            add_stage({.name = "describe",
                       .attaches_image = false,
                       .output_schema = OutputSchema::SceneDescription});
            for (const auto& [name, ids] : personas) {
                add_stage({.name = name,
                           .label_scope = ids,
                           .consumes_context = {"describe"},
                           .output_schema = detect,
                           .persona = persona_label(name)});
            }
            plan.parallel_stages = true;
            break;
        }
        case StrategyId::PersonaChainedCot: {
            std::vector<std::string> prior;
            for (const auto& [name, ids] : personas) {
                add_stage({.name = name,
                           .label_scope = ids,
                           .consumes_context = prior,
                           .output_schema = detect,
                           .persona = persona_label(name)});
                prior.push_back(name);
            }
            break;
        }
        case StrategyId::ChainedCotPerStageHeavy: {
            add_stage({.name = "full_chain", .label_scope = all_ids, .output_schema = detect});
            break;
        }
    }

    plan.image_multiplicity = 0;
    for (const Stage& stage : plan.stages) {
        if (stage.attaches_image) ++plan.image_multiplicity;
    }
    return plan;
}

RenderedPrompt PromptEngine::render(const Stage& stage, const Taxonomy& taxonomy,
                                    const RenderContext& context) const {
    return render_impl(stage, taxonomy, context, /*allow_missing_context=*/false);
}

RenderedPrompt PromptEngine::render_impl(const Stage& stage, const Taxonomy& taxonomy,
                                         const RenderContext& context,
                                         bool allow_missing_context) const {
    if (!allow_missing_context) {
        for (const std::string& consumed : stage.consumes_context) {
            const bool have = context.stage_outputs.count(consumed) > 0 ||
                              (consumed == "classify_road_type" && !context.road_type.empty()) ||
                              (consumed == "describe" && !context.scene_description.empty());
            if (!have) {
                throw TemplateError("stage '" + stage.name + "' consumes missing context '" +
                                    consumed + "'");
            }
        }
    }

    const std::vector<std::string>& scope =
        stage.scope_from_context ? context.scoped_labels : stage.label_scope;

    auto aliased = [&]() {
        std::vector<std::string> labels;
        labels.reserve(scope.size());
        for (const std::string& id : scope) {
            const Concept* c = taxonomy.find(id);
            labels.push_back(c && !c->aliases.empty() ? c->aliases.front() : id);
        }
        return labels;
    };

    auto context_block = [&](const std::string& name) -> std::string {
        auto it = context.stage_outputs.find(name);
        if (it == context.stage_outputs.end() || it->second.empty()) return {};
        return "Prior stage \"" + name + "\" output:\n```json\n" + it->second + "\n```";
    };

    auto retrieved_block = [&]() {
        std::string out;
        size_t n = 0;
        for (const std::string& entry : context.retrieved_descriptions) {
            out += std::to_string(++n) + ". " + entry + "\n";
        }
        if (!out.empty()) out.pop_back();
        return out;
    };

    std::string text = system_framing(stage.persona);
    text += "\n\n";
    text += reward_penalty_framing();
    text += '\n';
    text += behavioral_constraints();
    text += "\n\n";

    const std::string& body = templates_.text(stage.template_id);
    static const std::regex placeholder_re(R"(\{\{([a-z_.]+)\}\})");
    std::string substituted;
    substituted.reserve(body.size());
    auto begin = std::sregex_iterator(body.begin(), body.end(), placeholder_re);
    size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& match = *it;
        substituted.append(body, last, static_cast<size_t>(match.position()) - last);
        const std::string name = match[1];
        if (name == "labels") {
            substituted += bullet_list(scope);
        } else if (name == "aliased_labels") {
            substituted += bullet_list(aliased());
        } else if (name == "context_labels") {
            substituted += bullet_list(context.scoped_labels);
        } else if (name == "context_all") {
            std::string blocks;
            for (const std::string& consumed : stage.consumes_context) {
                const std::string block = context_block(consumed);
                if (block.empty()) continue;
                if (!blocks.empty()) blocks += "\n\n";
                blocks += block;
            }
            substituted += blocks;
        } else if (name == "road_types") {
            substituted += bullet_list(stage.road_types);
        } else if (name == "road_type") {
            substituted += context.road_type;
        } else if (name == "scene_description") {
            substituted += context.scene_description;
        } else if (name == "retrieved") {
            substituted += retrieved_block();
        } else if (name == "schema") {
            substituted += schema_instruction(stage.output_schema);
        } else if (name.rfind("context.", 0) == 0) {
            substituted += context_block(name.substr(8));
        } else {
            throw TemplateError("template '" + stage.template_id +
                                "' uses unknown placeholder {{" + name + "}}");
        }
        last = static_cast<size_t>(match.position() + match.length());
    }
    substituted.append(body, last, body.size() - last);
    text += substituted;

    RenderedPrompt prompt;
    prompt.stage_name = stage.name;
    prompt.text = std::move(text);
    prompt.estimated_tokens = approximate_token_count(prompt.text);
    return prompt;
}

TokenBudget PromptEngine::budget(StrategyId strategy, const Taxonomy& taxonomy,
                                 const TokenCounter& tokenizer,
                                 const PlanOptions& options) const {
    const StagePlan plan = stage_plan(strategy, taxonomy, options);
    TokenBudget budget;
    budget.image_multiplicity = plan.image_multiplicity;
    const RenderContext empty;
    for (const Stage& stage : plan.stages) {
        const RenderedPrompt prompt =
            render_impl(stage, taxonomy, empty, /*allow_missing_context=*/true);
        budget.fixed_prompt_tokens += tokenizer(prompt.text);
    }
    return budget;
}

}  // namespace oddkit
