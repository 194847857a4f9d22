#include "oddkit/pipeline.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "oddkit/util.hpp"

namespace oddkit {

namespace {

// Deterministic within-stage order before merging.
void sort_stage_predictions(PredictionSet& set) {
    std::stable_sort(set.predictions.begin(), set.predictions.end(),
                     [](const Prediction& a, const Prediction& b) {
                         if (a.rank != b.rank) return a.rank < b.rank;
                         if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
                         const Point pa = a.center.value_or(Point{0, 0});
                         const Point pb = b.center.value_or(Point{0, 0});
                         return std::tie(pa.x, pa.y) < std::tie(pb.x, pb.y);
                     });
}

std::vector<std::string> retrieved_lines(const std::vector<KnowledgeBase::Hit>& hits,
                                         const KnowledgeBase& kb) {
    std::vector<std::string> lines;
    lines.reserve(hits.size());
    for (const auto& hit : hits) {
        lines.push_back(hit.concept_id + ": " + kb.description_of(hit.concept_id));
    }
    return lines;
}

}  // namespace

const StageRecord* PipelineContext::find(const std::string& stage) const {
    for (const StageRecord& record : records) {
        if (record.stage == stage) return &record;
    }
    return nullptr;
}

std::string PipelineContext::digest() const {
    std::uint64_t h = hash64(road_type);
    h = hash64(scene_description, h);
    for (const StageRecord& record : records) {
        h = hash64(record.stage, h);
        h = hash64(record.serialized_output, h);
    }
    return hex_digest(h);
}

PipelineRunner::PipelineRunner(const PromptEngine* engine, const Taxonomy* taxonomy)
    : engine_(engine), taxonomy_(taxonomy) {}

PredictionSet PipelineRunner::merge_persona_outputs(
    const std::vector<std::pair<std::string, PredictionSet>>& per_stage) {
    PredictionSet merged;
    std::set<std::string> owners;  // concept ids already claimed by a stage
    for (const auto& [stage, set] : per_stage) {
        std::set<std::string> stage_ids;
        for (const Prediction& p : set.predictions) stage_ids.insert(p.concept_id);
        for (const std::string& id : stage_ids) {
            if (owners.count(id)) {
                throw std::logic_error("persona stages overlap on concept '" + id +
                                       "'; scopes must be disjoint");
            }
            owners.insert(id);
        }
        PredictionSet ordered = set;
        sort_stage_predictions(ordered);
        for (Prediction p : ordered.predictions) {
            if (p.source_stage.empty()) p.source_stage = stage;
            merged.predictions.push_back(std::move(p));
        }
        merged.flags.merge(set.flags);
    }
    return merged;
}

RunResult PipelineRunner::run(StrategyId strategy, const SampleRef& sample, VlmBackend& backend,
                              const RunOptions& options) const {
    PlanOptions plan_options;
    plan_options.detection_mode = options.detection_mode;
    plan_options.personas = options.personas;
    if (options.road_table && !options.road_table->empty()) {
        plan_options.road_types = options.road_table->road_types();
    }
    const StagePlan plan = engine_->stage_plan(strategy, *taxonomy_, plan_options);

    RunResult result;
    PipelineContext& ctx = result.context;
    std::map<std::string, std::string> serialized_outputs;

    const bool cap_ranks = is_cot_strategy(strategy) && !options.detection_mode;

    auto build_render_context = [&](const Stage& stage) {
        RenderContext rc;
        rc.stage_outputs = serialized_outputs;
        rc.road_type = ctx.road_type;
        if (stage.scope_from_context) rc.scoped_labels = ctx.scoped_labels;
        rc.scene_description = ctx.scene_description;
        if (options.knowledge_base) {
            rc.retrieved_descriptions = retrieved_lines(ctx.retrieved, *options.knowledge_base);
        }
        return rc;
    };

    // Executes one stage; returns the record. Throws BackendError upward.
    auto execute_stage = [&](const Stage& stage) {
        const std::vector<std::string>& scope =
            stage.scope_from_context ? ctx.scoped_labels : stage.label_scope;

        const RenderedPrompt prompt = engine_->render(stage, *taxonomy_, build_render_context(stage));

        VlmRequest request;
        request.prompt_text = prompt.text;
        if (stage.attaches_image) request.images.push_back(sample.image_path);
        request.temperature = options.temperature;
        request.max_output_tokens = options.max_output_tokens;
        request.request_id =
            sample.sample_id + "/" + strategy_to_string(strategy) + "/" + stage.name;
        request.meta.sample_id = sample.sample_id;
        request.meta.stage = stage.name;
        request.meta.strategy = strategy_to_string(strategy);
        request.meta.label_scope = scope;
        request.meta.schema = stage.output_schema;
        request.meta.road_types = stage.road_types;

        const RawResponse response = backend.complete(request);

        StageRecord record;
        record.stage = stage.name;
        record.estimated_prompt_tokens = prompt.estimated_tokens;
        record.reported_prompt_tokens = response.prompt_tokens;
        record.reported_completion_tokens = response.completion_tokens;
        record.latency_ms = response.latency_ms;
        record.attached_image = stage.attaches_image;

        switch (stage.output_schema) {
            case OutputSchema::RoadType: {
                const auto road = parse_road_type(response.text);
                record.serialized_output =
                    nlohmann::json{{"road_type", road.value_or("")}}.dump();
                if (road) ctx.road_type = *road;
                break;
            }
            case OutputSchema::SceneDescription: {
                ctx.scene_description = parse_scene_description(response.text);
                record.serialized_output =
                    nlohmann::json{{"description", ctx.scene_description}}.dump();
                if (options.knowledge_base && !trim(ctx.scene_description).empty()) {
                    ctx.retrieved =
                        options.knowledge_base->retrieve_topk(ctx.scene_description,
                                                              options.retrieval_k);
                }
                break;
            }
            default: {
                PredictionSet set = parse_predictions(response.text, stage.output_schema,
                                                      *taxonomy_);
                // Scope confinement: a stage may only assert labels it owns.
                PredictionSet confined;
                confined.flags = set.flags;
                for (Prediction& p : set.predictions) {
                    const bool allowed =
                        std::find(scope.begin(), scope.end(), p.concept_id) != scope.end();
                    if (!allowed) {
                        confined.flags.scope_exclusions.push_back(p.concept_id);
                        continue;
                    }
                    if (cap_ranks && p.rank > 2) continue;  // up to two ranked alternatives
                    p.source_stage = stage.name;
                    confined.predictions.push_back(std::move(p));
                }
                // Reevaluate may only remove labels relative to the first pass.
                if (strategy == StrategyId::Reevaluate && stage.name == "verify") {
                    const StageRecord* predict = ctx.find("predict");
                    std::set<std::string> allowed_ids;
                    if (predict) {
                        for (const Prediction& p : predict->predictions.predictions) {
                            allowed_ids.insert(p.concept_id);
                        }
                    }
                    std::erase_if(confined.predictions, [&](const Prediction& p) {
                        return allowed_ids.count(p.concept_id) == 0;
                    });
                }
                sort_stage_predictions(confined);
                record.predictions = confined;
                record.serialized_output =
                    serialize_prediction_set(confined, stage.output_schema);
                break;
            }
        }
        return record;
    };

    auto commit = [&](const Stage& stage, StageRecord record) {
        serialized_outputs[stage.name] = record.serialized_output;
        if (record.attached_image) ++result.usage.image_submissions;
        result.usage.estimated_prompt_tokens += record.estimated_prompt_tokens;
        if (record.reported_prompt_tokens) {
            result.usage.reported_prompt_tokens +=
                static_cast<size_t>(*record.reported_prompt_tokens);
            result.usage.has_reported = true;
        }
        if (record.reported_completion_tokens) {
            result.usage.reported_completion_tokens +=
                static_cast<size_t>(*record.reported_completion_tokens);
        }
        ctx.records.push_back(std::move(record));

        // Resolve the road-dependent detection scope once the type is known.
        if (stage.output_schema == OutputSchema::RoadType) {
            if (options.road_table && !ctx.road_type.empty() &&
                options.road_table->has(ctx.road_type)) {
                ctx.scoped_labels = options.road_table->allowed_for(ctx.road_type);
            } else if (options.fail_closed_on_unknown_road) {
                ctx.scoped_labels.clear();
                result.warnings.push_back("road type '" + ctx.road_type +
                                          "' unknown; failing closed with an empty scope");
            } else {
                ctx.scoped_labels = taxonomy_->all_ids();
                result.warnings.push_back("road type '" + ctx.road_type +
                                          "' unknown; falling back to the full label space");
            }
        }
    };

    // Waves of stages whose consumed context is already committed. Chained
    // plans degrade to one stage per wave; fan-outs run as one wave.
    std::vector<const Stage*> pending;
    for (const Stage& stage : plan.stages) pending.push_back(&stage);

    try {
        while (!pending.empty()) {
            std::vector<const Stage*> wave;
            for (const Stage* stage : pending) {
                const bool ready = std::all_of(
                    stage->consumes_context.begin(), stage->consumes_context.end(),
                    [&](const std::string& name) { return serialized_outputs.count(name) > 0; });
                if (ready) wave.push_back(stage);
            }
            if (wave.empty()) {
                throw std::logic_error("stage plan has unsatisfiable context dependencies");
            }

            if (wave.size() > 1 && plan.parallel_stages && options.stage_concurrency > 1) {
                std::vector<std::future<StageRecord>> futures;
                futures.reserve(wave.size());
                for (const Stage* stage : wave) {
                    futures.push_back(std::async(std::launch::async,
                                                 [&, stage] { return execute_stage(*stage); }));
                }
                for (size_t i = 0; i < wave.size(); ++i) {
                    commit(*wave[i], futures[i].get());  // plan order, not completion order
                }
            } else {
                for (const Stage* stage : wave) {
                    commit(*stage, execute_stage(*stage));
                }
            }
            std::erase_if(pending, [&](const Stage* stage) {
                return serialized_outputs.count(stage->name) > 0;
            });
        }
    } catch (const BackendError& e) {
        ctx.failed = true;
        ctx.failure_reason = e.what();
        result.warnings.push_back(std::string("backend failure: ") + e.what());
        return result;
    }

    // Final prediction set per strategy.
    switch (strategy) {
        case StrategyId::FlatTaxonomy:
        case StrategyId::ChainedCotPerStageHeavy: {
            result.predictions = ctx.records.front().predictions;
            break;
        }
        case StrategyId::Reevaluate: {
            result.predictions = ctx.find("verify")->predictions;
            result.predictions.flags.merge(ctx.find("predict")->predictions.flags);
            break;
        }
        case StrategyId::RoadDependent: {
            result.predictions = ctx.find("detect")->predictions;
            break;
        }
        default: {  // persona fan-outs and the chained pipeline
            std::vector<std::pair<std::string, PredictionSet>> per_stage;
            for (const StageRecord& record : ctx.records) {
                const Stage* stage = plan.find_stage(record.stage);
                if (stage && !stage->label_scope.empty()) {
                    per_stage.emplace_back(record.stage, record.predictions);
                }
            }
            result.predictions = merge_persona_outputs(per_stage);
            break;
        }
    }
    return result;
}

nlohmann::json audit_record(const SampleRef& sample, StrategyId strategy,
                            const RunResult& result) {
    nlohmann::json predictions = nlohmann::json::array();
    for (const Prediction& p : result.predictions.predictions) {
        nlohmann::json entry = {
            {"concept_id", p.concept_id}, {"rank", p.rank}, {"stage", p.source_stage}};
        if (p.center) entry["center"] = {{"x", p.center->x}, {"y", p.center->y}};
        predictions.push_back(std::move(entry));
    }
    nlohmann::json timings = nlohmann::json::array();
    for (const StageRecord& record : result.context.records) {
        timings.push_back({{"stage", record.stage}, {"latency_ms", record.latency_ms}});
    }
    nlohmann::json doc = {
        {"sample_id", sample.sample_id},
        {"strategy", strategy_to_string(strategy)},
        {"predictions", std::move(predictions)},
        {"context_digest", result.context.digest()},
        {"token_usage",
         {{"estimated_prompt_tokens", result.usage.estimated_prompt_tokens},
          {"image_submissions", result.usage.image_submissions},
          {"reported_prompt_tokens",
           result.usage.has_reported ? nlohmann::json(result.usage.reported_prompt_tokens)
                                     : nlohmann::json(nullptr)}}},
        {"timings", std::move(timings)},
        {"failed", result.context.failed},
        {"parse_flags",
         {{"hard_failures", result.predictions.flags.hard_failures},
          {"malformed_entries", result.predictions.flags.malformed_entries},
          {"unknown_labels", result.predictions.flags.unknown_labels},
          {"scope_exclusions", result.predictions.flags.scope_exclusions}}},
    };
    return doc;
}

}  // namespace oddkit
