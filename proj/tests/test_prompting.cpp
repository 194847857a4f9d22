#include "oddkit/prompting.hpp"

#include <algorithm>
#include <set>

#include "doctest.h"
#include "oddkit/tokenizer.hpp"
#include "support/paths.hpp"

using namespace oddkit;

namespace {

const Taxonomy& reference() {
    static const Taxonomy taxonomy = Taxonomy::load_file(testing::reference_taxonomy_path());
    return taxonomy;
}

const PromptEngine& engine() {
    static const PromptEngine e = PromptEngine::load_default();
    return e;
}

size_t count_bullet(const std::string& text, const std::string& label) {
    const std::string needle = "- " + label + "\n";
    size_t count = 0;
    for (size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("reference tokenizer counts word pieces and punctuation") {
    CHECK(approximate_token_count("") == 0);
    CHECK(approximate_token_count("one") == 1);
    CHECK(approximate_token_count("one two\tthree") == 3);
    CHECK(approximate_token_count("painted_speed_or_route_number") == 9);
    CHECK(approximate_token_count("a, b") == 3);
}

TEST_CASE("image multiplicity matches the reference table for all nine strategies") {
    const std::map<StrategyId, int> expected = {
        {StrategyId::FlatTaxonomy, 1},
        {StrategyId::Reevaluate, 2},
        {StrategyId::RoadDependent, 2},
        {StrategyId::PersonaDecomposition, 5},
        {StrategyId::PersonaLabelAliasing, 5},
        {StrategyId::PersonaRag, 5},
        {StrategyId::PersonaCot, 5},
        {StrategyId::PersonaChainedCot, 5},
        {StrategyId::ChainedCotPerStageHeavy, 1},
    };
    REQUIRE(all_strategies().size() == 9);
    for (StrategyId strategy : all_strategies()) {
        CAPTURE(strategy_to_string(strategy));
        CHECK(reference_image_multiplicity(strategy) == expected.at(strategy));
        const StagePlan plan = engine().stage_plan(strategy, reference());
        CHECK(plan.image_multiplicity == expected.at(strategy));
        int attaching = 0;
        for (const Stage& stage : plan.stages) {
            if (stage.attaches_image) ++attaching;
        }
        CHECK(attaching == plan.image_multiplicity);
        CHECK(!plan.stages.empty());
    }
}

TEST_CASE("stage plan shapes") {
    const auto& tax = reference();

    SUBCASE("flat taxonomy is one full-scope stage") {
        const auto plan = engine().stage_plan(StrategyId::FlatTaxonomy, tax);
        REQUIRE(plan.stages.size() == 1);
        CHECK(plan.stages[0].label_scope.size() == 232);
    }
    SUBCASE("reevaluate verifies after predicting") {
        const auto plan = engine().stage_plan(StrategyId::Reevaluate, tax);
        REQUIRE(plan.stages.size() == 2);
        CHECK(plan.stages[0].name == "predict");
        CHECK(plan.stages[1].name == "verify");
        CHECK(plan.stages[1].consumes_context == std::vector<std::string>{"predict"});
    }
    SUBCASE("road dependent classifies then detects with runtime scope") {
        const auto plan = engine().stage_plan(StrategyId::RoadDependent, tax);
        REQUIRE(plan.stages.size() == 2);
        CHECK(plan.stages[0].output_schema == OutputSchema::RoadType);
        CHECK(!plan.stages[0].road_types.empty());
        CHECK(plan.stages[1].scope_from_context);
    }
    SUBCASE("persona decomposition fans out over the five partitions") {
        const auto plan = engine().stage_plan(StrategyId::PersonaDecomposition, tax);
        REQUIRE(plan.stages.size() == 5);
        CHECK(plan.parallel_stages);
        const auto partition = tax.partition_by_persona();
        CHECK(plan.find_stage("signs")->label_scope == partition.at("sign_expert"));
        CHECK(plan.find_stage("weather")->label_scope == partition.at("weather_expert"));
    }
    SUBCASE("persona rag describes without an image, then five expert calls") {
        const auto plan = engine().stage_plan(StrategyId::PersonaRag, tax);
        REQUIRE(plan.stages.size() == 6);
        CHECK(plan.stages[0].name == "describe");
        CHECK(!plan.stages[0].attaches_image);
        CHECK(plan.stages[0].output_schema == OutputSchema::SceneDescription);
        for (size_t i = 1; i < plan.stages.size(); ++i) {
            CHECK(plan.stages[i].attaches_image);
            CHECK(plan.stages[i].consumes_context == std::vector<std::string>{"describe"});
        }
    }
    SUBCASE("chained CoT runs the five stages in pipeline order") {
        const auto plan = engine().stage_plan(StrategyId::PersonaChainedCot, tax);
        REQUIRE(plan.stages.size() == 5);
        const std::vector<std::string> order = {"signs", "markings", "scenery", "weather",
                                                "trigger_conditions"};
        for (size_t i = 0; i < order.size(); ++i) {
            CHECK(plan.stages[i].name == order[i]);
            CHECK(plan.stages[i].consumes_context ==
                  std::vector<std::string>(order.begin(), order.begin() + i));
        }
        CHECK(plan.stages[3].name == "weather");
        CHECK(plan.stages[3].consumes_context ==
              std::vector<std::string>{"signs", "markings", "scenery"});
        CHECK(!plan.parallel_stages);
    }
    SUBCASE("heavy chained variant embeds the whole chain in one stage") {
        const auto plan = engine().stage_plan(StrategyId::ChainedCotPerStageHeavy, tax);
        REQUIRE(plan.stages.size() == 1);
        CHECK(plan.stages[0].label_scope.size() == 232);
    }
}

TEST_CASE("label completeness: stage scopes cover the taxonomy for every strategy") {
    const auto& tax = reference();
    for (StrategyId strategy : all_strategies()) {
        CAPTURE(strategy_to_string(strategy));
        const auto plan = engine().stage_plan(strategy, tax);
        std::set<std::string> covered;
        for (const Stage& stage : plan.stages) {
            covered.insert(stage.label_scope.begin(), stage.label_scope.end());
        }
        CHECK(covered.size() == 232);
    }
}

TEST_CASE("flat render lists every id exactly once") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::FlatTaxonomy, tax);
    const auto prompt = engine().render(plan.stages[0], tax, {});
    for (const std::string& id : tax.all_ids()) {
        CAPTURE(id);
        CHECK(count_bullet(prompt.text, id) == 1);
    }
    CHECK(prompt.estimated_tokens > 0);
}

TEST_CASE("aliasing render swaps ambiguous names for action-oriented descriptors") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::PersonaLabelAliasing, tax);
    const Stage* markings = plan.find_stage("markings");
    REQUIRE(markings != nullptr);
    const auto prompt = engine().render(*markings, tax, {});
    CHECK(count_bullet(prompt.text, "painted_speed_or_route_number") == 1);
    CHECK(count_bullet(prompt.text, "number") == 0);

    // Every listed label canonicalizes back to a unique taxonomy id.
    std::set<std::string> seen;
    for (const std::string& id : markings->label_scope) {
        const Concept* c = tax.find(id);
        const std::string& label = c->aliases.empty() ? c->id : c->aliases.front();
        const auto canonical = tax.canonicalize(label);
        REQUIRE(canonical.has_value());
        CHECK(*canonical == id);
        CHECK(seen.insert(*canonical).second);
    }
}

TEST_CASE("chained weather stage embeds prior blocks in stage order") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::PersonaChainedCot, tax);
    const Stage* weather = plan.find_stage("weather");
    REQUIRE(weather != nullptr);

    RenderContext context;
    context.stage_outputs["signs"] = R"({"labels":["stop_sign"]})";
    context.stage_outputs["markings"] = R"({"labels":["zebra_crossing"]})";
    context.stage_outputs["scenery"] = R"({"labels":["urban_street"]})";
    const auto prompt = engine().render(*weather, tax, context);

    const size_t signs_pos = prompt.text.find(R"({"labels":["stop_sign"]})");
    const size_t markings_pos = prompt.text.find(R"({"labels":["zebra_crossing"]})");
    const size_t scenery_pos = prompt.text.find(R"({"labels":["urban_street"]})");
    REQUIRE(signs_pos != std::string::npos);
    REQUIRE(markings_pos != std::string::npos);
    REQUIRE(scenery_pos != std::string::npos);
    CHECK(signs_pos < markings_pos);
    CHECK(markings_pos < scenery_pos);
}

TEST_CASE("rendered prompt carries the shared framing in fixed order") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::PersonaChainedCot, tax);
    const Stage* weather = plan.find_stage("weather");
    RenderContext context;
    context.stage_outputs["signs"] = R"({"labels":[]})";
    context.stage_outputs["markings"] = R"({"labels":[]})";
    context.stage_outputs["scenery"] = R"({"labels":[]})";
    const auto prompt = engine().render(*weather, tax, context);

    const size_t framing = prompt.text.find("professional scene understanding system");
    const size_t reward = prompt.text.find("reward");
    const size_t constraints = prompt.text.find("confident, accurate, and structured");
    const size_t labels = prompt.text.find("- fog_dense\n");
    const size_t context_pos = prompt.text.find("Prior stage \"signs\"");
    const size_t cot = prompt.text.find("Reason through");
    const size_t schema = prompt.text.find("JSON-structured data");
    REQUIRE(framing != std::string::npos);
    REQUIRE(reward != std::string::npos);
    REQUIRE(constraints != std::string::npos);
    REQUIRE(labels != std::string::npos);
    REQUIRE(context_pos != std::string::npos);
    REQUIRE(cot != std::string::npos);
    REQUIRE(schema != std::string::npos);
    CHECK(framing < reward);
    CHECK(reward < constraints);
    CHECK(constraints < labels);
    CHECK(labels < context_pos);
    CHECK(context_pos < cot);
    CHECK(cot < schema);

    // Persona strategies always carry the persona framing sentence.
    CHECK(prompt.text.find("the Weather Expert") != std::string::npos);
}

TEST_CASE("render is deterministic and pure") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::PersonaCot, tax);
    const auto a = engine().render(plan.stages[2], tax, {});
    const auto b = engine().render(plan.stages[2], tax, {});
    CHECK(a.text == b.text);
    CHECK(a.estimated_tokens == b.estimated_tokens);
}

TEST_CASE("render rejects missing consumed context") {
    const auto& tax = reference();
    const auto plan = engine().stage_plan(StrategyId::Reevaluate, tax);
    CHECK_THROWS_AS(engine().render(plan.stages[1], tax, {}), TemplateError);
}

TEST_CASE("budget orderings mirror the fixed-token column") {
    const auto& tax = reference();
    auto fixed = [&](StrategyId strategy) {
        return engine().budget(strategy, tax, approximate_token_count).fixed_prompt_tokens;
    };
    const size_t cot = fixed(StrategyId::PersonaCot);
    const size_t alias = fixed(StrategyId::PersonaLabelAliasing);
    const size_t decomp = fixed(StrategyId::PersonaDecomposition);
    const size_t rag = fixed(StrategyId::PersonaRag);
    CHECK(cot > alias);
    CHECK(alias > decomp);
    CHECK(decomp > rag);

    const size_t reevaluate = fixed(StrategyId::Reevaluate);
    const size_t flat = fixed(StrategyId::FlatTaxonomy);
    const size_t road = fixed(StrategyId::RoadDependent);
    CHECK(reevaluate > flat);
    CHECK(flat > road);
}

TEST_CASE("budget with a constant-zero tokenizer degenerates to k times I") {
    const auto& tax = reference();
    for (StrategyId strategy : all_strategies()) {
        const auto budget =
            engine().budget(strategy, tax, [](std::string_view) -> size_t { return 0; });
        CHECK(budget.fixed_prompt_tokens == 0);
        CHECK(budget.total(1000) ==
              static_cast<size_t>(reference_image_multiplicity(strategy)) * 1000);
    }
}

TEST_CASE("budget multiplicities follow the stage plans") {
    const auto& tax = reference();
    for (StrategyId strategy : all_strategies()) {
        const auto budget = engine().budget(strategy, tax, approximate_token_count);
        CHECK(budget.image_multiplicity == reference_image_multiplicity(strategy));
    }
}

TEST_CASE("custom persona config drives fan-out stage names") {
    const auto tax = Taxonomy::load_file(testing::data_dir() / "mapillary" / "taxonomy.json");
    PlanOptions options;
    options.personas = PersonaConfig::load_file(testing::data_dir() / "mapillary" / "personas.json");
    const auto plan = engine().stage_plan(StrategyId::PersonaDecomposition, tax, options);
    REQUIRE(plan.stages.size() == 4);
    CHECK(plan.find_stage("construction") != nullptr);
    CHECK(plan.find_stage("traffic signs") != nullptr);
    CHECK(plan.image_multiplicity == 4);
}

TEST_CASE("detection mode swaps detect schemas to center points") {
    const auto& tax = reference();
    PlanOptions options;
    options.detection_mode = true;
    const auto plan = engine().stage_plan(StrategyId::PersonaDecomposition, tax, options);
    for (const Stage& stage : plan.stages) {
        CHECK(stage.output_schema == OutputSchema::Points);
    }
    const auto prompt = engine().render(plan.stages[0], tax, {});
    CHECK(prompt.text.find("\"center\"") != std::string::npos);
}
