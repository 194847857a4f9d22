#include "oddkit/taxonomy.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "oddkit/util.hpp"
#include "support/paths.hpp"

using namespace oddkit;
using nlohmann::json;

namespace {

const Taxonomy& reference() {
    static const Taxonomy taxonomy = Taxonomy::load_file(testing::reference_taxonomy_path());
    return taxonomy;
}

json concept_entry(const std::string& id, const std::string& category,
                   const std::vector<std::string>& aliases = {},
                   const std::string& group = "test_group") {
    return json{{"id", id},
                {"display_name", id},
                {"category", category},
                {"group", group},
                {"aliases", aliases},
                {"description", "description of " + id}};
}

// Random small taxonomy for property tests.
Taxonomy random_taxonomy(std::mt19937& rng) {
    static const std::vector<std::string> categories = {
        "Signs", "Markings", "Scenery", "Weather", "TriggerConditions"};
    std::uniform_int_distribution<int> count_dist(1, 40);
    std::uniform_int_distribution<size_t> cat_dist(0, categories.size() - 1);
    std::uniform_int_distribution<int> alias_dist(0, 2);
    const int n = count_dist(rng);
    json concepts = json::array();
    for (int i = 0; i < n; ++i) {
        const std::string id = "concept_" + std::to_string(i);
        std::vector<std::string> aliases;
        for (int a = alias_dist(rng); a > 0; --a) {
            aliases.push_back(id + "_alias_" + std::to_string(a));
        }
        concepts.push_back(concept_entry(id, categories[cat_dist(rng)], aliases));
    }
    return Taxonomy::from_json(json{{"version", "rand"}, {"concepts", concepts}});
}

}  // namespace

TEST_CASE("reference taxonomy matches the published category counts") {
    const Taxonomy& tax = reference();
    CHECK(tax.size() == 232);
    const auto counts = tax.category_counts();
    CHECK(counts.at(Category::Signs) == 27);
    CHECK(counts.at(Category::Markings) == 55);
    CHECK(counts.at(Category::Scenery) == 96);
    CHECK(counts.at(Category::Weather) == 12);
    CHECK(counts.at(Category::TriggerConditions) == 42);
}

TEST_CASE("single-concept taxonomy loads with singleton partition") {
    const auto tax = Taxonomy::from_json(
        json{{"version", "t"}, {"concepts", json::array({concept_entry("lonely", "Weather")})}});
    CHECK(tax.size() == 1);
    const auto partition = tax.partition_by_persona();
    CHECK(partition.size() == 1);
    CHECK(partition.at("weather_expert") == std::vector<std::string>{"lonely"});
}

TEST_CASE("duplicate alias is rejected naming both concepts") {
    const json doc{{"version", "t"},
                   {"concepts", json::array({concept_entry("first", "Markings", {"number"}),
                                             concept_entry("second", "Markings", {"number"})})}};
    try {
        Taxonomy::from_json(doc);
        FAIL("duplicate alias was accepted");
    } catch (const TaxonomyError& e) {
        const std::string message = e.what();
        CHECK(message.find("'first'") != std::string::npos);
        CHECK(message.find("'second'") != std::string::npos);
        CHECK(message.find("number") != std::string::npos);
    }
}

TEST_CASE("duplicate id and unknown category are rejected") {
    CHECK_THROWS_AS(Taxonomy::from_json(json{
                        {"version", "t"},
                        {"concepts", json::array({concept_entry("dup", "Signs"),
                                                  concept_entry("dup", "Signs")})}}),
                    TaxonomyError);
    CHECK_THROWS_WITH_AS(
        Taxonomy::from_json(json{{"version", "t"},
                                 {"concepts", json::array({concept_entry("x", "Sines")})}}),
        doctest::Contains("Sines"), TaxonomyError);
    CHECK_THROWS_AS(Taxonomy::from_json(json::parse("{}")), TaxonomyError);
}

TEST_CASE("canonicalize maps ids and aliases with trimming and case folding") {
    const Taxonomy& tax = reference();
    CHECK(tax.canonicalize("painted_speed_or_route_number") == "number");
    CHECK(tax.canonicalize("NUMBER ") == "number");
    CHECK(tax.canonicalize("  Zebra_Crossing") == "zebra_crossing");
    CHECK(tax.canonicalize("flying_carpet_lane") == std::nullopt);
    CHECK(tax.canonicalize("") == std::nullopt);
}

TEST_CASE("alias round trip holds for every concept") {
    const Taxonomy& tax = reference();
    for (const Concept& c : tax.concepts()) {
        CHECK(tax.canonicalize(c.id) == c.id);
        for (const std::string& alias : c.aliases) {
            CHECK(tax.canonicalize(alias) == c.id);
        }
    }
}

TEST_CASE("persona partition of the reference taxonomy") {
    const auto partition = reference().partition_by_persona();
    REQUIRE(partition.size() == 5);
    CHECK(partition.at("weather_expert").size() == 12);
    CHECK(partition.at("sign_expert").size() == 27);
    CHECK(partition.at("markings_expert").size() == 55);
    CHECK(partition.at("scenery_expert").size() == 96);
    CHECK(partition.at("trigger_condition_expert").size() == 42);

    std::set<std::string> all;
    for (const auto& [persona, ids] : partition) {
        CHECK(std::is_sorted(ids.begin(), ids.end()));
        for (const auto& id : ids) {
            CHECK(all.insert(id).second);  // pairwise disjoint
        }
    }
    CHECK(all.size() == 232);
}

TEST_CASE("partition property holds on generated taxonomies") {
    std::mt19937 rng(7);
    for (int round = 0; round < 50; ++round) {
        const Taxonomy tax = random_taxonomy(rng);
        const auto partition = tax.partition_by_persona();
        std::set<std::string> all;
        for (const auto& [persona, ids] : partition) {
            for (const auto& id : ids) CHECK(all.insert(id).second);
        }
        CHECK(all.size() == tax.size());
    }
}

TEST_CASE("mapillary persona config yields the four groups") {
    const auto tax = Taxonomy::load_file(testing::data_dir() / "mapillary" / "taxonomy.json");
    const auto config =
        PersonaConfig::load_file(testing::data_dir() / "mapillary" / "personas.json");
    const auto partition = tax.partition_by_persona(config);
    REQUIRE(partition.size() == 4);
    CHECK(partition.count("construction") == 1);
    CHECK(partition.count("environment") == 1);
    CHECK(partition.count("road markings") == 1);
    CHECK(partition.count("traffic signs") == 1);
    size_t covered = 0;
    for (const auto& [persona, ids] : partition) covered += ids.size();
    CHECK(covered == tax.size());
}

TEST_CASE("persona config missing a concept is an error") {
    const auto tax = Taxonomy::from_json(
        json{{"version", "t"},
             {"concepts", json::array({concept_entry("covered", "Signs", {}, "known_group"),
                                       concept_entry("orphan", "Signs", {}, "other_group")})}});
    PersonaConfig config;
    config.groups_by_persona["only"] = {"known_group"};
    CHECK_THROWS_WITH_AS(tax.partition_by_persona(config), doctest::Contains("orphan"),
                         TaxonomyError);
}

TEST_CASE("load is deterministic and order independent") {
    const std::string raw = read_file(testing::reference_taxonomy_path());
    auto doc = json::parse(raw);
    auto shuffled = doc;
    std::mt19937 rng(11);
    std::shuffle(shuffled["concepts"].begin(), shuffled["concepts"].end(), rng);

    const Taxonomy a = Taxonomy::from_json(doc);
    const Taxonomy b = Taxonomy::from_json(shuffled);
    REQUIRE(a.size() == b.size());
    CHECK(a.all_ids() == b.all_ids());
    CHECK(a.partition_by_persona() == b.partition_by_persona());
}

TEST_CASE("road context table lookups") {
    const Taxonomy& tax = reference();
    const auto table =
        RoadContextTable::load_file(testing::data_dir() / "road_context.json", tax);

    SUBCASE("motorway excludes zebra crossings") {
        const auto& allowed = table.allowed_for("motorway");
        CHECK(std::find(allowed.begin(), allowed.end(), "zebra_crossing") == allowed.end());
        CHECK(!allowed.empty());
    }
    SUBCASE("urban street allows the full label space") {
        CHECK(table.allowed_for("urban_street").size() == 232);
    }
    SUBCASE("unknown road type error lists the known types") {
        CHECK_THROWS_WITH_AS(table.allowed_for("canal_towpath"),
                             doctest::Contains("motorway"), TaxonomyError);
    }
    SUBCASE("unknown concept id in table is rejected") {
        CHECK_THROWS_AS(
            RoadContextTable::from_json(json{{"skyway", json::array({"hover_lane"})}}, tax),
            TaxonomyError);
    }
    SUBCASE("empty set is rejected") {
        CHECK_THROWS_AS(RoadContextTable::from_json(json{{"skyway", json::array()}}, tax),
                        TaxonomyError);
    }
}
