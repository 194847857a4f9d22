#include "oddkit/taxonomy.hpp"

#include <algorithm>
#include <set>

#include "oddkit/util.hpp"

namespace oddkit {

namespace {

const std::vector<std::pair<Category, std::string>>& category_names() {
    static const std::vector<std::pair<Category, std::string>> names = {
        {Category::Signs, "Signs"},
        {Category::Markings, "Markings"},
        {Category::Scenery, "Scenery"},
        {Category::Weather, "Weather"},
        {Category::TriggerConditions, "TriggerConditions"},
    };
    return names;
}

}  // namespace

Category category_from_string(const std::string& name) {
    for (const auto& [cat, text] : category_names()) {
        if (text == name) return cat;
    }
    throw TaxonomyError("unknown category name: '" + name + "'");
}

const std::string& category_to_string(Category category) {
    for (const auto& [cat, text] : category_names()) {
        if (cat == category) return text;
    }
    throw TaxonomyError("invalid category value");
}

const std::vector<Category>& all_categories() {
    static const std::vector<Category> cats = {
        Category::Signs, Category::Markings, Category::Scenery,
        Category::Weather, Category::TriggerConditions};
    return cats;
}

const std::string& persona_for_category(Category category) {
    static const std::map<Category, std::string> personas = {
        {Category::Signs, "sign_expert"},
        {Category::Markings, "markings_expert"},
        {Category::Scenery, "scenery_expert"},
        {Category::Weather, "weather_expert"},
        {Category::TriggerConditions, "trigger_condition_expert"},
    };
    return personas.at(category);
}

PersonaConfig PersonaConfig::load_file(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw TaxonomyError("malformed persona config " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

PersonaConfig PersonaConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("personas") || !doc["personas"].is_object()) {
        throw TaxonomyError("persona config must be an object with a 'personas' map");
    }
    PersonaConfig config;
    for (const auto& [persona, groups] : doc["personas"].items()) {
        if (!groups.is_array() || groups.empty()) {
            throw TaxonomyError("persona '" + persona + "' must map to a non-empty group list");
        }
        std::vector<std::string> names;
        for (const auto& g : groups) names.push_back(g.get<std::string>());
        config.groups_by_persona[persona] = std::move(names);
    }
    if (config.groups_by_persona.empty()) {
        throw TaxonomyError("persona config lists no personas");
    }
    return config;
}

Taxonomy Taxonomy::load_file(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw TaxonomyError("malformed taxonomy document " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

Taxonomy Taxonomy::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("concepts") || !doc["concepts"].is_array()) {
        throw TaxonomyError("taxonomy document must be an object with a 'concepts' array");
    }

    Taxonomy taxonomy;
    taxonomy.version_ = doc.value("version", "unversioned");

    for (const auto& entry : doc["concepts"]) {
        if (!entry.is_object()) {
            throw TaxonomyError("concept entry is not an object");
        }
        Concept item;
        try {
            item.id = entry.at("id").get<std::string>();
            item.display_name = entry.value("display_name", item.id);
            item.category = category_from_string(entry.at("category").get<std::string>());
            item.group = entry.value("group", std::string{});
            if (entry.contains("aliases")) {
                for (const auto& a : entry["aliases"]) {
                    item.aliases.push_back(a.get<std::string>());
                }
            }
            item.description = entry.at("description").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TaxonomyError("malformed concept entry '" + entry.value("id", "<missing id>") +
                                "': " + e.what());
        }
        if (item.id.empty()) {
            throw TaxonomyError("concept with empty id");
        }
        if (item.description.empty()) {
            throw TaxonomyError("concept '" + item.id + "' has an empty description");
        }
        taxonomy.concepts_.push_back(std::move(item));
    }

    // Canonical order is independent of input key ordering.
    std::sort(taxonomy.concepts_.begin(), taxonomy.concepts_.end(),
              [](const Concept& a, const Concept& b) { return a.id < b.id; });

    for (size_t i = 0; i < taxonomy.concepts_.size(); ++i) {
        const Concept& c = taxonomy.concepts_[i];
        if (!taxonomy.index_by_id_.emplace(c.id, i).second) {
            throw TaxonomyError("duplicate concept id: '" + c.id + "'");
        }
    }
    // Alias table: folded ids and aliases must not collide anywhere.
    for (const Concept& c : taxonomy.concepts_) {
        const std::string folded = fold_label(c.id);
        auto [it, inserted] = taxonomy.folded_lookup_.emplace(folded, c.id);
        if (!inserted) {
            throw TaxonomyError("ids '" + it->second + "' and '" + c.id +
                                "' collide after case folding");
        }
    }
    for (const Concept& c : taxonomy.concepts_) {
        for (const std::string& alias : c.aliases) {
            const std::string folded = fold_label(alias);
            if (folded.empty()) {
                throw TaxonomyError("concept '" + c.id + "' has an empty alias");
            }
            auto [it, inserted] = taxonomy.folded_lookup_.emplace(folded, c.id);
            if (!inserted) {
                throw TaxonomyError("duplicate alias '" + alias + "' maps to both '" +
                                    it->second + "' and '" + c.id + "'");
            }
        }
    }
    if (taxonomy.concepts_.empty()) {
        throw TaxonomyError("taxonomy contains no concepts");
    }
    return taxonomy;
}

const Concept* Taxonomy::find(const std::string& id) const {
    auto it = index_by_id_.find(id);
    return it == index_by_id_.end() ? nullptr : &concepts_[it->second];
}

std::vector<std::string> Taxonomy::all_ids() const {
    std::vector<std::string> ids;
    ids.reserve(concepts_.size());
    for (const Concept& c : concepts_) ids.push_back(c.id);
    return ids;
}

std::optional<std::string> Taxonomy::canonicalize(const std::string& label) const {
    auto it = folded_lookup_.find(fold_label(label));
    if (it == folded_lookup_.end()) return std::nullopt;
    return it->second;
}

std::map<Category, size_t> Taxonomy::category_counts() const {
    std::map<Category, size_t> counts;
    for (Category cat : all_categories()) counts[cat] = 0;
    for (const Concept& c : concepts_) ++counts[c.category];
    return counts;
}

std::map<std::string, std::vector<std::string>> Taxonomy::partition_by_persona() const {
    std::map<std::string, std::vector<std::string>> partition;
    for (const Concept& c : concepts_) {
        partition[persona_for_category(c.category)].push_back(c.id);
    }
    // concepts_ is sorted by id, so each list is already lexicographic.
    return partition;
}

std::map<std::string, std::vector<std::string>> Taxonomy::partition_by_persona(
    const PersonaConfig& config) const {
    if (config.groups_by_persona.empty()) return partition_by_persona();

    std::map<std::string, std::vector<std::string>> partition;
    for (const auto& [persona, groups] : config.groups_by_persona) {
        partition[persona];  // personas with no matching concepts still appear
        (void)groups;
    }
    for (const Concept& c : concepts_) {
        const std::string& category = category_to_string(c.category);
        std::string owner;
        for (const auto& [persona, groups] : config.groups_by_persona) {
            const bool matches =
                std::find(groups.begin(), groups.end(), c.group) != groups.end() ||
                std::find(groups.begin(), groups.end(), category) != groups.end();
            if (!matches) continue;
            if (!owner.empty()) {
                throw TaxonomyError("concept '" + c.id + "' is claimed by personas '" + owner +
                                    "' and '" + persona + "'");
            }
            owner = persona;
        }
        if (owner.empty()) {
            throw TaxonomyError("concept '" + c.id + "' (group '" + c.group +
                                "') has no persona assignment");
        }
        partition[owner].push_back(c.id);
    }
    return partition;
}

RoadContextTable RoadContextTable::load_file(const std::filesystem::path& path,
                                             const Taxonomy& taxonomy) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw TaxonomyError("malformed road context table " + path.string() + ": " + e.what());
    }
    return from_json(doc, taxonomy);
}

RoadContextTable RoadContextTable::from_json(const nlohmann::json& doc, const Taxonomy& taxonomy) {
    if (!doc.is_object()) {
        throw TaxonomyError("road context table must be a JSON object");
    }
    RoadContextTable table;
    for (const auto& [road_type, ids] : doc.items()) {
        if (!ids.is_array() || ids.empty()) {
            throw TaxonomyError("road type '" + road_type + "' maps to an empty concept set");
        }
        std::set<std::string> unique;
        for (const auto& id : ids) {
            const std::string concept_id = id.get<std::string>();
            if (!taxonomy.contains(concept_id)) {
                throw TaxonomyError("road type '" + road_type + "' lists unknown concept '" +
                                    concept_id + "'");
            }
            unique.insert(concept_id);
        }
        table.allowed_[road_type] = std::vector<std::string>(unique.begin(), unique.end());
    }
    return table;
}

std::vector<std::string> RoadContextTable::road_types() const {
    std::vector<std::string> types;
    types.reserve(allowed_.size());
    for (const auto& [type, ids] : allowed_) types.push_back(type);
    return types;
}

const std::vector<std::string>& RoadContextTable::allowed_for(const std::string& road_type) const {
    auto it = allowed_.find(road_type);
    if (it == allowed_.end()) {
        throw TaxonomyError("unknown road type '" + road_type + "'; known types: " +
                            join(road_types(), ", "));
    }
    return it->second;
}

}  // namespace oddkit
