#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace oddkit {

class TaxonomyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Category { Signs, Markings, Scenery, Weather, TriggerConditions };

Category category_from_string(const std::string& name);
const std::string& category_to_string(Category category);
const std::vector<Category>& all_categories();

/// One canonical concept of the ODD label space.
struct Concept {
    std::string id;            // canonical snake_case identifier, unique
    std::string display_name;
    Category category{Category::Scenery};
    std::string group;         // fine-grained group, free-form metadata
    std::vector<std::string> aliases;
    std::string description;   // retrieval text, one short paragraph
};

/// Maps persona names to the taxonomy groups (or categories) they own.
/// When empty, the built-in per-category expert partition applies.
struct PersonaConfig {
    std::map<std::string, std::vector<std::string>> groups_by_persona;

    static PersonaConfig load_file(const std::filesystem::path& path);
    static PersonaConfig from_json(const nlohmann::json& doc);
};

/// Immutable concept vocabulary. Safe for unrestricted concurrent reads
/// once constructed.
class Taxonomy {
public:
    static Taxonomy load_file(const std::filesystem::path& path);
    static Taxonomy from_json(const nlohmann::json& doc);

    const std::string& version() const { return version_; }
    const std::vector<Concept>& concepts() const { return concepts_; }
    size_t size() const { return concepts_.size(); }

    const Concept* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }

    /// Sorted list of all canonical ids.
    std::vector<std::string> all_ids() const;

    /// Resolve a free-form label to a canonical id. Trims and case-folds
    /// before matching ids and aliases. Unrecognized labels yield nullopt;
    /// never throws.
    std::optional<std::string> canonicalize(const std::string& label) const;

    std::map<Category, size_t> category_counts() const;

    /// Default partition: one domain expert per category. Lists are sorted
    /// lexicographically by id, pairwise disjoint, jointly covering.
    std::map<std::string, std::vector<std::string>> partition_by_persona() const;

    /// Partition driven by a persona config; entries match on group name
    /// first, then category name. A concept covered by no persona (or by
    /// two) is an error.
    std::map<std::string, std::vector<std::string>> partition_by_persona(
        const PersonaConfig& config) const;

private:
    std::string version_;
    std::vector<Concept> concepts_;                         // sorted by id
    std::unordered_map<std::string, size_t> index_by_id_;
    std::unordered_map<std::string, std::string> folded_lookup_;  // folded id/alias -> id
};

/// Default persona name for a category ("sign_expert", ...).
const std::string& persona_for_category(Category category);

/// Road type -> allowed concept ids. User-authored configuration.
class RoadContextTable {
public:
    static RoadContextTable load_file(const std::filesystem::path& path, const Taxonomy& taxonomy);
    static RoadContextTable from_json(const nlohmann::json& doc, const Taxonomy& taxonomy);

    /// Known road types, sorted.
    std::vector<std::string> road_types() const;

    /// Allowed subset for a road type; throws TaxonomyError listing the
    /// known types when the road type is absent.
    const std::vector<std::string>& allowed_for(const std::string& road_type) const;

    bool has(const std::string& road_type) const { return allowed_.count(road_type) > 0; }
    bool empty() const { return allowed_.empty(); }

private:
    std::map<std::string, std::vector<std::string>> allowed_;  // sorted id lists
};

}  // namespace oddkit
