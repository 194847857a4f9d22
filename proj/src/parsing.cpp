#include "oddkit/parsing.hpp"

#include <algorithm>
#include <cmath>

#include "oddkit/util.hpp"

namespace oddkit {

namespace {

std::optional<nlohmann::json> try_parse(const std::string& candidate) {
    nlohmann::json doc = nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) return std::nullopt;
    return doc;
}

// Scans for a balanced JSON value starting at `start`, respecting strings
// and escapes. Returns one-past-the-end or npos.
size_t balanced_end(const std::string& text, size_t start) {
    const char open = text[start];
    const char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    for (size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == open) {
            ++depth;
        } else if (c == close) {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

std::optional<nlohmann::json> scan_for_json(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        const size_t end = balanced_end(text, i);
        if (end == std::string::npos) continue;
        if (auto doc = try_parse(text.substr(i, end - i))) return doc;
    }
    return std::nullopt;
}

double clamp01(double v) {
    if (std::isnan(v)) return 0.0;
    return std::clamp(v, 0.0, 1.0);
}

std::optional<Point> read_center(const nlohmann::json& entry) {
    if (entry.contains("center")) {
        const auto& c = entry["center"];
        if (c.is_object() && c.contains("x") && c.contains("y") && c["x"].is_number() &&
            c["y"].is_number()) {
            return Point{clamp01(c["x"].get<double>()), clamp01(c["y"].get<double>())};
        }
        if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
            return Point{clamp01(c[0].get<double>()), clamp01(c[1].get<double>())};
        }
    }
    if (entry.contains("x") && entry.contains("y") && entry["x"].is_number() &&
        entry["y"].is_number()) {
        return Point{clamp01(entry["x"].get<double>()), clamp01(entry["y"].get<double>())};
    }
    return std::nullopt;
}

}  // namespace

std::optional<nlohmann::json> extract_first_json(const std::string& text) {
    // Fenced blocks first; models usually put the payload there.
    size_t fence = text.find("```");
    while (fence != std::string::npos) {
        size_t body_start = text.find('\n', fence);
        if (body_start == std::string::npos) break;
        ++body_start;
        const size_t fence_end = text.find("```", body_start);
        if (fence_end == std::string::npos) break;
        const std::string block = text.substr(body_start, fence_end - body_start);
        if (auto doc = try_parse(trim(block))) return doc;
        if (auto doc = scan_for_json(block)) return doc;
        fence = text.find("```", fence_end + 3);
    }
    if (auto doc = try_parse(trim(text))) return doc;
    return scan_for_json(text);
}

PredictionSet parse_predictions(const std::string& text, OutputSchema schema,
                                const Taxonomy& taxonomy) {
    PredictionSet set;
    const auto doc = extract_first_json(text);
    if (!doc) {
        set.flags.hard_failures = 1;
        return set;
    }

    // Accept the schema's wrapper object or a bare array of entries.
    nlohmann::json entries = nlohmann::json::array();
    const char* key = schema == OutputSchema::Points ? "detections" : "labels";
    if (doc->is_object() && doc->contains(key) && (*doc)[key].is_array()) {
        entries = (*doc)[key];
    } else if (doc->is_object() && doc->contains("labels") && (*doc)["labels"].is_array()) {
        entries = (*doc)["labels"];
    } else if (doc->is_array()) {
        entries = *doc;
    } else {
        set.flags.hard_failures = 1;
        return set;
    }

    const bool want_center = schema == OutputSchema::Points;
    int position = 0;
    for (const auto& entry : entries) {
        ++position;
        std::string label;
        int rank = position;
        std::optional<Point> center;
        if (entry.is_string()) {
            label = entry.get<std::string>();
        } else if (entry.is_object() && entry.contains("label") && entry["label"].is_string()) {
            label = entry["label"].get<std::string>();
            if (entry.contains("rank") && entry["rank"].is_number_integer()) {
                rank = std::max(1, entry["rank"].get<int>());
            }
            center = read_center(entry);
        } else {
            ++set.flags.malformed_entries;
            continue;
        }
        if (want_center && !center) {
            ++set.flags.malformed_entries;
            continue;
        }

        const auto canonical = taxonomy.canonicalize(label);
        if (!canonical) {
            set.flags.unknown_labels.push_back(trim(label));
            continue;
        }

        Prediction prediction;
        prediction.concept_id = *canonical;
        prediction.rank = rank;
        if (want_center) prediction.center = center;

        // Dedupe on (id, center), keeping the best rank.
        auto duplicate = std::find_if(
            set.predictions.begin(), set.predictions.end(), [&](const Prediction& p) {
                return p.concept_id == prediction.concept_id && p.center == prediction.center;
            });
        if (duplicate != set.predictions.end()) {
            duplicate->rank = std::min(duplicate->rank, prediction.rank);
        } else {
            set.predictions.push_back(std::move(prediction));
        }
    }
    return set;
}

std::string serialize_prediction_set(const PredictionSet& set, OutputSchema schema) {
    nlohmann::json entries = nlohmann::json::array();
    for (const Prediction& p : set.predictions) {
        switch (schema) {
            case OutputSchema::Labels:
                entries.push_back(p.concept_id);
                break;
            case OutputSchema::LabelsRanked:
                entries.push_back({{"label", p.concept_id}, {"rank", p.rank}});
                break;
            case OutputSchema::Points: {
                nlohmann::json entry = {{"label", p.concept_id}, {"rank", p.rank}};
                if (p.center) {
                    entry["center"] = {{"x", p.center->x}, {"y", p.center->y}};
                }
                entries.push_back(std::move(entry));
                break;
            }
            default:
                throw std::invalid_argument("schema has no prediction serialization");
        }
    }
    nlohmann::json doc;
    doc[schema == OutputSchema::Points ? "detections" : "labels"] = std::move(entries);
    return doc.dump();
}

std::optional<std::string> parse_road_type(const std::string& text) {
    const auto doc = extract_first_json(text);
    if (doc && doc->is_object() && doc->contains("road_type") &&
        (*doc)["road_type"].is_string()) {
        return fold_label((*doc)["road_type"].get<std::string>());
    }
    if (doc && doc->is_string()) {
        return fold_label(doc->get<std::string>());
    }
    return std::nullopt;
}

std::string parse_scene_description(const std::string& text) {
    const auto doc = extract_first_json(text);
    if (doc && doc->is_object() && doc->contains("description") &&
        (*doc)["description"].is_string()) {
        return (*doc)["description"].get<std::string>();
    }
    return trim(text);
}

}  // namespace oddkit
