#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "oddkit/predictions.hpp"
#include "oddkit/prompting.hpp"
#include "oddkit/taxonomy.hpp"

namespace oddkit {

/// Extracts the first well-formed JSON value from free-form model text.
/// Fenced code blocks win over inline values; surrounding prose is
/// tolerated. Returns nullopt when nothing parseable exists.
std::optional<nlohmann::json> extract_first_json(const std::string& text);

/// Parses raw model text against an output schema. Labels are mapped
/// through canonicalize; unknown labels land in the flags, detection
/// centers are clamped to [0,1], duplicates are deduplicated keeping the
/// best rank. A text with no extractable JSON yields an empty set with the
/// hard-failure flag raised; this function never throws on model output.
PredictionSet parse_predictions(const std::string& text, OutputSchema schema,
                                const Taxonomy& taxonomy);

/// Serializes a prediction set back to the schema's document form with
/// canonical key order.
std::string serialize_prediction_set(const PredictionSet& set, OutputSchema schema);

/// Road-type answer of a classification stage; nullopt when missing.
std::optional<std::string> parse_road_type(const std::string& text);

/// Scene description for retrieval; falls back to the trimmed raw text
/// when the response is not structured.
std::string parse_scene_description(const std::string& text);

}  // namespace oddkit
