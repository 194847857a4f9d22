#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "oddkit/predictions.hpp"
#include "oddkit/taxonomy.hpp"

namespace oddkit {

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One image annotated with its predominant concept.
struct ClassificationSample {
    std::string sample_id;
    std::string image_path;
    std::string ground_truth;  // canonical concept id
};

/// Normalized axis-aligned box, 0 <= min < max <= 1 on both axes.
struct BoundingBox {
    double x_min{0.0};
    double y_min{0.0};
    double x_max{1.0};
    double y_max{1.0};

    Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
};

struct DetectionInstance {
    std::string concept_id;
    BoundingBox bbox;
};

struct DetectionSample {
    std::string sample_id;
    std::string image_path;
    std::vector<DetectionInstance> instances;
};

/// Classification manifests: JSON lines or CSV with a header row, fields
/// {sample_id, image_path, concept_id}. Ground-truth ids are validated
/// against the taxonomy.
std::vector<ClassificationSample> load_classification_manifest(
    const std::filesystem::path& path, const Taxonomy& taxonomy);

/// Detection manifests: JSON lines
/// {sample_id, image_path, instances: [{concept_id, bbox: [x_min, y_min, x_max, y_max]}]}.
std::vector<DetectionSample> load_detection_manifest(const std::filesystem::path& path,
                                                     const Taxonomy& taxonomy);

}  // namespace oddkit
