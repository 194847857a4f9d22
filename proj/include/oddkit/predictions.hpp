#pragma once

#include <optional>
#include <string>
#include <vector>

namespace oddkit {

/// Normalized image coordinates, both components in [0, 1].
struct Point {
    double x{0.0};
    double y{0.0};

    bool operator==(const Point&) const = default;
};

struct Prediction {
    std::string concept_id;       // canonical taxonomy id
    int rank{1};                  // 1 = most confident
    std::optional<Point> center;  // present only on detection runs
    std::string source_stage;

    bool operator==(const Prediction&) const = default;
};

/// Parse outcome bookkeeping. Hard failures and unknown labels are counted,
/// never fatal; scope exclusions are recorded by the pipeline.
struct ParseFlags {
    int hard_failures{0};
    int malformed_entries{0};
    std::vector<std::string> unknown_labels;
    std::vector<std::string> scope_exclusions;

    void merge(const ParseFlags& other) {
        hard_failures += other.hard_failures;
        malformed_entries += other.malformed_entries;
        unknown_labels.insert(unknown_labels.end(), other.unknown_labels.begin(),
                              other.unknown_labels.end());
        scope_exclusions.insert(scope_exclusions.end(), other.scope_exclusions.begin(),
                                other.scope_exclusions.end());
    }
};

struct PredictionSet {
    std::vector<Prediction> predictions;
    ParseFlags flags;

    bool contains(const std::string& concept_id) const {
        for (const Prediction& p : predictions) {
            if (p.concept_id == concept_id) return true;
        }
        return false;
    }

    bool empty() const { return predictions.empty(); }
    size_t size() const { return predictions.size(); }
};

}  // namespace oddkit
