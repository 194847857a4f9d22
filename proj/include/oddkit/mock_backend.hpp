#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oddkit/backend.hpp"
#include "oddkit/manifest.hpp"
#include "oddkit/taxonomy.hpp"

namespace oddkit {

/// Ground truth keyed by sample id, wired into the oracle and noise mocks
/// at run time.
class GroundTruthIndex {
public:
    struct Entry {
        std::vector<std::string> labels;
        std::vector<DetectionInstance> instances;
    };

    static GroundTruthIndex from_classification(const std::vector<ClassificationSample>& samples);
    static GroundTruthIndex from_detection(const std::vector<DetectionSample>& samples);

    const Entry* find(const std::string& sample_id) const;
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, Entry> entries_;
};

/// Answers every request with exactly the ground-truth labels that fall
/// inside the requesting stage's scope. Pure and deterministic.
class OracleBackend : public VlmBackend {
public:
    OracleBackend(GroundTruthIndex ground_truth, const Taxonomy* taxonomy,
                  std::string road_type = "urban_street");

    RawResponse complete(const VlmRequest& request) override;
    std::string name() const override { return "mock:oracle"; }

private:
    GroundTruthIndex ground_truth_;
    const Taxonomy* taxonomy_;
    std::string road_type_;
};

struct ScriptRule {
    std::string stage;      // empty matches any stage
    std::string sample_id;  // empty matches any sample
    std::string response;
};

/// Script file: JSON list of {"match": {"stage"?, "sample_id"?}, "response": str}.
std::vector<ScriptRule> load_mock_script(const std::filesystem::path& path);

/// Replays canned responses; first matching rule wins. Unmatched requests
/// fall through to an inner backend when one is provided, otherwise they
/// produce the schema's empty document.
class ScriptedBackend : public VlmBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptRule> rules,
                             std::shared_ptr<VlmBackend> fallthrough = nullptr);

    RawResponse complete(const VlmRequest& request) override;
    std::string name() const override { return "mock:scripted"; }

private:
    std::vector<ScriptRule> rules_;
    std::shared_ptr<VlmBackend> fallthrough_;
};

/// Oracle answers corrupted by reproducible confusions: labels are swapped
/// or padded with in-scope distractors, centers jitter, road types flip.
/// The stream is a pure function of (seed, request_id).
class SeededNoiseBackend : public VlmBackend {
public:
    SeededNoiseBackend(GroundTruthIndex ground_truth, const Taxonomy* taxonomy,
                       std::uint64_t seed, double confusion_rate,
                       std::vector<std::string> road_type_pool = {"urban_street", "motorway",
                                                                  "rural_road"});

    RawResponse complete(const VlmRequest& request) override;
    std::string name() const override { return "mock:noise"; }

private:
    GroundTruthIndex ground_truth_;
    const Taxonomy* taxonomy_;
    std::uint64_t seed_;
    double confusion_rate_;
    std::vector<std::string> road_type_pool_;
};

}  // namespace oddkit
