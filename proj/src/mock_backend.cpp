#include "oddkit/mock_backend.hpp"

#include <algorithm>
#include <random>

#include "json.hpp"
#include "oddkit/util.hpp"

namespace oddkit {

namespace {

bool in_scope(const std::vector<std::string>& scope, const std::string& id) {
    return std::find(scope.begin(), scope.end(), id) != scope.end();
}

std::string empty_document(OutputSchema schema) {
    switch (schema) {
        case OutputSchema::Points:
            return R"({"detections": []})";
        case OutputSchema::RoadType:
            return R"({"road_type": ""})";
        case OutputSchema::SceneDescription:
            return R"({"description": ""})";
        default:
            return R"({"labels": []})";
    }
}

nlohmann::json labels_document(const std::vector<std::string>& labels, OutputSchema schema) {
    nlohmann::json entries = nlohmann::json::array();
    int rank = 0;
    for (const std::string& label : labels) {
        ++rank;
        if (schema == OutputSchema::LabelsRanked) {
            entries.push_back({{"label", label}, {"rank", rank}});
        } else {
            entries.push_back(label);
        }
    }
    return nlohmann::json{{"labels", std::move(entries)}};
}

nlohmann::json detections_document(
    const std::vector<std::pair<std::string, Point>>& detections) {
    nlohmann::json entries = nlohmann::json::array();
    int rank = 0;
    for (const auto& [label, center] : detections) {
        entries.push_back({{"label", label},
                           {"center", {{"x", center.x}, {"y", center.y}}},
                           {"rank", ++rank}});
    }
    return nlohmann::json{{"detections", std::move(entries)}};
}

}  // namespace

GroundTruthIndex GroundTruthIndex::from_classification(
    const std::vector<ClassificationSample>& samples) {
    GroundTruthIndex index;
    for (const auto& sample : samples) {
        index.entries_[sample.sample_id].labels.push_back(sample.ground_truth);
    }
    return index;
}

GroundTruthIndex GroundTruthIndex::from_detection(const std::vector<DetectionSample>& samples) {
    GroundTruthIndex index;
    for (const auto& sample : samples) {
        auto& entry = index.entries_[sample.sample_id];
        entry.instances = sample.instances;
        for (const auto& instance : sample.instances) {
            if (!in_scope(entry.labels, instance.concept_id)) {
                entry.labels.push_back(instance.concept_id);
            }
        }
    }
    return index;
}

const GroundTruthIndex::Entry* GroundTruthIndex::find(const std::string& sample_id) const {
    auto it = entries_.find(sample_id);
    return it == entries_.end() ? nullptr : &it->second;
}

OracleBackend::OracleBackend(GroundTruthIndex ground_truth, const Taxonomy* taxonomy,
                             std::string road_type)
    : ground_truth_(std::move(ground_truth)), taxonomy_(taxonomy),
      road_type_(std::move(road_type)) {}

RawResponse OracleBackend::complete(const VlmRequest& request) {
    const auto* entry = ground_truth_.find(request.meta.sample_id);
    RawResponse response;

    switch (request.meta.schema) {
        case OutputSchema::RoadType:
            response.text = nlohmann::json{{"road_type", road_type_}}.dump();
            break;
        case OutputSchema::SceneDescription: {
            std::string description;
            if (entry && taxonomy_) {
                for (const std::string& label : entry->labels) {
                    if (const Concept* c = taxonomy_->find(label)) {
                        if (!description.empty()) description += ' ';
                        description += c->description;
                    }
                }
            }
            response.text = nlohmann::json{{"description", description}}.dump();
            break;
        }
        case OutputSchema::Points: {
            std::vector<std::pair<std::string, Point>> detections;
            if (entry) {
                for (const auto& instance : entry->instances) {
                    if (in_scope(request.meta.label_scope, instance.concept_id)) {
                        detections.emplace_back(instance.concept_id, instance.bbox.center());
                    }
                }
                if (entry->instances.empty()) {
                    for (const std::string& label : entry->labels) {
                        if (in_scope(request.meta.label_scope, label)) {
                            detections.emplace_back(label, Point{0.5, 0.5});
                        }
                    }
                }
            }
            response.text = detections_document(detections).dump();
            break;
        }
        default: {
            std::vector<std::string> labels;
            if (entry) {
                for (const std::string& label : entry->labels) {
                    if (in_scope(request.meta.label_scope, label)) labels.push_back(label);
                }
            }
            response.text = labels_document(labels, request.meta.schema).dump();
            break;
        }
    }
    return response;
}

std::vector<ScriptRule> load_mock_script(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const std::exception& e) {
        throw BackendError(BackendError::Kind::Config,
                           "malformed mock script " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw BackendError(BackendError::Kind::Config,
                           "mock script must be a JSON list of rules");
    }
    std::vector<ScriptRule> rules;
    for (const auto& item : doc) {
        ScriptRule rule;
        if (item.contains("match")) {
            rule.stage = item["match"].value("stage", "");
            rule.sample_id = item["match"].value("sample_id", "");
        }
        if (!item.contains("response")) {
            throw BackendError(BackendError::Kind::Config, "mock script rule lacks a response");
        }
        rule.response = item["response"].is_string() ? item["response"].get<std::string>()
                                                     : item["response"].dump();
        rules.push_back(std::move(rule));
    }
    return rules;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules,
                                 std::shared_ptr<VlmBackend> fallthrough)
    : rules_(std::move(rules)), fallthrough_(std::move(fallthrough)) {}

RawResponse ScriptedBackend::complete(const VlmRequest& request) {
    for (const ScriptRule& rule : rules_) {
        const bool stage_ok = rule.stage.empty() || rule.stage == request.meta.stage;
        const bool sample_ok = rule.sample_id.empty() || rule.sample_id == request.meta.sample_id;
        if (stage_ok && sample_ok) {
            RawResponse response;
            response.text = rule.response;
            return response;
        }
    }
    if (fallthrough_) return fallthrough_->complete(request);
    RawResponse response;
    response.text = empty_document(request.meta.schema);
    return response;
}

SeededNoiseBackend::SeededNoiseBackend(GroundTruthIndex ground_truth, const Taxonomy* taxonomy,
                                       std::uint64_t seed, double confusion_rate,
                                       std::vector<std::string> road_type_pool)
    : ground_truth_(std::move(ground_truth)), taxonomy_(taxonomy), seed_(seed),
      confusion_rate_(confusion_rate), road_type_pool_(std::move(road_type_pool)) {}

RawResponse SeededNoiseBackend::complete(const VlmRequest& request) {
    std::mt19937_64 rng(seed_ ^ hash64(request.request_id));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const auto& scope = request.meta.label_scope;
    auto random_in_scope = [&]() -> std::string {
        if (scope.empty()) return {};
        std::uniform_int_distribution<size_t> pick(0, scope.size() - 1);
        return scope[pick(rng)];
    };

    const auto* entry = ground_truth_.find(request.meta.sample_id);
    RawResponse response;

    switch (request.meta.schema) {
        case OutputSchema::RoadType: {
            std::string road = road_type_pool_.empty() ? "urban_street" : road_type_pool_.front();
            if (!road_type_pool_.empty() && coin(rng) < confusion_rate_) {
                std::uniform_int_distribution<size_t> pick(0, road_type_pool_.size() - 1);
                road = road_type_pool_[pick(rng)];
            }
            response.text = nlohmann::json{{"road_type", road}}.dump();
            break;
        }
        case OutputSchema::SceneDescription: {
            std::string description;
            if (entry && taxonomy_) {
                for (const std::string& label : entry->labels) {
                    if (const Concept* c = taxonomy_->find(label)) {
                        if (!description.empty()) description += ' ';
                        description += coin(rng) < confusion_rate_ ? c->display_name
                                                                   : c->description;
                    }
                }
            }
            response.text = nlohmann::json{{"description", description}}.dump();
            break;
        }
        case OutputSchema::Points: {
            std::vector<std::pair<std::string, Point>> detections;
            std::uniform_real_distribution<double> jitter(-0.05, 0.05);
            if (entry) {
                for (const auto& instance : entry->instances) {
                    if (!in_scope(scope, instance.concept_id)) continue;
                    std::string label = instance.concept_id;
                    if (coin(rng) < confusion_rate_) label = random_in_scope();
                    Point center = instance.bbox.center();
                    center.x = std::clamp(center.x + jitter(rng), 0.0, 1.0);
                    center.y = std::clamp(center.y + jitter(rng), 0.0, 1.0);
                    if (!label.empty()) detections.emplace_back(label, center);
                }
            }
            if (coin(rng) < confusion_rate_ / 2.0) {
                const std::string distractor = random_in_scope();
                if (!distractor.empty()) {
                    detections.emplace_back(
                        distractor, Point{coin(rng), coin(rng)});
                }
            }
            response.text = detections_document(detections).dump();
            break;
        }
        default: {
            std::vector<std::string> labels;
            if (entry) {
                for (const std::string& label : entry->labels) {
                    if (!in_scope(scope, label)) continue;
                    if (coin(rng) < confusion_rate_) {
                        const std::string swapped = random_in_scope();
                        if (!swapped.empty() && !in_scope(labels, swapped)) {
                            labels.push_back(swapped);
                        }
                    } else {
                        labels.push_back(label);
                    }
                }
            }
            if (coin(rng) < confusion_rate_ / 2.0) {
                const std::string distractor = random_in_scope();
                if (!distractor.empty() && !in_scope(labels, distractor)) {
                    labels.push_back(distractor);
                }
            }
            response.text = labels_document(labels, request.meta.schema).dump();
            break;
        }
    }
    return response;
}

}  // namespace oddkit
