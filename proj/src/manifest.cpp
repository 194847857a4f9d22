#include "oddkit/manifest.hpp"

#include <set>
#include <sstream>

#include "json.hpp"
#include "oddkit/util.hpp"

namespace oddkit {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

void validate_unique(std::set<std::string>& seen, const std::string& sample_id,
                     const std::filesystem::path& path) {
    if (!seen.insert(sample_id).second) {
        throw ManifestError("duplicate sample_id '" + sample_id + "' in " + path.string());
    }
}

}  // namespace

std::vector<ClassificationSample> load_classification_manifest(
    const std::filesystem::path& path, const Taxonomy& taxonomy) {
    const std::string raw = read_file(path);
    std::vector<ClassificationSample> samples;
    std::set<std::string> seen;
    std::istringstream in(raw);
    std::string line;
    size_t line_no = 0;

    const bool csv = path.extension() == ".csv";
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;

        ClassificationSample sample;
        if (csv) {
            const auto fields = split_csv_row(stripped);
            if (header.empty()) {
                header = fields;
                continue;
            }
            if (fields.size() != header.size()) {
                throw ManifestError("row " + std::to_string(line_no) + " of " + path.string() +
                                    " has " + std::to_string(fields.size()) + " fields");
            }
            for (size_t i = 0; i < header.size(); ++i) {
                const std::string key = trim(header[i]);
                if (key == "sample_id") sample.sample_id = trim(fields[i]);
                else if (key == "image_path") sample.image_path = trim(fields[i]);
                else if (key == "concept_id") sample.ground_truth = trim(fields[i]);
            }
        } else {
            nlohmann::json doc =
                nlohmann::json::parse(stripped, nullptr, /*allow_exceptions=*/false);
            if (doc.is_discarded() || !doc.is_object()) {
                throw ManifestError("line " + std::to_string(line_no) + " of " + path.string() +
                                    " is not a JSON object");
            }
            sample.sample_id = doc.value("sample_id", "");
            sample.image_path = doc.value("image_path", "");
            sample.ground_truth = doc.value("concept_id", "");
        }

        if (sample.sample_id.empty() || sample.ground_truth.empty()) {
            throw ManifestError("line " + std::to_string(line_no) + " of " + path.string() +
                                " is missing sample_id or concept_id");
        }
        if (!taxonomy.contains(sample.ground_truth)) {
            throw ManifestError("sample '" + sample.sample_id + "' uses unknown concept '" +
                                sample.ground_truth + "'");
        }
        validate_unique(seen, sample.sample_id, path);
        samples.push_back(std::move(sample));
    }
    if (samples.empty()) {
        throw ManifestError("manifest " + path.string() + " contains no samples");
    }
    return samples;
}

std::vector<DetectionSample> load_detection_manifest(const std::filesystem::path& path,
                                                     const Taxonomy& taxonomy) {
    const std::string raw = read_file(path);
    std::vector<DetectionSample> samples;
    std::set<std::string> seen;
    std::istringstream in(raw);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(stripped, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw ManifestError("line " + std::to_string(line_no) + " of " + path.string() +
                                " is not a JSON object");
        }
        DetectionSample sample;
        sample.sample_id = doc.value("sample_id", "");
        sample.image_path = doc.value("image_path", "");
        if (sample.sample_id.empty() || !doc.contains("instances") ||
            !doc["instances"].is_array()) {
            throw ManifestError("line " + std::to_string(line_no) + " of " + path.string() +
                                " is missing sample_id or instances");
        }
        for (const auto& inst : doc["instances"]) {
            DetectionInstance instance;
            instance.concept_id = inst.value("concept_id", "");
            if (!taxonomy.contains(instance.concept_id)) {
                throw ManifestError("sample '" + sample.sample_id + "' uses unknown concept '" +
                                    instance.concept_id + "'");
            }
            if (!inst.contains("bbox") || !inst["bbox"].is_array() || inst["bbox"].size() != 4) {
                throw ManifestError("sample '" + sample.sample_id +
                                    "' instance lacks a 4-element bbox");
            }
            instance.bbox.x_min = inst["bbox"][0].get<double>();
            instance.bbox.y_min = inst["bbox"][1].get<double>();
            instance.bbox.x_max = inst["bbox"][2].get<double>();
            instance.bbox.y_max = inst["bbox"][3].get<double>();
            const auto& b = instance.bbox;
            if (!(0.0 <= b.x_min && b.x_min < b.x_max && b.x_max <= 1.0) ||
                !(0.0 <= b.y_min && b.y_min < b.y_max && b.y_max <= 1.0)) {
                throw ManifestError("sample '" + sample.sample_id + "' bbox is not normalized");
            }
            sample.instances.push_back(std::move(instance));
        }
        validate_unique(seen, sample.sample_id, path);
        samples.push_back(std::move(sample));
    }
    if (samples.empty()) {
        throw ManifestError("manifest " + path.string() + " contains no samples");
    }
    return samples;
}

}  // namespace oddkit
