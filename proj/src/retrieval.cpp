#include "oddkit/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "oddkit/util.hpp"

namespace oddkit {

std::vector<std::string> lexical_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

bool EmbeddingVector::is_null() const {
    for (double v : components) {
        if (v != 0.0) return false;
    }
    return true;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
    const size_t n = std::min(components.size(), other.components.size());
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += components[i] * other.components[i];
    return sum;
}

KnowledgeBase KnowledgeBase::build_lexical(const Taxonomy& taxonomy) {
    KnowledgeBase kb;
    kb.embedder_id_ = "lexical-tf-v1";

    for (const Concept& c : taxonomy.concepts()) {
        for (const std::string& token : lexical_tokens(c.description)) {
            kb.vocabulary_.emplace(token, 0);
        }
    }
    size_t dim = 0;
    for (auto& [token, index] : kb.vocabulary_) index = dim++;

    for (const Concept& c : taxonomy.concepts()) {
        Entry entry;
        entry.concept_id = c.id;
        entry.description = c.description;
        entry.embedding = kb.embed(c.description);
        kb.entries_.push_back(std::move(entry));
    }
    // concepts() is sorted by id already; keep that order for determinism.
    return kb;
}

EmbeddingVector KnowledgeBase::embed(const std::string& text) const {
    if (trim(text).empty()) {
        throw RetrievalError("cannot embed empty text");
    }
    EmbeddingVector vector;
    vector.components.assign(vocabulary_.size(), 0.0);
    for (const std::string& token : lexical_tokens(text)) {
        auto it = vocabulary_.find(token);
        if (it != vocabulary_.end()) vector.components[it->second] += 1.0;
    }
    double norm = 0.0;
    for (double v : vector.components) norm += v * v;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& v : vector.components) v /= norm;
    }
    // A fully out-of-vocabulary text stays the null vector and is excluded
    // from ranking by scoring zero everywhere.
    return vector;
}

std::vector<KnowledgeBase::Hit> KnowledgeBase::retrieve_topk(const std::string& query,
                                                             size_t k) const {
    if (entries_.empty()) {
        throw RetrievalError("knowledge base is empty");
    }
    if (k < 1) {
        throw RetrievalError("retrieval k must be at least 1");
    }
    const EmbeddingVector query_vector = embed(query);

    std::vector<Hit> hits;
    hits.reserve(entries_.size());
    for (const Entry& entry : entries_) {
        hits.push_back({entry.concept_id, query_vector.dot(entry.embedding)});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.concept_id < b.concept_id;
    });
    hits.resize(std::min(k, hits.size()));
    return hits;
}

const std::string& KnowledgeBase::description_of(const std::string& concept_id) const {
    for (const Entry& entry : entries_) {
        if (entry.concept_id == concept_id) return entry.description;
    }
    throw RetrievalError("knowledge base has no entry for '" + concept_id + "'");
}

}  // namespace oddkit
