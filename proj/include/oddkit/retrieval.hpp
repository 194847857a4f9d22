#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oddkit/taxonomy.hpp"

namespace oddkit {

class RetrievalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unit-L2 embedding. A text with no in-vocabulary mass embeds to the null
/// vector and scores zero against everything.
struct EmbeddingVector {
    std::vector<double> components;

    bool is_null() const;
    double dot(const EmbeddingVector& other) const;
};

/// Pluggable text embedding provider contract.
using EmbeddingProvider = std::function<EmbeddingVector(const std::string&)>;

/// One textual description per taxonomy concept with its embedding.
/// Retrieval is an exhaustive cosine scan; at this scale that is exact and
/// fast. Immutable after build, safe for concurrent queries.
class KnowledgeBase {
public:
    struct Hit {
        std::string concept_id;
        double score{0.0};
    };

    /// Builds from the taxonomy's concept descriptions using the built-in
    /// lexical embedder (case-folded token multiset, L2-normalized term
    /// frequencies over the KB vocabulary).
    static KnowledgeBase build_lexical(const Taxonomy& taxonomy);

    size_t size() const { return entries_.size(); }
    size_t dimension() const { return vocabulary_.size(); }
    const std::string& embedder_id() const { return embedder_id_; }

    /// Embeds free text with this KB's provider. Empty text is an error.
    EmbeddingVector embed(const std::string& text) const;

    /// Top-k by cosine similarity, descending; ties break lexicographically
    /// by concept id. Returns min(k, size()) hits. The retrieval default
    /// feeds the eight most relevant descriptions into the detect prompt.
    std::vector<Hit> retrieve_topk(const std::string& query, size_t k = 8) const;

    /// Description text stored for a concept.
    const std::string& description_of(const std::string& concept_id) const;

private:
    struct Entry {
        std::string concept_id;
        std::string description;
        EmbeddingVector embedding;
    };

    std::vector<Entry> entries_;                     // sorted by concept_id
    std::map<std::string, size_t> vocabulary_;       // token -> dimension
    std::string embedder_id_;
};

/// Tokens of the lexical embedder: case-folded alphanumeric runs.
std::vector<std::string> lexical_tokens(const std::string& text);

}  // namespace oddkit
