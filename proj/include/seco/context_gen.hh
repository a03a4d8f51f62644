#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "seco/event_model.hh"
#include "seco/matrix.hh"

namespace seco {

// Event before context assignment: (s, r, o, t).
struct EventQuadruple {
    std::int32_t subject = 0;
    std::int32_t relation = 0;
    std::int32_t object = 0;
    std::int64_t time = 0;

    friend bool operator==(const EventQuadruple&, const EventQuadruple&) = default;
};

struct DocVectors {
    std::vector<std::string> terms;                                   // lexicographic
    std::vector<std::vector<std::pair<std::int32_t, double>>> docs;   // sparse, L2-normed
    std::vector<std::uint8_t> empty_flags;   // 1 when a document has a zero vector

    Index n_terms() const { return static_cast<Index>(terms.size()); }
    Index n_docs() const { return static_cast<Index>(docs.size()); }
};

// Lowercase, strip non-alphanumerics, drop tokens shorter than 2 characters.
std::vector<std::string> tokenize(std::string_view line);

// tf = count/len, idf = ln(N/df), L2 normalization per document.
DocVectors vectorize(const std::vector<std::vector<std::string>>& documents);

Matrix densify(const DocVectors& vectors);

struct KMeansResult {
    std::vector<std::int32_t> labels;
    Matrix centroids;                    // k x dims
    std::vector<double> inertia_trace;   // one entry per Lloyd iteration
    int iterations = 0;
};

// Seeded k-means++ initialization followed by Lloyd iterations until the
// assignment reaches a fixpoint or max_iters.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters);

KMeansResult kmeans(const DocVectors& vectors, int k, std::uint64_t seed, int max_iters);

// Labels each event with its source document's cluster.
std::vector<EventQuintuple> assign_contexts(const std::vector<EventQuadruple>& events,
                                            const std::vector<std::int32_t>& event_to_doc,
                                            const std::vector<std::int32_t>& labels);

// Highest-weight terms per centroid, the text stand-in for per-context word
// clouds.
std::vector<std::vector<std::string>> top_terms(const Matrix& centroids,
                                                const std::vector<std::string>& terms,
                                                int top_n);

std::vector<EventQuadruple> load_quadruple_file(const std::filesystem::path& path);

}  // namespace seco
