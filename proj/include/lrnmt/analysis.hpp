#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lrnmt {

struct PcaResult {
    std::size_t n = 0, d = 0;
    std::vector<double> projections;                     // n x 2 row-major
    std::array<double, 2> explained_variance_ratio{};
    std::vector<double> components;                      // 2 x d row-major, unit length
    std::array<double, 2> eigenvalues{};
    bool second_degenerate = false;
};

// Top-2 PCA via power iteration with deflation (tolerance 1e-9, at most
// 1000 iterations). Columns are mean-centered first; each component's
// largest-magnitude entry is made positive so plots are reproducible.
PcaResult pca2(const std::vector<double>& data, std::size_t n, std::size_t d);

struct CosineHistogram {
    std::vector<double> bin_edges;   // bins + 1 edges over [-1, 1]
    std::vector<std::size_t> counts;
    double mean = 0.0;
    double median = 0.0;
    std::size_t flagged = 0;         // zero-vector pairs excluded from the counts
};

// Cosine of each (a_i, b_i) pair; zero vectors are flagged and excluded.
std::vector<double> pairwise_cosine(const std::vector<double>& a, const std::vector<double>& b,
                                    std::size_t n, std::size_t d, std::size_t* flagged = nullptr);

CosineHistogram cosine_hist(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t n, std::size_t d, std::size_t bins = 50);

// Dense row-major embedding matrix with its sidecar metadata.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::string language;
    std::vector<float> data;

    std::vector<double> as_double() const { return {data.begin(), data.end()}; }
};

// Binary little-endian float32 matrix at `path`, JSON sidecar at
// `path + ".json"` with keys dim, count, language.
void save_embeddings(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);

}  // namespace lrnmt
