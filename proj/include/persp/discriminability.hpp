#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace persp {

/// Sparse row: (term index, weight), sorted by term index.
using SparseRow = std::vector<std::pair<std::size_t, double>>;

struct TfidfMatrix {
    std::vector<std::string> terms;  // sorted
    std::vector<double> idf;
    std::vector<SparseRow> rows;     // l2-normalised
};

/// Word unigrams (runs of 2+ word characters), lowercased, smooth idf
/// ln((1+n)/(1+df)) + 1, each row l2-normalised. Raises DegenerateVocabulary
/// when no document yields a term.
TfidfMatrix tfidf_vectorize(std::span<const std::string> documents);

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    int exaggeration_iterations = 250;
    double early_exaggeration = 12.0;
    std::uint64_t seed = 0;
};

/// Exact (O(n^2)) t-SNE to two dimensions from the rows' squared euclidean
/// distances. Perplexity is clamped to (n-1)/3 for small inputs.
std::vector<std::array<double, 2>> tsne_2d(const TfidfMatrix& x, const TsneConfig& cfg);

struct SvcConfig {
    double c = 1.0;
    double gamma = 0.0;  // <= 0 means 1 / (n_features * var(X))
    double tolerance = 1e-3;
    int max_iterations = 1000000;
};

/// Binary RBF-kernel support vector classifier trained by SMO.
class RbfSvc {
public:
    /// labels are 0/1.
    void fit(std::span<const std::array<double, 2>> x, std::span<const int> labels,
             const SvcConfig& cfg = {});
    double decision(const std::array<double, 2>& point) const;
    int predict(const std::array<double, 2>& point) const { return decision(point) > 0.0 ? 1 : 0; }
    double gamma() const noexcept { return gamma_; }
    std::size_t support_vector_count() const noexcept { return support_.size(); }

private:
    std::vector<std::array<double, 2>> support_;
    std::vector<double> coef_;  // alpha_i * y_i
    double bias_ = 0.0;
    double gamma_ = 1.0;
};

struct EmbeddedPoint {
    double x = 0.0;
    double y = 0.0;
    int label = 0;  // 1 = generated, 0 = held out
    bool in_eval_split = false;
};

struct DiscriminabilityReport {
    double accuracy = 0.0;
    double f1 = 0.0;  // positive class = generated
    // confusion[true][predicted], index 0 = held out, 1 = generated
    std::array<std::array<std::size_t, 2>, 2> confusion{};
    std::vector<EmbeddedPoint> embedding;  // generated first, then held out, input order
    std::size_t eval_size() const noexcept;
};

/// TF-IDF over the union, t-SNE to 2-D, stratified 80/20 split, RBF SVC on
/// the 2-D points, scored on the held-out 20%.
DiscriminabilityReport discriminability(std::span<const std::string> generated,
                                        std::span<const std::string> held_out, std::uint64_t seed);

}  // namespace persp
