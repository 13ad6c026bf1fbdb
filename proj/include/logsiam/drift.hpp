#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "logsiam/corpus.hpp"
#include "logsiam/net.hpp"

namespace logsiam {

enum class CovarianceKind { Diagonal, Full };

// Gaussian mixture over embedded vectors (columns). Means/variances are
// stored per component; full covariances additionally keep the D x D
// matrices.
struct GaussianMixture {
    Matrix means;               // D x K
    Matrix variances;           // D x K diagonal entries (Diagonal kind)
    std::vector<Matrix> covariances;  // K of D x D (Full kind)
    Vector weights;             // K, sums to 1
    CovarianceKind kind = CovarianceKind::Diagonal;
    std::uint64_t seed = 0;
    double final_log_likelihood = 0.0;
    std::vector<double> ll_history;  // per-iteration training mean LL
    int floored_components = 0;      // variances clipped at the floor

    int components() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(means.rows()); }

    nlohmann::json to_json() const;
    static GaussianMixture from_json(const nlohmann::json& j);
};

struct GmmConfig {
    int components = 5;
    CovarianceKind kind = CovarianceKind::Diagonal;
    int max_iterations = 200;
    double tolerance = 1e-6;
    double variance_floor = 1e-6;
};

// EM fit; the per-iteration training log-likelihood is non-decreasing and is
// kept in ll_history. Needs at least `components` distinct vectors.
GaussianMixture fit_gmm(const Matrix& vectors, const GmmConfig& cfg,
                        std::uint64_t seed);

// Mean log probability density of the columns under the mixture. Positive
// values are legitimate: this is a density, not a probability.
double fitness_score(const GaussianMixture& gmm, const Matrix& vectors);

// BIC over candidate component counts; returns the count with the lowest BIC.
int select_components(const Matrix& vectors, const std::vector<int>& candidates,
                      const GmmConfig& cfg, std::uint64_t seed);

struct FitnessReport {
    double score = 0.0;
    double threshold = 0.0;
    bool triggered = false;  // score < threshold
    std::size_t count = 0;

    nlohmann::json to_json() const;
};

// Embeds incoming sequences with the checkpointed encoder, scores them under
// the mixture, and compares to the threshold. Labels are never consumed.
FitnessReport drift_monitor(const EmbeddingNetwork& model, const Vocabulary& vocab,
                            const GaussianMixture& gmm,
                            const LabeledDataset& incoming, double threshold);

}  // namespace logsiam
