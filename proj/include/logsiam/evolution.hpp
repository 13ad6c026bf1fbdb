#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "logsiam/corpus.hpp"
#include "logsiam/heads.hpp"
#include "logsiam/net.hpp"

namespace logsiam {

// Synthetic log-evolution noise: duplicate, remove, or shuffle elements of a
// sequence. One op is applied per selected sequence; elements_per_op controls
// how many elements (or windows) that op touches.
struct NoiseConfig {
    double ratio = 0.0;  // fraction of test sequences perturbed
    bool op_duplicate = true;
    bool op_remove = true;
    bool op_shuffle = true;
    int elements_per_op = 1;
    int shuffle_window = 3;
    int runs = 5;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::string> enabled_ops() const;
};

// Applies one uniformly chosen enabled op. remove on a length-1 sequence is
// skipped (skip recorded via the counter when given). Label and id unchanged.
EventSequence perturb(const EventSequence& s, const NoiseConfig& cfg, Rng& rng,
                      std::uint64_t* remove_skips = nullptr);

// Perturbs exactly floor(ratio * N) seeded-uniformly chosen sequences once
// each; the rest are byte-identical. Deterministic given cfg.seed.
LabeledDataset apply_noise(const LabeledDataset& test, const NoiseConfig& cfg);

struct RobustnessReport {
    std::vector<double> ratios;
    std::vector<std::string> heads;
    // [head][ratio] mean over runs, and raw per-run values
    std::vector<std::vector<double>> mean_f1_x100;
    std::vector<std::vector<double>> mean_precision;
    std::vector<std::vector<double>> mean_recall;
    std::vector<std::vector<std::vector<double>>> run_f1_x100;

    nlohmann::json to_json() const;
};

// Evaluates every head on noisy copies of the test set across the ratio
// sweep, averaging metrics over cfg.runs independently seeded runs. The
// embedding network is never retrained on noisy data.
RobustnessReport robustness_eval(const EmbeddingNetwork& model, const Vocabulary& vocab,
                                 const std::vector<ClassifierHead>& heads,
                                 const LabeledDataset& test,
                                 const std::vector<double>& ratios,
                                 const NoiseConfig& base_cfg, int jobs = 1);

}  // namespace logsiam
