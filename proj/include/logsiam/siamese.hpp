#pragma once

#include <limits>

#include "logsiam/corpus.hpp"
#include "logsiam/heads.hpp"
#include "logsiam/net.hpp"
#include "logsiam/pairgen.hpp"

namespace logsiam {

// sim(x1, x2) = sigmoid(x1 . x2), clamped into (0, 1) at 1e-12 from each end.
double similarity(const Vector& x1, const Vector& x2);

// Cross-entropy over the similarity: -(y*log(sim) + (1-y)*log(1-sim)), with
// log arguments clamped at 1e-12 so saturated pairs stay finite.
double pair_loss(const Vector& x1, const Vector& x2, int target);

// Mean pair loss over columns; writes d(loss)/d(embedding) when the gradient
// outputs are non-null. Matches the PairLossFn shape used by gradient_check.
double pair_loss_batch(const Matrix& left, const Matrix& right,
                       const std::vector<int>& targets, Matrix* d_left,
                       Matrix* d_right);

// Mean pair loss over every ordered non-self pair of one embedded set.
double all_pairs_loss(const Matrix& embeddings, const std::vector<int>& labels);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double learning_rate = 1e-3;
    PairGenConfig pairgen;
    int patience = 10;            // early stop on validation loss; <=0 disables
    std::uint64_t seed = 0;
    double hybrid_lambda = 1.0;   // classification weight; 0 = pure Siamese

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> wall_seconds;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = -1;

    nlohmann::json to_json() const;
};

// Dataset after vocabulary encoding; order matches the source dataset.
struct EncodedDataset {
    std::vector<std::vector<int>> seqs;
    std::vector<int> labels;

    static EncodedDataset from(const LabeledDataset& d, const Vocabulary& v);
    std::size_t size() const { return seqs.size(); }
};

// Embeds a whole dataset in fixed-size batches; column i is sequence i.
Matrix embed_dataset(const EmbeddingNetwork& model,
                     const std::vector<std::vector<int>>& seqs,
                     int batch_size = 256);

// Siamese training with one shared encoder parameter set. Validation loss is
// computed over all ordered pairs of the validation subset; the parameters
// with the best validation loss are restored before returning. When `val` is
// empty, early stopping is disabled and the final parameters are kept.
TrainHistory train_siamese(EmbeddingNetwork& model, const EncodedDataset& train,
                           const EncodedDataset& val, const TrainConfig& cfg,
                           const EncodedDataset* test = nullptr);

// End-to-end variant: total loss = pair_loss + lambda * classification
// cross-entropy on the pair's first entry. Inference runs embed -> head only.
TrainHistory train_hybrid(EmbeddingNetwork& model, MlpHead& head,
                          const EncodedDataset& train, const EncodedDataset& val,
                          const TrainConfig& cfg,
                          const EncodedDataset* test = nullptr);

// Same architecture trained as a plain binary classifier, no similarity loss.
TrainHistory train_feedforward_baseline(EmbeddingNetwork& model, MlpHead& head,
                                        const EncodedDataset& train,
                                        const EncodedDataset& val,
                                        const TrainConfig& cfg);

}  // namespace logsiam
