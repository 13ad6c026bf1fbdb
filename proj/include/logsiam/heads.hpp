#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "logsiam/net.hpp"

namespace logsiam {

enum class HeadKind { Knn, LogReg, Svm, Mlp };

HeadKind head_kind_from_name(const std::string& name);
std::string head_kind_name(HeadKind kind);

struct HeadConfig {
    HeadKind kind = HeadKind::Mlp;
    int knn_k = 5;
    int mlp_hidden = 64;
    int iterations = 2000;       // logreg / svm gradient descent steps
    int mlp_epochs = 100;
    int mlp_batch = 512;
    double learning_rate = 0.0;  // 0 = per-kind default
    double svm_l2 = 1e-4;
};

struct Metrics {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double f1_x100 = 0.0;
    bool degenerate = false;  // a zero denominator was flagged

    nlohmann::json to_json() const;
};

// Counts with anomaly (label 1) as the positive class; zero-denominator cases
// yield 0 and set the degenerate flag.
Metrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth);

// Two-layer classifier: ReLU hidden layer, sigmoid output. Parameters live in
// a TensorStore so the hybrid trainer can share the optimizer with the
// encoder.
class MlpHead {
public:
    MlpHead(int input_dim, int hidden, std::uint64_t seed);
    explicit MlpHead(TensorStore params);

    TensorStore& params() { return params_; }
    const TensorStore& params() const { return params_; }
    int input_dim() const;
    int hidden_dim() const;

    struct Cache {
        Matrix input;
        Matrix pre1;
        RowVector score;  // pre-sigmoid
    };

    // probabilities, one per column of x
    RowVector prob(const Matrix& x) const;
    RowVector forward(const Matrix& x, Cache& cache) const;
    // d_score = dL/d(pre-sigmoid score); accumulates into grads, returns d_input
    Matrix backward(const Cache& cache, const RowVector& d_score,
                    TensorStore& grads) const;

private:
    TensorStore params_;
};

// Classifier over embedded vectors. Samples are matrix columns.
class ClassifierHead {
public:
    static ClassifierHead fit(const HeadConfig& config, const Matrix& train_vectors,
                              const std::vector<int>& labels, std::uint64_t seed);

    std::vector<int> predict(const Matrix& vectors) const;
    // probability of class 1; knn reports the neighbor vote fraction
    std::vector<double> scores(const Matrix& vectors) const;

    HeadKind kind() const { return config_.kind; }
    const HeadConfig& config() const { return config_; }

    nlohmann::json to_json() const;
    static ClassifierHead from_json(const nlohmann::json& j);

private:
    ClassifierHead() = default;

    HeadConfig config_;
    int input_dim_ = 0;
    // knn
    Matrix train_vectors_;
    std::vector<int> train_labels_;
    // logreg / svm
    Vector weights_;
    double bias_ = 0.0;
    // mlp
    std::unique_ptr<MlpHead> mlp_;

    friend ClassifierHead make_mlp_classifier(MlpHead head, HeadConfig config);
};

// Wraps an externally trained MlpHead (hybrid / feedforward paths).
ClassifierHead make_mlp_classifier(MlpHead head, HeadConfig config);

}  // namespace logsiam
