#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "logsiam/common.hpp"

namespace logsiam {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class LayerKind { TokenEmbedding, Lstm, BiLstm, Dense };
enum class Activation { Tanh, Relu, LeakyRelu, Linear };

constexpr double kLeakyReluSlope = 0.01;

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int units = 0;
    Activation activation = Activation::Linear;
};

// Declarative layer list. Valid specs start with a token embedding, keep all
// recurrent layers before the dense stack, and end with a linear dense layer
// (the embedding head).
struct ArchitectureSpec {
    std::string name;
    std::vector<LayerSpec> layers;

    void validate() const;  // throws ConfigError on ordering violations
    int output_dim() const { return layers.back().units; }
};

// Embedding 11 -> LSTM 192 -> LSTM 192 -> LSTM 64 -> Dense 348 ReLU
// -> Dense 640 ReLU -> Dense 64 Linear.
ArchitectureSpec best_performer_spec();
// Embedding 24 -> BiLSTM 64 (32x2) -> Dense 64 LeakyReLU x2 -> Dense 64 Linear.
ArchitectureSpec low_cost_spec();
// Resolves "best-performer", "low-cost", or a path to a spec JSON file.
ArchitectureSpec resolve_spec(const std::string& arch);

nlohmann::json spec_to_json(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_json(const nlohmann::json& j);

struct NamedTensor {
    std::string name;
    Matrix value;
};

// Named parameter tensors in a fixed (layer) order; the order defines the
// checkpoint blob layout. Backed by a deque so references returned by add()
// stay valid while more tensors are added.
class TensorStore {
public:
    Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::deque<NamedTensor>& entries() { return tensors_; }
    const std::deque<NamedTensor>& entries() const { return tensors_; }

    std::uint64_t scalar_count() const;
    void set_zero();
    TensorStore zeros_like() const;

private:
    std::deque<NamedTensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Adaptive-moment optimizer over a TensorStore; state tensors mirror the
// parameter layout.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(TensorStore& params, const TensorStore& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    TensorStore m_, v_;
    bool initialized_ = false;
};

std::uint64_t count_params(const ArchitectureSpec& spec, int vocab_size);

// Approximate forward cost: 2 FLOPs per multiply-add, matmul terms only
// (activations and bias adds excluded), embedding lookups free. Recurrent
// layers are charged per timestep, the dense stack once.
std::uint64_t count_flops(const ArchitectureSpec& spec, int seq_len);

// Sequence encoder. Parameters live in one TensorStore; forward/backward give
// exact analytic gradients. Columns are batch entries throughout.
class EmbeddingNetwork {
public:
    struct Cache;

    EmbeddingNetwork(ArchitectureSpec spec, int vocab_size, std::uint64_t seed);
    EmbeddingNetwork(ArchitectureSpec spec, int vocab_size, TensorStore params);

    const ArchitectureSpec& spec() const { return spec_; }
    int vocab_size() const { return vocab_size_; }
    int output_dim() const { return spec_.output_dim(); }
    std::uint64_t init_seed() const { return seed_; }

    TensorStore& params() { return params_; }
    const TensorStore& params() const { return params_; }

    // One output column per sequence. Padding inside a batch never influences
    // the result and neither does batch composition.
    Matrix embed(const std::vector<std::vector<int>>& batch) const;

    Matrix forward(const std::vector<std::vector<int>>& batch, Cache& cache) const;
    // d_out is (output_dim x B); gradients are accumulated into `grads`.
    void backward(const Cache& cache, const Matrix& d_out, TensorStore& grads) const;

private:
    void allocate(std::uint64_t seed);

    ArchitectureSpec spec_;
    int vocab_size_ = 0;
    std::uint64_t seed_ = 0;
    TensorStore params_;
};

struct EmbeddingNetwork::Cache {
    std::vector<std::vector<int>> tokens;
    std::vector<int> lengths;
    int steps = 0;
    int batch = 0;
    std::vector<RowVector> masks;  // per timestep, 1 = valid position

    struct DirCache {
        std::vector<Matrix> gates;   // (4U x B) post-activation [i; f; g; o]
        std::vector<Matrix> tanh_c;  // tanh of the pre-mask cell state
        std::vector<Matrix> c;       // post-mask cell state
        std::vector<Matrix> h;       // post-mask hidden state
    };
    struct RecurrentCache {
        std::vector<Matrix> input;      // layer input, forward time order
        std::vector<Matrix> input_rev;  // reversed valid prefix (BiLSTM only)
        std::vector<Matrix> output;     // layer output sequence
        DirCache fw, bw;
    };
    struct DenseCache {
        Matrix input;
        Matrix pre;
    };

    std::vector<RecurrentCache> recurrent;
    Matrix reduced;  // concatenated final hidden states feeding the dense stack
    std::vector<DenseCache> dense;
    Matrix out;
};

// Loss adapter for gradient checking: given left/right embedding matrices and
// pair targets, returns the mean loss and writes d(loss)/d(embeddings).
using PairLossFn = std::function<double(const Matrix& left, const Matrix& right,
                                        const std::vector<int>& targets,
                                        Matrix* d_left, Matrix* d_right)>;

struct PairBatch {
    std::vector<std::vector<int>> left;
    std::vector<std::vector<int>> right;
    std::vector<int> targets;
};

// Central finite differences over every parameter (or a seeded sample of
// `max_checks` when the model is larger). Returns the max relative error
// |analytic - numeric| / max(|analytic|, |numeric|, eps). The eps floor keeps
// numerically-zero gradients from turning finite-difference noise into large
// relative errors.
double gradient_check(EmbeddingNetwork& model, const PairBatch& batch,
                      const PairLossFn& loss, int max_checks = 4000,
                      double step = 1e-5, double eps = 1e-6);

}  // namespace logsiam
