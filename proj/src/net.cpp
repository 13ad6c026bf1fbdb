#include "logsiam/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace logsiam {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::TokenEmbedding: return "token-embedding";
        case LayerKind::Lstm: return "recurrent-LSTM";
        case LayerKind::BiLstm: return "recurrent-BiLSTM";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

const char* act_name(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky-relu";
        case Activation::Linear: return "linear";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& s) {
    if (s == "token-embedding") return LayerKind::TokenEmbedding;
    if (s == "recurrent-LSTM") return LayerKind::Lstm;
    if (s == "recurrent-BiLSTM") return LayerKind::BiLstm;
    if (s == "dense") return LayerKind::Dense;
    throw ConfigError("unknown layer kind: " + s);
}

Activation act_from_name(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky-relu") return Activation::LeakyRelu;
    if (s == "linear" || s == "none") return Activation::Linear;
    throw ConfigError("unknown activation: " + s);
}

Matrix apply_activation(const Matrix& z, Activation act) {
    switch (act) {
        case Activation::Tanh: return z.array().tanh().matrix();
        case Activation::Relu: return z.array().max(0.0).matrix();
        case Activation::LeakyRelu:
            return z.array().max(kLeakyReluSlope * z.array()).matrix();
        case Activation::Linear: return z;
    }
    return z;
}

Matrix activation_grad(const Matrix& z, Activation act) {
    switch (act) {
        case Activation::Tanh: {
            Matrix t = z.array().tanh();
            return (1.0 - t.array().square()).matrix();
        }
        case Activation::Relu:
            return (z.array() > 0.0).cast<double>().matrix();
        case Activation::LeakyRelu:
            return (z.array() > 0.0)
                .select(Matrix::Ones(z.rows(), z.cols()),
                        Matrix::Constant(z.rows(), z.cols(), kLeakyReluSlope));
        case Activation::Linear:
            return Matrix::Ones(z.rows(), z.cols());
    }
    return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

void ArchitectureSpec::validate() const {
    if (layers.size() < 3)
        throw ConfigError("spec needs at least embedding, recurrent, and dense layers");
    if (layers.front().kind != LayerKind::TokenEmbedding)
        throw ConfigError("first layer must be token-embedding");
    if (layers.back().kind != LayerKind::Dense ||
        layers.back().activation != Activation::Linear)
        throw ConfigError("last layer must be dense with linear activation");
    bool seen_dense = false;
    int recurrent = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.units <= 0) throw ConfigError("layer units must be positive");
        if (l.kind == LayerKind::TokenEmbedding && i != 0)
            throw ConfigError("token-embedding only allowed as the first layer");
        if (l.kind == LayerKind::Dense) seen_dense = true;
        if (l.kind == LayerKind::Lstm || l.kind == LayerKind::BiLstm) {
            ++recurrent;
            if (seen_dense)
                throw ConfigError("recurrent layers must precede dense layers");
            if (l.kind == LayerKind::BiLstm && l.units % 2 != 0)
                throw ConfigError("BiLSTM units must be even (units/2 per direction)");
        }
    }
    if (recurrent == 0) throw ConfigError("spec needs at least one recurrent layer");
}

ArchitectureSpec best_performer_spec() {
    ArchitectureSpec s;
    s.name = "best-performer";
    s.layers = {
        {LayerKind::TokenEmbedding, 11, Activation::Linear},
        {LayerKind::Lstm, 192, Activation::Tanh},
        {LayerKind::Lstm, 192, Activation::Tanh},
        {LayerKind::Lstm, 64, Activation::Tanh},
        {LayerKind::Dense, 348, Activation::Relu},
        {LayerKind::Dense, 640, Activation::Relu},
        {LayerKind::Dense, 64, Activation::Linear},
    };
    return s;
}

ArchitectureSpec low_cost_spec() {
    ArchitectureSpec s;
    s.name = "low-cost";
    s.layers = {
        {LayerKind::TokenEmbedding, 24, Activation::Linear},
        {LayerKind::BiLstm, 64, Activation::Tanh},
        {LayerKind::Dense, 64, Activation::LeakyRelu},
        {LayerKind::Dense, 64, Activation::LeakyRelu},
        {LayerKind::Dense, 64, Activation::Linear},
    };
    return s;
}

nlohmann::json spec_to_json(const ArchitectureSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        layers.push_back({{"kind", kind_name(l.kind)},
                          {"units", l.units},
                          {"activation", act_name(l.activation)}});
    }
    return {{"name", spec.name}, {"layers", layers}};
}

ArchitectureSpec spec_from_json(const nlohmann::json& j) {
    ArchitectureSpec s;
    s.name = j.value("name", "custom");
    for (const auto& l : j.at("layers")) {
        s.layers.push_back({kind_from_name(l.at("kind").get<std::string>()),
                            l.at("units").get<int>(),
                            act_from_name(l.at("activation").get<std::string>())});
    }
    s.validate();
    return s;
}

ArchitectureSpec resolve_spec(const std::string& arch) {
    if (arch == "best-performer") return best_performer_spec();
    if (arch == "low-cost") return low_cost_spec();
    std::ifstream in(arch);
    if (!in) throw ConfigError("unknown architecture (expected best-performer, "
                               "low-cost, or a spec file path): " + arch);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad spec file " + arch + ": " + e.what());
    }
    return spec_from_json(j);
}

Matrix& TensorStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw ConfigError("duplicate tensor: " + name);
    index_.emplace(name, tensors_.size());
    tensors_.push_back({name, Matrix::Zero(rows, cols)});
    return tensors_.back().value;
}

Matrix& TensorStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing tensor: " + name);
    return tensors_[it->second].value;
}

const Matrix& TensorStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing tensor: " + name);
    return tensors_[it->second].value;
}

std::uint64_t TensorStore::scalar_count() const {
    std::uint64_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::uint64_t>(t.value.size());
    return n;
}

void TensorStore::set_zero() {
    for (auto& t : tensors_) t.value.setZero();
}

TensorStore TensorStore::zeros_like() const {
    TensorStore out;
    for (const auto& t : tensors_) out.add(t.name, t.value.rows(), t.value.cols());
    return out;
}

void AdamOptimizer::step(TensorStore& params, const TensorStore& grads) {
    if (!initialized_) {
        m_ = params.zeros_like();
        v_ = params.zeros_like();
        initialized_ = true;
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
        const auto& g = grads.entries()[i].value;
        auto& m = m_.entries()[i].value;
        auto& v = v_.entries()[i].value;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = (beta2_ * v.array() + (1.0 - beta2_) * g.array().square()).matrix();
        params.entries()[i].value.array() -=
            lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
}

std::uint64_t count_params(const ArchitectureSpec& spec, int vocab_size) {
    spec.validate();
    std::uint64_t total = 0;
    std::uint64_t in = 0;
    for (const auto& l : spec.layers) {
        auto units = static_cast<std::uint64_t>(l.units);
        switch (l.kind) {
            case LayerKind::TokenEmbedding:
                total += static_cast<std::uint64_t>(vocab_size) * units;
                break;
            case LayerKind::Lstm:
                total += 4 * ((in + units) * units + units);
                break;
            case LayerKind::BiLstm: {
                std::uint64_t u = units / 2;
                total += 2 * 4 * ((in + u) * u + u);
                break;
            }
            case LayerKind::Dense:
                total += in * units + units;
                break;
        }
        in = units;
    }
    return total;
}

std::uint64_t count_flops(const ArchitectureSpec& spec, int seq_len) {
    spec.validate();
    std::uint64_t per_step = 0, dense = 0;
    std::uint64_t in = 0;
    for (const auto& l : spec.layers) {
        auto units = static_cast<std::uint64_t>(l.units);
        switch (l.kind) {
            case LayerKind::TokenEmbedding:
                break;  // table lookup
            case LayerKind::Lstm:
                per_step += 4 * units * (in + units);
                break;
            case LayerKind::BiLstm: {
                std::uint64_t u = units / 2;
                per_step += 2 * 4 * u * (in + u);
                break;
            }
            case LayerKind::Dense:
                dense += in * units;
                break;
        }
        in = units;
    }
    return 2 * (per_step * static_cast<std::uint64_t>(seq_len) + dense);
}

EmbeddingNetwork::EmbeddingNetwork(ArchitectureSpec spec, int vocab_size,
                                   std::uint64_t seed)
    : spec_(std::move(spec)), vocab_size_(vocab_size), seed_(seed) {
    spec_.validate();
    if (vocab_size_ < 3)
        throw ConfigError("vocab size must be >= 3 (two reserved rows + tokens)");
    allocate(seed);
}

EmbeddingNetwork::EmbeddingNetwork(ArchitectureSpec spec, int vocab_size,
                                   TensorStore params)
    : spec_(std::move(spec)), vocab_size_(vocab_size), params_(std::move(params)) {
    spec_.validate();
    if (params_.scalar_count() != count_params(spec_, vocab_size_))
        throw DataError("parameter tensors do not match the architecture spec");
}

namespace {

void init_uniform(Matrix& m, std::uint64_t seed, const std::string& name,
                  double limit) {
    Rng rng = make_rng(seed, fnv1a(name));
    // 53-bit mantissa draw in [-limit, limit]
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
            m(i, j) = (2.0 * u - 1.0) * limit;
        }
}

void init_lstm_dir(TensorStore& params, std::uint64_t seed, const std::string& prefix,
                   int in, int units) {
    auto& W = params.add(prefix + ".W", 4 * units, in);
    auto& R = params.add(prefix + ".R", 4 * units, units);
    auto& b = params.add(prefix + ".b", 4 * units, 1);
    init_uniform(W, seed, prefix + ".W", std::sqrt(1.0 / in));
    init_uniform(R, seed, prefix + ".R", std::sqrt(1.0 / units));
    b.setZero();
    b.block(units, 0, units, 1).setOnes();  // forget gate bias starts at 1
}

}  // namespace

void EmbeddingNetwork::allocate(std::uint64_t seed) {
    int in = 0;
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
        const auto& l = spec_.layers[li];
        std::string prefix = "layer" + std::to_string(li);
        switch (l.kind) {
            case LayerKind::TokenEmbedding: {
                auto& E = params_.add(prefix + ".embedding", vocab_size_, l.units);
                init_uniform(E, seed, prefix + ".embedding", std::sqrt(1.0 / l.units));
                break;
            }
            case LayerKind::Lstm:
                init_lstm_dir(params_, seed, prefix + ".lstm", in, l.units);
                break;
            case LayerKind::BiLstm:
                init_lstm_dir(params_, seed, prefix + ".bilstm.fw", in, l.units / 2);
                init_lstm_dir(params_, seed, prefix + ".bilstm.bw", in, l.units / 2);
                break;
            case LayerKind::Dense: {
                auto& W = params_.add(prefix + ".dense.W", l.units, in);
                auto& b = params_.add(prefix + ".dense.b", l.units, 1);
                init_uniform(W, seed, prefix + ".dense.W", std::sqrt(1.0 / in));
                b.setZero();
                break;
            }
        }
        in = l.units;
    }
}

namespace {

using DirCache = EmbeddingNetwork::Cache::DirCache;

// One masked LSTM scan. At padded positions the hidden and cell states carry
// forward unchanged, so the final column state equals the state at each
// sequence's last valid step.
void lstm_scan(const Matrix& W, const Matrix& R, const Matrix& b,
               const std::vector<Matrix>& X, const std::vector<RowVector>& masks,
               DirCache& cache) {
    const int T = static_cast<int>(X.size());
    const auto U = R.cols();
    const auto B = T > 0 ? X[0].cols() : 0;
    cache.gates.resize(T);
    cache.tanh_c.resize(T);
    cache.c.resize(T);
    cache.h.resize(T);
    Matrix h_prev = Matrix::Zero(U, B);
    Matrix c_prev = Matrix::Zero(U, B);
    for (int t = 0; t < T; ++t) {
        Matrix z = W * X[t] + R * h_prev;
        z.colwise() += b.col(0);
        // rows: [i; f; g; o]; gates are sigmoid, the candidate g is tanh
        Matrix& g = cache.gates[t];
        g = (1.0 + (-z.array()).exp()).inverse().matrix();
        g.block(2 * U, 0, U, B) = z.block(2 * U, 0, U, B).array().tanh();
        Matrix c_raw = g.block(U, 0, U, B).cwiseProduct(c_prev) +
                       g.topRows(U).cwiseProduct(g.block(2 * U, 0, U, B));
        cache.tanh_c[t] = c_raw.array().tanh();
        Matrix h_raw = g.bottomRows(U).cwiseProduct(cache.tanh_c[t]);
        const auto& m = masks[t];
        cache.c[t] = c_prev + (c_raw - c_prev) * m.asDiagonal();
        cache.h[t] = h_prev + (h_raw - h_prev) * m.asDiagonal();
        c_prev = cache.c[t];
        h_prev = cache.h[t];
    }
}

void lstm_scan_backward(const Matrix& W, const Matrix& R,
                        const std::vector<Matrix>& X,
                        const std::vector<RowVector>& masks, const DirCache& cache,
                        const std::vector<Matrix>* dH_seq, const Matrix* dh_final,
                        Matrix& dW, Matrix& dR, Matrix& db,
                        std::vector<Matrix>& dX) {
    const int T = static_cast<int>(X.size());
    const auto U = R.cols();
    const auto B = T > 0 ? X[0].cols() : 0;
    dX.assign(T, Matrix());
    Matrix dh_carry = dh_final ? *dh_final : Matrix::Zero(U, B);
    Matrix dc_carry = Matrix::Zero(U, B);
    for (int t = T - 1; t >= 0; --t) {
        Matrix dh_acc = dh_carry;
        if (dH_seq) dh_acc += (*dH_seq)[t];
        const auto& m = masks[t];
        // split flows: valid columns go through the cell, padded columns pass
        // straight to the previous state
        Matrix dh_valid = dh_acc * m.asDiagonal();
        Matrix dh_pass = dh_acc - dh_valid;
        Matrix dc_valid = dc_carry * m.asDiagonal();
        Matrix dc_pass = dc_carry - dc_valid;

        const Matrix& g = cache.gates[t];
        auto gi = g.topRows(U);
        auto gf = g.block(U, 0, U, B);
        auto gg = g.block(2 * U, 0, U, B);
        auto go = g.bottomRows(U);
        const Matrix& tc = cache.tanh_c[t];
        Matrix c_prev = t > 0 ? cache.c[t - 1] : Matrix::Zero(U, B);
        Matrix h_prev = t > 0 ? cache.h[t - 1] : Matrix::Zero(U, B);

        Matrix d_o = dh_valid.cwiseProduct(tc);
        Matrix dc_raw =
            dc_valid + dh_valid.cwiseProduct(go).cwiseProduct(
                           (1.0 - tc.array().square()).matrix());
        Matrix d_i = dc_raw.cwiseProduct(gg);
        Matrix d_f = dc_raw.cwiseProduct(c_prev);
        Matrix d_g = dc_raw.cwiseProduct(gi);

        Matrix dz(4 * U, B);
        dz.topRows(U) = (d_i.array() * gi.array() * (1.0 - gi.array())).matrix();
        dz.block(U, 0, U, B) = (d_f.array() * gf.array() * (1.0 - gf.array())).matrix();
        dz.block(2 * U, 0, U, B) = (d_g.array() * (1.0 - gg.array().square())).matrix();
        dz.bottomRows(U) = (d_o.array() * go.array() * (1.0 - go.array())).matrix();

        dW.noalias() += dz * X[t].transpose();
        dR.noalias() += dz * h_prev.transpose();
        db.col(0) += dz.rowwise().sum();
        dX[t].noalias() = W.transpose() * dz;

        dh_carry.noalias() = R.transpose() * dz;
        dh_carry += dh_pass;
        dc_carry = dc_raw.cwiseProduct(gf) + dc_pass;
    }
}

// Per-column reversal of the valid prefix; padded positions become zero.
std::vector<Matrix> reverse_valid(const std::vector<Matrix>& X,
                                  const std::vector<int>& lengths) {
    std::vector<Matrix> out(X.size());
    for (std::size_t t = 0; t < X.size(); ++t)
        out[t] = Matrix::Zero(X[t].rows(), X[t].cols());
    for (std::size_t b = 0; b < lengths.size(); ++b) {
        int len = lengths[b];
        for (int t = 0; t < len; ++t)
            out[t].col(static_cast<Eigen::Index>(b)) =
                X[len - 1 - t].col(static_cast<Eigen::Index>(b));
    }
    return out;
}

}  // namespace

Matrix EmbeddingNetwork::forward(const std::vector<std::vector<int>>& batch,
                                 Cache& cache) const {
    if (batch.empty()) throw DataError("empty batch");
    cache.tokens = batch;
    cache.batch = static_cast<int>(batch.size());
    cache.lengths.resize(batch.size());
    int T = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].empty()) throw DataError("empty sequence in batch");
        for (int tok : batch[b])
            if (tok < 0 || tok >= vocab_size_)
                throw DataError("token index " + std::to_string(tok) +
                                " out of range for vocab size " +
                                std::to_string(vocab_size_));
        cache.lengths[b] = static_cast<int>(batch[b].size());
        T = std::max(T, cache.lengths[b]);
    }
    cache.steps = T;
    const int B = cache.batch;

    cache.masks.resize(T);
    for (int t = 0; t < T; ++t) {
        cache.masks[t].resize(B);
        for (int b = 0; b < B; ++b)
            cache.masks[t](b) = t < cache.lengths[b] ? 1.0 : 0.0;
    }

    // token embedding
    const Matrix& E = params_.at("layer0.embedding");
    std::vector<Matrix> seq(T);
    for (int t = 0; t < T; ++t) {
        seq[t] = Matrix::Zero(E.cols(), B);
        for (int b = 0; b < B; ++b)
            if (t < cache.lengths[b])
                seq[t].col(b) = E.row(batch[b][t]).transpose();
    }

    cache.recurrent.clear();
    cache.dense.clear();

    Matrix final_state;
    for (std::size_t li = 1; li < spec_.layers.size(); ++li) {
        const auto& l = spec_.layers[li];
        std::string prefix = "layer" + std::to_string(li);
        if (l.kind == LayerKind::Lstm || l.kind == LayerKind::BiLstm) {
            cache.recurrent.emplace_back();
            auto& rc = cache.recurrent.back();
            rc.input = std::move(seq);
            if (l.kind == LayerKind::Lstm) {
                lstm_scan(params_.at(prefix + ".lstm.W"), params_.at(prefix + ".lstm.R"),
                          params_.at(prefix + ".lstm.b"), rc.input, cache.masks, rc.fw);
                rc.output = rc.fw.h;
                final_state = rc.fw.h.empty() ? Matrix() : rc.fw.h.back();
            } else {
                const int U = l.units / 2;
                lstm_scan(params_.at(prefix + ".bilstm.fw.W"),
                          params_.at(prefix + ".bilstm.fw.R"),
                          params_.at(prefix + ".bilstm.fw.b"), rc.input, cache.masks,
                          rc.fw);
                rc.input_rev = reverse_valid(rc.input, cache.lengths);
                lstm_scan(params_.at(prefix + ".bilstm.bw.W"),
                          params_.at(prefix + ".bilstm.bw.R"),
                          params_.at(prefix + ".bilstm.bw.b"), rc.input_rev, cache.masks,
                          rc.bw);
                std::vector<Matrix> bw_orig = reverse_valid(rc.bw.h, cache.lengths);
                rc.output.resize(T);
                for (int t = 0; t < T; ++t) {
                    rc.output[t].resize(2 * U, B);
                    rc.output[t].topRows(U) = rc.fw.h[t];
                    rc.output[t].bottomRows(U) = bw_orig[t];
                }
                final_state.resize(2 * U, B);
                final_state.topRows(U) = rc.fw.h.back();
                final_state.bottomRows(U) = rc.bw.h.back();
            }
            seq = rc.output;
        } else if (l.kind == LayerKind::Dense) {
            if (cache.dense.empty()) cache.reduced = final_state;
            Matrix input = cache.dense.empty() ? cache.reduced
                                               : apply_activation(cache.dense.back().pre,
                                                                  spec_.layers[li - 1].activation);
            Cache::DenseCache dc;
            dc.input = std::move(input);
            dc.pre = params_.at(prefix + ".dense.W") * dc.input;
            dc.pre.colwise() += params_.at(prefix + ".dense.b").col(0);
            cache.dense.push_back(std::move(dc));
        }
    }
    cache.out = apply_activation(cache.dense.back().pre, spec_.layers.back().activation);
    return cache.out;
}

Matrix EmbeddingNetwork::embed(const std::vector<std::vector<int>>& batch) const {
    Cache cache;
    return forward(batch, cache);
}

void EmbeddingNetwork::backward(const Cache& cache, const Matrix& d_out,
                                TensorStore& grads) const {
    // dense stack
    Matrix da = d_out;
    std::size_t dense_base = spec_.layers.size() - cache.dense.size();
    for (std::size_t di = cache.dense.size(); di-- > 0;) {
        const auto& dc = cache.dense[di];
        const auto& l = spec_.layers[dense_base + di];
        std::string prefix = "layer" + std::to_string(dense_base + di);
        Matrix dz = da.cwiseProduct(activation_grad(dc.pre, l.activation));
        grads.at(prefix + ".dense.W").noalias() += dz * dc.input.transpose();
        grads.at(prefix + ".dense.b").col(0) += dz.rowwise().sum();
        da.noalias() = params_.at(prefix + ".dense.W").transpose() * dz;
    }

    // da now holds the gradient at the concatenated final recurrent state
    Matrix d_final = da;
    std::vector<Matrix> dH;  // gradient on the output sequence of the layer below
    bool have_dH = false;

    std::size_t ri = cache.recurrent.size();
    for (std::size_t li = dense_base; li-- > 1;) {
        const auto& l = spec_.layers[li];
        std::string prefix = "layer" + std::to_string(li);
        const auto& rc = cache.recurrent[--ri];
        std::vector<Matrix> dX;
        if (l.kind == LayerKind::Lstm) {
            lstm_scan_backward(params_.at(prefix + ".lstm.W"),
                               params_.at(prefix + ".lstm.R"), rc.input, cache.masks,
                               rc.fw, have_dH ? &dH : nullptr,
                               have_dH ? nullptr : &d_final,
                               grads.at(prefix + ".lstm.W"),
                               grads.at(prefix + ".lstm.R"),
                               grads.at(prefix + ".lstm.b"), dX);
        } else {
            const int U = l.units / 2;
            std::vector<Matrix> dH_fw, dH_bw_orig;
            Matrix dfin_fw, dfin_bw;
            if (have_dH) {
                dH_fw.resize(cache.steps);
                dH_bw_orig.resize(cache.steps);
                for (int t = 0; t < cache.steps; ++t) {
                    dH_fw[t] = dH[t].topRows(U);
                    dH_bw_orig[t] = dH[t].bottomRows(U);
                }
            } else {
                dfin_fw = d_final.topRows(U);
                dfin_bw = d_final.bottomRows(U);
            }
            std::vector<Matrix> dX_fw, dX_bw;
            lstm_scan_backward(params_.at(prefix + ".bilstm.fw.W"),
                               params_.at(prefix + ".bilstm.fw.R"), rc.input,
                               cache.masks, rc.fw, have_dH ? &dH_fw : nullptr,
                               have_dH ? nullptr : &dfin_fw,
                               grads.at(prefix + ".bilstm.fw.W"),
                               grads.at(prefix + ".bilstm.fw.R"),
                               grads.at(prefix + ".bilstm.fw.b"), dX_fw);
            std::vector<Matrix> dH_bw_scan;
            if (have_dH) dH_bw_scan = reverse_valid(dH_bw_orig, cache.lengths);
            lstm_scan_backward(params_.at(prefix + ".bilstm.bw.W"),
                               params_.at(prefix + ".bilstm.bw.R"), rc.input_rev,
                               cache.masks, rc.bw, have_dH ? &dH_bw_scan : nullptr,
                               have_dH ? nullptr : &dfin_bw,
                               grads.at(prefix + ".bilstm.bw.W"),
                               grads.at(prefix + ".bilstm.bw.R"),
                               grads.at(prefix + ".bilstm.bw.b"), dX_bw);
            std::vector<Matrix> dX_bw_orig = reverse_valid(dX_bw, cache.lengths);
            dX.resize(cache.steps);
            for (int t = 0; t < cache.steps; ++t) dX[t] = dX_fw[t] + dX_bw_orig[t];
        }
        dH = std::move(dX);
        have_dH = true;
    }

    // token embedding: scatter-add over valid positions
    Matrix& dE = grads.at("layer0.embedding");
    for (int b = 0; b < cache.batch; ++b)
        for (int t = 0; t < cache.lengths[b]; ++t)
            dE.row(cache.tokens[b][t]) += dH[t].col(b).transpose();
}

double gradient_check(EmbeddingNetwork& model, const PairBatch& batch,
                      const PairLossFn& loss, int max_checks, double step,
                      double eps) {
    auto eval = [&](Matrix* d_left, Matrix* d_right, EmbeddingNetwork::Cache* cl,
                    EmbeddingNetwork::Cache* cr) {
        EmbeddingNetwork::Cache local_l, local_r;
        auto& cache_l = cl ? *cl : local_l;
        auto& cache_r = cr ? *cr : local_r;
        Matrix xl = model.forward(batch.left, cache_l);
        Matrix xr = model.forward(batch.right, cache_r);
        return loss(xl, xr, batch.targets, d_left, d_right);
    };

    EmbeddingNetwork::Cache cache_l, cache_r;
    Matrix d_left, d_right;
    double base = eval(&d_left, &d_right, &cache_l, &cache_r);
    if (!std::isfinite(base)) throw NumericError("non-finite loss in gradient check");

    TensorStore grads = model.params().zeros_like();
    model.backward(cache_l, d_left, grads);
    model.backward(cache_r, d_right, grads);

    // enumerate (tensor, element) coordinates, sample if the model is large
    std::vector<std::pair<std::size_t, Eigen::Index>> coords;
    for (std::size_t ti = 0; ti < model.params().entries().size(); ++ti)
        for (Eigen::Index k = 0; k < model.params().entries()[ti].value.size(); ++k)
            coords.push_back({ti, k});
    if (static_cast<int>(coords.size()) > max_checks) {
        Rng rng = make_rng(0x67726164, coords.size());
        seeded_shuffle(coords, rng);
        coords.resize(static_cast<std::size_t>(max_checks));
    }

    double max_rel = 0.0;
    for (auto [ti, k] : coords) {
        double* p = model.params().entries()[ti].value.data() + k;
        double orig = *p;
        double h = std::max(step, step * std::abs(orig));
        *p = orig + h;
        double up = eval(nullptr, nullptr, nullptr, nullptr);
        *p = orig - h;
        double down = eval(nullptr, nullptr, nullptr, nullptr);
        *p = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("non-finite loss in gradient check");
        double numeric = (up - down) / (2.0 * h);
        double analytic = grads.entries()[ti].value.data()[k];
        double rel = std::abs(analytic - numeric) /
                     std::max({std::abs(analytic), std::abs(numeric), eps});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace logsiam
