#include "logsiam/heads.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace logsiam {

using nlohmann::json;

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "knn") return HeadKind::Knn;
    if (name == "logreg") return HeadKind::LogReg;
    if (name == "svm") return HeadKind::Svm;
    if (name == "mlp") return HeadKind::Mlp;
    throw ConfigError("unknown head kind: " + name);
}

std::string head_kind_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::Knn: return "knn";
        case HeadKind::LogReg: return "logreg";
        case HeadKind::Svm: return "svm";
        case HeadKind::Mlp: return "mlp";
    }
    return "?";
}

json Metrics::to_json() const {
    return {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn},
            {"precision", precision}, {"recall", recall},
            {"f1", f1}, {"f1_x100", f1_x100}, {"degenerate", degenerate}};
}

Metrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size())
        throw DataError("prediction/label length mismatch");
    Metrics m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (truth[i] == 1)
            predicted[i] == 1 ? ++m.tp : ++m.fn;
        else
            predicted[i] == 1 ? ++m.fp : ++m.tn;
    }
    if (m.tp + m.fp > 0)
        m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    else
        m.degenerate = true;
    if (m.tp + m.fn > 0)
        m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    else
        m.degenerate = true;
    if (m.precision + m.recall > 0.0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
        m.degenerate = true;
    m.f1_x100 = 100.0 * m.f1;
    return m;
}

MlpHead::MlpHead(int input_dim, int hidden, std::uint64_t seed) {
    auto& W1 = params_.add("head.W1", hidden, input_dim);
    params_.add("head.b1", hidden, 1);
    auto& W2 = params_.add("head.W2", 1, hidden);
    params_.add("head.b2", 1, 1);
    Rng rng1 = make_rng(seed, fnv1a("head.W1"));
    Rng rng2 = make_rng(seed, fnv1a("head.W2"));
    auto fill = [](Matrix& m, Rng& rng, double limit) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
                m(i, j) = (2.0 * u - 1.0) * limit;
            }
    };
    fill(W1, rng1, std::sqrt(1.0 / input_dim));
    fill(W2, rng2, std::sqrt(1.0 / hidden));
}

MlpHead::MlpHead(TensorStore params) : params_(std::move(params)) {
    params_.at("head.W1");
    params_.at("head.W2");
}

int MlpHead::input_dim() const { return static_cast<int>(params_.at("head.W1").cols()); }
int MlpHead::hidden_dim() const { return static_cast<int>(params_.at("head.W1").rows()); }

RowVector MlpHead::forward(const Matrix& x, Cache& cache) const {
    if (x.rows() != input_dim()) throw DataError("head input dimension mismatch");
    cache.input = x;
    cache.pre1 = params_.at("head.W1") * x;
    cache.pre1.colwise() += params_.at("head.b1").col(0);
    Matrix act1 = cache.pre1.array().max(0.0).matrix();
    cache.score = (params_.at("head.W2") * act1).row(0);
    cache.score.array() += params_.at("head.b2")(0, 0);
    return (1.0 + (-cache.score.array()).exp()).inverse().matrix();
}

RowVector MlpHead::prob(const Matrix& x) const {
    Cache cache;
    return forward(x, cache);
}

Matrix MlpHead::backward(const Cache& cache, const RowVector& d_score,
                         TensorStore& grads) const {
    Matrix act1 = cache.pre1.array().max(0.0).matrix();
    grads.at("head.W2").noalias() += d_score * act1.transpose();
    grads.at("head.b2")(0, 0) += d_score.sum();
    Matrix dact1 = params_.at("head.W2").transpose() * d_score;
    Matrix dz1 =
        dact1.cwiseProduct((cache.pre1.array() > 0.0).cast<double>().matrix());
    grads.at("head.W1").noalias() += dz1 * cache.input.transpose();
    grads.at("head.b1").col(0) += dz1.rowwise().sum();
    return params_.at("head.W1").transpose() * dz1;
}

namespace {

void require_two_classes(const std::vector<int>& labels) {
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw DataError("training set must contain both classes");
}

// plain full-batch gradient descent on the standard losses
void fit_logreg(const Matrix& X, const std::vector<int>& y, int iters, double lr,
                Vector& w, double& b) {
    const auto n = X.cols();
    w = Vector::Zero(X.rows());
    b = 0.0;
    Vector target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)];
    for (int it = 0; it < iters; ++it) {
        Vector score = X.transpose() * w;
        score.array() += b;
        Vector p = (1.0 + (-score.array()).exp()).inverse().matrix();
        Vector err = (p - target) / static_cast<double>(n);
        w -= lr * (X * err);
        b -= lr * err.sum();
    }
}

void fit_svm(const Matrix& X, const std::vector<int>& y, int iters, double lr,
             double l2, Vector& w, double& b) {
    const auto n = X.cols();
    w = Vector::Zero(X.rows());
    b = 0.0;
    Vector sign(n);
    for (Eigen::Index i = 0; i < n; ++i)
        sign(i) = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    for (int it = 0; it < iters; ++it) {
        Vector margin = (X.transpose() * w).array() + b;
        margin = margin.cwiseProduct(sign);
        Vector viol = (margin.array() < 1.0).cast<double>().matrix();
        Vector coeff = viol.cwiseProduct(sign) / static_cast<double>(n);
        double step = lr / (1.0 + 0.001 * it);
        w -= step * (l2 * w - X * coeff);
        b += step * coeff.sum();
    }
}

}  // namespace

ClassifierHead ClassifierHead::fit(const HeadConfig& config, const Matrix& X,
                                   const std::vector<int>& labels,
                                   std::uint64_t seed) {
    if (static_cast<std::size_t>(X.cols()) != labels.size())
        throw DataError("vector/label count mismatch");
    if (X.cols() == 0) throw DataError("empty training set");
    require_two_classes(labels);

    ClassifierHead head;
    head.config_ = config;
    head.input_dim_ = static_cast<int>(X.rows());
    switch (config.kind) {
        case HeadKind::Knn:
            if (config.knn_k < 1) throw ConfigError("knn k must be >= 1");
            head.train_vectors_ = X;
            head.train_labels_ = labels;
            break;
        case HeadKind::LogReg: {
            double lr = config.learning_rate > 0 ? config.learning_rate : 0.5;
            fit_logreg(X, labels, config.iterations, lr, head.weights_, head.bias_);
            break;
        }
        case HeadKind::Svm: {
            double lr = config.learning_rate > 0 ? config.learning_rate : 0.5;
            fit_svm(X, labels, config.iterations, lr, config.svm_l2, head.weights_,
                    head.bias_);
            break;
        }
        case HeadKind::Mlp: {
            head.mlp_ = std::make_unique<MlpHead>(head.input_dim_, config.mlp_hidden,
                                                  seed);
            double lr = config.learning_rate > 0 ? config.learning_rate : 1e-3;
            // minibatch Adam on binary cross-entropy
            AdamOptimizer adam(lr);
            const auto n = X.cols();
            std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            Rng rng = make_rng(seed, 0x6d6c70);
            for (int epoch = 0; epoch < config.mlp_epochs; ++epoch) {
                seeded_shuffle(order, rng);
                for (Eigen::Index start = 0; start < n; start += config.mlp_batch) {
                    Eigen::Index bs = std::min<Eigen::Index>(config.mlp_batch, n - start);
                    Matrix xb(X.rows(), bs);
                    RowVector yb(bs);
                    for (Eigen::Index i = 0; i < bs; ++i) {
                        xb.col(i) = X.col(order[static_cast<std::size_t>(start + i)]);
                        yb(i) = labels[static_cast<std::size_t>(
                            order[static_cast<std::size_t>(start + i)])];
                    }
                    MlpHead::Cache cache;
                    RowVector p = head.mlp_->forward(xb, cache);
                    RowVector d_score = (p - yb) / static_cast<double>(bs);
                    TensorStore grads = head.mlp_->params().zeros_like();
                    head.mlp_->backward(cache, d_score, grads);
                    adam.step(head.mlp_->params(), grads);
                }
            }
            break;
        }
    }
    return head;
}

std::vector<double> ClassifierHead::scores(const Matrix& X) const {
    if (static_cast<int>(X.rows()) != input_dim_)
        throw DataError("head input dimension mismatch");
    const auto n = X.cols();
    std::vector<double> out(static_cast<std::size_t>(n));
    switch (config_.kind) {
        case HeadKind::Knn: {
            const int k = std::min<int>(config_.knn_k,
                                        static_cast<int>(train_vectors_.cols()));
            Vector train_sq = train_vectors_.colwise().squaredNorm();
            for (Eigen::Index q = 0; q < n; ++q) {
                // squared Euclidean distances to every stored vector
                Vector d = train_sq - 2.0 * (train_vectors_.transpose() * X.col(q));
                std::vector<int> idx(static_cast<std::size_t>(d.size()));
                std::iota(idx.begin(), idx.end(), 0);
                // neighbor order ties broken by training index
                std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                                  [&](int a, int bb) {
                                      if (d(a) != d(bb)) return d(a) < d(bb);
                                      return a < bb;
                                  });
                int votes = 0;
                for (int i = 0; i < k; ++i)
                    votes += train_labels_[static_cast<std::size_t>(idx[i])];
                out[static_cast<std::size_t>(q)] =
                    static_cast<double>(votes) / static_cast<double>(k);
            }
            break;
        }
        case HeadKind::LogReg:
        case HeadKind::Svm: {
            Vector score = X.transpose() * weights_;
            score.array() += bias_;
            for (Eigen::Index i = 0; i < n; ++i) {
                double s = score(i);
                out[static_cast<std::size_t>(i)] =
                    config_.kind == HeadKind::LogReg ? 1.0 / (1.0 + std::exp(-s)) : s;
            }
            break;
        }
        case HeadKind::Mlp: {
            RowVector p = mlp_->prob(X);
            for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = p(i);
            break;
        }
    }
    return out;
}

std::vector<int> ClassifierHead::predict(const Matrix& X) const {
    auto s = scores(X);
    std::vector<int> labels(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        switch (config_.kind) {
            case HeadKind::Knn:
                // majority vote; exact tie goes to the lower class index
                labels[i] = s[i] > 0.5 ? 1 : 0;
                break;
            case HeadKind::Svm:
                labels[i] = s[i] >= 0.0 ? 1 : 0;
                break;
            default:
                labels[i] = s[i] >= 0.5 ? 1 : 0;  // threshold convention: 0.5 -> 1
        }
    }
    return labels;
}

json ClassifierHead::to_json() const {
    json j;
    j["kind"] = head_kind_name(config_.kind);
    j["input_dim"] = input_dim_;
    switch (config_.kind) {
        case HeadKind::Knn: {
            j["k"] = config_.knn_k;
            j["labels"] = train_labels_;
            json rows = json::array();
            for (Eigen::Index c = 0; c < train_vectors_.cols(); ++c) {
                json col = json::array();
                for (Eigen::Index r = 0; r < train_vectors_.rows(); ++r)
                    col.push_back(train_vectors_(r, c));
                rows.push_back(std::move(col));
            }
            j["vectors"] = std::move(rows);
            break;
        }
        case HeadKind::LogReg:
        case HeadKind::Svm: {
            json w = json::array();
            for (Eigen::Index i = 0; i < weights_.size(); ++i) w.push_back(weights_(i));
            j["weights"] = std::move(w);
            j["bias"] = bias_;
            break;
        }
        case HeadKind::Mlp: {
            for (const auto& t : mlp_->params().entries()) {
                json rows = json::array();
                for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
                    json row = json::array();
                    for (Eigen::Index c = 0; c < t.value.cols(); ++c)
                        row.push_back(t.value(r, c));
                    rows.push_back(std::move(row));
                }
                j["tensors"][t.name] = std::move(rows);
            }
            j["hidden"] = mlp_->hidden_dim();
            break;
        }
    }
    return j;
}

ClassifierHead ClassifierHead::from_json(const json& j) {
    ClassifierHead head;
    head.config_.kind = head_kind_from_name(j.at("kind").get<std::string>());
    head.input_dim_ = j.at("input_dim").get<int>();
    switch (head.config_.kind) {
        case HeadKind::Knn: {
            head.config_.knn_k = j.at("k").get<int>();
            head.train_labels_ = j.at("labels").get<std::vector<int>>();
            const auto& vecs = j.at("vectors");
            head.train_vectors_.resize(head.input_dim_,
                                       static_cast<Eigen::Index>(vecs.size()));
            for (std::size_t c = 0; c < vecs.size(); ++c)
                for (Eigen::Index r = 0; r < head.train_vectors_.rows(); ++r)
                    head.train_vectors_(r, static_cast<Eigen::Index>(c)) =
                        vecs[c][static_cast<std::size_t>(r)].get<double>();
            break;
        }
        case HeadKind::LogReg:
        case HeadKind::Svm: {
            auto w = j.at("weights").get<std::vector<double>>();
            head.weights_ = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
            head.bias_ = j.at("bias").get<double>();
            break;
        }
        case HeadKind::Mlp: {
            int hidden = j.at("hidden").get<int>();
            TensorStore params;
            params.add("head.W1", hidden, head.input_dim_);
            params.add("head.b1", hidden, 1);
            params.add("head.W2", 1, hidden);
            params.add("head.b2", 1, 1);
            for (auto& t : params.entries()) {
                const auto& rows = j.at("tensors").at(t.name);
                for (Eigen::Index r = 0; r < t.value.rows(); ++r)
                    for (Eigen::Index c = 0; c < t.value.cols(); ++c)
                        t.value(r, c) = rows[static_cast<std::size_t>(r)]
                                            [static_cast<std::size_t>(c)].get<double>();
            }
            head.mlp_ = std::make_unique<MlpHead>(std::move(params));
            head.config_.mlp_hidden = hidden;
            break;
        }
    }
    return head;
}

ClassifierHead make_mlp_classifier(MlpHead mlp, HeadConfig config) {
    ClassifierHead head;
    config.kind = HeadKind::Mlp;
    head.config_ = config;
    head.input_dim_ = mlp.input_dim();
    head.mlp_ = std::make_unique<MlpHead>(std::move(mlp));
    return head;
}

}  // namespace logsiam
