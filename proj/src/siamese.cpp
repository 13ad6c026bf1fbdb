#include "logsiam/siamese.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

namespace logsiam {

namespace {

constexpr double kLogClamp = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamped(double p) {
    return std::min(std::max(p, kLogClamp), 1.0 - kLogClamp);
}

inline double xent(double sim, int target) {
    double s = clamped(sim);
    return target == 1 ? -std::log(s) : -std::log(1.0 - s);
}

}  // namespace

double similarity(const Vector& x1, const Vector& x2) {
    if (x1.size() != x2.size())
        throw DataError("similarity: embedding dimensions differ");
    return clamped(sigmoid(x1.dot(x2)));
}

double pair_loss(const Vector& x1, const Vector& x2, int target) {
    if (target != 0 && target != 1)
        throw ConfigError("pair target must be 0 or 1");
    return xent(similarity(x1, x2), target);
}

double pair_loss_batch(const Matrix& left, const Matrix& right,
                       const std::vector<int>& targets, Matrix* d_left,
                       Matrix* d_right) {
    if (left.rows() != right.rows() || left.cols() != right.cols())
        throw DataError("pair batch shape mismatch");
    if (static_cast<std::size_t>(left.cols()) != targets.size())
        throw DataError("pair batch target count mismatch");
    const auto n = left.cols();
    if (n == 0) throw DataError("empty pair batch");
    if (d_left) d_left->setZero(left.rows(), n);
    if (d_right) d_right->setZero(right.rows(), n);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = sigmoid(left.col(i).dot(right.col(i)));
        total += xent(s, targets[static_cast<std::size_t>(i)]);
        if (d_left || d_right) {
            double err = (s - targets[static_cast<std::size_t>(i)]) * inv_n;
            if (d_left) d_left->col(i) = err * right.col(i);
            if (d_right) d_right->col(i) = err * left.col(i);
        }
    }
    return total * inv_n;
}

double all_pairs_loss(const Matrix& embeddings, const std::vector<int>& labels) {
    const auto n = embeddings.cols();
    if (n < 2) throw DataError("all-pairs loss needs at least 2 sequences");
    Matrix dots = embeddings.transpose() * embeddings;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            int target = labels[static_cast<std::size_t>(i)] ==
                                 labels[static_cast<std::size_t>(j)]
                             ? 1
                             : 0;
            total += xent(sigmoid(dots(i, j)), target);
        }
    return total / static_cast<double>(n * n - n);
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (hybrid_lambda < 0.0) throw ConfigError("hybrid lambda must be >= 0");
    if (pairgen.algorithm == PairAlgorithm::KPOne && pairgen.k < 1)
        throw ConfigError("KPOne requires k >= 1");
}

nlohmann::json TrainHistory::to_json() const {
    nlohmann::json j;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["wall_seconds"] = wall_seconds;
    j["best_epoch"] = best_epoch;
    if (std::isfinite(test_loss)) j["test_loss"] = test_loss;
    return j;
}

EncodedDataset EncodedDataset::from(const LabeledDataset& d, const Vocabulary& v) {
    EncodedDataset out;
    out.seqs.reserve(d.size());
    out.labels.reserve(d.size());
    for (const auto& s : d.sequences) {
        out.seqs.push_back(encode(s, v));
        out.labels.push_back(s.label);
    }
    return out;
}

Matrix embed_dataset(const EmbeddingNetwork& model,
                     const std::vector<std::vector<int>>& seqs, int batch_size) {
    if (seqs.empty()) throw DataError("cannot embed an empty dataset");
    Matrix out(model.output_dim(), static_cast<Eigen::Index>(seqs.size()));
    for (std::size_t start = 0; start < seqs.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(seqs.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::vector<int>> batch(seqs.begin() + static_cast<long>(start),
                                            seqs.begin() + static_cast<long>(end));
        out.middleCols(static_cast<Eigen::Index>(start),
                       static_cast<Eigen::Index>(end - start)) = model.embed(batch);
    }
    return out;
}

namespace {

// Streams one epoch of pairs in seeded order. KPOne materializes and
// shuffles; All streams block-by-block so the full pair set never exists in
// memory at once.
class EpochPairSource {
public:
    EpochPairSource(const EncodedDataset& data, const PairGenConfig& cfg, int epoch)
        : data_(data), cfg_(cfg),
          epoch_seed_(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch))) {
        if (cfg_.algorithm == PairAlgorithm::KPOne) {
            buffer_ = generate_kpone_from_labels(data_.labels, cfg_.k, epoch_seed_);
            Rng rng = make_rng(epoch_seed_, 0x73687566);
            seeded_shuffle(buffer_, rng);
            pos_ = 0;
        } else {
            n_ = data_.size();
            if (n_ < 2) throw DataError("All pair generation needs at least 2 sequences");
            block_rng_ = make_rng(epoch_seed_, 0x73687566);
            refill();
        }
    }

    bool next(TrainingPair& out) {
        if (pos_ < buffer_.size()) {
            out = buffer_[pos_++];
            return true;
        }
        if (cfg_.algorithm == PairAlgorithm::KPOne) return false;
        refill();
        if (buffer_.empty()) return false;
        out = buffer_[pos_++];
        return true;
    }

private:
    void refill() {
        buffer_.clear();
        pos_ = 0;
        constexpr std::size_t kBlock = 1 << 16;
        while (buffer_.size() < kBlock && i_ < n_) {
            if (i_ != j_) {
                int t = data_.labels[i_] == data_.labels[j_] ? 1 : 0;
                buffer_.push_back({static_cast<std::uint32_t>(i_),
                                   static_cast<std::uint32_t>(j_), t});
            }
            if (++j_ >= n_) {
                j_ = 0;
                ++i_;
            }
        }
        seeded_shuffle(buffer_, block_rng_);
    }

    const EncodedDataset& data_;
    PairGenConfig cfg_;
    std::uint64_t epoch_seed_;
    std::vector<TrainingPair> buffer_;
    std::size_t pos_ = 0;
    std::size_t i_ = 0, j_ = 0, n_ = 0;
    Rng block_rng_{0};
};

struct BatchResult {
    double loss_sum = 0.0;  // summed over pairs (or sequences)
    std::size_t count = 0;
};

// Forward/backward for one pair batch. Each distinct sequence index is
// embedded once; pair gradients are scattered back onto the distinct columns.
// When `head` is set, adds lambda-weighted classification loss on the left
// entries (the hybrid objective).
BatchResult pair_batch_step(EmbeddingNetwork& model, MlpHead* head, double lambda,
                            const EncodedDataset& data,
                            const std::vector<TrainingPair>& pairs,
                            AdamOptimizer& adam, AdamOptimizer* head_adam,
                            const char* context) {
    std::vector<std::uint32_t> uniq;
    std::unordered_map<std::uint32_t, Eigen::Index> col_of;
    uniq.reserve(pairs.size() * 2);
    auto intern = [&](std::uint32_t idx) {
        auto [it, inserted] = col_of.try_emplace(idx, static_cast<Eigen::Index>(uniq.size()));
        if (inserted) uniq.push_back(idx);
        return it->second;
    };
    std::vector<Eigen::Index> lcol(pairs.size()), rcol(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        lcol[p] = intern(pairs[p].left);
        rcol[p] = intern(pairs[p].right);
    }

    std::vector<std::vector<int>> batch;
    batch.reserve(uniq.size());
    for (auto idx : uniq) batch.push_back(data.seqs[idx]);

    EmbeddingNetwork::Cache cache;
    Matrix U = model.forward(batch, cache);

    const auto P = static_cast<Eigen::Index>(pairs.size());
    Matrix XL(U.rows(), P), XR(U.rows(), P);
    std::vector<int> targets(pairs.size());
    for (Eigen::Index p = 0; p < P; ++p) {
        XL.col(p) = U.col(lcol[static_cast<std::size_t>(p)]);
        XR.col(p) = U.col(rcol[static_cast<std::size_t>(p)]);
        targets[static_cast<std::size_t>(p)] = pairs[static_cast<std::size_t>(p)].target;
    }

    Matrix dXL, dXR;
    double loss = pair_loss_batch(XL, XR, targets, &dXL, &dXR);

    TensorStore head_grads;
    if (head) {
        MlpHead::Cache head_cache;
        RowVector probs = head->forward(XL, head_cache);
        double cls = 0.0;
        RowVector d_score(P);
        for (Eigen::Index p = 0; p < P; ++p) {
            int y = data.labels[pairs[static_cast<std::size_t>(p)].left];
            cls += xent(probs(p), y);
            d_score(p) = (probs(p) - y) / static_cast<double>(P);
        }
        cls /= static_cast<double>(P);
        loss += lambda * cls;
        head_grads = head->params().zeros_like();
        Matrix d_in = head->backward(head_cache, d_score, head_grads);
        for (auto& t : head_grads.entries()) t.value *= lambda;
        dXL += lambda * d_in;
    }

    if (!std::isfinite(loss))
        throw NumericError(std::string("non-finite loss in ") + context);

    Matrix dU = Matrix::Zero(U.rows(), U.cols());
    for (Eigen::Index p = 0; p < P; ++p) {
        dU.col(lcol[static_cast<std::size_t>(p)]) += dXL.col(p);
        dU.col(rcol[static_cast<std::size_t>(p)]) += dXR.col(p);
    }

    TensorStore grads = model.params().zeros_like();
    model.backward(cache, dU, grads);
    adam.step(model.params(), grads);
    if (head) head_adam->step(head->params(), head_grads);

    return {loss * static_cast<double>(P), pairs.size()};
}

double validation_loss(const EmbeddingNetwork& model, MlpHead* head, double lambda,
                       const EncodedDataset& val) {
    Matrix E = embed_dataset(model, val.seqs);
    double loss = all_pairs_loss(E, val.labels);
    if (head) {
        RowVector probs = head->prob(E);
        double cls = 0.0;
        for (Eigen::Index i = 0; i < probs.size(); ++i)
            cls += xent(probs(i), val.labels[static_cast<std::size_t>(i)]);
        loss += lambda * cls / static_cast<double>(probs.size());
    }
    return loss;
}

TensorStore copy_params(const TensorStore& src) { return src; }

TrainHistory run_pair_training(EmbeddingNetwork& model, MlpHead* head,
                               const EncodedDataset& train, const EncodedDataset& val,
                               const TrainConfig& cfg, const EncodedDataset* test,
                               const char* context) {
    cfg.validate();
    if (train.size() < 2) throw DataError("training set too small");
    const double lambda = head ? cfg.hybrid_lambda : 0.0;

    AdamOptimizer adam(cfg.learning_rate);
    AdamOptimizer head_adam(cfg.learning_rate);
    TrainHistory history;
    TensorStore best_params = copy_params(model.params());
    TensorStore best_head;
    if (head) best_head = copy_params(head->params());
    double best_val = std::numeric_limits<double>::infinity();
    const bool have_val = val.size() >= 2;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        EpochPairSource source(train, cfg.pairgen, epoch);
        std::vector<TrainingPair> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        double loss_sum = 0.0;
        std::size_t pair_count = 0;
        TrainingPair p;
        bool more = true;
        while (more) {
            batch.clear();
            while (static_cast<int>(batch.size()) < cfg.batch_size &&
                   (more = source.next(p)))
                batch.push_back(p);
            if (batch.empty()) break;
            auto r = pair_batch_step(model, head, lambda, train, batch, adam,
                                     &head_adam, context);
            loss_sum += r.loss_sum;
            pair_count += r.count;
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(pair_count));

        double vloss = have_val ? validation_loss(model, head, lambda, val)
                                : history.train_loss.back();
        history.val_loss.push_back(vloss);
        history.wall_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());

        if (vloss < best_val) {
            best_val = vloss;
            history.best_epoch = epoch;
            best_params = copy_params(model.params());
            if (head) best_head = copy_params(head->params());
        }
        if (have_val && cfg.patience > 0 &&
            epoch - history.best_epoch >= cfg.patience)
            break;
    }

    if (have_val) {
        model.params() = std::move(best_params);
        if (head) head->params() = std::move(best_head);
    } else {
        history.best_epoch = static_cast<int>(history.train_loss.size()) - 1;
    }

    if (test && test->size() >= 2) {
        Matrix E = embed_dataset(model, test->seqs);
        history.test_loss = all_pairs_loss(E, test->labels);
    }
    return history;
}

}  // namespace

TrainHistory train_siamese(EmbeddingNetwork& model, const EncodedDataset& train,
                           const EncodedDataset& val, const TrainConfig& cfg,
                           const EncodedDataset* test) {
    return run_pair_training(model, nullptr, train, val, cfg, test, "siamese training");
}

TrainHistory train_hybrid(EmbeddingNetwork& model, MlpHead& head,
                          const EncodedDataset& train, const EncodedDataset& val,
                          const TrainConfig& cfg, const EncodedDataset* test) {
    if (head.input_dim() != model.output_dim())
        throw ConfigError("head input dimension must match the embedding dimension");
    return run_pair_training(model, &head, train, val, cfg, test, "hybrid training");
}

TrainHistory train_feedforward_baseline(EmbeddingNetwork& model, MlpHead& head,
                                        const EncodedDataset& train,
                                        const EncodedDataset& val,
                                        const TrainConfig& cfg) {
    cfg.validate();
    if (head.input_dim() != model.output_dim())
        throw ConfigError("head input dimension must match the embedding dimension");
    if (train.size() == 0) throw DataError("training set is empty");

    AdamOptimizer adam(cfg.learning_rate);
    AdamOptimizer head_adam(cfg.learning_rate);
    TrainHistory history;
    TensorStore best_params = model.params();
    TensorStore best_head = head.params();
    double best_val = std::numeric_limits<double>::infinity();
    const bool have_val = val.size() > 0;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng rng = make_rng(cfg.seed, 0xff00 + static_cast<std::uint64_t>(epoch));
        seeded_shuffle(order, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::vector<int>> batch;
            batch.reserve(end - start);
            RowVector yb(static_cast<Eigen::Index>(end - start));
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train.seqs[order[i]]);
                yb(static_cast<Eigen::Index>(i - start)) = train.labels[order[i]];
            }
            EmbeddingNetwork::Cache cache;
            Matrix U = model.forward(batch, cache);
            MlpHead::Cache head_cache;
            RowVector probs = head.forward(U, head_cache);
            double loss = 0.0;
            RowVector d_score(probs.size());
            for (Eigen::Index i = 0; i < probs.size(); ++i) {
                int y = static_cast<int>(yb(i));
                loss += xent(probs(i), y);
                d_score(i) = (probs(i) - y) / static_cast<double>(probs.size());
            }
            loss /= static_cast<double>(probs.size());
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss in feedforward training");
            TensorStore head_grads = head.params().zeros_like();
            Matrix dU = head.backward(head_cache, d_score, head_grads);
            TensorStore grads = model.params().zeros_like();
            model.backward(cache, dU, grads);
            adam.step(model.params(), grads);
            head_adam.step(head.params(), head_grads);
            loss_sum += loss * static_cast<double>(end - start);
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(order.size()));

        double vloss = history.train_loss.back();
        if (have_val) {
            Matrix E = embed_dataset(model, val.seqs);
            RowVector probs = head.prob(E);
            vloss = 0.0;
            for (Eigen::Index i = 0; i < probs.size(); ++i)
                vloss += xent(probs(i), val.labels[static_cast<std::size_t>(i)]);
            vloss /= static_cast<double>(probs.size());
        }
        history.val_loss.push_back(vloss);
        history.wall_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());

        if (vloss < best_val) {
            best_val = vloss;
            history.best_epoch = epoch;
            best_params = model.params();
            best_head = head.params();
        }
        if (have_val && cfg.patience > 0 &&
            epoch - history.best_epoch >= cfg.patience)
            break;
    }

    if (have_val) {
        model.params() = std::move(best_params);
        head.params() = std::move(best_head);
    } else {
        history.best_epoch = static_cast<int>(history.train_loss.size()) - 1;
    }
    return history;
}

}  // namespace logsiam
