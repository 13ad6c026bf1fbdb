#include "logsiam/drift.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>

#include "logsiam/siamese.hpp"

namespace logsiam {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

// per-sample log densities for every component: K x N
Matrix component_log_densities(const GaussianMixture& gmm, const Matrix& X) {
    const auto K = gmm.weights.size();
    const auto N = X.cols();
    const auto D = X.rows();
    Matrix out(K, N);
    if (gmm.kind == CovarianceKind::Diagonal) {
        for (Eigen::Index k = 0; k < K; ++k) {
            Vector var = gmm.variances.col(k);
            double log_det = var.array().log().sum();
            double base = -0.5 * (static_cast<double>(D) * kLog2Pi + log_det);
            Vector inv = var.cwiseInverse();
            for (Eigen::Index n = 0; n < N; ++n) {
                Vector diff = X.col(n) - gmm.means.col(k);
                out(k, n) = base - 0.5 * diff.cwiseProduct(diff).dot(inv);
            }
        }
    } else {
        for (Eigen::Index k = 0; k < K; ++k) {
            Eigen::LLT<Matrix> llt(gmm.covariances[static_cast<std::size_t>(k)]);
            if (llt.info() != Eigen::Success)
                throw NumericError("GMM covariance is not positive definite");
            double log_det =
                2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            double base = -0.5 * (static_cast<double>(D) * kLog2Pi + log_det);
            for (Eigen::Index n = 0; n < N; ++n) {
                Vector diff = X.col(n) - gmm.means.col(k);
                Vector sol = llt.matrixL().solve(diff);
                out(k, n) = base - 0.5 * sol.squaredNorm();
            }
        }
    }
    return out;
}

// log-sum-exp over rows of (log w_k + log density), per column
Vector sample_log_likelihoods(const GaussianMixture& gmm, const Matrix& X) {
    Matrix ld = component_log_densities(gmm, X);
    Vector log_w = gmm.weights.array().log().matrix();
    ld.colwise() += log_w;
    Vector out(X.cols());
    for (Eigen::Index n = 0; n < X.cols(); ++n) {
        double mx = ld.col(n).maxCoeff();
        out(n) = mx + std::log((ld.col(n).array() - mx).exp().sum());
    }
    return out;
}

}  // namespace

nlohmann::json GaussianMixture::to_json() const {
    nlohmann::json j;
    j["kind"] = kind == CovarianceKind::Diagonal ? "diagonal" : "full";
    j["seed"] = seed;
    j["final_log_likelihood"] = final_log_likelihood;
    j["floored_components"] = floored_components;
    j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
    auto mat_to_json = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["means"] = mat_to_json(means);
    if (kind == CovarianceKind::Diagonal) {
        j["variances"] = mat_to_json(variances);
    } else {
        nlohmann::json covs = nlohmann::json::array();
        for (const auto& c : covariances) covs.push_back(mat_to_json(c));
        j["covariances"] = std::move(covs);
    }
    return j;
}

GaussianMixture GaussianMixture::from_json(const nlohmann::json& j) {
    GaussianMixture g;
    g.kind = j.at("kind").get<std::string>() == "full" ? CovarianceKind::Full
                                                       : CovarianceKind::Diagonal;
    g.seed = j.value("seed", 0ull);
    g.final_log_likelihood = j.value("final_log_likelihood", 0.0);
    g.floored_components = j.value("floored_components", 0);
    auto w = j.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    auto mat_from_json = [](const nlohmann::json& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    rows[r][c].get<double>();
        return m;
    };
    g.means = mat_from_json(j.at("means"));
    if (g.kind == CovarianceKind::Diagonal) {
        g.variances = mat_from_json(j.at("variances"));
    } else {
        for (const auto& c : j.at("covariances"))
            g.covariances.push_back(mat_from_json(c));
    }
    return g;
}

GaussianMixture fit_gmm(const Matrix& X, const GmmConfig& cfg, std::uint64_t seed) {
    const auto D = X.rows();
    const auto N = X.cols();
    const int K = cfg.components;
    if (K < 1) throw ConfigError("component count must be positive");
    if (N < K) throw DataError("need at least as many vectors as components");

    // count distinct columns; EM cannot separate fewer distinct points than
    // components
    {
        std::set<std::vector<double>> distinct;
        for (Eigen::Index n = 0; n < N && static_cast<int>(distinct.size()) < K; ++n)
            distinct.insert(std::vector<double>(X.col(n).data(), X.col(n).data() + D));
        if (static_cast<int>(distinct.size()) < K)
            throw DataError("fewer distinct vectors than mixture components");
    }

    GaussianMixture gmm;
    gmm.kind = cfg.kind;
    gmm.seed = seed;
    gmm.weights = Vector::Constant(K, 1.0 / K);
    gmm.means.resize(D, K);

    // init means from distinct seeded-sampled points
    Rng rng = make_rng(seed, 0x676d6d);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    seeded_shuffle(order, rng);
    int placed = 0;
    for (std::size_t i = 0; i < order.size() && placed < K; ++i) {
        Vector cand = X.col(order[i]);
        bool dup = false;
        for (int k = 0; k < placed && !dup; ++k)
            dup = (gmm.means.col(k) - cand).norm() == 0.0;
        if (!dup) gmm.means.col(placed++) = cand;
    }

    Vector global_mean = X.rowwise().mean();
    Vector global_var(D);
    for (Eigen::Index d = 0; d < D; ++d) {
        double v = (X.row(d).array() - global_mean(d)).square().sum() /
                   std::max<double>(1.0, static_cast<double>(N - 1));
        global_var(d) = std::max(v, cfg.variance_floor);
    }
    if (cfg.kind == CovarianceKind::Diagonal) {
        gmm.variances.resize(D, K);
        for (int k = 0; k < K; ++k) gmm.variances.col(k) = global_var;
    } else {
        gmm.covariances.assign(static_cast<std::size_t>(K),
                               Matrix(global_var.asDiagonal()));
    }

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // E step
        Matrix ld = component_log_densities(gmm, X);
        Vector log_w = gmm.weights.array().log().matrix();
        ld.colwise() += log_w;
        Vector sample_ll(N);
        Matrix resp(K, N);
        for (Eigen::Index n = 0; n < N; ++n) {
            double mx = ld.col(n).maxCoeff();
            double lse = mx + std::log((ld.col(n).array() - mx).exp().sum());
            sample_ll(n) = lse;
            resp.col(n) = (ld.col(n).array() - lse).exp().matrix();
        }
        double ll = sample_ll.mean();
        if (!std::isfinite(ll)) throw NumericError("non-finite log-likelihood in EM");
        gmm.ll_history.push_back(ll);

        // M step
        Vector nk = resp.rowwise().sum();
        for (Eigen::Index k = 0; k < K; ++k) {
            if (nk(k) < 1e-300) {
                // dead component: re-seed at a random point
                gmm.means.col(k) = X.col(static_cast<Eigen::Index>(
                    draw_below(rng, static_cast<std::uint64_t>(N))));
                nk(k) = 1e-300;
                continue;
            }
            gmm.means.col(k) = (X * resp.row(k).transpose()) / nk(k);
        }
        gmm.weights = nk / static_cast<double>(N);
        gmm.floored_components = 0;
        if (cfg.kind == CovarianceKind::Diagonal) {
            for (Eigen::Index k = 0; k < K; ++k) {
                Vector acc = Vector::Zero(D);
                for (Eigen::Index n = 0; n < N; ++n) {
                    Vector diff = X.col(n) - gmm.means.col(k);
                    acc += resp(k, n) * diff.cwiseProduct(diff);
                }
                acc /= nk(k);
                bool floored = false;
                for (Eigen::Index d = 0; d < D; ++d)
                    if (acc(d) < cfg.variance_floor) {
                        acc(d) = cfg.variance_floor;
                        floored = true;
                    }
                if (floored) ++gmm.floored_components;
                gmm.variances.col(k) = acc;
            }
        } else {
            for (Eigen::Index k = 0; k < K; ++k) {
                Matrix acc = Matrix::Zero(D, D);
                for (Eigen::Index n = 0; n < N; ++n) {
                    Vector diff = X.col(n) - gmm.means.col(k);
                    acc.noalias() += resp(k, n) * (diff * diff.transpose());
                }
                acc /= nk(k);
                double min_diag = acc.diagonal().minCoeff();
                if (min_diag < cfg.variance_floor) {
                    acc.diagonal().array() += cfg.variance_floor - min_diag;
                    ++gmm.floored_components;
                }
                gmm.covariances[static_cast<std::size_t>(k)] = acc;
            }
        }

        if (std::abs(ll - prev_ll) < cfg.tolerance) break;
        prev_ll = ll;
    }
    gmm.final_log_likelihood = gmm.ll_history.empty() ? 0.0 : gmm.ll_history.back();
    return gmm;
}

double fitness_score(const GaussianMixture& gmm, const Matrix& vectors) {
    if (vectors.cols() == 0) throw DataError("fitness score over an empty vector set");
    if (vectors.rows() != gmm.means.rows())
        throw DataError("vector dimension does not match the mixture");
    return sample_log_likelihoods(gmm, vectors).mean();
}

int select_components(const Matrix& vectors, const std::vector<int>& candidates,
                      const GmmConfig& cfg, std::uint64_t seed) {
    if (candidates.empty()) throw ConfigError("component sweep needs candidates");
    const double n = static_cast<double>(vectors.cols());
    const double d = static_cast<double>(vectors.rows());
    double best_bic = std::numeric_limits<double>::infinity();
    int best_k = candidates.front();
    for (int k : candidates) {
        GmmConfig c = cfg;
        c.components = k;
        GaussianMixture g = fit_gmm(vectors, c, seed);
        double params_per_comp =
            cfg.kind == CovarianceKind::Diagonal ? 2.0 * d : d + d * (d + 1) / 2.0;
        double p = k * params_per_comp + (k - 1);
        double bic = -2.0 * g.final_log_likelihood * n + p * std::log(n);
        if (bic < best_bic) {
            best_bic = bic;
            best_k = k;
        }
    }
    return best_k;
}

nlohmann::json FitnessReport::to_json() const {
    return {{"score", score},
            {"threshold", threshold},
            {"triggered", triggered},
            {"count", count}};
}

FitnessReport drift_monitor(const EmbeddingNetwork& model, const Vocabulary& vocab,
                            const GaussianMixture& gmm,
                            const LabeledDataset& incoming, double threshold) {
    if (incoming.size() == 0) throw DataError("drift monitor needs a non-empty batch");
    std::vector<std::vector<int>> encoded;
    encoded.reserve(incoming.size());
    for (const auto& s : incoming.sequences) encoded.push_back(encode(s, vocab));
    Matrix E = embed_dataset(model, encoded);
    FitnessReport report;
    report.score = fitness_score(gmm, E);
    report.threshold = threshold;
    report.triggered = report.score < threshold;
    report.count = incoming.size();
    return report;
}

}  // namespace logsiam
