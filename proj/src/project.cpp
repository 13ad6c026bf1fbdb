#include "logsiam/project.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace logsiam {

PcaResult pca_project(const Matrix& X, const std::vector<std::string>& ids,
                      const std::vector<int>& labels, int dims) {
    const auto D = X.rows();
    const auto N = X.cols();
    if (dims < 1 || dims > D) throw ConfigError("bad projection dimension");
    if (N < 2) throw DataError("PCA needs at least 2 vectors");
    if (!ids.empty() && (ids.size() != static_cast<std::size_t>(N) ||
                         labels.size() != static_cast<std::size_t>(N)))
        throw DataError("id/label count mismatch");

    Vector mean = X.rowwise().mean();
    Matrix centered = X.colwise() - mean;
    Matrix cov = centered * centered.transpose() / static_cast<double>(N - 1);
    const double total_variance = cov.trace();
    if (!(total_variance > 0.0)) throw DataError("data has zero variance");

    PcaResult result;
    result.total_variance = total_variance;
    result.components.resize(D, dims);
    result.eigenvalues.resize(dims);

    // power iteration with deflation; re-orthogonalize against found
    // components every step so repeated eigenvalues stay separated
    Matrix work = cov;
    Rng rng = make_rng(0x706361, static_cast<std::uint64_t>(D));
    for (int c = 0; c < dims; ++c) {
        Vector v(D);
        for (Eigen::Index i = 0; i < D; ++i) {
            double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
            v(i) = 2.0 * u - 1.0;
        }
        v.normalize();
        double lambda = 0.0;
        for (int iter = 0; iter < 5000; ++iter) {
            Vector next = work * v;
            for (int p = 0; p < c; ++p)
                next -= result.components.col(p).dot(next) * result.components.col(p);
            double norm = next.norm();
            if (norm < 1e-300) break;
            next /= norm;
            double delta = (next - v).norm();
            v = next;
            lambda = v.dot(work * v);
            if (delta < 1e-13) break;
        }
        lambda = v.dot(work * v);
        if (lambda <= 1e-12 * std::max(total_variance, 1.0))
            throw DataError("data rank is below the requested projection dimension");
        // sign convention: largest-magnitude entry positive
        Eigen::Index arg_max = 0;
        v.cwiseAbs().maxCoeff(&arg_max);
        if (v(arg_max) < 0.0) v = -v;
        result.components.col(c) = v;
        result.eigenvalues(c) = lambda;
        work -= lambda * v * v.transpose();
    }
    result.explained_variance = result.eigenvalues / total_variance;

    result.projection.points = result.components.transpose() * centered;
    result.projection.ids = ids;
    result.projection.labels = labels;
    result.projection.method = "pca";
    result.projection.params = {{"dims", dims}};
    return result;
}

namespace {

// binary search for the Gaussian bandwidth matching log(perplexity) entropy
Vector conditional_rows(const Matrix& sqd, double perplexity, Matrix& P) {
    const auto n = sqd.rows();
    const double target = std::log(perplexity);
    Vector betas(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0.0, weighted = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                double p = std::exp(-beta * sqd(i, j));
                sum += p;
                weighted += beta * sqd(i, j) * p;
            }
            double entropy = std::log(std::max(sum, 1e-300)) + weighted / std::max(sum, 1e-300);
            if (std::abs(entropy - target) < 1e-5) break;
            if (entropy > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        betas(i) = beta;
        double sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            P(i, j) = std::exp(-beta * sqd(i, j));
            sum += P(i, j);
        }
        P(i, i) = 0.0;
        P.row(i) /= std::max(sum, 1e-300);
    }
    return betas;
}

}  // namespace

Projection2D tsne_project(const Matrix& X, const std::vector<std::string>& ids,
                          const std::vector<int>& labels, double perplexity,
                          int iterations, std::uint64_t seed) {
    const auto n = X.cols();
    if (n > 5000)
        throw ConfigError("exact t-SNE is limited to 5,000 points; subsample first");
    if (n < 4) throw DataError("t-SNE needs at least 4 points");
    if (perplexity >= static_cast<double>(n))
        throw ConfigError("perplexity must be below the point count");
    if (perplexity < 1.0) throw ConfigError("perplexity must be >= 1");

    // pairwise squared distances
    Vector sq = X.colwise().squaredNorm();
    Matrix sqd = (-2.0 * X.transpose() * X).colwise() + sq;
    sqd.rowwise() += sq.transpose();
    sqd = sqd.cwiseMax(0.0);

    Matrix P = Matrix::Zero(n, n);
    conditional_rows(sqd, perplexity, P);
    P = ((P + P.transpose()) / (2.0 * static_cast<double>(n))).cwiseMax(1e-12);

    constexpr double kExaggeration = 12.0;
    constexpr int kExaggerationStop = 250;
    // n-scaled learning rate; a flat rate overshoots badly on small inputs
    const double learning_rate = std::max(static_cast<double>(n) / kExaggeration, 50.0);
    P *= kExaggeration;

    Rng rng = make_rng(seed, 0x74736e65);
    Matrix Y(2, n), velocity = Matrix::Zero(2, n);
    Matrix gains = Matrix::Ones(2, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (int r = 0; r < 2; ++r) {
            // Box-Muller from two 53-bit uniforms, scaled down for a tight init
            double u1 = (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
            double u2 = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
            Y(r, j) = 1e-4 * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * M_PI * u2);
        }

    for (int iter = 0; iter < iterations; ++iter) {
        Vector ysq = Y.colwise().squaredNorm();
        Matrix num = (-2.0 * Y.transpose() * Y).colwise() + ysq;
        num.rowwise() += ysq.transpose();
        num = (1.0 + num.array()).inverse().matrix();
        num.diagonal().setZero();
        double z = num.sum();
        Matrix Q = (num / std::max(z, 1e-300)).cwiseMax(1e-12);

        // grad_i = 4 * sum_j PQ_ij * (y_i - y_j); PQ is symmetric
        Matrix PQ = (P - Q).cwiseProduct(num);
        Vector rowsum = PQ.rowwise().sum();
        Matrix grad = 4.0 * (Y * rowsum.asDiagonal() - Y * PQ);

        double momentum = iter < kExaggerationStop ? 0.5 : 0.8;
        for (Eigen::Index j = 0; j < n; ++j)
            for (int r = 0; r < 2; ++r) {
                bool same_sign = (grad(r, j) > 0.0) == (velocity(r, j) > 0.0);
                gains(r, j) = same_sign ? std::max(0.01, gains(r, j) * 0.8)
                                        : gains(r, j) + 0.2;
                velocity(r, j) =
                    momentum * velocity(r, j) - learning_rate * gains(r, j) * grad(r, j);
            }
        Y += velocity;
        Y.colwise() -= Y.rowwise().mean().eval();

        if (iter == kExaggerationStop) P /= kExaggeration;
    }
    if (iterations <= kExaggerationStop) P /= kExaggeration;

    Projection2D out;
    out.points = Y;
    out.ids = ids;
    out.labels = labels;
    out.method = "tsne";
    out.params = {{"perplexity", perplexity}, {"iterations", iterations}, {"seed", seed}};
    return out;
}

void export_plot_data(const Projection2D& p, const std::filesystem::path& path) {
    if (p.points.cols() == 0) throw DataError("empty projection");
    if (p.ids.size() != static_cast<std::size_t>(p.points.cols()) ||
        p.labels.size() != p.ids.size())
        throw DataError("projection ids/labels/points are inconsistent");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot data: " + path.string());
    out << "# method=" << p.method << "\n";
    out << "# params=" << p.params.dump() << "\n";
    for (const auto& [name, first, count] : p.splits)
        out << "# split=" << name << " rows=" << first + 1 << "-" << first + count
            << "\n";
    out << "id,label,x,y\n";
    char buf[64];
    for (Eigen::Index i = 0; i < p.points.cols(); ++i) {
        // float precision; %.9g round-trips binary32 exactly
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g",
                      static_cast<double>(static_cast<float>(p.points(0, i))),
                      static_cast<double>(static_cast<float>(p.points(1, i))));
        out << p.ids[static_cast<std::size_t>(i)] << ','
            << p.labels[static_cast<std::size_t>(i)] << ',' << buf << "\n";
    }
    if (!out) throw DataError("write failed: " + path.string());
}

Projection2D parse_plot_data(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open plot data: " + path.string());
    Projection2D p;
    std::string line;
    std::vector<std::array<double, 2>> pts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# method=", 0) == 0) p.method = line.substr(9);
            continue;
        }
        if (line.rfind("id,label", 0) == 0) continue;
        std::istringstream ss(line);
        std::string id, label, x, y;
        std::getline(ss, id, ',');
        std::getline(ss, label, ',');
        std::getline(ss, x, ',');
        std::getline(ss, y, ',');
        p.ids.push_back(id);
        p.labels.push_back(std::stoi(label));
        pts.push_back({std::stod(x), std::stod(y)});
    }
    p.points.resize(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        p.points(0, static_cast<Eigen::Index>(i)) = pts[i][0];
        p.points(1, static_cast<Eigen::Index>(i)) = pts[i][1];
    }
    return p;
}

}  // namespace logsiam
