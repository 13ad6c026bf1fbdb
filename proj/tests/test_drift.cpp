#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "logsiam/drift.hpp"
#include "logsiam/siamese.hpp"
#include "testutil.hpp"

using namespace logsiam;

namespace {

// Box-Muller standard normals from the deterministic rng
double randn(Rng& rng) {
    double u1 = (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    double u2 = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Matrix gaussian_cloud(Rng& rng, int dim, int n, const Vector& center, double scale) {
    Matrix X(dim, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < dim; ++r) X(r, c) = center(r) + scale * randn(rng);
    return X;
}

}  // namespace

TEST_CASE("single component recovers the closed-form gaussian MLE") {
    Rng rng = make_rng(61, 0);
    const int dim = 8, n = 10000;
    Matrix X = gaussian_cloud(rng, dim, n, Vector::Zero(dim), 1.0);

    GmmConfig cfg;
    cfg.components = 1;
    auto gmm = fit_gmm(X, cfg, 1);

    // closed-form MLE oracle: sample mean and per-dimension variance
    Vector mean = X.rowwise().mean();
    CHECK((gmm.means.col(0) - mean).cwiseAbs().maxCoeff() < 1e-9);
    for (int d = 0; d < dim; ++d) {
        double v = (X.row(d).array() - mean(d)).square().sum() / n;
        CHECK(gmm.variances(d, 0) == doctest::Approx(v).epsilon(1e-6));
        CHECK(gmm.variances(d, 0) == doctest::Approx(1.0).epsilon(0.1));
    }
    CHECK(gmm.means.col(0).cwiseAbs().maxCoeff() < 0.1);
    CHECK(gmm.weights(0) == doctest::Approx(1.0));
}

TEST_CASE("two components recover two well-separated cluster centroids") {
    Rng rng = make_rng(67, 1);
    const int dim = 6;
    Vector c1 = Vector::Constant(dim, -4.0), c2 = Vector::Constant(dim, 4.0);
    Matrix A = gaussian_cloud(rng, dim, 600, c1, 0.3);
    Matrix B = gaussian_cloud(rng, dim, 400, c2, 0.3);
    Matrix X(dim, 1000);
    X << A, B;

    GmmConfig cfg;
    cfg.components = 2;
    auto gmm = fit_gmm(X, cfg, 3);

    Vector cen1 = A.rowwise().mean(), cen2 = B.rowwise().mean();
    // match components to centroids by the nearest mean
    int k1 = (gmm.means.col(0) - cen1).norm() < (gmm.means.col(1) - cen1).norm() ? 0 : 1;
    CHECK((gmm.means.col(k1) - cen1).norm() < 0.1);
    CHECK((gmm.means.col(1 - k1) - cen2).norm() < 0.1);
    CHECK(gmm.weights(k1) == doctest::Approx(0.6).epsilon(0.05));

    SUBCASE("full covariance mode agrees on the centroids") {
        GmmConfig full = cfg;
        full.kind = CovarianceKind::Full;
        auto g2 = fit_gmm(X, full, 3);
        int m1 = (g2.means.col(0) - cen1).norm() < (g2.means.col(1) - cen1).norm() ? 0 : 1;
        CHECK((g2.means.col(m1) - cen1).norm() < 0.1);
    }
}

TEST_CASE("EM log-likelihood is non-decreasing every iteration") {
    Rng rng = make_rng(71, 2);
    Matrix X = gaussian_cloud(rng, 4, 500, Vector::Zero(4), 1.0);
    X.rightCols(200).array() += 3.0;

    GmmConfig cfg;
    cfg.components = 3;
    auto gmm = fit_gmm(X, cfg, 5);
    REQUIRE(gmm.ll_history.size() >= 2);
    for (std::size_t i = 1; i < gmm.ll_history.size(); ++i)
        CHECK(gmm.ll_history[i] >= gmm.ll_history[i - 1] - 1e-9);
    CHECK(gmm.final_log_likelihood == gmm.ll_history.back());
}

TEST_CASE("weights stay on the simplex and variances above the floor") {
    Rng rng = make_rng(73, 3);
    Matrix X = gaussian_cloud(rng, 5, 300, Vector::Zero(5), 1.0);
    GmmConfig cfg;
    cfg.components = 4;
    auto gmm = fit_gmm(X, cfg, 9);
    CHECK(gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gmm.weights.minCoeff() >= 0.0);
    CHECK(gmm.variances.minCoeff() >= cfg.variance_floor);
}

TEST_CASE("degenerate inputs") {
    Matrix X(3, 4);
    X << 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3;  // one distinct point
    GmmConfig cfg;
    cfg.components = 2;
    CHECK_THROWS_AS(fit_gmm(X, cfg, 1), DataError);

    SUBCASE("components > points") {
        Matrix Y = Matrix::Random(3, 2);
        cfg.components = 3;
        CHECK_THROWS_AS(fit_gmm(Y, cfg, 1), DataError);
    }

    SUBCASE("one component per point floors the variances and flags it") {
        Rng rng = make_rng(79, 4);
        Matrix Y = gaussian_cloud(rng, 2, 5, Vector::Zero(2), 1.0);
        cfg.components = 5;
        auto gmm = fit_gmm(Y, cfg, 2);
        CHECK(gmm.floored_components > 0);
        CHECK(gmm.variances.minCoeff() >= cfg.variance_floor);
    }
}

TEST_CASE("fitness score closed-form values and invariances") {
    SUBCASE("standard 1-D gaussian scored at its mean") {
        GaussianMixture g;
        g.kind = CovarianceKind::Diagonal;
        g.means = Matrix::Zero(1, 1);
        g.variances = Matrix::Ones(1, 1);
        g.weights = Vector::Ones(1);
        Matrix X = Matrix::Zero(1, 1);
        // log(1/sqrt(2*pi)) = -0.9189385332046727
        CHECK(fitness_score(g, X) ==
              doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    }

    Rng rng = make_rng(83, 5);
    Matrix X = gaussian_cloud(rng, 4, 400, Vector::Zero(4), 1.0);
    GmmConfig cfg;
    cfg.components = 2;
    auto gmm = fit_gmm(X, cfg, 11);

    SUBCASE("duplicating the evaluation set leaves the score unchanged") {
        Matrix XX(4, 800);
        XX << X, X;
        CHECK(fitness_score(gmm, XX) ==
              doctest::Approx(fitness_score(gmm, X)).epsilon(1e-12));
    }

    SUBCASE("score is order independent") {
        Matrix Xr = X.rowwise().reverse();  // reverse column order
        Matrix Xswap = X;
        Xswap.col(0).swap(Xswap.col(399));
        CHECK(fitness_score(gmm, Xswap) ==
              doctest::Approx(fitness_score(gmm, X)).epsilon(1e-12));
    }

    SUBCASE("training data scores above far-away data") {
        Matrix far = X.array() + 10.0;
        CHECK(fitness_score(gmm, X) > fitness_score(gmm, far));
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(fitness_score(gmm, Matrix(4, 0)), DataError);
        CHECK_THROWS_AS(fitness_score(gmm, Matrix::Zero(5, 3)), DataError);
    }
}

TEST_CASE("gmm json round-trip") {
    Rng rng = make_rng(89, 6);
    Matrix X = gaussian_cloud(rng, 3, 200, Vector::Zero(3), 1.0);
    GmmConfig cfg;
    cfg.components = 2;
    auto gmm = fit_gmm(X, cfg, 13);
    auto back = GaussianMixture::from_json(gmm.to_json());
    CHECK(back.kind == gmm.kind);
    CHECK((back.means - gmm.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.variances - gmm.variances).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fitness_score(back, X) == fitness_score(gmm, X));
}

TEST_CASE("drift monitor end to end on the toy task") {
    auto d = testutil::make_toy_dataset();
    auto s = split(d, 0.80, 0.10, 29);
    auto vocab = build_vocab(s.train);
    auto train = EncodedDataset::from(s.train, vocab);
    auto val = EncodedDataset::from(s.validation, vocab);

    EmbeddingNetwork model(testutil::toy_spec(), vocab.size(), 99);
    TrainConfig tcfg;
    tcfg.epochs = 15;
    tcfg.patience = 0;
    tcfg.pairgen.k = 3;
    tcfg.pairgen.seed = 8;
    tcfg.seed = 8;
    train_siamese(model, train, val, tcfg);

    Matrix E = embed_dataset(model, train.seqs);
    GmmConfig gcfg;
    gcfg.components = 2;
    auto gmm = fit_gmm(E, gcfg, 17);
    double train_score = fitness_score(gmm, E);

    SUBCASE("incoming = training set never triggers below its own score") {
        auto report = drift_monitor(model, vocab, gmm, s.train, train_score - 1.0);
        CHECK(report.score == doctest::Approx(train_score).epsilon(1e-12));
        CHECK_FALSE(report.triggered);
    }

    SUBCASE("threshold -inf never triggers") {
        auto report = drift_monitor(model, vocab, gmm, s.test,
                                    -std::numeric_limits<double>::infinity());
        CHECK_FALSE(report.triggered);
    }

    SUBCASE("empty batch is rejected") {
        LabeledDataset empty;
        CHECK_THROWS_AS(drift_monitor(model, vocab, gmm, empty, 0.0), DataError);
    }

    SUBCASE("triggered exactly when the score falls below the threshold") {
        auto report = drift_monitor(model, vocab, gmm, s.test, 1e18);
        CHECK(report.triggered == (report.score < 1e18));
        CHECK(report.triggered);
    }
}

TEST_CASE("component selection sweep returns a sensible count") {
    Rng rng = make_rng(97, 7);
    Matrix A = gaussian_cloud(rng, 3, 300, Vector::Constant(3, -5.0), 0.4);
    Matrix B = gaussian_cloud(rng, 3, 300, Vector::Constant(3, 5.0), 0.4);
    Matrix X(3, 600);
    X << A, B;
    GmmConfig cfg;
    int best = select_components(X, {1, 2, 4}, cfg, 23);
    CHECK(best == 2);
}
