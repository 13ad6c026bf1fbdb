#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "logsiam/siamese.hpp"
#include "testutil.hpp"

using namespace logsiam;

namespace {

Vector unit_x(int dim, double value) {
    Vector v = Vector::Zero(dim);
    v(0) = value;
    return v;
}

struct ToySplit {
    EncodedDataset train, val, test;
    Vocabulary vocab;
};

ToySplit encoded_toy(std::uint64_t seed, double train_frac = 0.80,
                     double val_frac = 0.10) {
    auto d = testutil::make_toy_dataset();
    auto s = split(d, train_frac, val_frac, seed);
    ToySplit out;
    out.vocab = build_vocab(s.train);
    out.train = EncodedDataset::from(s.train, out.vocab);
    out.val = EncodedDataset::from(s.validation, out.vocab);
    out.test = EncodedDataset::from(s.test, out.vocab);
    return out;
}

}  // namespace

TEST_CASE("similarity trivial and derived values") {
    Vector zero = Vector::Zero(4);
    Vector e1 = unit_x(4, 1.0);
    CHECK(similarity(zero, e1) == doctest::Approx(0.5).epsilon(1e-12));
    // direct evaluation of the logistic at 1
    double sigma1 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(similarity(e1, e1) == doctest::Approx(sigma1).epsilon(1e-12));
    CHECK(sigma1 == doctest::Approx(0.7311).epsilon(1e-4));

    SUBCASE("symmetry over random vectors") {
        Rng rng = make_rng(3, 3);
        for (int i = 0; i < 50; ++i) {
            Vector a(8), b(8);
            for (int j = 0; j < 8; ++j) {
                a(j) = static_cast<double>(draw_below(rng, 2001)) / 100.0 - 10.0;
                b(j) = static_cast<double>(draw_below(rng, 2001)) / 100.0 - 10.0;
            }
            CHECK(similarity(a, b) == similarity(b, a));
        }
    }

    SUBCASE("stays strictly inside (0,1) even at saturation") {
        Vector big = unit_x(4, 1e4);
        CHECK(similarity(big, big) < 1.0);
        CHECK(similarity(big, -big) > 0.0);
    }

    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(similarity(Vector::Zero(3), Vector::Zero(4)), DataError);
    }
}

TEST_CASE("pair loss values") {
    Vector zero = Vector::Zero(4);
    Vector e1 = unit_x(4, 1.0);
    // orthogonal vectors: sim = 1/2, loss = ln 2 for either target
    CHECK(pair_loss(zero, e1, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(pair_loss(zero, e1, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // y=0 with x1 = x2 = (2,0,...): loss = -log(1 - sigma(4)) = 4 + log1p(e^-4)
    Vector two = unit_x(4, 2.0);
    double expected = 4.0 + std::log1p(std::exp(-4.0));
    CHECK(pair_loss(two, two, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(4.018).epsilon(1e-3));

    SUBCASE("similar saturated pair drives the loss to zero") {
        Vector big = unit_x(4, 50.0);
        CHECK(pair_loss(big, big, 1) == doctest::Approx(0.0).epsilon(1e-9));
        // and stays finite on the wrong label thanks to clamping
        CHECK(std::isfinite(pair_loss(big, big, 0)));
    }

    SUBCASE("symmetry") {
        Rng rng = make_rng(4, 4);
        for (int i = 0; i < 30; ++i) {
            Vector a(6), b(6);
            for (int j = 0; j < 6; ++j) {
                a(j) = static_cast<double>(draw_below(rng, 201)) / 50.0 - 2.0;
                b(j) = static_cast<double>(draw_below(rng, 201)) / 50.0 - 2.0;
            }
            CHECK(pair_loss(a, b, 1) == pair_loss(b, a, 1));
            CHECK(pair_loss(a, b, 0) == pair_loss(b, a, 0));
        }
    }

    SUBCASE("monotone decreasing in the dot product when y=1") {
        Vector x2 = unit_x(6, 1.0);
        double prev = std::numeric_limits<double>::infinity();
        for (double scale : {-3.0, -1.0, 0.0, 0.5, 2.0, 5.0}) {
            double loss = pair_loss(unit_x(6, scale), x2, 1);
            CHECK(loss < prev);
            prev = loss;
        }
    }

    SUBCASE("target must be binary") {
        CHECK_THROWS_AS(pair_loss(zero, e1, 2), ConfigError);
    }
}

TEST_CASE("pair_loss_batch matches the scalar loss and its gradient shape") {
    Rng rng = make_rng(9, 0);
    Matrix L(5, 3), R(5, 3);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 5; ++r) {
            L(r, c) = static_cast<double>(draw_below(rng, 101)) / 50.0 - 1.0;
            R(r, c) = static_cast<double>(draw_below(rng, 101)) / 50.0 - 1.0;
        }
    std::vector<int> targets = {1, 0, 1};
    Matrix dl, dr;
    double loss = pair_loss_batch(L, R, targets, &dl, &dr);
    double expected = 0.0;
    for (int c = 0; c < 3; ++c)
        expected += pair_loss(L.col(c), R.col(c), targets[static_cast<std::size_t>(c)]);
    CHECK(loss == doctest::Approx(expected / 3.0).epsilon(1e-12));
    CHECK(dl.rows() == 5);
    CHECK(dl.cols() == 3);

    // analytic gradient: dJ/dxl = (sim - y) * xr / n
    for (int c = 0; c < 3; ++c) {
        double s = 1.0 / (1.0 + std::exp(-L.col(c).dot(R.col(c))));
        Vector want = (s - targets[static_cast<std::size_t>(c)]) / 3.0 * R.col(c);
        CHECK((dl.col(c) - want).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("toy task: siamese training separates the classes") {
    auto toy = encoded_toy(11);
    EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 77);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.patience = 0;  // fixed budget
    cfg.batch_size = 256;
    cfg.pairgen.algorithm = PairAlgorithm::KPOne;
    cfg.pairgen.k = 3;
    cfg.pairgen.seed = 5;
    cfg.seed = 5;
    auto history = train_siamese(model, toy.train, toy.val, cfg, &toy.test);
    REQUIRE(!history.val_loss.empty());
    CHECK(history.val_loss.back() < 0.05);
    CHECK(history.val_loss.size() == history.train_loss.size());
    CHECK(history.wall_seconds.size() == history.train_loss.size());
    CHECK(std::isfinite(history.test_loss));

    SUBCASE("loss improved over the run") {
        CHECK(history.val_loss.back() < history.val_loss.front());
    }
}

TEST_CASE("hybrid with lambda 0 matches pure siamese exactly") {
    auto toy = encoded_toy(13);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.patience = 0;
    cfg.pairgen.k = 2;
    cfg.pairgen.seed = 9;
    cfg.seed = 9;
    cfg.hybrid_lambda = 0.0;

    EmbeddingNetwork pure(testutil::toy_spec(), toy.vocab.size(), 55);
    auto h1 = train_siamese(pure, toy.train, toy.val, cfg);

    EmbeddingNetwork hy(testutil::toy_spec(), toy.vocab.size(), 55);
    MlpHead head(hy.output_dim(), 16, 3);
    auto h2 = train_hybrid(hy, head, toy.train, toy.val, cfg);

    REQUIRE(h1.train_loss.size() == h2.train_loss.size());
    for (std::size_t i = 0; i < h1.train_loss.size(); ++i) {
        CHECK(h1.train_loss[i] == h2.train_loss[i]);
        CHECK(h1.val_loss[i] == h2.val_loss[i]);
    }
    for (std::size_t t = 0; t < pure.params().entries().size(); ++t)
        CHECK(pure.params().entries()[t].value == hy.params().entries()[t].value);
}

TEST_CASE("toy task: hybrid model reaches F1 = 1.0") {
    auto toy = encoded_toy(17);
    EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 31);
    MlpHead head(model.output_dim(), 64, 32);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.patience = 0;
    cfg.pairgen.k = 3;
    cfg.pairgen.seed = 21;
    cfg.seed = 21;
    cfg.hybrid_lambda = 1.0;
    train_hybrid(model, head, toy.train, toy.val, cfg);

    Matrix E = embed_dataset(model, toy.test.seqs);
    RowVector p = head.prob(E);
    std::vector<int> pred;
    for (Eigen::Index i = 0; i < p.size(); ++i) pred.push_back(p(i) >= 0.5 ? 1 : 0);
    auto m = evaluate(pred, toy.test.labels);
    CHECK(m.f1 == doctest::Approx(1.0));
}

TEST_CASE("feedforward baseline") {
    auto toy = encoded_toy(19);

    SUBCASE("one-epoch smoke run on 10 samples") {
        EncodedDataset small;
        for (int i = 0; i < 10; ++i) {
            small.seqs.push_back(toy.train.seqs[static_cast<std::size_t>(i)]);
            small.labels.push_back(toy.train.labels[static_cast<std::size_t>(i)]);
        }
        EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 1);
        MlpHead head(model.output_dim(), 16, 2);
        TrainConfig cfg;
        cfg.epochs = 1;
        cfg.patience = 0;
        auto history = train_feedforward_baseline(model, head, small, {}, cfg);
        CHECK(history.train_loss.size() == 1);
    }

    SUBCASE("separable toy task reaches F1 = 1.0") {
        EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 2);
        MlpHead head(model.output_dim(), 64, 3);
        TrainConfig cfg;
        cfg.epochs = 60;
        cfg.batch_size = 32;
        cfg.patience = 0;
        cfg.seed = 4;
        train_feedforward_baseline(model, head, toy.train, toy.val, cfg);
        Matrix E = embed_dataset(model, toy.test.seqs);
        RowVector p = head.prob(E);
        std::vector<int> pred;
        for (Eigen::Index i = 0; i < p.size(); ++i) pred.push_back(p(i) >= 0.5 ? 1 : 0);
        CHECK(evaluate(pred, toy.test.labels).f1 == doctest::Approx(1.0));
    }
}

TEST_CASE("training restores the best-validation parameters") {
    auto toy = encoded_toy(23);
    EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 6);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.patience = 3;
    cfg.pairgen.k = 1;
    cfg.pairgen.seed = 2;
    cfg.seed = 2;
    auto history = train_siamese(model, toy.train, toy.val, cfg);
    REQUIRE(history.best_epoch >= 0);
    // restored parameters reproduce the best recorded validation loss
    Matrix E = embed_dataset(model, toy.val.seqs);
    double vloss = all_pairs_loss(E, toy.val.labels);
    double best = *std::min_element(history.val_loss.begin(), history.val_loss.end());
    CHECK(vloss == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("training improves the median validation loss over 5 seeds") {
    std::vector<double> first, last;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto toy = encoded_toy(seed);
        EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(),
                               mix_seed(seed, 1));
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.patience = 0;
        cfg.pairgen.k = 3;
        cfg.pairgen.seed = mix_seed(seed, 2);
        cfg.seed = seed;
        auto h = train_siamese(model, toy.train, toy.val, cfg);
        REQUIRE(h.val_loss.size() == 30);
        first.push_back(h.val_loss.front());
        last.push_back(h.val_loss.back());
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(last) < median(first));
}

TEST_CASE("both branches share one parameter set") {
    // the trainer embeds left and right entries through the same
    // EmbeddingNetwork; after training, a sequence embeds identically no
    // matter which side of a pair it appeared on
    auto toy = encoded_toy(3);
    EmbeddingNetwork model(testutil::toy_spec(), toy.vocab.size(), 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.patience = 0;
    cfg.pairgen.k = 1;
    cfg.pairgen.seed = 1;
    cfg.seed = 1;
    train_siamese(model, toy.train, toy.val, cfg);
    Matrix as_left = model.embed({toy.train.seqs[0]});
    Matrix as_right = model.embed({toy.train.seqs[0]});
    CHECK((as_left - as_right).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient check raises on non-finite loss") {
    EmbeddingNetwork net(testutil::tiny_spec(), 10, 21);
    PairBatch batch;
    batch.left = {{2, 3}};
    batch.right = {{4}};
    batch.targets = {1};
    auto nan_loss = [](const Matrix&, const Matrix&, const std::vector<int>&,
                       Matrix* dl, Matrix* dr) {
        if (dl) dl->setZero(8, 1);
        if (dr) dr->setZero(8, 1);
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(gradient_check(net, batch, nan_loss), NumericError);
}
