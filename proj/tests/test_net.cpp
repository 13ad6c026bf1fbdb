#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "logsiam/net.hpp"
#include "logsiam/siamese.hpp"
#include "testutil.hpp"

using namespace logsiam;

TEST_CASE("published architecture parameter counts") {
    // layer-by-layer analytic oracle, vocab 30:
    //   best performer: 30*11 + 4*((11+192)*192+192) + 4*((192+192)*192+192)
    //     + 4*((192+64)*64+64) + (64*348+348) + (348*640+640) + (640*64+64)
    //     = 330 + 156672 + 295680 + 65792 + 22620 + 223360 + 41024 = 805478
    CHECK(count_params(best_performer_spec(), 30) == 805478);
    //   low cost: 30*24 + 2*4*((24+32)*32+32) + 3*(64*64+64)
    //     = 720 + 14592 + 12480 = 27792
    CHECK(count_params(low_cost_spec(), 30) == 27792);
    // a lone 64->64 dense layer
    CHECK(64 * 64 + 64 == 4160);

    SUBCASE("reported-size windows") {
        CHECK(count_params(best_performer_spec(), 31) >= 797000);
        CHECK(count_params(best_performer_spec(), 31) <= 813000);
        CHECK(count_params(low_cost_spec(), 31) >= 26000);
        CHECK(count_params(low_cost_spec(), 31) <= 29000);
    }

    SUBCASE("parameter ratio near 30x") {
        double ratio = static_cast<double>(count_params(best_performer_spec(), 31)) /
                       static_cast<double>(count_params(low_cost_spec(), 31));
        CHECK(ratio > 27.0);
        CHECK(ratio < 33.0);
    }
}

TEST_CASE("count_params matches allocated scalars for varied specs") {
    for (const auto& spec : {best_performer_spec(), low_cost_spec(),
                             testutil::tiny_spec(), testutil::tiny_bilstm_spec(),
                             testutil::toy_spec()}) {
        for (int vocab : {3, 14, 31}) {
            EmbeddingNetwork net(spec, vocab, 1);
            CHECK(net.params().scalar_count() == count_params(spec, vocab));
        }
    }
}

TEST_CASE("count_flops is linear in sequence length with a dense offset") {
    auto spec = low_cost_spec();
    auto f1 = count_flops(spec, 1);
    auto f2 = count_flops(spec, 2);
    auto f3 = count_flops(spec, 3);
    CHECK(f2 - f1 == f3 - f2);
    CHECK(f1 > 0);
    // per-step BiLSTM MACs 2*4*32*(24+32)=14336, dense 3*64*64=12288
    CHECK(f1 == 2 * (14336 + 12288));
}

TEST_CASE("build is deterministic and seed-sensitive") {
    auto spec = testutil::tiny_spec();
    EmbeddingNetwork a(spec, 10, 42), b(spec, 10, 42), c(spec, 10, 43);
    bool identical = true, differs = false;
    for (std::size_t t = 0; t < a.params().entries().size(); ++t) {
        identical = identical && a.params().entries()[t].value ==
                                     b.params().entries()[t].value;
        differs = differs || a.params().entries()[t].value !=
                                 c.params().entries()[t].value;
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("malformed specs are rejected") {
    ArchitectureSpec s;
    s.layers = {{LayerKind::TokenEmbedding, 4, Activation::Linear},
                {LayerKind::Dense, 8, Activation::Relu},
                {LayerKind::Lstm, 8, Activation::Tanh},
                {LayerKind::Dense, 8, Activation::Linear}};
    CHECK_THROWS_AS(s.validate(), ConfigError);  // dense before LSTM

    ArchitectureSpec s2;
    s2.layers = {{LayerKind::Lstm, 8, Activation::Tanh},
                 {LayerKind::Lstm, 8, Activation::Tanh},
                 {LayerKind::Dense, 8, Activation::Linear}};
    CHECK_THROWS_AS(s2.validate(), ConfigError);  // no embedding first

    ArchitectureSpec s3;
    s3.layers = {{LayerKind::TokenEmbedding, 4, Activation::Linear},
                 {LayerKind::Lstm, 8, Activation::Tanh},
                 {LayerKind::Dense, 8, Activation::Relu}};
    CHECK_THROWS_AS(s3.validate(), ConfigError);  // non-linear head

    CHECK_THROWS_AS(EmbeddingNetwork(testutil::tiny_spec(), 2, 1), ConfigError);
}

TEST_CASE("spec json round-trip") {
    for (const auto& spec : {best_performer_spec(), low_cost_spec()}) {
        auto j = spec_to_json(spec);
        auto back = spec_from_json(j);
        CHECK(back.name == spec.name);
        REQUIRE(back.layers.size() == spec.layers.size());
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            CHECK(back.layers[i].kind == spec.layers[i].kind);
            CHECK(back.layers[i].units == spec.layers[i].units);
            CHECK(back.layers[i].activation == spec.layers[i].activation);
        }
    }
}

TEST_CASE("embedding output dim and batch independence") {
    for (const auto& spec : {low_cost_spec(), testutil::tiny_bilstm_spec()}) {
        EmbeddingNetwork net(spec, 14, 7);
        Rng rng = make_rng(5, 0);
        auto seqs = testutil::random_index_seqs(rng, 6, 14, 1, 12);

        Matrix alone = net.embed({seqs[0]});
        CHECK(alone.rows() == spec.output_dim());

        Matrix batched = net.embed(seqs);
        CHECK((batched.col(0) - alone.col(0)).cwiseAbs().maxCoeff() == 0.0);

        std::vector<std::vector<int>> reordered = {seqs[3], seqs[0], seqs[5]};
        Matrix other = net.embed(reordered);
        CHECK((other.col(1) - alone.col(0)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("padding never changes the embedding") {
    for (const auto& spec :
         {testutil::tiny_spec(), testutil::tiny_bilstm_spec(), low_cost_spec()}) {
        EmbeddingNetwork net(spec, 14, 11);
        Rng rng = make_rng(17, 1);
        auto seqs = testutil::random_index_seqs(rng, 20, 14, 1, 15);
        // a long sequence forces padding on every other batch entry
        seqs.push_back(std::vector<int>(40, 3));
        Matrix with_long = net.embed(seqs);
        seqs.pop_back();
        Matrix without = net.embed(seqs);
        for (Eigen::Index c = 0; c < without.cols(); ++c)
            CHECK((with_long.col(c) - without.col(c)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("embed validates tokens and sequences") {
    EmbeddingNetwork net(testutil::tiny_spec(), 10, 1);
    CHECK_THROWS_AS(net.embed({{1, 10}}), DataError);   // out of range
    CHECK_THROWS_AS(net.embed({{-1}}), DataError);
    CHECK_THROWS_AS(net.embed({std::vector<int>{}}), DataError);  // empty sequence
    CHECK_THROWS_AS(net.embed({}), DataError);          // empty batch
}

TEST_CASE("determinism of embed across runs") {
    EmbeddingNetwork a(low_cost_spec(), 14, 3), b(low_cost_spec(), 14, 3);
    Rng rng = make_rng(5, 2);
    auto seqs = testutil::random_index_seqs(rng, 4, 14, 2, 9);
    CHECK(a.embed(seqs) == b.embed(seqs));
}

namespace {

PairBatch make_pair_batch(Rng& rng, int pairs, int vocab) {
    PairBatch batch;
    batch.left = testutil::random_index_seqs(rng, pairs, vocab, 1, 7);
    batch.right = testutil::random_index_seqs(rng, pairs, vocab, 1, 7);
    for (int i = 0; i < pairs; ++i)
        batch.targets.push_back(static_cast<int>(draw_below(rng, 2)));
    return batch;
}

}  // namespace

TEST_CASE("gradient check against central finite differences") {
    Rng rng = make_rng(123, 9);
    auto batch = make_pair_batch(rng, 4, 10);

    SUBCASE("tiny LSTM config") {
        EmbeddingNetwork net(testutil::tiny_spec(), 10, 21);
        double err = gradient_check(net, batch, pair_loss_batch);
        CHECK(err <= 1e-3);
        CHECK(err < 1e-4);  // doubles should do much better than the gate
    }

    SUBCASE("BiLSTM stack config") {
        EmbeddingNetwork net(testutil::tiny_bilstm_spec(), 10, 22);
        double err = gradient_check(net, batch, pair_loss_batch);
        CHECK(err <= 1e-3);
    }

    SUBCASE("low-cost architecture, sampled coordinates") {
        EmbeddingNetwork net(low_cost_spec(), 10, 23);
        double err = gradient_check(net, batch, pair_loss_batch, 300);
        CHECK(err <= 1e-3);
    }

    SUBCASE("corrupted analytic gradient is caught (negative control)") {
        EmbeddingNetwork net(testutil::tiny_spec(), 10, 21);
        auto broken = [](const Matrix& l, const Matrix& r,
                         const std::vector<int>& t, Matrix* dl, Matrix* dr) {
            double loss = pair_loss_batch(l, r, t, dl, dr);
            if (dl) *dl *= 1.5;  // corrupt one side's backward path
            return loss;
        };
        double err = gradient_check(net, batch, broken);
        CHECK(err > 1e-2);
    }

    SUBCASE("saturated identical pairs give near-zero gradients") {
        EmbeddingNetwork net(testutil::tiny_spec(), 10, 21);
        // same sequence on both sides, target 1, scaled-up head weights so
        // the similarity saturates
        PairBatch same;
        same.left = {{2, 3, 4}, {5, 6}};
        same.right = same.left;
        same.targets = {1, 1};
        for (auto& t : net.params().entries())
            if (t.name == "layer2.dense.W") t.value *= 400.0;
        EmbeddingNetwork::Cache cl, cr;
        Matrix xl = net.forward(same.left, cl);
        Matrix xr = net.forward(same.right, cr);
        Matrix dl, dr;
        double loss = pair_loss_batch(xl, xr, same.targets, &dl, &dr);
        CHECK(loss < 1e-6);
        CHECK(dl.cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    EmbeddingNetwork net(testutil::tiny_spec(), 10, 4);
    TensorStore before = net.params();
    TensorStore grads = net.params().zeros_like();
    AdamOptimizer adam(1e-3);
    adam.step(net.params(), grads);
    for (std::size_t t = 0; t < before.entries().size(); ++t)
        CHECK(net.params().entries()[t].value == before.entries()[t].value);
}
