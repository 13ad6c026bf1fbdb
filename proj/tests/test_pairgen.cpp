#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "logsiam/pairgen.hpp"
#include "testutil.hpp"

using namespace logsiam;

namespace {

LabeledDataset synthetic_dataset(std::size_t n_anomaly, std::size_t n_normal) {
    LabeledDataset d;
    for (std::size_t i = 0; i < n_anomaly; ++i)
        d.sequences.push_back({"a" + std::to_string(i), {"A", std::to_string(i)}, 1});
    for (std::size_t i = 0; i < n_normal; ++i)
        d.sequences.push_back({"n" + std::to_string(i), {"N", std::to_string(i)}, 0});
    return d;
}

// independent oracle: exhaustive enumeration of ordered non-self pairs
std::vector<TrainingPair> enumerate_all_pairs(const LabeledDataset& d) {
    std::vector<TrainingPair> out;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (i == j) continue;
            out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           d.sequences[i].label == d.sequences[j].label ? 1 : 0});
        }
    return out;
}

std::vector<TrainingPair> collect(AllPairStream& stream) {
    std::vector<TrainingPair> out;
    TrainingPair p;
    while (stream.next(p)) out.push_back(p);
    return out;
}

}  // namespace

TEST_CASE("count formulas") {
    CHECK(count_all(1, 1) == 2);
    CHECK(count_all(2, 2) == 12);  // 4 sequences, ordered non-self = 4*3
    CHECK(count_kpone(100, 900, 3) == 4000);
    // closed form matches the expansion termwise
    for (std::uint64_t na : {0ull, 1ull, 7ull, 100ull})
        for (std::uint64_t nn : {1ull, 2ull, 53ull}) {
            if (na + nn < 1) continue;
            CHECK(count_all(na, nn) ==
                  na * na + nn * nn + 2 * na * nn - na - nn);
        }
}

TEST_CASE("generate_all equals the enumeration oracle") {
    auto d = synthetic_dataset(2, 1);  // {A1, A2, N1}
    AllPairStream stream(d);
    auto pairs = collect(stream);
    auto oracle = enumerate_all_pairs(d);
    REQUIRE(pairs.size() == 6);
    REQUIRE(pairs.size() == oracle.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].left == oracle[i].left);
        CHECK(pairs[i].right == oracle[i].right);
        CHECK(pairs[i].target == oracle[i].target);
    }
    int similar = 0;
    for (const auto& p : pairs) similar += p.target;
    CHECK(similar == 2);  // (A1,A2) and (A2,A1)
}

TEST_CASE("two-sequence dataset yields two cross-class pairs") {
    auto d = synthetic_dataset(1, 1);
    AllPairStream stream(d);
    auto pairs = collect(stream);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].target == 0);
    CHECK(pairs[1].target == 0);
}

TEST_CASE("generate_all cardinality matches count_all over random shapes") {
    Rng rng = make_rng(2024, 0);
    for (int trial = 0; trial < 60; ++trial) {
        auto na = 1 + draw_below(rng, 12);
        auto nn = 1 + draw_below(rng, 12);
        auto d = synthetic_dataset(na, nn);
        AllPairStream stream(d);
        auto pairs = collect(stream);
        CHECK(pairs.size() == count_all(na, nn));
        CHECK(stream.total() == count_all(na, nn));
        // no self pairs, all pairs distinct, labels consistent
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        for (const auto& p : pairs) {
            CHECK(p.left != p.right);
            CHECK(seen.insert({p.left, p.right}).second);
            CHECK(p.target == (d.sequences[p.left].label ==
                               d.sequences[p.right].label ? 1 : 0));
        }
    }
}

TEST_CASE("generate_all rejects datasets below two sequences") {
    auto d = synthetic_dataset(1, 0);
    CHECK_THROWS_AS(AllPairStream{d}, DataError);
}

TEST_CASE("kpone cardinality, anchors, and ratio") {
    auto d = synthetic_dataset(5, 20);
    const int k = 3;
    auto pairs = generate_kpone(d, k, 99);
    CHECK(pairs.size() == count_kpone(5, 20, k));

    std::map<std::uint32_t, int> as_left;
    std::map<std::uint32_t, int> similar_of;
    int similar = 0, dissimilar = 0;
    for (const auto& p : pairs) {
        ++as_left[p.left];
        CHECK(p.target == (d.sequences[p.left].label ==
                           d.sequences[p.right].label ? 1 : 0));
        if (p.target == 1) {
            ++similar;
            ++similar_of[p.left];
        } else {
            ++dissimilar;
        }
    }
    // every anchor appears exactly k+1 times as the left element
    CHECK(as_left.size() == d.size());
    for (const auto& [anchor, n] : as_left) CHECK(n == k + 1);
    for (const auto& [anchor, n] : similar_of) CHECK(n == 1);
    CHECK(dissimilar == k * similar);
}

TEST_CASE("kpone with one anchor per class") {
    auto d = synthetic_dataset(1, 1);
    auto pairs = generate_kpone(d, 1, 7);
    REQUIRE(pairs.size() == 4);
    int similar = 0;
    for (const auto& p : pairs) similar += p.target;
    CHECK(similar == 2);
    // singleton classes may self-pair on the similar side
    for (const auto& p : pairs)
        if (p.target == 1) CHECK(p.left == p.right);
}

TEST_CASE("kpone is deterministic given seed") {
    auto d = synthetic_dataset(8, 30);
    auto p1 = generate_kpone(d, 3, 123);
    auto p2 = generate_kpone(d, 3, 123);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].left == p2[i].left);
        CHECK(p1[i].right == p2[i].right);
    }
    auto p3 = generate_kpone(d, 3, 124);
    bool same = true;
    for (std::size_t i = 0; i < p1.size(); ++i)
        same = same && p1[i].right == p3[i].right;
    CHECK_FALSE(same);
}

TEST_CASE("kpone similar partners avoid the anchor when possible") {
    auto d = synthetic_dataset(6, 6);
    auto pairs = generate_kpone(d, 2, 5);
    for (const auto& p : pairs)
        if (p.target == 1) CHECK(p.left != p.right);
}

TEST_CASE("kpone rejects an empty class and bad K") {
    auto d = synthetic_dataset(0, 5);
    CHECK_THROWS_AS(generate_kpone(d, 3, 1), DataError);
    auto d2 = synthetic_dataset(2, 5);
    CHECK_THROWS_AS(generate_kpone(d2, 0, 1), ConfigError);
}

TEST_CASE("kpone stays far below all-pairs on a grid") {
    for (std::uint64_t na : {100ull, 500ull, 2000ull})
        for (std::uint64_t nn : {100ull, 1000ull, 10000ull})
            for (int k : {1, 3, 5, 10})
                CHECK(count_kpone(na, nn, k) < count_all(na, nn));
}

TEST_CASE("pair dump writes one json line per pair") {
    auto d = synthetic_dataset(2, 2);
    auto pairs = generate_kpone(d, 1, 3);
    auto dir = testutil::temp_dir("pairdump");
    dump_pairs(d, pairs, dir / "pairs.jsonl");
    std::ifstream in(dir / "pairs.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == pairs.size());
}
