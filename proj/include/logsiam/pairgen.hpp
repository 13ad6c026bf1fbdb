#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "logsiam/common.hpp"
#include "logsiam/corpus.hpp"

namespace logsiam {

// A training pair references its dataset by index; target 1 means both
// sequences carry the same class label.
struct TrainingPair {
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    int target = 0;
};

enum class PairAlgorithm { All, KPOne };

struct PairGenConfig {
    PairAlgorithm algorithm = PairAlgorithm::KPOne;
    int k = 3;                  // dissimilar pairs per anchor (KPOne)
    std::uint64_t seed = 0;
};

// N_All = n_a^2 + n_n^2 + 2*n_a*n_n - n_a - n_n (every ordered non-self pair).
std::uint64_t count_all(std::uint64_t n_anomaly, std::uint64_t n_normal);

// N_KPOne = (K+1) * (n_a + n_n).
std::uint64_t count_kpone(std::uint64_t n_anomaly, std::uint64_t n_normal, int k);

// Streams every ordered pair (i, j), i != j, in index order without
// materializing the full pair set.
class AllPairStream {
public:
    explicit AllPairStream(const LabeledDataset& d);

    bool next(TrainingPair& out);
    std::uint64_t total() const { return total_; }

private:
    const LabeledDataset* d_;
    std::size_t i_ = 0;
    std::size_t j_ = 0;
    std::uint64_t total_ = 0;
};

// KPOne (Alg. 2): per anchor, one partner sampled from its own class and k
// partners from the opposite class. Pairs reference `d`; `d` must be the
// dataset both class subsets came from. Deterministic given seed.
std::vector<TrainingPair> generate_kpone(const LabeledDataset& d, int k,
                                         std::uint64_t seed);

// Same sampling over bare labels; used when pairs are regenerated each epoch.
std::vector<TrainingPair> generate_kpone_from_labels(const std::vector<int>& labels,
                                                     int k, std::uint64_t seed);

// Audit dump: JSON-lines {left_id, right_id, target}.
void dump_pairs(const LabeledDataset& d, const std::vector<TrainingPair>& pairs,
                const std::filesystem::path& file);

}  // namespace logsiam
