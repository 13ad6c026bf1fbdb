#include "logsiam/pairgen.hpp"

#include <fstream>

#include <json.hpp>

namespace logsiam {

std::uint64_t count_all(std::uint64_t n_anomaly, std::uint64_t n_normal) {
    std::uint64_t n = n_anomaly + n_normal;
    return n * n - n;  // n_a^2 + n_n^2 + 2*n_a*n_n - n_a - n_n
}

std::uint64_t count_kpone(std::uint64_t n_anomaly, std::uint64_t n_normal, int k) {
    if (k < 1) throw ConfigError("KPOne requires k >= 1");
    return static_cast<std::uint64_t>(k + 1) * (n_anomaly + n_normal);
}

AllPairStream::AllPairStream(const LabeledDataset& d) : d_(&d) {
    if (d.size() < 2)
        throw DataError("All pair generation needs at least 2 sequences");
    total_ = count_all(d.count_label(1), d.count_label(0));
}

bool AllPairStream::next(TrainingPair& out) {
    const std::size_t n = d_->size();
    if (i_ == j_) ++j_;  // self-pairs excluded
    if (j_ >= n) {
        ++i_;
        j_ = 0;
        if (i_ == j_) ++j_;
    }
    if (i_ >= n) return false;
    out.left = static_cast<std::uint32_t>(i_);
    out.right = static_cast<std::uint32_t>(j_);
    out.target = d_->sequences[i_].label == d_->sequences[j_].label ? 1 : 0;
    ++j_;
    return true;
}

std::vector<TrainingPair> generate_kpone_from_labels(const std::vector<int>& labels,
                                                     int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("KPOne requires k >= 1");
    std::vector<std::uint32_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i] == 1 ? 1 : 0].push_back(static_cast<std::uint32_t>(i));
    if (by_class[0].empty() || by_class[1].empty())
        throw DataError("KPOne requires both classes to be non-empty");

    Rng rng = make_rng(seed, 0x4b50);
    std::vector<TrainingPair> pairs;
    pairs.reserve(static_cast<std::size_t>(count_kpone(by_class[1].size(),
                                                       by_class[0].size(), k)));
    auto sample_from = [&](const std::vector<std::uint32_t>& pool) {
        return pool[draw_below(rng, pool.size())];
    };
    for (int label = 0; label < 2; ++label) {
        const auto& own = by_class[label];
        const auto& other = by_class[1 - label];
        for (std::uint32_t anchor : own) {
            // similar partner from the anchor's own class; resample on a
            // self-draw unless the class is a singleton
            std::uint32_t partner = sample_from(own);
            while (partner == anchor && own.size() > 1) partner = sample_from(own);
            pairs.push_back({anchor, partner, 1});
            for (int i = 0; i < k; ++i)
                pairs.push_back({anchor, sample_from(other), 0});
        }
    }
    return pairs;
}

std::vector<TrainingPair> generate_kpone(const LabeledDataset& d, int k,
                                         std::uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(d.size());
    for (const auto& s : d.sequences) labels.push_back(s.label);
    return generate_kpone_from_labels(labels, k, seed);
}

void dump_pairs(const LabeledDataset& d, const std::vector<TrainingPair>& pairs,
                const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write pair dump: " + file.string());
    for (const auto& p : pairs) {
        nlohmann::json j;
        j["left_id"] = d.sequences[p.left].id;
        j["right_id"] = d.sequences[p.right].id;
        j["target"] = p.target;
        out << j.dump() << "\n";
    }
}

}  // namespace logsiam
