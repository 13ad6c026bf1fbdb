#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "logsiam/common.hpp"

namespace logsiam {

// One session's ordered event-type tokens with a binary label.
struct EventSequence {
    std::string id;
    std::vector<std::string> events;  // non-empty
    int label = 0;                    // 0 = non-anomaly, 1 = anomaly
};

struct DatasetMeta {
    std::vector<std::string> sources;
    bool deduplicated = false;
    std::uint64_t raw_count = 0;        // count before deduplication
    std::uint64_t conflict_count = 0;   // identical events seen with both labels
};

struct LabeledDataset {
    std::vector<EventSequence> sequences;
    DatasetMeta meta;

    std::size_t size() const { return sequences.size(); }
    std::uint64_t count_label(int label) const;
};

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
    double train_frac = 0.0;
    double val_frac = 0.0;
    std::uint64_t seed = 0;
};

// Token -> index map. Index 0 is padding, 1 is unknown; real tokens start at 2
// in first-occurrence order over the training split.
class Vocabulary {
public:
    static constexpr int kPadIndex = 0;
    static constexpr int kUnkIndex = 1;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& tokens_in_index_order);

    int add(const std::string& token);          // returns existing index if present
    int index_of(const std::string& token) const;  // kUnkIndex when absent
    const std::string& token_of(int index) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    // Tokens in index order, reserved entries included.
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// HDFS-LogHub adapter: trace CSV `block_id,"E5 E22 ..."`, label CSV
// `block_id,Normal|Anomaly`. Sessions without a label abort the run with the
// orphan ids listed.
LabeledDataset ingest_hdfs(const std::filesystem::path& trace_file,
                           const std::filesystem::path& label_file);

// Canonical dataset format: UTF-8 JSON-lines, one object per sequence with
// fields id (string), events (array of strings), label (0/1).
LabeledDataset load_jsonl(const std::filesystem::path& file);
void save_jsonl(const LabeledDataset& d, const std::filesystem::path& file);

// One representative per distinct (events, label), first occurrence order.
// Identical event lists carrying both labels are kept as distinct entries and
// counted in meta.conflict_count.
LabeledDataset deduplicate(const LabeledDataset& d);

// Stratified seeded split. val_frac is measured against the whole dataset but
// the validation rows are carved out of the train portion, so the final train
// share is train_frac - val_frac. Per-class cuts use floor().
DatasetSplit split(const LabeledDataset& d, double train_frac, double val_frac,
                   std::uint64_t seed);

Vocabulary build_vocab(const LabeledDataset& train);

std::vector<int> encode(const EventSequence& s, const Vocabulary& v);

}  // namespace logsiam
