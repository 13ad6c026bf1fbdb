#include "logsiam/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace logsiam {

using nlohmann::json;

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t LabeledDataset::count_label(int label) const {
    std::uint64_t n = 0;
    for (const auto& s : sequences)
        if (s.label == label) ++n;
    return n;
}

Vocabulary::Vocabulary() {
    tokens_ = {"<pad>", "<unk>"};
    index_.emplace("<pad>", kPadIndex);
    index_.emplace("<unk>", kUnkIndex);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens_in_index_order) {
    if (tokens_in_index_order.size() < 2)
        throw DataError("vocabulary must contain the two reserved entries");
    tokens_ = tokens_in_index_order;
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
        if (!index_.emplace(tokens_[i], i).second)
            throw DataError("vocabulary has duplicate token: " + tokens_[i]);
    }
}

int Vocabulary::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    int idx = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, idx);
    return idx;
}

int Vocabulary::index_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocabulary::token_of(int index) const {
    if (index < 0 || index >= size())
        throw DataError("vocabulary index out of range: " + std::to_string(index));
    return tokens_[static_cast<std::size_t>(index)];
}

namespace {

// Splits a CSV line into exactly two fields; the second may be double-quoted.
std::pair<std::string, std::string> split_csv2(const std::string& line,
                                               const std::string& file,
                                               std::size_t lineno) {
    auto comma = line.find(',');
    if (comma == std::string::npos)
        throw DataError(file + ":" + std::to_string(lineno) + ": expected two CSV fields");
    std::string first = line.substr(0, comma);
    std::string second = line.substr(comma + 1);
    if (!second.empty() && second.front() == '"') {
        auto close = second.rfind('"');
        if (close == 0)
            throw DataError(file + ":" + std::to_string(lineno) + ": unterminated quote");
        second = second.substr(1, close - 1);
    }
    // trailing CR from CRLF files
    while (!second.empty() && (second.back() == '\r' || second.back() == ' '))
        second.pop_back();
    return {first, second};
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

bool looks_like_header(const std::string& first, const std::string& second) {
    return first == "BlockId" || first == "block_id" || second == "Label" ||
           second == "EventSequence";
}

}  // namespace

LabeledDataset ingest_hdfs(const std::filesystem::path& trace_file,
                           const std::filesystem::path& label_file) {
    std::ifstream labels_in(label_file);
    if (!labels_in)
        throw DataError("cannot open label file: " + label_file.string());

    std::unordered_map<std::string, int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(labels_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto [id, value] = split_csv2(line, label_file.string(), lineno);
        if (lineno == 1 && looks_like_header(id, value)) continue;
        int label;
        if (value == "Normal")
            label = 0;
        else if (value == "Anomaly")
            label = 1;
        else
            throw DataError(label_file.string() + ":" + std::to_string(lineno) +
                            ": label must be Normal or Anomaly, got '" + value + "'");
        labels[id] = label;
    }

    std::ifstream trace_in(trace_file);
    if (!trace_in)
        throw DataError("cannot open trace file: " + trace_file.string());

    LabeledDataset d;
    d.meta.sources = {trace_file.string(), label_file.string()};
    std::vector<std::string> orphans;
    lineno = 0;
    while (std::getline(trace_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto [id, events_str] = split_csv2(line, trace_file.string(), lineno);
        if (lineno == 1 && looks_like_header(id, events_str)) continue;
        auto events = split_tokens(events_str);
        if (events.empty())
            throw DataError(trace_file.string() + ":" + std::to_string(lineno) +
                            ": session '" + id + "' has an empty event list");
        auto it = labels.find(id);
        if (it == labels.end()) {
            orphans.push_back(id);
            continue;
        }
        d.sequences.push_back(EventSequence{id, std::move(events), it->second});
    }
    if (!orphans.empty()) {
        std::string msg = std::to_string(orphans.size()) + " traced session(s) missing a label:";
        std::size_t shown = std::min<std::size_t>(orphans.size(), 20);
        for (std::size_t i = 0; i < shown; ++i) msg += " " + orphans[i];
        if (orphans.size() > shown) msg += " ...";
        throw DataError(msg);
    }
    d.meta.raw_count = d.sequences.size();
    return d;
}

LabeledDataset load_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open dataset: " + file.string());
    LabeledDataset d;
    d.meta.sources = {file.string()};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        EventSequence s;
        try {
            s.id = j.at("id").get<std::string>();
            s.events = j.at("events").get<std::vector<std::string>>();
            s.label = j.at("label").get<int>();
        } catch (const json::exception& e) {
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (s.events.empty())
            throw DataError(file.string() + ":" + std::to_string(lineno) +
                            ": sequence '" + s.id + "' has an empty event list");
        if (s.label != 0 && s.label != 1)
            throw DataError(file.string() + ":" + std::to_string(lineno) +
                            ": label must be 0 or 1");
        d.sequences.push_back(std::move(s));
    }
    d.meta.raw_count = d.sequences.size();
    return d;
}

void save_jsonl(const LabeledDataset& d, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write dataset: " + file.string());
    for (const auto& s : d.sequences) {
        json j;
        j["id"] = s.id;
        j["events"] = s.events;
        j["label"] = s.label;
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("write failed: " + file.string());
}

LabeledDataset deduplicate(const LabeledDataset& d) {
    LabeledDataset out;
    out.meta = d.meta;
    out.meta.deduplicated = true;
    out.meta.raw_count = d.sequences.size();

    // key = label prefix + joined events
    std::unordered_map<std::string, int> seen;          // (events,label) -> count
    std::unordered_map<std::string, unsigned> labels_seen;  // events -> label bitmask
    auto events_key = [](const EventSequence& s) {
        std::string k;
        for (const auto& e : s.events) {
            k += e;
            k += '\x1f';
        }
        return k;
    };
    for (const auto& s : d.sequences) {
        std::string ek = events_key(s);
        std::string k = (s.label ? "1" : "0") + ek;
        labels_seen[ek] |= s.label ? 2u : 1u;
        if (seen.emplace(std::move(k), 1).second) out.sequences.push_back(s);
    }
    out.meta.conflict_count = 0;
    for (const auto& [ek, mask] : labels_seen)
        if (mask == 3u) ++out.meta.conflict_count;
    return out;
}

DatasetSplit split(const LabeledDataset& d, double train_frac, double val_frac,
                   std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("train fraction must be in (0,1)");
    if (!(val_frac >= 0.0 && val_frac < train_frac))
        throw ConfigError("val fraction must be in [0, train_frac)");

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < d.sequences.size(); ++i)
        by_class[d.sequences[i].label].push_back(i);

    DatasetSplit out;
    out.train_frac = train_frac;
    out.val_frac = val_frac;
    out.seed = seed;
    for (auto* part : {&out.train, &out.validation, &out.test}) {
        part->meta = d.meta;
    }

    for (int label = 0; label < 2; ++label) {
        auto& idx = by_class[label];
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(label));
        seeded_shuffle(idx, rng);
        std::size_t n = idx.size();
        // the validation share is carved out of the train portion, so the
        // final train cut is (train_frac - val_frac) of each class
        auto n_train = static_cast<std::size_t>((train_frac - val_frac) *
                                                static_cast<double>(n));
        auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
        if (n > 0 && n_train == 0)
            throw DataError("split leaves class " + std::to_string(label) +
                            " empty in the train partition");
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = d.sequences[idx[i]];
            if (i < n_train)
                out.train.sequences.push_back(s);
            else if (i < n_train + n_val)
                out.validation.sequences.push_back(s);
            else
                out.test.sequences.push_back(s);
        }
    }
    // keep partitions in deterministic but shuffled order; they were appended
    // class-by-class above, so interleave with one more seeded pass
    for (auto* part : {&out.train, &out.validation, &out.test}) {
        Rng rng = make_rng(seed, 7);
        seeded_shuffle(part->sequences, rng);
        part->meta.raw_count = part->sequences.size();
    }
    return out;
}

Vocabulary build_vocab(const LabeledDataset& train) {
    Vocabulary v;
    for (const auto& s : train.sequences)
        for (const auto& e : s.events) v.add(e);
    return v;
}

std::vector<int> encode(const EventSequence& s, const Vocabulary& v) {
    std::vector<int> out;
    out.reserve(s.events.size());
    for (const auto& e : s.events) out.push_back(v.index_of(e));
    return out;
}

}  // namespace logsiam
