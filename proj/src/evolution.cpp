#include "logsiam/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "logsiam/siamese.hpp"

namespace logsiam {

void NoiseConfig::validate() const {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("noise ratio must be in [0,1]");
    if (!op_duplicate && !op_remove && !op_shuffle)
        throw ConfigError("at least one noise op must be enabled");
    if (elements_per_op < 1) throw ConfigError("elements-per-op must be positive");
    if (shuffle_window < 1) throw ConfigError("shuffle window must be positive");
    if (runs < 1) throw ConfigError("runs must be positive");
}

std::vector<std::string> NoiseConfig::enabled_ops() const {
    std::vector<std::string> ops;
    if (op_duplicate) ops.push_back("duplicate");
    if (op_remove) ops.push_back("remove");
    if (op_shuffle) ops.push_back("shuffle");
    return ops;
}

EventSequence perturb(const EventSequence& s, const NoiseConfig& cfg, Rng& rng,
                      std::uint64_t* remove_skips) {
    cfg.validate();
    if (s.events.empty()) throw DataError("cannot perturb an empty sequence");
    auto ops = cfg.enabled_ops();
    const auto& op = ops[draw_below(rng, ops.size())];
    EventSequence out = s;
    auto& ev = out.events;
    for (int rep = 0; rep < cfg.elements_per_op; ++rep) {
        if (op == "duplicate") {
            std::size_t idx = draw_below(rng, ev.size());
            ev.insert(ev.begin() + static_cast<long>(idx), ev[idx]);
        } else if (op == "remove") {
            if (ev.size() == 1) {
                if (remove_skips) ++*remove_skips;
                continue;
            }
            std::size_t idx = draw_below(rng, ev.size());
            ev.erase(ev.begin() + static_cast<long>(idx));
        } else {  // shuffle a window of adjacent elements
            std::size_t w = std::min<std::size_t>(
                static_cast<std::size_t>(cfg.shuffle_window), ev.size());
            std::size_t start = draw_below(rng, ev.size() - w + 1);
            for (std::size_t i = w; i > 1; --i) {
                std::size_t j = draw_below(rng, i);
                std::swap(ev[start + i - 1], ev[start + j]);
            }
        }
    }
    return out;
}

LabeledDataset apply_noise(const LabeledDataset& test, const NoiseConfig& cfg) {
    cfg.validate();
    LabeledDataset out = test;
    auto count = static_cast<std::size_t>(cfg.ratio * static_cast<double>(test.size()));
    if (count == 0) return out;

    Rng rng = make_rng(cfg.seed, 0x6e6f6973);
    std::vector<std::size_t> idx(test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // partial Fisher-Yates: first `count` entries are the selection
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(draw_below(rng, idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<long>(count));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) out.sequences[i] = perturb(test.sequences[i], cfg, rng);
    return out;
}

nlohmann::json RobustnessReport::to_json() const {
    nlohmann::json j;
    j["ratios"] = ratios;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        nlohmann::json cell;
        cell["f1_x100"] = mean_f1_x100[h];
        cell["precision"] = mean_precision[h];
        cell["recall"] = mean_recall[h];
        cell["runs_f1_x100"] = run_f1_x100[h];
        j["heads"][heads[h]] = std::move(cell);
    }
    return j;
}

RobustnessReport robustness_eval(const EmbeddingNetwork& model, const Vocabulary& vocab,
                                 const std::vector<ClassifierHead>& heads,
                                 const LabeledDataset& test,
                                 const std::vector<double>& ratios,
                                 const NoiseConfig& base_cfg, int jobs) {
    base_cfg.validate();
    if (heads.empty()) throw ConfigError("robustness eval needs at least one head");
    if (test.size() == 0) throw DataError("empty test set");

    RobustnessReport report;
    report.ratios = ratios;
    for (const auto& h : heads) report.heads.push_back(head_kind_name(h.kind()));
    const std::size_t nh = heads.size(), nr = ratios.size();
    const int runs = base_cfg.runs;
    report.mean_f1_x100.assign(nh, std::vector<double>(nr, 0.0));
    report.mean_precision.assign(nh, std::vector<double>(nr, 0.0));
    report.mean_recall.assign(nh, std::vector<double>(nr, 0.0));
    report.run_f1_x100.assign(
        nh, std::vector<std::vector<double>>(nr, std::vector<double>(runs, 0.0)));

    std::vector<int> truth;
    truth.reserve(test.size());
    for (const auto& s : test.sequences) truth.push_back(s.label);

    struct Cell {
        std::size_t ratio_idx;
        int run;
    };
    std::vector<Cell> cells;
    for (std::size_t r = 0; r < nr; ++r)
        for (int run = 0; run < runs; ++run) cells.push_back({r, run});

    // per-cell precision/recall sums guarded by per-cell slots; threads never
    // share a slot
    std::vector<std::vector<std::vector<double>>> cell_prec(nh), cell_rec(nh);
    for (std::size_t h = 0; h < nh; ++h) {
        cell_prec[h].assign(nr, std::vector<double>(runs, 0.0));
        cell_rec[h].assign(nr, std::vector<double>(runs, 0.0));
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= cells.size()) return;
            const auto [ridx, run] = cells[c];
            NoiseConfig cfg = base_cfg;
            cfg.ratio = ratios[ridx];
            cfg.seed = mix_seed(base_cfg.seed, ridx * 1009 + static_cast<std::uint64_t>(run));
            LabeledDataset noisy = apply_noise(test, cfg);
            std::vector<std::vector<int>> encoded;
            encoded.reserve(noisy.size());
            for (const auto& s : noisy.sequences) encoded.push_back(encode(s, vocab));
            Matrix E = embed_dataset(model, encoded);
            for (std::size_t h = 0; h < nh; ++h) {
                Metrics m = evaluate(heads[h].predict(E), truth);
                report.run_f1_x100[h][ridx][static_cast<std::size_t>(run)] = m.f1_x100;
                cell_prec[h][ridx][static_cast<std::size_t>(run)] = m.precision;
                cell_rec[h][ridx][static_cast<std::size_t>(run)] = m.recall;
            }
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t h = 0; h < nh; ++h)
        for (std::size_t r = 0; r < nr; ++r) {
            double f1 = 0.0, prec = 0.0, rec = 0.0;
            for (int run = 0; run < runs; ++run) {
                f1 += report.run_f1_x100[h][r][static_cast<std::size_t>(run)];
                prec += cell_prec[h][r][static_cast<std::size_t>(run)];
                rec += cell_rec[h][r][static_cast<std::size_t>(run)];
            }
            report.mean_f1_x100[h][r] = f1 / runs;
            report.mean_precision[h][r] = prec / runs;
            report.mean_recall[h][r] = rec / runs;
        }
    return report;
}

}  // namespace logsiam
