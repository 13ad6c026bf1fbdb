// logsiam: train and evaluate Siamese LSTM embeddings for event-sequence
// anomaly detection. Subcommands cover the whole pipeline: prepare, pairs,
// train, embed, fit-heads, evaluate, noise-eval, drift, viz, info.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "logsiam/checkpoint.hpp"
#include "logsiam/corpus.hpp"
#include "logsiam/drift.hpp"
#include "logsiam/evolution.hpp"
#include "logsiam/heads.hpp"
#include "logsiam/net.hpp"
#include "logsiam/pairgen.hpp"
#include "logsiam/project.hpp"
#include "logsiam/siamese.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace logsiam;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::uint64_t config_hash(const json& cfg) { return fnv1a(cfg.dump()); }

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw DataError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return j;
}

// content fingerprint for dataset files referenced in reports
std::string file_fingerprint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return to_hex(h);
}

struct DatasetArgs {
    std::string input;       // canonical jsonl
    std::string hdfs_trace;  // LogHub adapter
    std::string hdfs_labels;

    LabeledDataset load() const {
        if (!input.empty()) return load_jsonl(input);
        if (!hdfs_trace.empty() && !hdfs_labels.empty())
            return ingest_hdfs(hdfs_trace, hdfs_labels);
        throw ConfigError("provide --input or both --hdfs-trace and --hdfs-labels");
    }
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args) {
    cmd->add_option("--input", args.input, "canonical JSON-lines dataset");
    cmd->add_option("--hdfs-trace", args.hdfs_trace,
                    "HDFS trace CSV: block_id,\"E5 E22 ...\"");
    cmd->add_option("--hdfs-labels", args.hdfs_labels,
                    "HDFS label CSV: block_id,Normal|Anomaly");
}

std::vector<double> parse_ratio_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad ratio value: " + item);
        }
    }
    if (out.empty()) throw ConfigError("empty ratio list");
    return out;
}

// ---------------------------------------------------------------- prepare --

struct PrepareArgs {
    DatasetArgs data;
    std::string out_dir;
    double train_frac = 0.90;
    double val_frac = 0.03;
    std::uint64_t seed = 1;
    bool keep_duplicates = false;
};

int run_prepare(const PrepareArgs& a) {
    json cfg = {{"command", "prepare"},        {"train_frac", a.train_frac},
                {"val_frac", a.val_frac},      {"seed", a.seed},
                {"keep_duplicates", a.keep_duplicates}};
    auto raw = a.data.load();
    auto unique = a.keep_duplicates ? raw : deduplicate(raw);
    auto s = split(unique, a.train_frac, a.val_frac, a.seed);

    fs::create_directories(a.out_dir);
    save_jsonl(s.train, fs::path(a.out_dir) / "train.jsonl");
    save_jsonl(s.validation, fs::path(a.out_dir) / "val.jsonl");
    save_jsonl(s.test, fs::path(a.out_dir) / "test.jsonl");

    json meta;
    meta["config"] = cfg;
    meta["config_hash"] = to_hex(config_hash(cfg));
    meta["seeds"] = {{"split", a.seed}};
    meta["raw_sequences"] = raw.size();
    meta["unique_sequences"] = unique.size();
    meta["unique_anomaly"] = unique.count_label(1);
    meta["unique_non_anomaly"] = unique.count_label(0);
    meta["label_conflicts"] = unique.meta.conflict_count;
    meta["splits"] = {
        {"train", {{"total", s.train.size()},
                   {"anomaly", s.train.count_label(1)},
                   {"non_anomaly", s.train.count_label(0)}}},
        {"validation", {{"total", s.validation.size()},
                        {"anomaly", s.validation.count_label(1)},
                        {"non_anomaly", s.validation.count_label(0)}}},
        {"test", {{"total", s.test.size()},
                  {"anomaly", s.test.count_label(1)},
                  {"non_anomaly", s.test.count_label(0)}}}};
    write_json(fs::path(a.out_dir) / "prepare.json", meta);
    std::cout << meta.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------ pairs --

struct PairsArgs {
    std::string data;
    std::string algo = "kpone";
    int k = 3;
    std::uint64_t seed = 1;
    bool count_only = false;
    std::string dump;
};

int run_pairs(const PairsArgs& a) {
    auto d = load_jsonl(a.data);
    auto n_a = d.count_label(1);
    auto n_n = d.count_label(0);
    json out = {{"algorithm", a.algo}, {"n_anomaly", n_a}, {"n_non_anomaly", n_n}};
    if (a.algo == "all") {
        out["count"] = count_all(n_a, n_n);
        if (!a.count_only && !a.dump.empty()) {
            AllPairStream stream(d);
            std::ofstream dump(a.dump);
            if (!dump) throw DataError("cannot write " + a.dump);
            TrainingPair p;
            while (stream.next(p)) {
                json line = {{"left_id", d.sequences[p.left].id},
                             {"right_id", d.sequences[p.right].id},
                             {"target", p.target}};
                dump << line.dump() << "\n";
            }
        }
    } else if (a.algo == "kpone") {
        out["k"] = a.k;
        out["count"] = count_kpone(n_a, n_n, a.k);
        out["seed"] = a.seed;
        // a singleton class can only self-pair on the similar side
        if (n_a == 1 || n_n == 1) out["singleton_self_pairing"] = true;
        if (!a.count_only && !a.dump.empty()) {
            auto pairs = generate_kpone(d, a.k, a.seed);
            dump_pairs(d, pairs, a.dump);
        }
    } else {
        throw ConfigError("unknown pair algorithm: " + a.algo);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------ train --

struct TrainArgs {
    std::string data_dir;
    std::string arch = "low-cost";
    std::string algo = "kpone";
    int k = 3;
    int epochs = 100;
    int batch = 256;
    double lr = 1e-3;
    int patience = 10;
    std::uint64_t seed = 1;
    std::string out_dir;
    bool hybrid = false;
    bool feedforward = false;
    double lambda = 1.0;
    bool merge_val = false;
    bool with_test_loss = false;
    int mlp_hidden = 64;
};

int run_train(const TrainArgs& a) {
    if (a.hybrid && a.feedforward)
        throw ConfigError("--hybrid and --feedforward are mutually exclusive");
    json cfg = {{"command", "train"}, {"arch", a.arch},       {"algo", a.algo},
                {"k", a.k},           {"epochs", a.epochs},   {"batch", a.batch},
                {"lr", a.lr},         {"patience", a.patience}, {"seed", a.seed},
                {"hybrid", a.hybrid}, {"feedforward", a.feedforward},
                {"lambda", a.lambda}, {"merge_val", a.merge_val}};

    auto train_set = load_jsonl(fs::path(a.data_dir) / "train.jsonl");
    auto val_set = load_jsonl(fs::path(a.data_dir) / "val.jsonl");
    if (a.merge_val) {
        // final-retrain mode: fold the validation rows back into training and
        // run the full epoch budget without early stopping
        for (auto& s : val_set.sequences) train_set.sequences.push_back(std::move(s));
        val_set.sequences.clear();
    }

    auto spec = resolve_spec(a.arch);
    auto vocab = build_vocab(train_set);
    auto train_enc = EncodedDataset::from(train_set, vocab);
    auto val_enc = EncodedDataset::from(val_set, vocab);

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.learning_rate = a.lr;
    tc.patience = a.merge_val ? 0 : a.patience;
    tc.seed = a.seed;
    tc.hybrid_lambda = a.lambda;
    tc.pairgen.algorithm = a.algo == "all" ? PairAlgorithm::All : PairAlgorithm::KPOne;
    tc.pairgen.k = a.k;
    tc.pairgen.seed = mix_seed(a.seed, 0x70);

    std::optional<EncodedDataset> test_enc;
    if (a.with_test_loss) {
        auto test_set = load_jsonl(fs::path(a.data_dir) / "test.jsonl");
        test_enc = EncodedDataset::from(test_set, vocab);
    }

    std::uint64_t build_seed = mix_seed(a.seed, 0x6d);
    EmbeddingNetwork model(spec, vocab.size(), build_seed);
    TrainHistory history;
    std::optional<MlpHead> head;
    if (a.hybrid || a.feedforward)
        head.emplace(model.output_dim(), a.mlp_hidden, mix_seed(a.seed, 0x68));

    if (a.feedforward)
        history = train_feedforward_baseline(model, *head, train_enc, val_enc, tc);
    else if (a.hybrid)
        history = train_hybrid(model, *head, train_enc, val_enc, tc,
                               test_enc ? &*test_enc : nullptr);
    else
        history = train_siamese(model, train_enc, val_enc, tc,
                                test_enc ? &*test_enc : nullptr);

    json seeds = {{"train", a.seed},
                  {"build", build_seed},
                  {"pairgen", tc.pairgen.seed}};
    json metrics = {{"best_epoch", history.best_epoch},
                    {"final_train_loss",
                     history.train_loss.empty() ? 0.0 : history.train_loss.back()},
                    {"best_val_loss",
                     history.best_epoch >= 0 &&
                             history.best_epoch < static_cast<int>(history.val_loss.size())
                         ? history.val_loss[static_cast<std::size_t>(history.best_epoch)]
                         : 0.0}};
    if (std::isfinite(history.test_loss)) metrics["test_loss"] = history.test_loss;

    json cfg_with_hash = cfg;
    cfg_with_hash["config_hash"] = to_hex(config_hash(cfg));
    save_checkpoint(a.out_dir, model, vocab, head ? &*head : nullptr, seeds,
                    cfg_with_hash, metrics);
    json hist = history.to_json();
    hist["seeds"] = seeds;
    hist["config_hash"] = to_hex(config_hash(cfg));
    write_json(fs::path(a.out_dir) / "history.json", hist);

    json summary = {{"checkpoint", a.out_dir},
                    {"epochs_run", history.train_loss.size()},
                    {"metrics", metrics},
                    {"config_hash", to_hex(config_hash(cfg))}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------ embed --

struct EmbedArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
};

int run_embed(const EmbedArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    auto d = load_jsonl(a.data);
    auto enc = EncodedDataset::from(d, ckpt.vocab);
    Matrix E = embed_dataset(*ckpt.model, enc.seqs);
    std::ofstream out(a.out);
    if (!out) throw DataError("cannot write " + a.out);
    for (Eigen::Index i = 0; i < E.cols(); ++i) {
        json line;
        line["id"] = d.sequences[static_cast<std::size_t>(i)].id;
        line["label"] = d.sequences[static_cast<std::size_t>(i)].label;
        std::vector<double> v(E.col(i).data(), E.col(i).data() + E.rows());
        line["vector"] = v;
        out << line.dump() << "\n";
    }
    json summary = {{"count", E.cols()}, {"dim", E.rows()}, {"out", a.out}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------- fit-heads --

struct FitHeadsArgs {
    std::string checkpoint;
    std::string data;
    std::string heads = "knn,logreg,svm,mlp";
    std::uint64_t seed = 1;
    int knn_k = 5;
    int mlp_hidden = 64;
    std::string out;
};

std::vector<std::string> split_csv_names(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int run_fit_heads(const FitHeadsArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    auto d = load_jsonl(a.data);
    auto enc = EncodedDataset::from(d, ckpt.vocab);
    Matrix E = embed_dataset(*ckpt.model, enc.seqs);

    json cfg = {{"command", "fit-heads"}, {"heads", a.heads}, {"seed", a.seed},
                {"knn_k", a.knn_k},       {"mlp_hidden", a.mlp_hidden}};
    json out;
    out["config_hash"] = to_hex(config_hash(cfg));
    out["seed"] = a.seed;
    out["heads"] = json::array();
    for (const auto& name : split_csv_names(a.heads)) {
        HeadConfig hc;
        hc.kind = head_kind_from_name(name);
        hc.knn_k = a.knn_k;
        hc.mlp_hidden = a.mlp_hidden;
        auto head = ClassifierHead::fit(hc, E, enc.labels, mix_seed(a.seed, fnv1a(name)));
        out["heads"].push_back(head.to_json());
    }
    write_json(a.out, out);
    json summary = {{"out", a.out}, {"trained", split_csv_names(a.heads)}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

std::vector<ClassifierHead> load_heads(const fs::path& path) {
    auto j = read_json(path);
    std::vector<ClassifierHead> heads;
    for (const auto& h : j.at("heads")) heads.push_back(ClassifierHead::from_json(h));
    if (heads.empty()) throw DataError("no heads in " + path.string());
    return heads;
}

// --------------------------------------------------------------- evaluate --

struct EvaluateArgs {
    std::string checkpoint;
    std::string heads;
    std::string data;
    std::string out;
    bool use_checkpoint_head = false;
};

int run_evaluate(const EvaluateArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    auto d = load_jsonl(a.data);
    auto enc = EncodedDataset::from(d, ckpt.vocab);
    Matrix E = embed_dataset(*ckpt.model, enc.seqs);

    json cfg = {{"command", "evaluate"}, {"dataset", a.data},
                {"use_checkpoint_head", a.use_checkpoint_head}};
    json out;
    out["dataset"] = a.data;
    out["dataset_fingerprint"] = file_fingerprint(a.data);
    out["config_hash"] = to_hex(config_hash(cfg));
    out["count"] = d.size();
    out["results"] = json::array();

    auto eval_one = [&](const std::string& name, const std::vector<int>& pred) {
        Metrics m = evaluate(pred, enc.labels);
        json r = m.to_json();
        r["head"] = name;
        out["results"].push_back(std::move(r));
    };

    if (a.use_checkpoint_head) {
        if (!ckpt.head)
            throw DataError("checkpoint has no classifier head; train with --hybrid "
                            "or --feedforward");
        RowVector p = ckpt.head->prob(E);
        std::vector<int> pred;
        for (Eigen::Index i = 0; i < p.size(); ++i) pred.push_back(p(i) >= 0.5 ? 1 : 0);
        eval_one("checkpoint-mlp", pred);
    } else {
        if (a.heads.empty())
            throw ConfigError("--heads is required unless --use-checkpoint-head");
        for (const auto& head : load_heads(a.heads))
            eval_one(head_kind_name(head.kind()), head.predict(E));
    }
    if (!a.out.empty()) write_json(a.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------- noise-eval --

struct NoiseEvalArgs {
    std::string checkpoint;
    std::string heads;
    std::string data;
    std::string ratios = "0,0.05,0.1,0.2,0.3";
    int runs = 5;
    std::uint64_t seed = 1;
    std::string out;
    int jobs = 1;
    bool no_duplicate = false;
    bool no_remove = false;
    bool no_shuffle = false;
    int elements_per_op = 1;
    int shuffle_window = 3;
};

int run_noise_eval(const NoiseEvalArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    auto heads = load_heads(a.heads);
    auto d = load_jsonl(a.data);
    NoiseConfig cfg;
    cfg.runs = a.runs;
    cfg.seed = a.seed;
    cfg.op_duplicate = !a.no_duplicate;
    cfg.op_remove = !a.no_remove;
    cfg.op_shuffle = !a.no_shuffle;
    cfg.elements_per_op = a.elements_per_op;
    cfg.shuffle_window = a.shuffle_window;
    auto ratios = parse_ratio_list(a.ratios);

    auto report = robustness_eval(*ckpt.model, ckpt.vocab, heads, d, ratios, cfg,
                                  a.jobs);
    json out = report.to_json();
    out["seed"] = a.seed;
    out["runs"] = a.runs;
    json jcfg = {{"command", "noise-eval"}, {"ratios", a.ratios}, {"runs", a.runs},
                 {"seed", a.seed},          {"elements_per_op", a.elements_per_op},
                 {"shuffle_window", a.shuffle_window}};
    out["config_hash"] = to_hex(config_hash(jcfg));
    out["dataset_fingerprint"] = file_fingerprint(a.data);
    if (!a.out.empty()) write_json(a.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------ drift --

struct DriftArgs {
    std::string checkpoint;
    std::string fit_data;
    std::string score_data;
    int components = 5;
    std::string covariance = "diagonal";
    std::uint64_t seed = 1;
    double threshold = 0.0;
    bool have_threshold = false;
    std::string out;
};

int run_drift(const DriftArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    fs::path gmm_path = fs::path(a.checkpoint) / "gmm.json";

    if (!a.fit_data.empty()) {
        auto d = load_jsonl(a.fit_data);
        auto enc = EncodedDataset::from(d, ckpt.vocab);
        Matrix E = embed_dataset(*ckpt.model, enc.seqs);
        GmmConfig cfg;
        cfg.components = a.components;
        cfg.kind = a.covariance == "full" ? CovarianceKind::Full
                                          : CovarianceKind::Diagonal;
        auto gmm = fit_gmm(E, cfg, a.seed);
        double clean_score = fitness_score(gmm, E);
        json j = gmm.to_json();
        j["clean_score"] = clean_score;  // calibration anchor for thresholds
        json jcfg = {{"command", "drift-fit"},
                     {"components", a.components},
                     {"covariance", a.covariance},
                     {"seed", a.seed}};
        j["config_hash"] = to_hex(config_hash(jcfg));
        write_json(gmm_path, j);
        json summary = {{"gmm", gmm_path.string()},
                        {"components", a.components},
                        {"clean_score", clean_score},
                        {"iterations", gmm.ll_history.size()}};
        std::cout << summary.dump(2) << "\n";
        return 0;
    }

    if (!a.score_data.empty()) {
        if (!fs::exists(gmm_path))
            throw DataError("no fitted mixture in checkpoint; run drift --fit first");
        auto gmm = GaussianMixture::from_json(read_json(gmm_path));
        if (!a.have_threshold)
            throw ConfigError("--threshold is required for scoring");
        auto d = load_jsonl(a.score_data);
        auto report = drift_monitor(*ckpt.model, ckpt.vocab, gmm, d, a.threshold);
        json out = report.to_json();
        out["dataset_fingerprint"] = file_fingerprint(a.score_data);
        // repeated scoring appends to the report's score history
        if (!a.out.empty()) {
            json history = json::array();
            if (fs::exists(a.out)) {
                auto prev = read_json(a.out);
                if (prev.contains("history")) history = prev["history"];
            }
            history.push_back({{"score", report.score},
                               {"triggered", report.triggered},
                               {"count", report.count}});
            out["history"] = history;
            write_json(a.out, out);
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    throw ConfigError("drift needs --fit <train.jsonl> or --score <incoming.jsonl>");
}

// -------------------------------------------------------------------- viz --

struct VizArgs {
    std::vector<std::string> data;
    std::string checkpoint;
    std::string method = "pca";
    std::string out;
    std::string meta;
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 1;
    int sample = 5000;
};

int run_viz(const VizArgs& a) {
    auto ckpt = load_checkpoint(a.checkpoint);
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::vector<int>> seqs;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> splits;
    for (const auto& file : a.data) {
        auto d = load_jsonl(file);
        std::size_t first = ids.size();
        for (const auto& s : d.sequences) {
            ids.push_back(s.id);
            labels.push_back(s.label);
            seqs.push_back(encode(s, ckpt.vocab));
        }
        splits.push_back({fs::path(file).stem().string(), first, d.size()});
    }
    if (seqs.empty()) throw DataError("no sequences to project");

    if (a.method == "tsne" && static_cast<int>(seqs.size()) > a.sample) {
        // seeded subsample down to the exact-variant limit
        std::vector<std::size_t> idx(seqs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng = make_rng(a.seed, 0x73616d70);
        seeded_shuffle(idx, rng);
        idx.resize(static_cast<std::size_t>(a.sample));
        std::sort(idx.begin(), idx.end());
        std::vector<std::string> ids2;
        std::vector<int> labels2;
        std::vector<std::vector<int>> seqs2;
        for (auto i : idx) {
            ids2.push_back(ids[i]);
            labels2.push_back(labels[i]);
            seqs2.push_back(seqs[i]);
        }
        ids.swap(ids2);
        labels.swap(labels2);
        seqs.swap(seqs2);
        splits.clear();  // ranges are no longer contiguous after subsampling
    }

    Matrix E = embed_dataset(*ckpt.model, seqs);
    Projection2D proj;
    json meta;
    if (a.method == "pca") {
        auto res = pca_project(E, ids, labels, 2);
        proj = std::move(res.projection);
        meta["explained_variance"] = std::vector<double>(
            res.explained_variance.data(),
            res.explained_variance.data() + res.explained_variance.size());
    } else if (a.method == "tsne") {
        proj = tsne_project(E, ids, labels, a.perplexity, a.iterations, a.seed);
    } else {
        throw ConfigError("unknown method: " + a.method + " (expected pca or tsne)");
    }
    proj.splits = std::move(splits);
    export_plot_data(proj, a.out);

    meta["method"] = proj.method;
    meta["params"] = proj.params;
    meta["seed"] = a.seed;
    meta["points"] = proj.points.cols();
    json jcfg = {{"command", "viz"}, {"method", a.method}, {"seed", a.seed},
                 {"perplexity", a.perplexity}, {"iterations", a.iterations}};
    meta["config_hash"] = to_hex(config_hash(jcfg));
    if (!a.meta.empty()) write_json(a.meta, meta);
    std::cout << meta.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------- info --

struct InfoArgs {
    std::string arch = "best-performer";
    int vocab_size = 31;
    int seq_len = 16;
};

int run_info(const InfoArgs& a) {
    auto spec = resolve_spec(a.arch);
    json out = {{"architecture", spec.name},
                {"vocab_size", a.vocab_size},
                {"layers", spec_to_json(spec).at("layers")},
                {"parameters", count_params(spec, a.vocab_size)},
                {"flops", count_flops(spec, a.seq_len)},
                {"flops_seq_len", a.seq_len},
                {"flops_convention",
                 "2 FLOPs per multiply-add, matmul terms only; recurrent cost "
                 "scales with --seq-len, dense stack counted once"}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Siamese LSTM embeddings for event-sequence anomaly detection"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a TOML/INI file");
    app.option_defaults()->always_capture_default();

    PrepareArgs prepare_args;
    auto* prepare = app.add_subcommand("prepare",
                                       "ingest, deduplicate, and split a dataset");
    add_dataset_options(prepare, prepare_args.data);
    prepare->add_option("--out", prepare_args.out_dir, "output directory")->required();
    prepare->add_option("--train-frac", prepare_args.train_frac,
                        "train fraction (validation is carved from it)");
    prepare->add_option("--val-frac", prepare_args.val_frac,
                        "validation fraction of all data");
    prepare->add_option("--seed", prepare_args.seed, "split seed");
    prepare->add_flag("--keep-duplicates", prepare_args.keep_duplicates,
                      "skip deduplication");

    PairsArgs pairs_args;
    auto* pairs = app.add_subcommand("pairs", "count or dump training pairs");
    pairs->add_option("--data", pairs_args.data, "dataset (jsonl)")->required();
    pairs->add_option("--algo", pairs_args.algo, "all | kpone");
    pairs->add_option("--k", pairs_args.k, "dissimilar pairs per anchor (kpone)");
    pairs->add_option("--seed", pairs_args.seed, "sampling seed");
    pairs->add_flag("--count-only", pairs_args.count_only, "print counts only");
    pairs->add_option("--dump", pairs_args.dump, "write pairs as jsonl");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train the Siamese embedding network");
    train->add_option("--data", train_args.data_dir, "prepare output directory")
        ->required();
    train->add_option("--arch", train_args.arch,
                      "best-performer | low-cost | spec file");
    train->add_option("--algo", train_args.algo, "all | kpone");
    train->add_option("--k", train_args.k, "KPOne k");
    train->add_option("--epochs", train_args.epochs, "max epochs");
    train->add_option("--batch", train_args.batch, "pair batch size");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--patience", train_args.patience,
                      "early-stop patience on validation loss");
    train->add_option("--seed", train_args.seed, "master seed");
    train->add_option("--out", train_args.out_dir, "checkpoint directory")->required();
    train->add_flag("--hybrid", train_args.hybrid,
                    "end-to-end: pair loss + classification loss");
    train->add_flag("--feedforward-baseline,--feedforward", train_args.feedforward,
                    "plain classifier, no similarity loss");
    train->add_option("--lambda", train_args.lambda, "hybrid classification weight");
    train->add_flag("--merge-val", train_args.merge_val,
                    "fold validation back into training (fixed epoch budget)");
    train->add_flag("--test-loss", train_args.with_test_loss,
                    "compute all-pairs loss on the test split after training");
    train->add_option("--mlp-hidden", train_args.mlp_hidden,
                      "hidden width of the attached classifier");

    EmbedArgs embed_args;
    auto* embed_cmd = app.add_subcommand("embed", "embed sequences into vectors");
    embed_cmd->add_option("--checkpoint", embed_args.checkpoint, "checkpoint dir")
        ->required();
    embed_cmd->add_option("--data", embed_args.data, "dataset (jsonl)")->required();
    embed_cmd->add_option("--out", embed_args.out, "output jsonl")->required();

    FitHeadsArgs fit_args;
    auto* fit = app.add_subcommand("fit-heads", "train classifiers on embeddings");
    fit->add_option("--checkpoint", fit_args.checkpoint, "checkpoint dir")->required();
    fit->add_option("--data", fit_args.data, "training dataset (jsonl)")->required();
    fit->add_option("--heads", fit_args.heads, "comma list: knn,logreg,svm,mlp");
    fit->add_option("--seed", fit_args.seed, "head training seed");
    fit->add_option("--knn-k", fit_args.knn_k, "neighbors for knn");
    fit->add_option("--mlp-hidden", fit_args.mlp_hidden, "mlp hidden width");
    fit->add_option("--out", fit_args.out, "heads artifact (json)")->required();

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "score classifiers on a dataset");
    evaluate->add_option("--checkpoint", eval_args.checkpoint, "checkpoint dir")
        ->required();
    evaluate->add_option("--heads", eval_args.heads, "heads artifact");
    evaluate->add_option("--data", eval_args.data, "dataset (jsonl)")->required();
    evaluate->add_option("--out", eval_args.out, "metrics report (json)");
    evaluate->add_flag("--use-checkpoint-head", eval_args.use_checkpoint_head,
                       "use the head stored in a hybrid/feedforward checkpoint");

    NoiseEvalArgs noise_args;
    auto* noise = app.add_subcommand("noise-eval",
                                     "robustness against synthetic log evolution");
    noise->add_option("--checkpoint", noise_args.checkpoint, "checkpoint dir")
        ->required();
    noise->add_option("--heads", noise_args.heads, "heads artifact")->required();
    noise->add_option("--data", noise_args.data, "test dataset (jsonl)")->required();
    noise->add_option("--ratios", noise_args.ratios, "comma list of noise ratios");
    noise->add_option("--runs", noise_args.runs, "runs to average per ratio");
    noise->add_option("--seed", noise_args.seed, "noise seed");
    noise->add_option("--out", noise_args.out, "report path (json)");
    noise->add_option("--jobs", noise_args.jobs, "parallel evaluation workers");
    noise->add_flag("--no-duplicate", noise_args.no_duplicate, "disable duplicate op");
    noise->add_flag("--no-remove", noise_args.no_remove, "disable remove op");
    noise->add_flag("--no-shuffle", noise_args.no_shuffle, "disable shuffle op");
    noise->add_option("--elements-per-op", noise_args.elements_per_op,
                      "elements touched per op");
    noise->add_option("--shuffle-window", noise_args.shuffle_window,
                      "adjacent window size for shuffle");

    DriftArgs drift_args;
    auto* drift = app.add_subcommand("drift", "unsupervised log-evolution monitoring");
    drift->add_option("--checkpoint", drift_args.checkpoint, "checkpoint dir")
        ->required();
    drift->add_option("--fit", drift_args.fit_data,
                      "fit a mixture over this dataset's embeddings");
    drift->add_option("--score", drift_args.score_data,
                      "score incoming sequences against the fitted mixture");
    drift->add_option("--components", drift_args.components, "mixture components");
    drift->add_option("--covariance", drift_args.covariance, "diagonal | full");
    drift->add_option("--seed", drift_args.seed, "EM init seed");
    auto* thr = drift->add_option("--threshold", drift_args.threshold,
                                  "retrain trigger: score < threshold");
    drift->add_option("--out", drift_args.out, "fitness report (json)");

    VizArgs viz_args;
    auto* viz = app.add_subcommand("viz", "2-D projection export for plotting");
    viz->add_option("--checkpoint", viz_args.checkpoint, "checkpoint dir")->required();
    viz->add_option("--data", viz_args.data, "dataset(s) to project (jsonl)")
        ->required()
        ->expected(-1);
    viz->add_option("--method", viz_args.method, "pca | tsne");
    viz->add_option("--out", viz_args.out, "plot-data csv")->required();
    viz->add_option("--meta", viz_args.meta, "companion metadata json");
    viz->add_option("--perplexity", viz_args.perplexity, "t-SNE perplexity");
    viz->add_option("--iterations", viz_args.iterations, "t-SNE iterations");
    viz->add_option("--seed", viz_args.seed, "t-SNE seed");
    viz->add_option("--sample", viz_args.sample, "t-SNE subsample cap");

    InfoArgs info_args;
    auto* info = app.add_subcommand("info", "parameter and FLOP accounting");
    info->add_option("--arch", info_args.arch, "best-performer | low-cost | spec file");
    info->add_option("--vocab-size", info_args.vocab_size,
                     "embedding rows including the 2 reserved");
    info->add_option("--seq-len", info_args.seq_len, "reference sequence length");

    auto* config_cmd = app.add_subcommand("config", "configuration utilities");
    bool dump_defaults = false;
    config_cmd->add_flag("--dump-defaults", dump_defaults,
                         "print every option with its default value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        json err = {{"error", {{"code", kExitConfig},
                               {"kind", "config"},
                               {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return kExitConfig;
    }

    try {
        if (prepare->parsed()) return run_prepare(prepare_args);
        if (pairs->parsed()) return run_pairs(pairs_args);
        if (train->parsed()) return run_train(train_args);
        if (embed_cmd->parsed()) return run_embed(embed_args);
        if (fit->parsed()) return run_fit_heads(fit_args);
        if (evaluate->parsed()) return run_evaluate(eval_args);
        if (noise->parsed()) return run_noise_eval(noise_args);
        if (drift->parsed()) {
            drift_args.have_threshold = thr->count() > 0;
            return run_drift(drift_args);
        }
        if (viz->parsed()) return run_viz(viz_args);
        if (info->parsed()) return run_info(info_args);
        if (config_cmd->parsed()) {
            if (dump_defaults) {
                std::cout << app.config_to_str(true, true);
                return 0;
            }
            throw ConfigError("config: nothing to do (try --dump-defaults)");
        }
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        json err = {{"error",
                     {{"code", kExitConfig}, {"kind", "config"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        json err = {{"error",
                     {{"code", kExitData}, {"kind", "data"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        json err = {{"error",
                     {{"code", kExitNumeric}, {"kind", "numeric"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return kExitNumeric;
    }
}
