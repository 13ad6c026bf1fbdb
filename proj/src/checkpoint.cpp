#include "logsiam/checkpoint.hpp"

#include <fstream>

namespace logsiam {

using nlohmann::json;

namespace {

void write_tensors(std::ofstream& out, const TensorStore& store, json& manifest,
                   std::uint64_t& offset) {
    for (const auto& t : store.entries()) {
        manifest.push_back({{"name", t.name},
                            {"rows", t.value.rows()},
                            {"cols", t.value.cols()},
                            {"offset", offset}});
        for (Eigen::Index r = 0; r < t.value.rows(); ++r)
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                float f = static_cast<float>(t.value(r, c));
                out.write(reinterpret_cast<const char*>(&f), sizeof(float));
                offset += sizeof(float);
            }
    }
}

void read_tensors(std::ifstream& in, const json& manifest, TensorStore& store) {
    for (const auto& entry : manifest) {
        auto name = entry.at("name").get<std::string>();
        auto rows = entry.at("rows").get<Eigen::Index>();
        auto cols = entry.at("cols").get<Eigen::Index>();
        in.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        Matrix& m = store.add(name, rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                float f = 0.0f;
                in.read(reinterpret_cast<char*>(&f), sizeof(float));
                m(r, c) = static_cast<double>(f);
            }
        if (!in) throw DataError("parameter blob truncated at tensor " + name);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const EmbeddingNetwork& model,
                     const Vocabulary& vocab, const MlpHead* head,
                     const json& seeds, const json& train_config,
                     const json& metrics) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    json meta;
    meta["format_version"] = 1;
    meta["dtype"] = "f32le";
    meta["layout"] = "row-major";
    meta["architecture"] = spec_to_json(model.spec());
    meta["vocabulary"] = vocab.tokens();
    meta["seeds"] = seeds;
    meta["train_config"] = train_config;
    meta["metrics"] = metrics;

    std::ofstream blob(dir / "params.bin", std::ios::binary);
    if (!blob) throw DataError("cannot write " + (dir / "params.bin").string());
    json manifest = json::array();
    std::uint64_t offset = 0;
    write_tensors(blob, model.params(), manifest, offset);
    if (head) {
        meta["head"] = {{"hidden", head->hidden_dim()}, {"input_dim", head->input_dim()}};
        write_tensors(blob, head->params(), manifest, offset);
    }
    meta["tensors"] = std::move(manifest);
    blob.close();

    std::ofstream out(dir / "checkpoint.json");
    if (!out) throw DataError("cannot write " + (dir / "checkpoint.json").string());
    out << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "checkpoint.json");
    if (!meta_in)
        throw DataError("not a checkpoint directory (missing checkpoint.json): " +
                        dir.string());
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw DataError("bad checkpoint metadata: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.metadata = meta;
    ckpt.spec = spec_from_json(meta.at("architecture"));
    ckpt.vocab = Vocabulary(meta.at("vocabulary").get<std::vector<std::string>>());

    std::ifstream blob(dir / "params.bin", std::ios::binary);
    if (!blob) throw DataError("missing parameter blob: " + (dir / "params.bin").string());

    json model_manifest = json::array();
    json head_manifest = json::array();
    for (const auto& entry : meta.at("tensors")) {
        if (entry.at("name").get<std::string>().rfind("head.", 0) == 0)
            head_manifest.push_back(entry);
        else
            model_manifest.push_back(entry);
    }
    TensorStore params;
    read_tensors(blob, model_manifest, params);
    ckpt.model = std::make_unique<EmbeddingNetwork>(ckpt.spec, ckpt.vocab.size(),
                                                    std::move(params));
    if (meta.contains("head")) {
        TensorStore head_params;
        read_tensors(blob, head_manifest, head_params);
        ckpt.head.emplace(std::move(head_params));
    }
    return ckpt;
}

}  // namespace logsiam
