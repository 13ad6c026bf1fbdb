#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include <json.hpp>

#include "logsiam/corpus.hpp"
#include "logsiam/heads.hpp"
#include "logsiam/net.hpp"

namespace logsiam {

// Checkpoint directory layout:
//   checkpoint.json  metadata: architecture, vocabulary, seeds, training
//                    config, metrics, and the tensor manifest (name, shape,
//                    byte offset)
//   params.bin       little-endian 32-bit floats, row-major, manifest order
// A hybrid/feedforward head rides along as head.* tensors in the same blob.
struct Checkpoint {
    ArchitectureSpec spec;
    Vocabulary vocab;
    std::unique_ptr<EmbeddingNetwork> model;
    std::optional<MlpHead> head;
    nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& dir, const EmbeddingNetwork& model,
                     const Vocabulary& vocab, const MlpHead* head,
                     const nlohmann::json& seeds, const nlohmann::json& train_config,
                     const nlohmann::json& metrics);

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace logsiam
