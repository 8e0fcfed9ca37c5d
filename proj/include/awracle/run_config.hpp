// SPDX-License-Identifier: Apache-2.0
//
// A training run's configuration file: model.*, train.* and embed.* keys.
#pragma once

#include <filesystem>
#include <string>

#include "awracle/config.hpp"
#include "awracle/embedder.hpp"
#include "awracle/model.hpp"
#include "awracle/trainer.hpp"

namespace awracle {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    EmbedderSpec embed;
};

/// Unknown keys are a ConfigError. model.seed follows train.seed unless set,
/// and model.embed_tokens / model.embed_dim follow the embedder.
RunConfig run_config_from_kv(const KeyValues& values);
RunConfig read_run_config(const std::filesystem::path& path);
KeyValues run_config_to_kv(const RunConfig& config);

/// Embedder spec stored in a checkpoint's metadata.
EmbedderSpec embedder_spec_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace awracle
