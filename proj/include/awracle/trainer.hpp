// SPDX-License-Identifier: Apache-2.0
//
// L1 training with AdamW, linear warmup and per-epoch cosine annealing,
// random crop / flip on the query only, and cached context embeddings.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "awracle/embedder.hpp"
#include "awracle/model.hpp"
#include "awracle/synth.hpp"

namespace awracle {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double base_lr = 2e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t warmup_epochs = 3;
    std::size_t crop = 32;
    double flip_prob = 0.5;
    std::uint64_t seed = 1;
    double eta_min = 0.0;
    std::size_t keep_checkpoints = 0;  // epoch checkpoints kept on disk; 0 keeps all

    void validate(const ModelConfig& model) const;
};

std::vector<std::pair<std::string, std::string>> train_config_to_kv(const TrainConfig& config);
/// Applies one "train.*" key; returns false if the key is not a trainer key.
bool apply_train_key(TrainConfig& config, const std::string& key, const std::string& value);

/// Learning rate for a (possibly fractional) epoch in [0, epochs].
double lr_at(const TrainConfig& config, double epoch);

template <typename T>
struct OptimizerState {
    std::vector<std::vector<T>> m, v;
    std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update. Parameters without a gradient
/// buffer are treated as having zero gradient. State is sized on first use.
template <typename T>
void adamw_step(const NamedParams<T>& params, OptimizerState<T>& state, const TrainConfig& config, double lr);

enum class Variant { full, no_dce, no_cf, no_mlf, unpaired, baseline };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& text);
/// Model flags for a variant (unpaired only changes the data).
ModelConfig apply_variant(ModelConfig config, Variant variant);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double lr = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double wall_seconds = 0.0;
};

struct TrainRequest {
    ModelConfig model;
    TrainConfig train;
    EmbedderSpec embedder;
    Variant variant = Variant::full;
    std::filesystem::path data;  // dataset directory (manifest.tsv)
    std::filesystem::path out;
    std::optional<std::filesystem::path> resume;  // epoch checkpoint to continue from
    bool verbose = false;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val_psnr = 0.0;
    std::size_t best_epoch = 0;
    double final_val_psnr = 0.0;
    double final_val_ssim = 0.0;
};

/// Trains, writing train_log.tsv, epoch_%04d.awck, best.awck and
/// manifest_effective.tsv under `out`. A non-finite loss throws
/// NumericalError naming the batch seed, after writing nan_batch.txt.
TrainResult train(const TrainRequest& request);

/// train() with the model flags and data pairing of `variant`.
TrainResult ablation_train(Variant variant, TrainRequest request);

/// Values of train_log.tsv without the wall-clock column.
std::vector<EpochLog> read_train_log(const std::filesystem::path& path);

}  // namespace awracle
