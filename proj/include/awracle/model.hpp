// SPDX-License-Identifier: Apache-2.0
//
// Context-conditioned restoration network: a residual U-Net whose decoder
// levels fuse degradation context. At each fused level l a DCE block turns
// the context embedding E_C [2L x D] into O_DCE [2L x C^l] and a CF block
// cross-attends from the decoder feature map F^l [K^l x H^l x W^l] into it.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "awracle/nn.hpp"

namespace awracle {

struct AblationFlags {
    bool use_dce_mhsa = true;
    bool use_cf_mhca = true;
    bool multi_level_fusion = true;
    int fusion_level_when_single = -1;  // -1: deepest level
};

struct ModelConfig {
    std::size_t num_levels = 4;
    std::vector<std::size_t> backbone_channels{32, 48, 64, 96};  // K^l, shallow to deep
    std::vector<std::size_t> dce_channels{16, 16, 24, 32};       // C^l
    std::size_t heads = 4;
    std::size_t blocks_per_level = 2;
    std::size_t embed_tokens = 17;  // L
    std::size_t embed_dim = 32;     // D
    bool use_context = true;        // false: backbone only, no DCE/CF at all
    AblationFlags ablation;
    bool zero_init_head = true;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t required_multiple() const { return std::size_t{1} << (num_levels - 1); }
    /// Decoder levels that carry a DCE/CF pair, ascending.
    std::vector<std::size_t> fusion_levels() const;
};

template <typename T>
struct DceBlock {
    Linear<T> proj;  // D -> C^l
    LayerNorm<T> ln;
    std::optional<MultiHeadAttention<T>> attn;

    DceBlock() = default;
    DceBlock(std::size_t embed_dim, std::size_t channels, std::size_t heads, bool use_mhsa, Rng& rng);
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct CfBlock {
    Conv2d<T> in_proj;  // 1x1, K^l -> C^l
    LayerNorm<T> ln_feat, ln_ctx;
    std::optional<MultiHeadAttention<T>> attn;
    Conv2d<T> out_proj;    // 3x3, C^l -> C^l
    Conv2d<T> post_merge;  // 1x1, K^l + C^l -> K^l

    CfBlock() = default;
    CfBlock(std::size_t feature_channels, std::size_t channels, std::size_t heads, bool use_mhca, Rng& rng);
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

/// O_DCE = MHSA(LN(GELU(Proj(E_C)))); without MHSA the normalized projection
/// is returned as is.
template <typename T>
Tensor<T> dce_forward(const DceBlock<T>& block, const Tensor<T>& context_embedding);

/// Fuses O_DCE into F^l and returns a map with F^l's shape.
template <typename T>
Tensor<T> cf_forward(const CfBlock<T>& block, const Tensor<T>& features, const Tensor<T>& dce_output);

template <typename T>
struct ResBlock {
    Conv2d<T> conv1, conv2;

    ResBlock() = default;
    ResBlock(std::size_t channels, Rng& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
class AwracleNet {
   public:
    explicit AwracleNet(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    /// Training-mode forward: I_q + predicted residual, unclamped.
    /// `context_embedding` may be undefined only when use_context is false.
    Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& context_embedding) const;
    /// Inference: no tape, output clamped to [0, 1].
    Tensor<T> restore(const Tensor<T>& query, const Tensor<T>& context_embedding) const;

    /// O_DCE per fused level (no tape).
    std::map<std::size_t, Tensor<T>> dce_outputs(const Tensor<T>& context_embedding) const;

    /// All trainable tensors, sorted by dotted name.
    NamedParams<T> parameters() const;
    /// Copies values by name; every model tensor must be present with a matching shape.
    void load_parameters(const NamedParams<float>& values);
    std::size_t parameter_count() const;

    const DceBlock<T>* dce_block(std::size_t level) const;
    const CfBlock<T>* cf_block(std::size_t level) const;

   private:
    ModelConfig config_;
    Conv2d<T> stem_;
    std::vector<std::vector<ResBlock<T>>> enc_blocks_;
    std::vector<Conv2d<T>> down_;
    std::vector<ResBlock<T>> mid_blocks_;
    std::vector<std::vector<ResBlock<T>>> dec_blocks_;  // indexed by level
    std::vector<Conv2d<T>> up_;                         // level l < n-1: K^{l+1} -> K^l
    std::vector<Conv2d<T>> merge_;                      // level l < n-1: 2K^l -> K^l
    std::map<std::size_t, DceBlock<T>> dce_;
    std::map<std::size_t, CfBlock<T>> cf_;
    Conv2d<T> head_;
};

template <typename T>
Tensor<T> model_forward(const AwracleNet<T>& model, const Tensor<T>& query, const Tensor<T>& context_embedding) {
    return model.forward(query, context_embedding);
}

template <typename T>
NamedParams<T> collect_parameters(const AwracleNet<T>& model) {
    return model.parameters();
}

// --- checkpoints -----------------------------------------------------------

/// "AWCK", u32 version, u32 tensor count, [u16 name length, UTF-8 name, AWTF
/// tensor] per tensor, then a trailing UTF-8 "key=value" block up to EOF.
struct Checkpoint {
    NamedParams<float> tensors;
    std::vector<std::pair<std::string, std::string>> meta;

    const Tensor32* find(const std::string& name) const;
    std::optional<std::string> meta_value(const std::string& key) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

std::vector<std::pair<std::string, std::string>> model_config_to_kv(const ModelConfig& config);
/// Applies one "model.*" key; returns false if the key is not a model key.
bool apply_model_key(ModelConfig& config, const std::string& key, const std::string& value);

/// Builds a float model from a checkpoint's embedded config and tensors.
AwracleNet<float> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace awracle
