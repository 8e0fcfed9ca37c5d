// SPDX-License-Identifier: Apache-2.0
//
// Context embeddings E_d, E_c for a context pair. The restoration model only
// sees [L x D] token matrices, so the image encoder is pluggable: a frozen,
// seeded toy vision transformer, or a content-addressed store of
// precomputed embeddings.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "awracle/image.hpp"
#include "awracle/nn.hpp"
#include "awracle/types.hpp"

namespace awracle {

enum class EmbedderBackend { toy_encoder, file };

struct EmbedderSpec {
    EmbedderBackend backend = EmbedderBackend::toy_encoder;
    std::size_t input_resolution = 32;
    std::size_t patch = 8;
    std::size_t num_tokens = 17;  // L
    std::size_t embed_dim = 32;   // D
    std::size_t blocks = 2;
    std::size_t heads = 4;
    std::uint64_t seed = 7;
    std::filesystem::path store;  // file backend only

    void validate() const;
};

struct ContextPair {
    Image degraded;
    Image clean;
    Degradation kind = Degradation::haze;
    Severity severity = Severity::light;
    int scene_id = 0;        // scene of the degraded image
    int clean_scene_id = 0;  // equals scene_id unless built unpaired

    static ContextPair paired(Image degraded, Image clean, Degradation kind, Severity severity, int scene_id);
    /// Deliberately mismatched scenes, for the unpaired-context ablation.
    static ContextPair unpaired(Image degraded, Image clean, Degradation kind, Severity severity,
                                int degraded_scene_id, int clean_scene_id);
    bool is_paired() const { return scene_id == clean_scene_id; }
};

class ContextEmbedder {
   public:
    explicit ContextEmbedder(EmbedderSpec spec);

    const EmbedderSpec& spec() const { return spec_; }
    std::size_t num_tokens() const { return spec_.num_tokens; }
    std::size_t embed_dim() const { return spec_.embed_dim; }

    /// [L x D] embedding of a [3 x H x W] image in [0, 1]. No gradients flow
    /// and no randomness is used.
    Tensor32 embed(const Image& image) const;
    /// concat_rows(embed(degraded), embed(clean)); the degraded half is rows [0, L).
    Tensor32 embed_context(const ContextPair& pair) const;

    /// Frozen toy-encoder weights (empty for the file backend).
    NamedParams<float> parameters() const;

   private:
    struct Block {
        LayerNorm<float> ln1, ln2;
        MultiHeadAttention<float> attn;
        Linear<float> fc1, fc2;
    };

    Tensor32 embed_toy(const Image& image) const;
    Tensor32 embed_file(const Image& image) const;

    EmbedderSpec spec_;
    Linear<float> patch_embed_;
    Tensor32 cls_token_;
    Tensor32 positions_;
    std::vector<Block> blocks_;
    LayerNorm<float> final_ln_;
};

Tensor32 embed(const EmbedderSpec& spec, const Image& image);
Tensor32 embed_context(const EmbedderSpec& spec, const ContextPair& pair);

/// Content key of an image: lowercase hex FNV-1a 64 of its f32 LE payload.
std::string embedding_key(const Image& image);

/// "embed.*" keys (backend, resolution, patch, tokens, dim, blocks, heads,
/// seed, store).
std::vector<std::pair<std::string, std::string>> embedder_spec_to_kv(const EmbedderSpec& spec);
/// Applies one "embed.*" key; returns false if the key is not an embedder key.
bool apply_embed_key(EmbedderSpec& spec, const std::string& key, const std::string& value);

/// Writes <key>.awtf for each image plus an index.tsv of "<key>\t<source>".
void write_embedding_store(const std::filesystem::path& dir, const ContextEmbedder& embedder,
                           const std::vector<std::filesystem::path>& sources);

}  // namespace awracle
