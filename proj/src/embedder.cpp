// SPDX-License-Identifier: Apache-2.0
#include "awracle/embedder.hpp"

#include <cmath>
#include <fstream>

#include "awracle/awtf.hpp"
#include "awracle/config.hpp"

namespace awracle {

void EmbedderSpec::validate() const {
    if (input_resolution == 0 || num_tokens == 0 || embed_dim == 0) {
        throw ParameterError("embedder resolution, token count and width must be positive");
    }
    if (backend != EmbedderBackend::toy_encoder) return;
    if (patch == 0 || input_resolution % patch != 0) {
        throw ParameterError("embedder resolution " + std::to_string(input_resolution) +
                             " is not divisible by patch " + std::to_string(patch));
    }
    const std::size_t side = input_resolution / patch;
    if (num_tokens != side * side + 1) {
        throw ParameterError("embedder token count must be (resolution/patch)^2 + 1 = " +
                             std::to_string(side * side + 1) + ", got " + std::to_string(num_tokens));
    }
    if (heads == 0 || embed_dim % heads != 0) {
        throw ParameterError("embedder width " + std::to_string(embed_dim) + " is not divisible by " +
                             std::to_string(heads) + " heads");
    }
}

ContextPair ContextPair::paired(Image degraded, Image clean, Degradation kind, Severity severity, int scene_id) {
    return unpaired(std::move(degraded), std::move(clean), kind, severity, scene_id, scene_id);
}

ContextPair ContextPair::unpaired(Image degraded, Image clean, Degradation kind, Severity severity,
                                  int degraded_scene_id, int clean_scene_id) {
    if (degraded.shape() != clean.shape()) {
        throw DimensionError("context pair images differ in shape: " + shape_str(degraded.shape()) + " vs " +
                             shape_str(clean.shape()));
    }
    ContextPair pair;
    pair.degraded = std::move(degraded);
    pair.clean = std::move(clean);
    pair.kind = kind;
    pair.severity = severity;
    pair.scene_id = degraded_scene_id;
    pair.clean_scene_id = clean_scene_id;
    return pair;
}

ContextEmbedder::ContextEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.backend != EmbedderBackend::toy_encoder) return;

    Rng rng(derive_seed(spec_.seed, 0xE5B));
    const std::size_t d = spec_.embed_dim;
    patch_embed_ = Linear<float>(3 * spec_.patch * spec_.patch, d, rng);
    cls_token_ = uniform_param<float>({1, d}, 1.0, rng);
    for (std::size_t b = 0; b < spec_.blocks; ++b) {
        Block block;
        block.ln1 = LayerNorm<float>(d);
        block.attn = MultiHeadAttention<float>(d, spec_.heads, rng);
        block.ln2 = LayerNorm<float>(d);
        block.fc1 = Linear<float>(d, 2 * d, rng);
        block.fc2 = Linear<float>(2 * d, d, rng);
        blocks_.push_back(std::move(block));
    }
    final_ln_ = LayerNorm<float>(d);

    std::vector<float> pos(spec_.num_tokens * d);
    for (std::size_t p = 0; p < spec_.num_tokens; ++p) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -double(i) / double(d));
            pos[p * d + i] = static_cast<float>(std::sin(double(p) * freq));
            if (i + 1 < d) pos[p * d + i + 1] = static_cast<float>(std::cos(double(p) * freq));
        }
    }
    positions_ = Tensor32({spec_.num_tokens, d}, std::move(pos));

    for (auto& [name, t] : parameters()) t.set_requires_grad(false);
}

NamedParams<float> ContextEmbedder::parameters() const {
    NamedParams<float> out;
    if (spec_.backend != EmbedderBackend::toy_encoder) return out;
    patch_embed_.collect("embed.patch", out);
    out.emplace_back("embed.cls", cls_token_);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string p = "embed.block." + std::to_string(b);
        blocks_[b].ln1.collect(p + ".ln1", out);
        blocks_[b].attn.collect(p + ".attn", out);
        blocks_[b].ln2.collect(p + ".ln2", out);
        blocks_[b].fc1.collect(p + ".fc1", out);
        blocks_[b].fc2.collect(p + ".fc2", out);
    }
    final_ln_.collect("embed.final_ln", out);
    return out;
}

Tensor32 ContextEmbedder::embed(const Image& image) const {
    if (!image.defined() || image.ndim() != 3 || image.dim(0) != 3) {
        throw DimensionError("embed: expected a [3 x H x W] image, got " +
                             (image.defined() ? shape_str(image.shape()) : "<undefined>"));
    }
    for (auto v : image.data()) {
        if (v < 0.0f || v > 1.0f) throw ParameterError("embed: image values must lie in [0, 1]");
    }
    NoGradScope<float> no_grad;
    return spec_.backend == EmbedderBackend::toy_encoder ? embed_toy(image) : embed_file(image);
}

Tensor32 ContextEmbedder::embed_toy(const Image& image) const {
    const std::size_t r = spec_.input_resolution, p = spec_.patch, side = r / p;
    const auto resized = resize_bilinear(image, r, r);
    const std::size_t patch_len = 3 * p * p;
    std::vector<float> patches(side * side * patch_len);
    for (std::size_t py = 0; py < side; ++py) {
        for (std::size_t px = 0; px < side; ++px) {
            float* dst = patches.data() + (py * side + px) * patch_len;
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t y = 0; y < p; ++y) {
                    for (std::size_t x = 0; x < p; ++x) {
                        const float v = resized[(c * r + py * p + y) * r + px * p + x];
                        *dst++ = 2.0f * v - 1.0f;
                    }
                }
            }
        }
    }
    auto tokens = patch_embed_.forward(Tensor32::from_op({side * side, patch_len}, std::move(patches)));
    auto x = add(concat_rows(cls_token_, tokens), positions_);
    for (const auto& block : blocks_) {
        x = add(x, block.attn.self_attention(block.ln1.forward(x)));
        x = add(x, block.fc2.forward(gelu(block.fc1.forward(block.ln2.forward(x)))));
    }
    return final_ln_.forward(x).detach();
}

std::string embedding_key(const Image& image) {
    const auto bytes = payload_bytes(image);
    return hex64(fnv1a64(bytes));
}

Tensor32 ContextEmbedder::embed_file(const Image& image) const {
    const auto key = embedding_key(image);
    const auto path = spec_.store / (key + ".awtf");
    if (!std::filesystem::exists(path)) {
        throw LookupError("no precomputed embedding for key " + key + " in " + spec_.store.string());
    }
    auto e = load_awtf(path);
    if (e.ndim() != 2 || e.dim(0) != spec_.num_tokens || e.dim(1) != spec_.embed_dim) {
        throw FormatError(path.string() + ": embedding has shape " + shape_str(e.shape()) + ", expected [" +
                          std::to_string(spec_.num_tokens) + "x" + std::to_string(spec_.embed_dim) + "]");
    }
    return e;
}

Tensor32 ContextEmbedder::embed_context(const ContextPair& pair) const {
    NoGradScope<float> no_grad;
    return concat_rows(embed(pair.degraded), embed(pair.clean));
}

Tensor32 embed(const EmbedderSpec& spec, const Image& image) {
    return ContextEmbedder(spec).embed(image);
}

Tensor32 embed_context(const EmbedderSpec& spec, const ContextPair& pair) {
    return ContextEmbedder(spec).embed_context(pair);
}

void write_embedding_store(const std::filesystem::path& dir, const ContextEmbedder& embedder,
                           const std::vector<std::filesystem::path>& sources) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.tsv");
    if (!index) throw IoError("cannot write " + (dir / "index.tsv").string());
    for (const auto& source : sources) {
        const auto image = load_image(source);
        const auto key = embedding_key(image);
        save_awtf(dir / (key + ".awtf"), embedder.embed(image));
        index << key << '\t' << source.string() << '\n';
    }
}

std::vector<std::pair<std::string, std::string>> embedder_spec_to_kv(const EmbedderSpec& spec) {
    return {
        {"embed.backend", spec.backend == EmbedderBackend::file ? "file" : "toy_encoder"},
        {"embed.resolution", std::to_string(spec.input_resolution)},
        {"embed.patch", std::to_string(spec.patch)},
        {"embed.tokens", std::to_string(spec.num_tokens)},
        {"embed.dim", std::to_string(spec.embed_dim)},
        {"embed.blocks", std::to_string(spec.blocks)},
        {"embed.heads", std::to_string(spec.heads)},
        {"embed.seed", std::to_string(spec.seed)},
        {"embed.store", spec.store.string()},
    };
}

bool apply_embed_key(EmbedderSpec& spec, const std::string& key, const std::string& value) {
    if (key == "embed.backend") {
        if (value == "toy_encoder") spec.backend = EmbedderBackend::toy_encoder;
        else if (value == "file") spec.backend = EmbedderBackend::file;
        else throw ConfigError("invalid value '" + value + "' for embed.backend (expected toy_encoder or file)");
    } else if (key == "embed.resolution") spec.input_resolution = parse_size(key, value);
    else if (key == "embed.patch") spec.patch = parse_size(key, value);
    else if (key == "embed.tokens") spec.num_tokens = parse_size(key, value);
    else if (key == "embed.dim") spec.embed_dim = parse_size(key, value);
    else if (key == "embed.blocks") spec.blocks = parse_size(key, value);
    else if (key == "embed.heads") spec.heads = parse_size(key, value);
    else if (key == "embed.seed") spec.seed = parse_u64(key, value);
    else if (key == "embed.store") spec.store = value;
    else return false;
    return true;
}

}  // namespace awracle
