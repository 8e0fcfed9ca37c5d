// SPDX-License-Identifier: Apache-2.0
#include "awracle/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "awracle/awtf.hpp"
#include "awracle/config.hpp"

namespace awracle {

void ModelConfig::validate() const {
    if (num_levels == 0) throw ParameterError("model needs at least one level");
    if (backbone_channels.size() != num_levels || dce_channels.size() != num_levels) {
        throw ParameterError("per-level channel lists must have " + std::to_string(num_levels) + " entries");
    }
    if (heads == 0) throw ParameterError("model heads must be positive");
    for (std::size_t l = 0; l < num_levels; ++l) {
        if (backbone_channels[l] == 0) throw ParameterError("backbone channels must be positive");
        if (!use_context) continue;
        if (dce_channels[l] == 0 || dce_channels[l] > embed_dim) {
            throw ParameterError("context width C^" + std::to_string(l) + " = " + std::to_string(dce_channels[l]) +
                                 " must lie in [1, D = " + std::to_string(embed_dim) + "]");
        }
        if (dce_channels[l] % heads != 0) {
            throw ParameterError("context width C^" + std::to_string(l) + " = " + std::to_string(dce_channels[l]) +
                                 " is not divisible by " + std::to_string(heads) + " heads");
        }
    }
    if (use_context && (embed_tokens == 0 || embed_dim == 0)) {
        throw ParameterError("embedding token count and width must be positive");
    }
    const int single = ablation.fusion_level_when_single;
    if (single < -1 || single >= static_cast<int>(num_levels)) {
        throw ParameterError("fusion_level_when_single " + std::to_string(single) + " outside [0, " +
                             std::to_string(num_levels) + ")");
    }
}

std::vector<std::size_t> ModelConfig::fusion_levels() const {
    if (!use_context) return {};
    if (ablation.multi_level_fusion) {
        std::vector<std::size_t> levels(num_levels);
        for (std::size_t l = 0; l < num_levels; ++l) levels[l] = l;
        return levels;
    }
    const int single = ablation.fusion_level_when_single;
    return {single < 0 ? num_levels - 1 : static_cast<std::size_t>(single)};
}

// --- DCE / CF ----------------------------------------------------------------

template <typename T>
DceBlock<T>::DceBlock(std::size_t embed_dim, std::size_t channels, std::size_t heads, bool use_mhsa, Rng& rng)
    : proj(embed_dim, channels, rng), ln(channels) {
    if (use_mhsa) attn.emplace(channels, heads, rng);
}

template <typename T>
void DceBlock<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    proj.collect(prefix + ".proj", out);
    ln.collect(prefix + ".ln", out);
    if (attn) attn->collect(prefix + ".attn", out);
}

template <typename T>
Tensor<T> dce_forward(const DceBlock<T>& block, const Tensor<T>& context_embedding) {
    if (context_embedding.ndim() != 2 || context_embedding.dim(1) != block.proj.in_features()) {
        throw DimensionError("dce: context embedding " + shape_str(context_embedding.shape()) +
                             " does not match width D = " + std::to_string(block.proj.in_features()));
    }
    auto projected = gelu(block.proj.forward(context_embedding));
    auto normed = block.ln.forward(projected);
    return block.attn ? block.attn->self_attention(normed) : normed;
}

template <typename T>
CfBlock<T>::CfBlock(std::size_t feature_channels, std::size_t channels, std::size_t heads, bool use_mhca, Rng& rng)
    : in_proj(feature_channels, channels, 1, rng), ln_feat(channels), ln_ctx(channels) {
    if (use_mhca) attn.emplace(channels, heads, rng);
    out_proj = Conv2d<T>(channels, channels, 3, rng);
    post_merge = Conv2d<T>(feature_channels + channels, feature_channels, 1, rng);
}

template <typename T>
void CfBlock<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    in_proj.collect(prefix + ".in_proj", out);
    ln_feat.collect(prefix + ".ln_feat", out);
    ln_ctx.collect(prefix + ".ln_ctx", out);
    if (attn) attn->collect(prefix + ".attn", out);
    out_proj.collect(prefix + ".out_proj", out);
    post_merge.collect(prefix + ".post_merge", out);
}

template <typename T>
Tensor<T> cf_forward(const CfBlock<T>& block, const Tensor<T>& features, const Tensor<T>& dce_output) {
    const std::size_t k = block.in_proj.weight.dim(1), c = block.in_proj.weight.dim(0);
    if (features.ndim() != 3 || features.dim(0) != k) {
        throw DimensionError("cf: feature map " + shape_str(features.shape()) + " does not have " +
                             std::to_string(k) + " channels");
    }
    if (dce_output.ndim() != 2 || dce_output.dim(1) != c) {
        throw DimensionError("cf: context tokens " + shape_str(dce_output.shape()) +
                             " do not match projection width " + std::to_string(c));
    }
    const std::size_t h = features.dim(1), w = features.dim(2), hw = h * w;

    auto projected = gelu(block.in_proj.forward(features));                    // C x H x W
    auto tokens = block.ln_feat.forward(transpose(reshape(projected, {c, hw})));  // HW x C
    auto context = block.ln_ctx.forward(dce_output);                           // 2L x C

    Tensor<T> fused;
    if (block.attn) {
        fused = block.attn->cross_attention(tokens, context);
    } else {
        // Nearest interpolation of the context along the token axis, then an
        // element-wise product with the feature tokens.
        const std::size_t t = context.dim(0);
        std::vector<std::size_t> index(hw);
        for (std::size_t i = 0; i < hw; ++i) index[i] = i * t / hw;
        fused = mul(tokens, gather_rows(context, std::move(index)));
    }
    auto spatial = reshape(transpose(fused), {c, h, w});
    auto out = gelu(block.out_proj.forward(spatial));
    return block.post_merge.forward(concat_channels(features, out));
}

// --- backbone ------------------------------------------------------------------

template <typename T>
ResBlock<T>::ResBlock(std::size_t channels, Rng& rng)
    : conv1(channels, channels, 3, rng), conv2(channels, channels, 3, rng) {}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x) const {
    return add(x, conv2.forward(gelu(conv1.forward(x))));
}

template <typename T>
void ResBlock<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
}

template <typename T>
AwracleNet<T>::AwracleNet(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(derive_seed(config_.seed, 0xA3C));
    const auto& kc = config_.backbone_channels;
    const std::size_t n = config_.num_levels;

    stem_ = Conv2d<T>(3, kc[0], 3, rng);
    for (std::size_t l = 0; l + 1 < n; ++l) {
        std::vector<ResBlock<T>> blocks;
        for (std::size_t b = 0; b < config_.blocks_per_level; ++b) blocks.emplace_back(kc[l], rng);
        enc_blocks_.push_back(std::move(blocks));
        down_.emplace_back(kc[l], kc[l + 1], 3, rng, 2);
    }
    for (std::size_t b = 0; b < config_.blocks_per_level; ++b) mid_blocks_.emplace_back(kc[n - 1], rng);

    dec_blocks_.resize(n);
    up_.resize(n);
    merge_.resize(n);
    for (std::size_t l = n; l-- > 0;) {
        if (l + 1 < n) {
            up_[l] = Conv2d<T>(kc[l + 1], kc[l], 1, rng);
            merge_[l] = Conv2d<T>(2 * kc[l], kc[l], 1, rng);
        }
        for (std::size_t b = 0; b < config_.blocks_per_level; ++b) dec_blocks_[l].emplace_back(kc[l], rng);
    }
    for (auto l : config_.fusion_levels()) {
        const std::size_t c = config_.dce_channels[l];
        dce_.emplace(l, DceBlock<T>(config_.embed_dim, c, config_.heads, config_.ablation.use_dce_mhsa, rng));
        cf_.emplace(l, CfBlock<T>(kc[l], c, config_.heads, config_.ablation.use_cf_mhca, rng));
    }
    head_ = Conv2d<T>(kc[0], 3, 3, rng);
    if (config_.zero_init_head) {
        std::fill(head_.weight.mutable_data().begin(), head_.weight.mutable_data().end(), T(0));
    }
}

template <typename T>
Tensor<T> AwracleNet<T>::forward(const Tensor<T>& query, const Tensor<T>& context_embedding) const {
    if (query.ndim() != 3 || query.dim(0) != 3) {
        throw DimensionError("model: query must be [3 x H x W], got " + shape_str(query.shape()));
    }
    const std::size_t multiple = config_.required_multiple();
    if (query.dim(1) % multiple != 0 || query.dim(2) % multiple != 0) {
        throw DimensionError("model: query " + shape_str(query.shape()) + " must have H and W divisible by " +
                             std::to_string(multiple));
    }
    if (config_.use_context) {
        if (!context_embedding.defined() || context_embedding.ndim() != 2 ||
            context_embedding.dim(1) != config_.embed_dim) {
            throw DimensionError("model: context embedding must be [2L x " + std::to_string(config_.embed_dim) +
                                 "], got " +
                                 (context_embedding.defined() ? shape_str(context_embedding.shape()) : "<none>"));
        }
    }
    const std::size_t n = config_.num_levels;
    auto x = stem_.forward(query);
    std::vector<Tensor<T>> skips(n);
    for (std::size_t l = 0; l + 1 < n; ++l) {
        for (const auto& block : enc_blocks_[l]) x = block.forward(x);
        skips[l] = x;
        x = down_[l].forward(x);
    }
    for (const auto& block : mid_blocks_) x = block.forward(x);
    for (std::size_t l = n; l-- > 0;) {
        if (l + 1 < n) {
            x = up_[l].forward(upsample_nearest2x(x));
            x = merge_[l].forward(concat_channels(x, skips[l]));
        }
        if (auto it = cf_.find(l); it != cf_.end()) {
            x = cf_forward(it->second, x, dce_forward(dce_.at(l), context_embedding));
        }
        for (const auto& block : dec_blocks_[l]) x = block.forward(x);
    }
    return add(query, head_.forward(x));
}

template <typename T>
Tensor<T> AwracleNet<T>::restore(const Tensor<T>& query, const Tensor<T>& context_embedding) const {
    NoGradScope<T> no_grad;
    auto out = forward(query, context_embedding);
    std::vector<T> values(out.data().begin(), out.data().end());
    for (auto& v : values) v = std::clamp(v, T(0), T(1));
    return Tensor<T>::from_op(out.shape(), std::move(values));
}

template <typename T>
std::map<std::size_t, Tensor<T>> AwracleNet<T>::dce_outputs(const Tensor<T>& context_embedding) const {
    NoGradScope<T> no_grad;
    std::map<std::size_t, Tensor<T>> out;
    for (const auto& [level, block] : dce_) out.emplace(level, dce_forward(block, context_embedding));
    return out;
}

template <typename T>
NamedParams<T> AwracleNet<T>::parameters() const {
    NamedParams<T> out;
    stem_.collect("stem", out);
    for (std::size_t l = 0; l < enc_blocks_.size(); ++l) {
        const std::string p = "enc." + std::to_string(l);
        for (std::size_t b = 0; b < enc_blocks_[l].size(); ++b) {
            enc_blocks_[l][b].collect(p + ".block." + std::to_string(b), out);
        }
        down_[l].collect(p + ".down", out);
    }
    for (std::size_t b = 0; b < mid_blocks_.size(); ++b) mid_blocks_[b].collect("mid.block." + std::to_string(b), out);
    for (std::size_t l = 0; l < dec_blocks_.size(); ++l) {
        const std::string p = "dec." + std::to_string(l);
        if (up_[l].weight.defined()) {
            up_[l].collect(p + ".up", out);
            merge_[l].collect(p + ".merge", out);
        }
        for (std::size_t b = 0; b < dec_blocks_[l].size(); ++b) {
            dec_blocks_[l][b].collect(p + ".block." + std::to_string(b), out);
        }
    }
    for (const auto& [level, block] : dce_) block.collect("dce." + std::to_string(level), out);
    for (const auto& [level, block] : cf_) block.collect("cf." + std::to_string(level), out);
    head_.collect("head", out);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

template <typename T>
void AwracleNet<T>::load_parameters(const NamedParams<float>& values) {
    std::map<std::string, const Tensor32*> by_name;
    for (const auto& [name, t] : values) by_name[name] = &t;
    for (auto& [name, param] : parameters()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
        const auto& src = *it->second;
        if (src.shape() != param.shape()) {
            throw FormatError("tensor '" + name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                              shape_str(param.shape()));
        }
        auto dst = param.mutable_data();
        std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
}

template <typename T>
std::size_t AwracleNet<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : parameters()) total += t.numel();
    return total;
}

template <typename T>
const DceBlock<T>* AwracleNet<T>::dce_block(std::size_t level) const {
    auto it = dce_.find(level);
    return it == dce_.end() ? nullptr : &it->second;
}

template <typename T>
const CfBlock<T>* AwracleNet<T>::cf_block(std::size_t level) const {
    auto it = cf_.find(level);
    return it == cf_.end() ? nullptr : &it->second;
}

// --- checkpoints -----------------------------------------------------------

const Tensor32* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::optional<std::string> Checkpoint::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return v;
    }
    return std::nullopt;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("AWCK", 4);
    le::put_u32(out, kCheckpointVersion);
    le::put_u32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.size() > 0xFFFF) throw FormatError("tensor name too long: " + name);
        le::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_awtf(out, tensor);
    }
    out << format_key_values(checkpoint.meta);
    if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    try {
        char magic[4];
        if (!in.read(magic, 4) || std::memcmp(magic, "AWCK", 4) != 0) throw FormatError("bad AWCK magic");
        const auto version = le::get_u32(in);
        if (version != kCheckpointVersion) throw FormatError("unsupported AWCK version " + std::to_string(version));
        const auto count = le::get_u32(in);
        Checkpoint ck;
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto len = le::get_u16(in);
            std::string name(len, '\0');
            if (!in.read(name.data(), len)) throw FormatError("truncated tensor name");
            ck.tensors.emplace_back(std::move(name), read_awtf(in));
        }
        std::ostringstream rest;
        rest << in.rdbuf();
        ck.meta = parse_key_values(rest.str(), path);
        return ck;
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

std::vector<std::pair<std::string, std::string>> model_config_to_kv(const ModelConfig& c) {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"model.levels", std::to_string(c.num_levels)},
        {"model.backbone_channels", format_size_list(c.backbone_channels)},
        {"model.dce_channels", format_size_list(c.dce_channels)},
        {"model.heads", std::to_string(c.heads)},
        {"model.blocks_per_level", std::to_string(c.blocks_per_level)},
        {"model.embed_tokens", std::to_string(c.embed_tokens)},
        {"model.embed_dim", std::to_string(c.embed_dim)},
        {"model.use_context", b(c.use_context)},
        {"model.use_dce_mhsa", b(c.ablation.use_dce_mhsa)},
        {"model.use_cf_mhca", b(c.ablation.use_cf_mhca)},
        {"model.multi_level_fusion", b(c.ablation.multi_level_fusion)},
        {"model.fusion_level_when_single", std::to_string(c.ablation.fusion_level_when_single)},
        {"model.zero_init_head", b(c.zero_init_head)},
        {"model.seed", std::to_string(c.seed)},
    };
}

bool apply_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
    if (key == "model.levels") c.num_levels = parse_size(key, value);
    else if (key == "model.backbone_channels") c.backbone_channels = parse_size_list(key, value);
    else if (key == "model.dce_channels") c.dce_channels = parse_size_list(key, value);
    else if (key == "model.heads") c.heads = parse_size(key, value);
    else if (key == "model.blocks_per_level") c.blocks_per_level = parse_size(key, value);
    else if (key == "model.embed_tokens") c.embed_tokens = parse_size(key, value);
    else if (key == "model.embed_dim") c.embed_dim = parse_size(key, value);
    else if (key == "model.use_context") c.use_context = parse_bool(key, value);
    else if (key == "model.use_dce_mhsa") c.ablation.use_dce_mhsa = parse_bool(key, value);
    else if (key == "model.use_cf_mhca") c.ablation.use_cf_mhca = parse_bool(key, value);
    else if (key == "model.multi_level_fusion") c.ablation.multi_level_fusion = parse_bool(key, value);
    else if (key == "model.fusion_level_when_single") c.ablation.fusion_level_when_single = parse_int(key, value);
    else if (key == "model.zero_init_head") c.zero_init_head = parse_bool(key, value);
    else if (key == "model.seed") c.seed = parse_u64(key, value);
    else return false;
    return true;
}

AwracleNet<float> model_from_checkpoint(const Checkpoint& checkpoint) {
    ModelConfig config;
    for (const auto& [k, v] : checkpoint.meta) {
        if (k.rfind("model.", 0) == 0 && !apply_model_key(config, k, v)) {
            throw FormatError("checkpoint has unknown model key '" + k + "'");
        }
    }
    AwracleNet<float> model(config);
    model.load_parameters(checkpoint.tensors);
    return model;
}

template struct DceBlock<float>;
template struct DceBlock<double>;
template struct CfBlock<float>;
template struct CfBlock<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;
template class AwracleNet<float>;
template class AwracleNet<double>;
template Tensor<float> dce_forward(const DceBlock<float>&, const Tensor<float>&);
template Tensor<double> dce_forward(const DceBlock<double>&, const Tensor<double>&);
template Tensor<float> cf_forward(const CfBlock<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> cf_forward(const CfBlock<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace awracle
