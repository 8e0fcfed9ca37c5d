// SPDX-License-Identifier: Apache-2.0
#include "awracle/run_config.hpp"

#include "awracle/errors.hpp"

namespace awracle {

RunConfig run_config_from_kv(const KeyValues& values) {
    RunConfig c;
    bool model_seed = false, model_tokens = false, model_dim = false;
    for (const auto& [key, value] : values) {
        if (apply_model_key(c.model, key, value)) {
            model_seed |= key == "model.seed";
            model_tokens |= key == "model.embed_tokens";
            model_dim |= key == "model.embed_dim";
        } else if (!apply_train_key(c.train, key, value) && !apply_embed_key(c.embed, key, value)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (!model_seed) c.model.seed = c.train.seed;
    if (!model_tokens) c.model.embed_tokens = c.embed.num_tokens;
    if (!model_dim) c.model.embed_dim = c.embed.embed_dim;
    return c;
}

RunConfig read_run_config(const std::filesystem::path& path) { return run_config_from_kv(read_key_value_file(path)); }

KeyValues run_config_to_kv(const RunConfig& config) {
    KeyValues out = model_config_to_kv(config.model);
    for (auto& kv : train_config_to_kv(config.train)) out.push_back(kv);
    for (auto& kv : embedder_spec_to_kv(config.embed)) out.push_back(kv);
    return out;
}

EmbedderSpec embedder_spec_from_checkpoint(const Checkpoint& checkpoint) {
    EmbedderSpec spec;
    for (const auto& [key, value] : checkpoint.meta) {
        if (key.rfind("embed.", 0) == 0 && !apply_embed_key(spec, key, value)) {
            throw FormatError("checkpoint has unknown embedder key '" + key + "'");
        }
    }
    return spec;
}

}  // namespace awracle
