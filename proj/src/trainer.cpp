// SPDX-License-Identifier: Apache-2.0
#include "awracle/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "awracle/config.hpp"
#include "awracle/metrics.hpp"
#include "awracle/parallel.hpp"

namespace awracle {

void TrainConfig::validate(const ModelConfig& model) const {
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (warmup_epochs >= epochs) {
        throw ConfigError("train.warmup_epochs (" + std::to_string(warmup_epochs) + ") must be below train.epochs (" +
                          std::to_string(epochs) + ")");
    }
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    const std::size_t multiple = model.required_multiple();
    if (crop == 0 || crop % multiple != 0) {
        throw ConfigError("train.crop " + std::to_string(crop) + " must be a positive multiple of " +
                          std::to_string(multiple));
    }
    if (!(base_lr > 0)) throw ConfigError("train.base_lr must be positive");
    if (eta_min < 0 || eta_min > base_lr) throw ConfigError("train.eta_min must lie in [0, base_lr]");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("train.eps must be positive");
    if (flip_prob < 0 || flip_prob > 1) throw ConfigError("train.flip_prob must lie in [0, 1]");
}

std::vector<std::pair<std::string, std::string>> train_config_to_kv(const TrainConfig& c) {
    return {
        {"train.epochs", std::to_string(c.epochs)},
        {"train.batch_size", std::to_string(c.batch_size)},
        {"train.base_lr", format_double(c.base_lr)},
        {"train.weight_decay", format_double(c.weight_decay)},
        {"train.beta1", format_double(c.beta1)},
        {"train.beta2", format_double(c.beta2)},
        {"train.eps", format_double(c.eps)},
        {"train.warmup_epochs", std::to_string(c.warmup_epochs)},
        {"train.crop", std::to_string(c.crop)},
        {"train.flip_prob", format_double(c.flip_prob)},
        {"train.seed", std::to_string(c.seed)},
        {"train.eta_min", format_double(c.eta_min)},
        {"train.keep_checkpoints", std::to_string(c.keep_checkpoints)},
    };
}

bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "train.epochs") c.epochs = parse_size(key, value);
    else if (key == "train.batch_size") c.batch_size = parse_size(key, value);
    else if (key == "train.base_lr") c.base_lr = parse_double(key, value);
    else if (key == "train.weight_decay") c.weight_decay = parse_double(key, value);
    else if (key == "train.beta1") c.beta1 = parse_double(key, value);
    else if (key == "train.beta2") c.beta2 = parse_double(key, value);
    else if (key == "train.eps") c.eps = parse_double(key, value);
    else if (key == "train.warmup_epochs") c.warmup_epochs = parse_size(key, value);
    else if (key == "train.crop") c.crop = parse_size(key, value);
    else if (key == "train.flip_prob") c.flip_prob = parse_double(key, value);
    else if (key == "train.seed") c.seed = parse_u64(key, value);
    else if (key == "train.eta_min") c.eta_min = parse_double(key, value);
    else if (key == "train.keep_checkpoints") c.keep_checkpoints = parse_size(key, value);
    else return false;
    return true;
}

double lr_at(const TrainConfig& c, double epoch) {
    const double total = static_cast<double>(c.epochs), warm = static_cast<double>(c.warmup_epochs);
    if (!(epoch >= 0.0 && epoch <= total)) {
        throw ParameterError("lr_at: epoch " + format_double(epoch) + " outside [0, " + std::to_string(c.epochs) + "]");
    }
    if (epoch < warm) return c.base_lr * (epoch + 1.0) / warm;
    const double progress = (epoch - warm) / (total - warm);
    return c.eta_min + 0.5 * (c.base_lr - c.eta_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void adamw_step(const NamedParams<T>& params, OptimizerState<T>& state, const TrainConfig& c, double lr) {
    if (state.m.empty()) {
        for (const auto& [name, p] : params) {
            state.m.emplace_back(p.numel(), T(0));
            state.v.emplace_back(p.numel(), T(0));
        }
    }
    if (state.m.size() != params.size()) {
        throw DimensionError("adamw: optimizer state has " + std::to_string(state.m.size()) + " slots for " +
                             std::to_string(params.size()) + " parameters");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto param = params[i].second;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != param.numel() || v.size() != param.numel()) {
            throw DimensionError("adamw: state for '" + params[i].first + "' does not match its shape " +
                                 shape_str(param.shape()));
        }
        auto theta = param.mutable_data();
        const auto grad = param.grad();
        const bool has_grad = !grad.empty();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double g = has_grad ? static_cast<double>(grad[j]) : 0.0;
            const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * g;
            const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = (mj / bc1) / (std::sqrt(vj / bc2) + c.eps) + c.weight_decay * theta[j];
            theta[j] = static_cast<T>(theta[j] - lr * update);
        }
    }
}

template void adamw_step<float>(const NamedParams<float>&, OptimizerState<float>&, const TrainConfig&, double);
template void adamw_step<double>(const NamedParams<double>&, OptimizerState<double>&, const TrainConfig&, double);

std::string to_string(Variant variant) {
    switch (variant) {
        case Variant::full: return "full";
        case Variant::no_dce: return "no_dce";
        case Variant::no_cf: return "no_cf";
        case Variant::no_mlf: return "no_mlf";
        case Variant::unpaired: return "unpaired";
        case Variant::baseline: return "baseline";
    }
    return "unknown";
}

Variant parse_variant(const std::string& text) {
    for (auto v : {Variant::full, Variant::no_dce, Variant::no_cf, Variant::no_mlf, Variant::unpaired,
                   Variant::baseline}) {
        if (text == to_string(v)) return v;
    }
    throw ParameterError("unknown ablation variant '" + text +
                         "' (expected full, no_dce, no_cf, no_mlf, unpaired or baseline)");
}

ModelConfig apply_variant(ModelConfig config, Variant variant) {
    switch (variant) {
        case Variant::no_dce: config.ablation.use_dce_mhsa = false; break;
        case Variant::no_cf: config.ablation.use_cf_mhca = false; break;
        case Variant::no_mlf: config.ablation.multi_level_fusion = false; break;
        case Variant::baseline: config.use_context = false; break;
        case Variant::full:
        case Variant::unpaired: break;
    }
    return config;
}

namespace {

namespace fs = std::filesystem;

struct Example {
    LoadedSample sample;
    Tensor32 context;  // cached E_C, undefined for the baseline
    Degradation kind;
};

std::vector<Example> load_examples(const Manifest& manifest, const std::vector<SampleRecord>& rows,
                                   const ContextEmbedder* embedder) {
    std::vector<Example> out(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        auto& ex = out[i];
        ex.sample = load_sample(manifest, rows[i]);
        ex.kind = rows[i].degradation();
        if (embedder) {
            const auto pair = ContextPair::unpaired(ex.sample.ctx_degraded, ex.sample.ctx_clean, ex.kind,
                                                    rows[i].severity, rows[i].ctx_scene_id,
                                                    rows[i].ctx_clean_scene_id);
            ex.context = embedder->embed_context(pair);
        }
    });
    return out;
}

// Batches drawn so every kind is represented evenly: per-kind shuffles are
// interleaved round-robin, each round in a random kind order.
std::vector<std::size_t> epoch_order(const std::vector<Example>& examples, Rng& rng) {
    std::map<Degradation, std::vector<std::size_t>> by_kind;
    for (std::size_t i = 0; i < examples.size(); ++i) by_kind[examples[i].kind].push_back(i);
    std::vector<std::vector<std::size_t>> queues;
    for (auto& [kind, rows] : by_kind) {
        std::shuffle(rows.begin(), rows.end(), rng.engine());
        queues.push_back(rows);
    }
    std::vector<std::size_t> order;
    std::vector<std::size_t> pos(queues.size(), 0);
    while (order.size() < examples.size()) {
        std::vector<std::size_t> kinds(queues.size());
        for (std::size_t k = 0; k < kinds.size(); ++k) kinds[k] = k;
        std::shuffle(kinds.begin(), kinds.end(), rng.engine());
        for (auto k : kinds) {
            if (pos[k] < queues[k].size()) order.push_back(queues[k][pos[k]++]);
        }
    }
    return order;
}

struct Validation {
    double psnr = 0.0, ssim = 0.0;
};

Validation validate(const AwracleNet<float>& model, const std::vector<Example>& examples) {
    if (examples.empty()) return {};
    std::vector<double> psnrs(examples.size()), ssims(examples.size());
    parallel_for(examples.size(), [&](std::size_t i) {
        const auto& ex = examples[i];
        const auto out = model.restore(ex.sample.query, ex.context);
        psnrs[i] = psnr(out, ex.sample.gt);
        ssims[i] = ssim(out, ex.sample.gt);
    });
    // Per-kind means, then the mean over kinds.
    std::map<Degradation, std::vector<double>> kp, ks;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        kp[examples[i].kind].push_back(psnrs[i]);
        ks[examples[i].kind].push_back(ssims[i]);
    }
    std::vector<double> mp, ms;
    for (auto& [k, v] : kp) mp.push_back(mean_of(v));
    for (auto& [k, v] : ks) ms.push_back(mean_of(v));
    return {mean_of(mp), mean_of(ms)};
}

std::string epoch_checkpoint_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04zu.awck", epoch);
    return buf;
}

void write_log(const fs::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "epoch\tmean_loss\tlr\tval_psnr\tval_ssim\twall_seconds\n";
    for (const auto& e : log) {
        char wall[32];
        std::snprintf(wall, sizeof wall, "%.3f", e.wall_seconds);
        out << e.epoch << '\t' << format_double(e.mean_loss) << '\t' << format_double(e.lr) << '\t'
            << format_double(e.val_psnr) << '\t' << format_double(e.val_ssim) << '\t' << wall << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint make_checkpoint(const TrainRequest& req, const ModelConfig& model_config, const AwracleNet<float>& model,
                           const OptimizerState<float>* optimizer, std::size_t epoch, double best_psnr,
                           std::size_t best_epoch) {
    Checkpoint ck;
    const auto params = model.parameters();
    for (const auto& [name, t] : params) ck.tensors.emplace_back(name, t.detach().clone());
    if (optimizer) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& shape = params[i].second.shape();
            ck.tensors.emplace_back("optim.m." + params[i].first, Tensor32::from_op(shape, optimizer->m[i]));
            ck.tensors.emplace_back("optim.v." + params[i].first, Tensor32::from_op(shape, optimizer->v[i]));
        }
    }
    ck.meta = model_config_to_kv(model_config);
    for (auto& kv : embedder_spec_to_kv(req.embedder)) ck.meta.push_back(kv);
    for (auto& kv : train_config_to_kv(req.train)) ck.meta.push_back(kv);
    ck.meta.emplace_back("run.variant", to_string(req.variant));
    ck.meta.emplace_back("run.epoch", std::to_string(epoch));
    ck.meta.emplace_back("run.step", std::to_string(optimizer ? optimizer->step : 0));
    ck.meta.emplace_back("run.best_val_psnr", format_double(best_psnr));
    ck.meta.emplace_back("run.best_epoch", std::to_string(best_epoch));
    return ck;
}

void write_effective_manifest(const fs::path& path, const Manifest& manifest) {
    Manifest absolute = manifest;
    for (auto& s : absolute.samples) {
        for (auto* p : {&s.query, &s.gt, &s.ctx_degraded, &s.ctx_clean}) *p = fs::absolute(manifest.resolve(*p)).string();
    }
    write_manifest(path, absolute);
}

}  // namespace

std::vector<EpochLog> read_train_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<EpochLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cols;
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() != 6) throw FormatError(path.string() + ": malformed log line '" + line + "'");
        EpochLog e;
        e.epoch = parse_size("epoch", cols[0]);
        e.mean_loss = parse_double("mean_loss", cols[1]);
        e.lr = parse_double("lr", cols[2]);
        e.val_psnr = parse_double("val_psnr", cols[3]);
        e.val_ssim = parse_double("val_ssim", cols[4]);
        e.wall_seconds = parse_double("wall_seconds", cols[5]);
        out.push_back(e);
    }
    return out;
}

TrainResult train(const TrainRequest& req) {
    const ModelConfig model_config = apply_variant(req.model, req.variant);
    model_config.validate();
    req.train.validate(model_config);
    if (model_config.use_context) {
        req.embedder.validate();
        if (req.embedder.num_tokens != model_config.embed_tokens || req.embedder.embed_dim != model_config.embed_dim) {
            throw ConfigError("model expects " + std::to_string(model_config.embed_tokens) + "x" +
                              std::to_string(model_config.embed_dim) + " embeddings, embedder produces " +
                              std::to_string(req.embedder.num_tokens) + "x" + std::to_string(req.embedder.embed_dim));
        }
    }
    std::error_code ec;
    fs::create_directories(req.out, ec);
    if (ec) throw IoError("cannot create " + req.out.string() + ": " + ec.message());

    const Manifest manifest = read_manifest(req.data);
    Manifest train_rows, val_rows;
    train_rows.root = val_rows.root = manifest.root;
    for (const auto& s : manifest.samples) {
        if (s.is_mixture()) continue;
        (is_validation_scene(s.scene_id) ? val_rows : train_rows).samples.push_back(s);
    }
    if (train_rows.samples.empty()) throw ConfigError("manifest " + req.data.string() + " has no training rows");
    Manifest effective = train_rows;
    if (req.variant == Variant::unpaired) effective = make_unpaired(train_rows, derive_seed(req.train.seed, 0x0A9));
    write_effective_manifest(req.out / "manifest_effective.tsv", effective);

    std::optional<ContextEmbedder> embedder;
    if (model_config.use_context) embedder.emplace(req.embedder);
    const auto* emb = embedder ? &*embedder : nullptr;
    const auto train_set = load_examples(effective, effective.samples, emb);
    const auto val_set = load_examples(val_rows, val_rows.samples, emb);
    for (const auto& ex : train_set) {
        if (ex.sample.query.dim(1) < req.train.crop || ex.sample.query.dim(2) < req.train.crop) {
            throw ConfigError("train.crop " + std::to_string(req.train.crop) + " exceeds image " +
                              shape_str(ex.sample.query.shape()) + " of " + ex.sample.record.query);
        }
    }

    AwracleNet<float> model(model_config);
    auto params = model.parameters();
    OptimizerState<float> optimizer;
    TrainResult result;
    std::size_t start_epoch = 0;
    result.best_val_psnr = -1.0;

    if (req.resume) {
        const auto ck = load_checkpoint(req.resume->string());
        model.load_parameters(ck.tensors);
        for (const auto& [name, p] : params) {
            const auto* m = ck.find("optim.m." + name);
            const auto* v = ck.find("optim.v." + name);
            if (!m || !v) throw FormatError(req.resume->string() + " has no optimizer state for '" + name + "'");
            optimizer.m.emplace_back(m->data().begin(), m->data().end());
            optimizer.v.emplace_back(v->data().begin(), v->data().end());
        }
        auto meta = [&](const char* key) {
            auto v = ck.meta_value(key);
            if (!v) throw FormatError(req.resume->string() + " lacks '" + key + "'");
            return *v;
        };
        start_epoch = parse_size("run.epoch", meta("run.epoch"));
        optimizer.step = parse_size("run.step", meta("run.step"));
        result.best_val_psnr = parse_double("run.best_val_psnr", meta("run.best_val_psnr"));
        result.best_epoch = parse_size("run.best_epoch", meta("run.best_epoch"));
        if (fs::exists(req.out / "train_log.tsv")) {
            for (const auto& e : read_train_log(req.out / "train_log.tsv")) {
                if (e.epoch <= start_epoch) result.log.push_back(e);
            }
        }
    }

    const std::size_t n = train_set.size(), batch = req.train.batch_size;
    const std::size_t steps = (n + batch - 1) / batch;
    for (std::size_t epoch = start_epoch; epoch < req.train.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const double lr = lr_at(req.train, static_cast<double>(epoch));
        Rng order_rng(derive_seed(req.train.seed, 0xE0000000ULL + epoch));
        const auto order = epoch_order(train_set, order_rng);
        CompensatedSum loss_sum;
        for (std::size_t step = 0; step < steps; ++step) {
            const std::size_t begin = step * batch, end = std::min(n, begin + batch);
            const std::uint64_t batch_seed = derive_seed(derive_seed(req.train.seed, epoch + 1), step);
            Rng aug(batch_seed);
            for (auto& [name, p] : params) p.zero_grad();
            const float inv_batch = 1.0f / static_cast<float>(end - begin);
            for (std::size_t b = begin; b < end; ++b) {
                const auto& ex = train_set[order[b]];
                const std::size_t h = ex.sample.query.dim(1), w = ex.sample.query.dim(2), c = req.train.crop;
                const std::size_t top = aug.index(h - c + 1), left = aug.index(w - c + 1);
                const bool flip = aug.bernoulli(req.train.flip_prob);
                auto query = crop(ex.sample.query, top, left, c, c);
                auto gt = crop(ex.sample.gt, top, left, c, c);
                if (flip) {
                    query = flip_horizontal(query);
                    gt = flip_horizontal(gt);
                }
                Tape<float> tape;
                TapeScope<float> scope(tape);
                const auto loss = l1_loss(model.forward(query, ex.context), gt);
                const double value = loss.item();
                if (!std::isfinite(value)) {
                    std::ofstream dump(req.out / "nan_batch.txt");
                    dump << "epoch=" << epoch + 1 << "\nstep=" << step << "\nbatch_seed=" << batch_seed
                         << "\nsample=" << ex.sample.record.query << "\n";
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                         std::to_string(step) + " (batch seed " + std::to_string(batch_seed) +
                                         ", sample " + ex.sample.record.query + ")");
                }
                loss_sum.add(value);
                tape.backward(scale(loss, inv_batch));
            }
            adamw_step(params, optimizer, req.train, lr);
        }
        const auto val = validate(model, val_set);
        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.mean_loss = loss_sum.value() / static_cast<double>(n);
        entry.lr = lr;
        entry.val_psnr = val.psnr;
        entry.val_ssim = val.ssim;
        entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.push_back(entry);
        if (val.psnr > result.best_val_psnr) {
            result.best_val_psnr = val.psnr;
            result.best_epoch = epoch + 1;
            save_checkpoint((req.out / "best.awck").string(),
                            make_checkpoint(req, model_config, model, nullptr, epoch + 1, result.best_val_psnr,
                                            result.best_epoch));
        }
        save_checkpoint((req.out / epoch_checkpoint_name(epoch + 1)).string(),
                        make_checkpoint(req, model_config, model, &optimizer, epoch + 1, result.best_val_psnr,
                                        result.best_epoch));
        if (req.train.keep_checkpoints > 0 && epoch + 1 > req.train.keep_checkpoints) {
            fs::remove(req.out / epoch_checkpoint_name(epoch + 1 - req.train.keep_checkpoints), ec);
        }
        write_log(req.out / "train_log.tsv", result.log);
        if (req.verbose) {
            std::fprintf(stderr, "epoch %zu/%zu  loss %.5f  lr %.3g  val %.3f dB / %.4f  (%.1fs)\n", entry.epoch,
                         req.train.epochs, entry.mean_loss, lr, val.psnr, val.ssim, entry.wall_seconds);
        }
    }
    if (!result.log.empty()) {
        result.final_val_psnr = result.log.back().val_psnr;
        result.final_val_ssim = result.log.back().val_ssim;
    }
    return result;
}

TrainResult ablation_train(Variant variant, TrainRequest request) {
    request.variant = variant;
    return train(request);
}

}  // namespace awracle
