// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "awracle/config.hpp"
#include "awracle/evaluator.hpp"
#include "awracle/run_config.hpp"
#include "awracle/trainer.hpp"

using namespace awracle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("awracle_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig small_model() {
    ModelConfig m;
    m.num_levels = 2;
    m.backbone_channels = {8, 8};
    m.dce_channels = {8, 8};
    m.blocks_per_level = 1;
    return m;
}

// One shared small dataset for the slower tests.
const fs::path& small_dataset() {
    static const fs::path dir = [] {
        auto d = scratch("train_ds");
        DatasetOptions o;
        o.scenes = 10;
        o.height = o.width = 16;
        build_dataset(o, d);
        return d;
    }();
    return dir;
}

TrainRequest small_request(const fs::path& out) {
    TrainRequest r;
    r.model = small_model();
    r.train.epochs = 2;
    r.train.warmup_epochs = 1;
    r.train.batch_size = 4;
    r.train.crop = 16;
    r.embedder.input_resolution = 16;
    r.embedder.num_tokens = 5;
    r.model.embed_tokens = 5;
    r.data = small_dataset();
    r.out = out;
    return r;
}

}  // namespace

TEST(AdamW, FirstStepGolden) {
    TrainConfig c;
    Tensor64 theta({1}, {1.0}, true);
    theta.mutable_grad()[0] = 1.0;
    OptimizerState<double> state;
    adamw_step<double>({{"w", theta}}, state, c, 0.1);
    EXPECT_NEAR(theta[0], 0.899, 1e-6);
}

TEST(AdamW, ZeroGradientIsPureDecay) {
    TrainConfig c;
    Tensor64 theta({2}, {2.0, -3.0}, true);
    OptimizerState<double> state;
    adamw_step<double>({{"w", theta}}, state, c, 0.1);
    EXPECT_DOUBLE_EQ(theta[0], 2.0 * (1 - 0.1 * 0.01));
    EXPECT_DOUBLE_EQ(theta[1], -3.0 * (1 - 0.1 * 0.01));
}

TEST(Schedule, BoundaryMidpointAndWarmup) {
    TrainConfig c;  // 30 epochs, warmup 3, base 2e-4
    EXPECT_NEAR(lr_at(c, 0), 2e-4 / 3, 1e-18);
    EXPECT_NEAR(lr_at(c, 3), 2e-4, 1e-18);
    EXPECT_NEAR(lr_at(c, 3 + 27.0 / 2), 1e-4, 1e-18);
    EXPECT_NEAR(lr_at(c, 30), 0.0, 1e-18);
    // last warmup epoch already runs at base
    EXPECT_NEAR(lr_at(c, 2), 2e-4, 1e-18);
    double prev = lr_at(c, 3);
    for (double e = 3.5; e <= 30; e += 0.5) {
        EXPECT_LE(lr_at(c, e), prev);
        prev = lr_at(c, e);
    }
    EXPECT_THROW(lr_at(c, 31), ParameterError);
}

TEST(TrainConfigTest, Validation) {
    TrainConfig c;
    c.warmup_epochs = 30;
    EXPECT_THROW(c.validate(ModelConfig{}), ConfigError);
    c = TrainConfig{};
    c.crop = 20;
    EXPECT_THROW(c.validate(ModelConfig{}), ConfigError);
}

TEST(Variants, ParseAndFlags) {
    for (auto v : {Variant::full, Variant::no_dce, Variant::no_cf, Variant::no_mlf, Variant::unpaired, Variant::baseline})
        EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_THROW(parse_variant("no_everything"), ParameterError);
    EXPECT_FALSE(apply_variant(ModelConfig{}, Variant::no_dce).ablation.use_dce_mhsa);
    EXPECT_FALSE(apply_variant(ModelConfig{}, Variant::no_cf).ablation.use_cf_mhca);
    EXPECT_FALSE(apply_variant(ModelConfig{}, Variant::no_mlf).ablation.multi_level_fusion);
    EXPECT_FALSE(apply_variant(ModelConfig{}, Variant::baseline).use_context);
}

TEST(Config, ParseCommentsAndErrors) {
    const auto kv = parse_key_values("# c\nmodel.heads = 2\n\ntrain.epochs=5  # trailing\n");
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"model.heads", "2"}));
    EXPECT_EQ(kv[1].second, "5");
    EXPECT_THROW(parse_key_values("no equals sign\n"), ConfigError);
    EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(parse_size("k", "-3"), ConfigError);
}

TEST(Config, RunConfigRejectsUnknownKeysAndRoundTrips) {
    EXPECT_THROW(run_config_from_kv({{"train.epocks", "3"}}), ConfigError);
    auto rc = run_config_from_kv({{"train.seed", "9"}, {"embed.dim", "16"}, {"train.epochs", "4"}});
    EXPECT_EQ(rc.model.seed, 9u);
    EXPECT_EQ(rc.model.embed_dim, 16u);
    const auto again = run_config_from_kv(run_config_to_kv(rc));
    EXPECT_EQ(run_config_to_kv(again), run_config_to_kv(rc));
}

TEST(Policy, ParseAndName) {
    EXPECT_EQ(parse_policy("own").kind, ContextPolicy::Kind::own);
    EXPECT_EQ(parse_policy("incorrect_kind").kind, ContextPolicy::Kind::incorrect_kind);
    const auto f = parse_policy("fixed:0..9");
    EXPECT_EQ(f.kind, ContextPolicy::Kind::fixed);
    EXPECT_EQ(f.first, 0u);
    EXPECT_EQ(f.last, 9u);
    EXPECT_EQ(f.name(), "fixed:0..9");
    EXPECT_THROW(parse_policy("fixed:5..2"), ParameterError);
    EXPECT_THROW(parse_policy("sometimes"), ParameterError);
}

TEST(Report, RoundTripIsExact) {
    EvalReport r;
    r.add("own", "haze", "psnr", 1.0 / 3.0);
    r.add("identity", "overall", "ssim", 0.1234567890123456789);
    const auto dir = scratch("report");
    write_report(dir / "r.tsv", r);
    const auto back = read_report(dir / "r.tsv");
    EXPECT_EQ(back.at("own", "haze", "psnr"), 1.0 / 3.0);
    EXPECT_EQ(back.at("identity", "overall", "ssim"), 0.1234567890123456789);
    EXPECT_FALSE(back.find("own", "rain", "psnr").has_value());
    EXPECT_THROW(back.at("own", "rain", "psnr"), LookupError);
    fs::remove_all(dir);
}

TEST(Train, TinyRunIsDeterministicAndWritesArtifacts) {
    const auto a = scratch("run_a"), b = scratch("run_b");
    const auto ra = train(small_request(a));
    train(small_request(b));
    ASSERT_EQ(ra.log.size(), 2u);
    for (const char* f : {"train_log.tsv", "best.awck", "epoch_0001.awck", "epoch_0002.awck", "manifest_effective.tsv"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
    const auto la = read_train_log(a / "train_log.tsv"), lb = read_train_log(b / "train_log.tsv");
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        EXPECT_EQ(la[i].mean_loss, lb[i].mean_loss);
        EXPECT_EQ(la[i].val_psnr, lb[i].val_psnr);
        EXPECT_TRUE(std::isfinite(la[i].mean_loss));
    }
    EXPECT_EQ(slurp(a / "epoch_0002.awck"), slurp(b / "epoch_0002.awck"));

    // the frozen encoder never enters the checkpoint or the optimizer
    const auto ck = load_checkpoint((a / "epoch_0002.awck").string());
    for (const auto& [name, t] : ck.tensors) EXPECT_EQ(name.rfind("embed", 0), std::string::npos) << name;
    EXPECT_EQ(embedder_spec_from_checkpoint(ck).input_resolution, 16u);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    const auto full = scratch("run_full"), part = scratch("run_part");
    train(small_request(full));
    auto first = small_request(part);
    first.train.epochs = 2;
    train(first);
    auto resume = small_request(scratch("run_resumed"));
    resume.resume = part / "epoch_0001.awck";
    train(resume);
    EXPECT_EQ(slurp(full / "epoch_0002.awck"), slurp(resume.out / "epoch_0002.awck"));
    for (const auto& d : {full, part, resume.out}) fs::remove_all(d);
}

TEST(Train, MissingManifestIsError) {
    auto req = small_request(scratch("run_missing"));
    req.data = fs::temp_directory_path() / "awracle_no_such_dataset";
    EXPECT_THROW(train(req), IoError);
}

TEST(Eval, UntrainedModelIsIdentity) {
    const auto manifest = read_manifest(small_dataset());
    auto cfg = small_model();
    cfg.embed_tokens = 5;
    AwracleNet<float> model(cfg);
    EmbedderSpec spec;
    spec.input_resolution = 16;
    spec.num_tokens = 5;
    const ContextEmbedder embedder(spec);
    for (const char* p : {"own", "random_per_image", "incorrect_kind"}) {
        const auto report = eval_model(model, &embedder, manifest, parse_policy(p));
        EXPECT_NEAR(report.at(p, "overall", "psnr"), report.at("identity", "overall", "psnr"), 0.01) << p;
        for (const char* kind : {"haze", "rain", "snow"}) EXPECT_TRUE(report.find(p, kind, "psnr").has_value());
    }
    const auto fixed = eval_model(model, &embedder, manifest, parse_policy("fixed:0..2"));
    EXPECT_TRUE(fixed.find("fixed:0..2", "overall", "psnr_mean").has_value());
    EXPECT_NEAR(fixed.at("fixed:0..2", "overall", "psnr_std"), 0.0, 1e-9);
}

TEST(Eval, SeededPoliciesAreReproducible) {
    const auto manifest = read_manifest(small_dataset());
    auto cfg = small_model();
    cfg.embed_tokens = 5;
    cfg.zero_init_head = false;
    AwracleNet<float> model(cfg);
    EmbedderSpec spec;
    spec.input_resolution = 16;
    spec.num_tokens = 5;
    const ContextEmbedder embedder(spec);
    const auto a = eval_model(model, &embedder, manifest, parse_policy("random_per_image"));
    const auto b = eval_model(model, &embedder, manifest, parse_policy("random_per_image"));
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].value, b.rows[i].value);
    const auto sel = selective_removal_score(model, embedder, manifest, 1);
    EXPECT_GT(sel.samples, 0u);
    EXPECT_GE(sel.both_success, 0.0);
    EXPECT_LE(sel.both_success, 1.0);
    const auto sep = cluster_separation(model, test_contexts(embedder, manifest), 1);
    EXPECT_TRUE(std::isfinite(sep));
    EXPECT_GT(sep, 0.0);
}
