// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: synth, train, eval, restore, gradcheck, embed.
// Exit codes: 0 ok, 1 check failure, 2 usage/config/IO, 3 numerical abort.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "awracle/awtf.hpp"
#include "awracle/evaluator.hpp"
#include "awracle/gradcheck.hpp"
#include "awracle/image.hpp"
#include "awracle/metrics.hpp"
#include "awracle/run_config.hpp"
#include "awracle/synth.hpp"
#include "awracle/trainer.hpp"

namespace fs = std::filesystem;
using namespace awracle;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct SynthArgs {
    std::string out;
    std::size_t scenes = 100;
    std::uint64_t seed = 1;
    std::string kinds = "haze,rain,snow";
    bool mixtures = true;
    std::size_t size = 32;
};

int cmd_synth(const SynthArgs& a) {
    DatasetOptions o;
    o.scenes = a.scenes;
    o.seed = a.seed;
    o.kinds = parse_degradation_list(a.kinds);
    o.mixtures = a.mixtures;
    o.height = o.width = a.size;
    const auto manifest = build_dataset(o, a.out);
    std::size_t mixtures = 0;
    for (const auto& s : manifest.samples) mixtures += s.is_mixture();
    std::printf("wrote %zu samples (%zu base, %zu mixtures) to %s\n", manifest.samples.size(),
                manifest.samples.size() - mixtures, mixtures, a.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string config, data, out, ablation = "full", resume;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    RunConfig rc;
    if (!a.config.empty()) rc = read_run_config(a.config);
    else rc = run_config_from_kv({});
    TrainRequest req;
    req.model = rc.model;
    req.train = rc.train;
    req.embedder = rc.embed;
    req.variant = parse_variant(a.ablation);
    req.data = a.data;
    req.out = a.out;
    if (!a.resume.empty()) req.resume = fs::path(a.resume);
    req.verbose = !a.quiet;
    const auto result = train(req);
    std::printf("final val psnr %.4f dB  ssim %.4f  (best %.4f dB at epoch %zu)\n", result.final_val_psnr,
                result.final_val_ssim, result.best_val_psnr, result.best_epoch);
    return 0;
}

struct EvalArgs {
    std::string ckpt, data, policy = "random_per_image", out;
    std::uint64_t seed = 1;
    bool all_rows = false;
    bool selective = false;
    std::size_t dump_dce = 0;
};

int cmd_eval(const EvalArgs& a) {
    const auto ck = load_checkpoint(a.ckpt);
    const auto model = model_from_checkpoint(ck);
    const auto manifest = read_manifest(a.data);
    std::optional<ContextEmbedder> embedder;
    if (model.config().use_context) embedder.emplace(embedder_spec_from_checkpoint(ck));
    const auto* emb = embedder ? &*embedder : nullptr;
    EvalOptions options;
    options.seed = a.seed;
    options.validation_only = !a.all_rows;
    const auto policy = parse_policy(a.policy);
    auto report = eval_model(model, emb, manifest, policy, options);
    if (a.selective) {
        if (!emb) throw ConfigError("--selective needs a context-conditioned checkpoint");
        add_to_report(report, selective_removal_score(model, *emb, manifest, a.seed));
    }
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_report(out, report);
    if (a.dump_dce > 0) {
        if (!emb) throw ConfigError("--dump-dce needs a context-conditioned checkpoint");
        const auto n = dump_dce_activations(model, *emb, manifest, out.parent_path().empty() ? "." : out.parent_path(),
                                            a.dump_dce);
        std::printf("wrote %zu DCE activation tensors\n", n);
    }
    const std::string key = policy.kind == ContextPolicy::Kind::fixed ? "psnr_mean" : "psnr";
    const std::string skey = policy.kind == ContextPolicy::Kind::fixed ? "ssim_mean" : "ssim";
    std::printf("%s overall psnr %.4f dB  ssim %.4f  (identity %.4f dB)\n", policy.name().c_str(),
                report.at(policy.name(), "overall", key), report.at(policy.name(), "overall", skey),
                report.at("identity", "overall", "psnr"));
    return 0;
}

struct RestoreArgs {
    std::string ckpt, query, ctx_degraded, ctx_clean, out, gt;
};

int cmd_restore(const RestoreArgs& a) {
    const auto ck = load_checkpoint(a.ckpt);
    const auto model = model_from_checkpoint(ck);
    const auto query = load_image(a.query);
    Tensor32 context;
    if (model.config().use_context) {
        if (a.ctx_degraded.empty() || a.ctx_clean.empty()) {
            throw UsageError("--ctx-degraded and --ctx-clean are required for this checkpoint");
        }
        const ContextEmbedder embedder(embedder_spec_from_checkpoint(ck));
        context = embedder.embed_context(ContextPair::paired(load_image(a.ctx_degraded), load_image(a.ctx_clean),
                                                             Degradation::haze, Severity::light, 0));
    }
    const std::size_t h = query.dim(1), w = query.dim(2);
    const auto padded = pad_reflect_to_multiple(query, model.config().required_multiple());
    const auto restored = crop(model.restore(padded, context), 0, 0, h, w);

    fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    fs::path ppm = out, awtf = out;
    ppm.replace_extension(".ppm");
    awtf.replace_extension(".awtf");
    write_ppm(ppm, restored);
    save_awtf(awtf, restored);
    std::printf("wrote %s and %s\n", ppm.c_str(), awtf.c_str());
    if (!a.gt.empty()) {
        const auto gt = load_image(a.gt);
        std::printf("psnr %.4f dB (query %.4f dB)\n", psnr(restored, gt), psnr(query, gt));
    }
    return 0;
}

struct GradcheckArgs {
    std::size_t seeds = 10;
    std::string op;
    bool inject_fault = false;
    bool list = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    if (a.list) {
        for (const auto& name : gradcheck_op_names(true)) std::printf("%s\n", name.c_str());
        return 0;
    }
    GradCheckOptions o;
    o.seeds = a.seeds;
    o.only = a.op;
    o.inject_fault = a.inject_fault;
    std::string first_failure;
    run_gradcheck(o, [&](const GradCheckResult& r) {
        std::printf("%-22s max rel err %.3e  (tol %.0e)  %s\n", r.op.c_str(), r.max_rel_error, r.tolerance,
                    r.passed() ? "ok" : "FAIL");
        std::fflush(stdout);
        if (!r.passed() && first_failure.empty()) first_failure = r.op;
    });
    if (!first_failure.empty()) {
        std::fprintf(stderr, "gradcheck failed: %s\n", first_failure.c_str());
        return kExitCheckFailed;
    }
    std::printf("gradcheck passed\n");
    return 0;
}

struct EmbedArgs {
    std::string data, out, config;
};

int cmd_embed(const EmbedArgs& a) {
    const auto rc = a.config.empty() ? run_config_from_kv({}) : read_run_config(a.config);
    auto spec = rc.embed;
    if (spec.backend != EmbedderBackend::toy_encoder) {
        throw ConfigError("embed: the store is computed with the toy encoder; embed.backend must be toy_encoder");
    }
    const ContextEmbedder embedder(spec);
    const auto manifest = read_manifest(a.data);
    std::set<fs::path> unique;
    for (const auto& s : manifest.samples) {
        unique.insert(manifest.resolve(s.ctx_degraded));
        unique.insert(manifest.resolve(s.ctx_clean));
    }
    write_embedding_store(a.out, embedder, {unique.begin(), unique.end()});
    std::printf("wrote %zu embeddings to %s\n", unique.size(), a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-conditioned all-weather image restoration"};
    app.set_help_flag();
    app.set_help_all_flag("-h,--help", "Print help for every subcommand and exit");
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Render a synthetic degradation dataset");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--scenes", synth.scenes, "Number of scenes")->capture_default_str();
    s->add_option("--seed", synth.seed, "Dataset seed")->capture_default_str();
    s->add_option("--kinds", synth.kinds, "Comma-separated kinds (haze,rain,snow)")->capture_default_str();
    s->add_option("--mixtures", synth.mixtures, "Emit haze+snow mixtures (true/false)")->capture_default_str();
    s->add_option("--size", synth.size, "Image height and width")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model");
    t->add_option("--config", tr.config, "key = value config file");
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--out", tr.out, "Run directory")->required();
    t->add_option("--ablation", tr.ablation, "full, no_dce, no_cf, no_mlf, unpaired or baseline")
        ->capture_default_str();
    t->add_option("--resume", tr.resume, "Epoch checkpoint to continue from");
    t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--policy", ev.policy, "own, random_per_image, fixed:a..b or incorrect_kind")->capture_default_str();
    e->add_option("--out", ev.out, "Report path (eval_report.tsv)")->required();
    e->add_option("--seed", ev.seed, "Context sampling seed")->capture_default_str();
    e->add_flag("--all-rows", ev.all_rows, "Evaluate every scene, not only validation scenes");
    e->add_flag("--selective", ev.selective, "Add selective-removal rows for mixture samples");
    e->add_option("--dump-dce", ev.dump_dce, "Write O_DCE tensors for the first N validation rows");

    RestoreArgs rs;
    auto* r = app.add_subcommand("restore", "Restore one image given a context pair");
    r->add_option("--ckpt", rs.ckpt, "Checkpoint")->required();
    r->add_option("--query", rs.query, "Degraded image (AWTF or PPM)")->required();
    r->add_option("--ctx-degraded", rs.ctx_degraded, "Context degraded image");
    r->add_option("--ctx-clean", rs.ctx_clean, "Context clean image");
    r->add_option("--out", rs.out, "Output path; writes .ppm and .awtf")->required();
    r->add_option("--gt", rs.gt, "Ground truth, prints PSNR");

    GradcheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks (64-bit)");
    g->add_option("--seeds", gc.seeds, "Random inputs per op")->capture_default_str();
    g->add_option("--op", gc.op, "Check a single op");
    g->add_flag("--inject-fault", gc.inject_fault, "Include an op with a broken backward (harness self-test)");
    g->add_flag("--list", gc.list, "List op names");

    EmbedArgs em;
    auto* m = app.add_subcommand("embed", "Precompute an embedding store for a dataset's context images");
    m->add_option("--data", em.data, "Dataset directory")->required();
    m->add_option("--out", em.out, "Store directory")->required();
    m->add_option("--config", em.config, "key = value config file (embed.* keys)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitUsage;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_eval(ev);
        if (*r) return cmd_restore(rs);
        if (*g) return cmd_gradcheck(gc);
        if (*m) return cmd_embed(em);
    } catch (const NumericalError& ex) {
        std::cerr << "numerical error: " << ex.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
