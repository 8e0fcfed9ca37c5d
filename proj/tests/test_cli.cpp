// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "awracle/image.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;  // stdout and stderr together
};

Run run(const std::string& args) {
    const std::string cmd = std::string(AWRACLE_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("awracle_cli_" + name);
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

// Small dataset and a 1-epoch checkpoint with a non-zero head, shared across tests.
struct Fixture {
    fs::path root, data, run_dir;
    Fixture() {
        root = scratch("shared");
        data = root / "data";
        run_dir = root / "run";
        if (run_ok("synth --out " + data.string() + " --scenes 10 --size 16")) {
            std::ofstream(root / "tiny.cfg") << "model.levels = 2\nmodel.backbone_channels = 8,8\n"
                                                "model.dce_channels = 8,8\nmodel.blocks_per_level = 1\n"
                                                "model.zero_init_head = false\ntrain.epochs = 1\n"
                                                "train.warmup_epochs = 0\ntrain.crop = 16\n"
                                                "embed.resolution = 16\nembed.tokens = 5\n";
            run_ok("train --config " + (root / "tiny.cfg").string() + " --data " + data.string() + " --out " +
                   run_dir.string() + " --quiet");
        }
    }
    static bool run_ok(const std::string& args) { return ::run(args).code == 0; }
    fs::path ckpt() const { return run_dir / "best.awck"; }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST(Cli, HelpListsEveryFlag) {
    const auto r = run("--help");
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--out", "--scenes", "--seed", "--kinds", "--mixtures", "--config", "--data", "--ablation",
                             "--ckpt", "--policy", "--query", "--ctx-degraded", "--ctx-clean", "--gt",
                             "--inject-fault"}) {
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    }
}

TEST(Cli, UnknownFlagExitsTwo) {
    EXPECT_EQ(run("synth --out /tmp/x --frobnicate").code, 2);
    EXPECT_EQ(run("").code, 2);
}

TEST(Cli, SynthCountsAndDeterminism) {
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    const auto r = run("synth --out " + a.string() + " --scenes 10 --kinds haze,rain,snow --mixtures false");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("60 base"), std::string::npos) << r.out;
    run("synth --out " + b.string() + " --scenes 10 --kinds haze,rain,snow --mixtures false");
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        ASSERT_TRUE(fs::exists(b / rel)) << rel;
        EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, SynthBogusKindNamesIt) {
    const auto r = run("synth --out " + scratch("bogus").string() + " --kinds haze,bogus");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("bogus"), std::string::npos);
}

TEST(Cli, TrainMissingManifestNamesPath) {
    const auto r = run("train --data /nonexistent/awracle_ds --out " + scratch("nomanifest").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("/nonexistent/awracle_ds"), std::string::npos) << r.out;
}

TEST(Cli, TrainBadConfigExitsTwo) {
    const auto dir = scratch("badcfg");
    std::ofstream(dir / "bad.cfg") << "train.epochz = 3\n";
    EXPECT_EQ(run("train --config " + (dir / "bad.cfg").string() + " --data " + fixture().data.string() +
                  " --out " + (dir / "run").string())
                  .code,
              2);
}

TEST(Cli, TrainWritesCheckpointAndEvalReports) {
    const auto& f = fixture();
    ASSERT_TRUE(fs::exists(f.ckpt()));
    const auto out = scratch("eval") / "eval_report.tsv";
    const auto r = run("eval --ckpt " + f.ckpt().string() + " --data " + f.data.string() + " --policy fixed:0..2 --out " +
                       out.string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("overall"), std::string::npos);
    EXPECT_NE(slurp(out).find("psnr_std"), std::string::npos);
    EXPECT_EQ(run("eval --ckpt /nonexistent.awck --data " + f.data.string() + " --out " + out.string()).code, 2);
}

TEST(Cli, RestorePadsCropsAndDependsOnPairOrder) {
    const auto& f = fixture();
    ASSERT_TRUE(fs::exists(f.ckpt()));
    const auto dir = scratch("restore");
    // 13x11 query: not a multiple of the model's 2
    auto q = awracle::crop(awracle::load_image(f.data / "scenes" / fs::path("s000001.awtf")), 0, 0, 13, 11);
    awracle::save_image(dir / "q.awtf", q);
    const std::string base = "restore --ckpt " + f.ckpt().string();
    fs::path deg;
    for (const auto& e : fs::directory_iterator(f.data / "degraded"))
        if (e.path().extension() == ".awtf") {
            deg = e.path();
            break;
        }
    const auto clean = f.data / "scenes" / "s000001.awtf";
    auto r1 = run(base + " --query " + (dir / "q.awtf").string() + " --ctx-degraded " + deg.string() +
                  " --ctx-clean " + clean.string() + " --out " + (dir / "a.ppm").string() + " --gt " +
                  (dir / "q.awtf").string());
    EXPECT_EQ(r1.code, 0) << r1.out;
    EXPECT_NE(r1.out.find("psnr"), std::string::npos);
    const auto a = awracle::load_image(dir / "a.awtf");
    EXPECT_EQ(a.shape(), q.shape());
    auto r2 = run(base + " --query " + (dir / "q.awtf").string() + " --ctx-degraded " + clean.string() +
                  " --ctx-clean " + deg.string() + " --out " + (dir / "b.awtf").string());
    EXPECT_EQ(r2.code, 0) << r2.out;
    const auto b = awracle::load_image(dir / "b.awtf");
    bool differs = false;
    for (std::size_t i = 0; i < a.numel(); ++i) differs |= a[i] != b[i];
    EXPECT_TRUE(differs);
    EXPECT_EQ(run(base + " --query /nonexistent.ppm --ctx-degraded " + deg.string() + " --ctx-clean " +
                  clean.string() + " --out " + (dir / "c.ppm").string())
                  .code,
              2);
}

TEST(Cli, GradcheckSingleOpAndFaultFixture) {
    const auto ok = run("gradcheck --op gelu --seeds 2");
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("max rel err"), std::string::npos);
    const auto bad = run("gradcheck --op fault_fixture --inject-fault --seeds 2");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("fault_fixture"), std::string::npos);
}

TEST(Cli, EmbedWritesStore) {
    const auto& f = fixture();
    const auto out = scratch("store");
    const auto r = run("embed --data " + f.data.string() + " --out " + out.string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "index.tsv"));
}
