// SPDX-License-Identifier: Apache-2.0
//
// Restoration quality under different context policies, context-cluster
// statistics of the DCE outputs, and selective removal on mixtures.
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

/// Where the context pair for a test query comes from.
///   own               the row's own manifest pair
///   random_per_image  a random training pair of the same kind and severity
///   fixed:a..b        for each i in [a, b] one training pair per kind used for
///                     every query of that kind; reports mean and std over i
///   incorrect_kind    a random training pair of kind (k + 1) mod n, same severity
struct ContextPolicy {
    enum class Kind { own, random_per_image, fixed, incorrect_kind };
    Kind kind = Kind::random_per_image;
    std::size_t first = 0, last = 0;  // fixed only

    std::string name() const;
};

ContextPolicy parse_policy(const std::string& text);

struct ReportRow {
    std::string protocol, kind, metric;
    double value = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;

    void add(std::string protocol, std::string kind, std::string metric, double value);
    std::optional<double> find(const std::string& protocol, const std::string& kind, const std::string& metric) const;
    /// Like find() but throws LookupError when absent.
    double at(const std::string& protocol, const std::string& kind, const std::string& metric) const;
    void append(const EvalReport& other);
};

/// "protocol\tkind\tmetric\tvalue" lines under a header, values at %.17g.
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

struct EvalOptions {
    std::uint64_t seed = 1;
    bool validation_only = true;  // test rows: validation scenes only
};

/// Rows: (policy, kind|overall, psnr|ssim) and (identity, kind|overall,
/// psnr|ssim) for the unrestored query. Fixed policies add per-pair rows
/// "fixed:i" and psnr_mean / psnr_std / ssim_mean / ssim_std under the
/// policy name. "overall" is the mean over kinds.
EvalReport eval_model(const AwracleNet<float>& model, const ContextEmbedder* embedder, const Manifest& manifest,
                      const ContextPolicy& policy, const EvalOptions& options = {});

/// Inter-kind centroid distance over intra-kind spread of mean-pooled O_DCE
/// at the deepest fused level. `contexts` holds (kind, E_C) pairs; each kind
/// needs at least `min_per_kind`. Capped at 1e6.
double cluster_separation(const AwracleNet<float>& model,
                          const std::vector<std::pair<Degradation, Tensor32>>& contexts,
                          std::size_t min_per_kind = 5);

/// E_C of the context pairs of the test rows (validation scenes), by kind.
std::vector<std::pair<Degradation, Tensor32>> test_contexts(const ContextEmbedder& embedder, const Manifest& manifest);

struct SelectiveRemoval {
    std::size_t samples = 0;
    double haze_ctx_vs_snow_only = 0.0, haze_ctx_vs_haze_only = 0.0;  // mean PSNR
    double snow_ctx_vs_snow_only = 0.0, snow_ctx_vs_haze_only = 0.0;
    double haze_ctx_success = 0.0;  // fraction closer to snow-only
    double snow_ctx_success = 0.0;  // fraction closer to haze-only
    double both_success = 0.0;      // fraction satisfying both
};

/// Restores every mixture row once with a haze context and once with a snow
/// context, both random training pairs of the row's severity.
SelectiveRemoval selective_removal_score(const AwracleNet<float>& model, const ContextEmbedder& embedder,
                                         const Manifest& manifest, std::uint64_t seed = 1);
void add_to_report(EvalReport& report, const SelectiveRemoval& result);

/// Writes dce_act_<level>_<sample>.awtf (O_DCE, [2L x C^l]) for the first
/// `max_samples` test rows. Returns the number of files written.
std::size_t dump_dce_activations(const AwracleNet<float>& model, const ContextEmbedder& embedder,
                                 const Manifest& manifest, const std::filesystem::path& out_dir,
                                 std::size_t max_samples);

}  // namespace awracle
