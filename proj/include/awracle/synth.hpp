// SPDX-License-Identifier: Apache-2.0
//
// Procedural clean scenes and synthetic haze / rain / snow at two severities.
// Everything is a pure function of its seeds.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "awracle/image.hpp"
#include "awracle/types.hpp"

namespace awracle {

struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t height = 32;
    std::size_t width = 32;
};

/// Smooth colour gradient plus rectangles, discs and line segments, in [0, 1].
Image render_scene(const SceneSpec& spec);

/// Smooth depth map in [0, 1] (far at the top, low-frequency bumps).
Image depth_field(std::uint64_t seed, std::size_t height, std::size_t width);

struct DegradationSpec {
    Degradation kind = Degradation::haze;
    Severity severity = Severity::light;
    std::uint64_t seed = 0;  // depth field / streak and particle placement

    // haze
    double beta = 0.0;
    std::array<double, 3> airlight{1.0, 1.0, 1.0};
    // rain
    double rain_density = 0.0;  // streaks per px^2
    double streak_length = 8.0;
    double streak_angle_deg = 0.0;  // from vertical
    double streak_intensity = 0.7;
    // snow
    double snow_density = 0.0;  // particles per px^2
    double radius_min = 0.8;
    double radius_max = 2.0;
    double opacity = 0.8;
};

/// Draws the kind's parameters for `severity`. The style seed fixes the
/// character of the degradation (airlight colour, streak angle, flake size);
/// the placement seed only moves streaks, flakes and the depth field. Light
/// and heavy drawn from the same style seed use the same quantile of their
/// disjoint ranges, so heavy is strictly stronger.
DegradationSpec sample_degradation(Degradation kind, Severity severity, std::uint64_t style_seed,
                                   std::uint64_t placement_seed);

/// I = J t + A (1 - t), t = exp(-beta d). Throws ParameterError for beta < 0.
Image apply_haze(const Image& clean, const DegradationSpec& spec);
Image apply_haze(const Image& clean, const DegradationSpec& spec, const Image& depth);
Image apply_rain(const Image& clean, const DegradationSpec& spec);
Image apply_snow(const Image& clean, const DegradationSpec& spec);
Image apply_degradation(const Image& clean, const DegradationSpec& spec);

/// Expected count density * area, rounded stochastically with `u` in [0, 1).
std::size_t stochastic_count(double density, std::size_t height, std::size_t width, double u);

// --- dataset -------------------------------------------------------------------

inline constexpr const char* kMixtureKind = "mixture";

/// One manifest line: query, gt, ctx_degraded, ctx_clean, kind, severity,
/// scene_id, ctx_scene_id, ctx_clean_scene_id. Paths are relative to the
/// dataset directory. scene_id is the query's scene, ctx_scene_id the scene
/// of the degraded context image and ctx_clean_scene_id that of the clean
/// one (equal for paired rows; an 8-column line implies paired).
/// For mixture rows (kind "mixture") the query is haze over snow, gt is the
/// clean scene, and the two context columns carry the haze-only and
/// snow-only renders instead of a context pair.
struct SampleRecord {
    std::string query, gt, ctx_degraded, ctx_clean;
    std::string kind;
    Severity severity = Severity::light;
    int scene_id = 0;
    int ctx_scene_id = 0;
    int ctx_clean_scene_id = 0;

    bool is_paired() const { return ctx_scene_id == ctx_clean_scene_id; }

    bool is_mixture() const { return kind == kMixtureKind; }
    Degradation degradation() const { return parse_degradation(kind); }
    const std::string& haze_only() const { return ctx_degraded; }
    const std::string& snow_only() const { return ctx_clean; }
};

struct Manifest {
    std::filesystem::path root;
    std::vector<SampleRecord> samples;

    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
    /// Kinds present among non-mixture rows, in enum order.
    std::vector<Degradation> kinds() const;
};

/// Validation rows are those whose query scene id ends in 9.
bool is_validation_scene(int scene_id);

struct DatasetOptions {
    std::size_t scenes = 100;
    std::vector<Degradation> kinds{Degradation::haze, Degradation::rain, Degradation::snow};
    bool mixtures = true;  // needs haze and snow among the kinds
    std::size_t height = 32;
    std::size_t width = 32;
    std::uint64_t seed = 1;
};

/// Renders every sample into `out_dir` (AWTF images plus PPM previews) and
/// writes manifest.tsv. Row order: scene, kind, severity; mixtures last.
Manifest build_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Reads `dir`/manifest.tsv, or the file itself when given a path to a .tsv.
Manifest read_manifest(const std::filesystem::path& dir_or_file);

/// A manifest row with its four images loaded.
struct LoadedSample {
    SampleRecord record;
    Image query, gt, ctx_degraded, ctx_clean;
};

LoadedSample load_sample(const Manifest& manifest, const SampleRecord& record);

/// Re-pairs each non-mixture row's clean context with the clean context of
/// another row of the same kind from a different scene. Rows whose kind has
/// no such partner are left paired.
Manifest make_unpaired(const Manifest& manifest, std::uint64_t seed);

}  // namespace awracle
