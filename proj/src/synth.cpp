// SPDX-License-Identifier: Apache-2.0
#include "awracle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "awracle/awtf.hpp"
#include "awracle/errors.hpp"
#include "awracle/parallel.hpp"
#include "awracle/rng.hpp"

namespace awracle {

namespace {

// Sub-stream tags so unrelated draws never share a generator.
enum : std::uint64_t {
    kTagScene = 0x5C,
    kTagStyle = 0x57,
    kTagPlace = 0x91,
    kTagCount = 0xC0,
    kTagDepth = 0xDE,
    kTagUnpair = 0xA9,
};

std::uint64_t tagged(std::uint64_t seed, std::uint64_t tag) { return derive_seed(seed, tag); }

struct Canvas {
    std::size_t h, w;
    std::vector<float> px;  // 3 x h x w

    Canvas(std::size_t h_, std::size_t w_) : h(h_), w(w_), px(3 * h_ * w_, 0.0f) {}
    explicit Canvas(const Image& image) : h(image.dim(1)), w(image.dim(2)), px(image.data().begin(), image.data().end()) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return px[(c * h + y) * w + x]; }
    // Alpha-composites `color` with coverage `alpha` at (y, x).
    void blend(std::size_t y, std::size_t x, const std::array<double, 3>& color, double alpha) {
        if (alpha <= 0.0) return;
        alpha = std::min(alpha, 1.0);
        for (std::size_t c = 0; c < 3; ++c) {
            float& v = at(c, y, x);
            v = static_cast<float>(v * (1.0 - alpha) + color[c] * alpha);
        }
    }
    Image finish() {
        for (auto& v : px) v = std::clamp(v, 0.0f, 1.0f);
        return Image({3, h, w}, std::move(px));
    }
};

std::array<double, 3> random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = ax + t * dx - px, ey = ay + t * dy - py;
    return std::sqrt(ex * ex + ey * ey);
}

// Anti-aliased segment of half-width `half` (pixel centres at +0.5).
void draw_segment(Canvas& canvas, double ax, double ay, double bx, double by, double half,
                  const std::array<double, 3>& color, double alpha) {
    const long y0 = std::max(0L, static_cast<long>(std::floor(std::min(ay, by) - half - 1)));
    const long y1 = std::min(static_cast<long>(canvas.h) - 1, static_cast<long>(std::ceil(std::max(ay, by) + half + 1)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(std::min(ax, bx) - half - 1)));
    const long x1 = std::min(static_cast<long>(canvas.w) - 1, static_cast<long>(std::ceil(std::max(ax, bx) + half + 1)));
    for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
            const double d = segment_distance(x + 0.5, y + 0.5, ax, ay, bx, by);
            const double coverage = std::clamp(half + 0.5 - d, 0.0, 1.0);
            canvas.blend(y, x, color, alpha * coverage);
        }
    }
}

// Disc with a soft rim: full inside 0.5 r, fading to zero at r + 0.5.
void draw_disc(Canvas& canvas, double cx, double cy, double r, const std::array<double, 3>& color,
               double alpha, bool soft) {
    const long y0 = std::max(0L, static_cast<long>(std::floor(cy - r - 1)));
    const long y1 = std::min(static_cast<long>(canvas.h) - 1, static_cast<long>(std::ceil(cy + r + 1)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(cx - r - 1)));
    const long x1 = std::min(static_cast<long>(canvas.w) - 1, static_cast<long>(std::ceil(cx + r + 1)));
    for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
            const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            double coverage;
            if (soft) {
                const double inner = 0.5 * r;
                coverage = d <= inner ? 1.0 : std::clamp(1.0 - (d - inner) / (r + 0.5 - inner), 0.0, 1.0);
            } else {
                coverage = std::clamp(r + 0.5 - d, 0.0, 1.0);
            }
            canvas.blend(y, x, color, alpha * coverage);
        }
    }
}

double lerp(double lo, double hi, double t) { return lo + (hi - lo) * t; }

void check_image(const Image& image, const char* what) {
    if (!image.defined() || image.ndim() != 3 || image.dim(0) != 3) {
        throw DimensionError(std::string(what) + ": expected a [3 x H x W] image");
    }
}

}  // namespace

Image render_scene(const SceneSpec& spec) {
    if (spec.height < 16 || spec.width < 16) {
        throw ParameterError("render_scene: scenes must be at least 16x16, got " + std::to_string(spec.height) +
                             "x" + std::to_string(spec.width));
    }
    Rng rng(tagged(spec.seed, kTagScene));
    const std::size_t h = spec.height, w = spec.width;
    Canvas canvas(h, w);

    // Background: gradient between two colours along a random direction,
    // with a gentle sinusoidal ripple.
    const auto c0 = random_color(rng), c1 = random_color(rng);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double freq = rng.uniform(0.5, 2.0), phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double nx = (x + 0.5) / w - 0.5, ny = (y + 0.5) / h - 0.5;
            const double t = std::clamp(0.5 + nx * ux + ny * uy, 0.0, 1.0);
            const double ripple = 0.08 * std::sin(2.0 * std::numbers::pi * freq * (nx - ny) + phase);
            for (std::size_t c = 0; c < 3; ++c) canvas.at(c, y, x) = static_cast<float>(lerp(c0[c], c1[c], t) + ripple);
        }
    }
    const double scale = static_cast<double>(std::min(h, w));
    const std::size_t rects = 2 + rng.index(4), discs = 1 + rng.index(4), lines = 1 + rng.index(3);
    for (std::size_t i = 0; i < rects; ++i) {
        const auto color = random_color(rng);
        const double rw = rng.uniform(0.15, 0.5) * w, rh = rng.uniform(0.15, 0.5) * h;
        const double left = rng.uniform(-0.1 * w, w - 0.5 * rw), top = rng.uniform(-0.1 * h, h - 0.5 * rh);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                if (x + 0.5 >= left && x + 0.5 < left + rw && y + 0.5 >= top && y + 0.5 < top + rh) {
                    canvas.blend(y, x, color, 1.0);
                }
            }
        }
    }
    for (std::size_t i = 0; i < discs; ++i) {
        const auto color = random_color(rng);
        const double r = rng.uniform(0.06, 0.2) * scale;
        draw_disc(canvas, rng.uniform(0.0, w), rng.uniform(0.0, h), r, color, 1.0, false);
    }
    for (std::size_t i = 0; i < lines; ++i) {
        const auto color = random_color(rng);
        draw_segment(canvas, rng.uniform(0.0, w), rng.uniform(0.0, h), rng.uniform(0.0, w), rng.uniform(0.0, h),
                     rng.uniform(0.4, 1.0), color, 1.0);
    }
    return canvas.finish();
}

Image depth_field(std::uint64_t seed, std::size_t height, std::size_t width) {
    Rng rng(tagged(seed, kTagDepth));
    const double tilt = rng.uniform(0.5, 1.0);
    struct Bump {
        double x, y, sigma, amp;
    };
    std::vector<Bump> bumps(3);
    for (auto& b : bumps) b = {rng.uniform(), rng.uniform(), rng.uniform(0.15, 0.4), rng.uniform(-0.5, 0.5)};
    std::vector<double> d(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double nx = (x + 0.5) / width, ny = (y + 0.5) / height;
            double v = tilt * (1.0 - ny);  // far at the top
            for (const auto& b : bumps) {
                const double r2 = (nx - b.x) * (nx - b.x) + (ny - b.y) * (ny - b.y);
                v += b.amp * std::exp(-r2 / (2 * b.sigma * b.sigma));
            }
            d[y * width + x] = v;
        }
    }
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    const double min = *lo, range = std::max(*hi - *lo, 1e-12);
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<float>((d[i] - min) / range);
    return Image({1, height, width}, std::move(out));
}

DegradationSpec sample_degradation(Degradation kind, Severity severity, std::uint64_t style_seed,
                                   std::uint64_t placement_seed) {
    Rng rng(tagged(style_seed, kTagStyle));
    const bool heavy = severity == Severity::heavy;
    DegradationSpec spec;
    spec.kind = kind;
    spec.severity = severity;
    spec.seed = placement_seed;
    // Every draw happens regardless of kind so the style stream is stable.
    const double q = rng.uniform();
    spec.beta = heavy ? lerp(1.2, 2.0, q) : lerp(0.4, 0.8, q);
    for (auto& a : spec.airlight) a = rng.uniform(0.7, 1.0);
    spec.rain_density = heavy ? 0.004 : 0.001;
    spec.streak_length = rng.uniform(8.0, 16.0);
    spec.streak_angle_deg = rng.uniform(-30.0, 30.0);
    spec.streak_intensity = rng.uniform(0.6, 0.9);
    spec.snow_density = heavy ? 0.008 : 0.002;
    spec.radius_min = rng.uniform(0.8, 1.2);
    spec.radius_max = spec.radius_min + rng.uniform(0.6, 1.4);
    spec.opacity = rng.uniform(0.7, 0.95);
    if (kind != Degradation::haze) spec.beta = 0.0;
    if (kind != Degradation::rain) spec.rain_density = 0.0;
    if (kind != Degradation::snow) spec.snow_density = 0.0;
    return spec;
}

std::size_t stochastic_count(double density, std::size_t height, std::size_t width, double u) {
    const double expected = density * static_cast<double>(height * width);
    return static_cast<std::size_t>(std::floor(expected + u));
}

Image apply_haze(const Image& clean, const DegradationSpec& spec, const Image& depth) {
    check_image(clean, "apply_haze");
    if (spec.beta < 0.0) throw ParameterError("apply_haze: beta must be non-negative, got " + std::to_string(spec.beta));
    const std::size_t h = clean.dim(1), w = clean.dim(2);
    if (depth.ndim() != 3 || depth.dim(0) != 1 || depth.dim(1) != h || depth.dim(2) != w) {
        throw DimensionError("apply_haze: depth " + shape_str(depth.shape()) + " does not match image " +
                             shape_str(clean.shape()));
    }
    if (spec.beta == 0.0) return clean.clone();
    std::vector<float> out(clean.numel());
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) {
            const double t = std::exp(-spec.beta * depth[i]);
            const double v = clean[c * h * w + i] * t + spec.airlight[c] * (1.0 - t);
            out[c * h * w + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return Image(clean.shape(), std::move(out));
}

Image apply_haze(const Image& clean, const DegradationSpec& spec) {
    check_image(clean, "apply_haze");
    return apply_haze(clean, spec, depth_field(spec.seed, clean.dim(1), clean.dim(2)));
}

Image apply_rain(const Image& clean, const DegradationSpec& spec) {
    check_image(clean, "apply_rain");
    if (spec.rain_density < 0.0) throw ParameterError("apply_rain: density must be non-negative");
    const std::size_t h = clean.dim(1), w = clean.dim(2);
    Rng count_rng(tagged(spec.seed, kTagCount));
    const std::size_t count = stochastic_count(spec.rain_density, h, w, count_rng.uniform());
    if (count == 0) return clean.clone();
    Rng rng(tagged(spec.seed, kTagPlace));
    Canvas canvas(clean);
    for (std::size_t i = 0; i < count; ++i) {
        // Fixed number of draws per streak, so the first n streaks agree
        // between severities.
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        const double angle = (spec.streak_angle_deg + rng.uniform(-4.0, 4.0)) * std::numbers::pi / 180.0;
        const double length = spec.streak_length * rng.uniform(0.8, 1.2);
        const double alpha = spec.streak_intensity * rng.uniform(0.85, 1.0);
        const double shade = rng.uniform(0.9, 1.0);
        const double dx = 0.5 * length * std::sin(angle), dy = 0.5 * length * std::cos(angle);
        draw_segment(canvas, cx - dx, cy - dy, cx + dx, cy + dy, 0.5, {shade, shade, 1.0}, alpha);
    }
    return canvas.finish();
}

Image apply_snow(const Image& clean, const DegradationSpec& spec) {
    check_image(clean, "apply_snow");
    if (spec.snow_density < 0.0) throw ParameterError("apply_snow: density must be non-negative");
    const std::size_t h = clean.dim(1), w = clean.dim(2);
    Rng count_rng(tagged(spec.seed, kTagCount));
    const std::size_t count = stochastic_count(spec.snow_density, h, w, count_rng.uniform());
    if (count == 0) return clean.clone();
    Rng rng(tagged(spec.seed, kTagPlace));
    Canvas canvas(clean);
    for (std::size_t i = 0; i < count; ++i) {
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        const double r = rng.uniform(spec.radius_min, spec.radius_max);
        const double alpha = spec.opacity * rng.uniform(0.8, 1.0);
        draw_disc(canvas, cx, cy, r, {0.97, 0.97, 0.97}, alpha, true);
    }
    return canvas.finish();
}

Image apply_degradation(const Image& clean, const DegradationSpec& spec) {
    switch (spec.kind) {
        case Degradation::haze: return apply_haze(clean, spec);
        case Degradation::rain: return apply_rain(clean, spec);
        case Degradation::snow: return apply_snow(clean, spec);
    }
    throw ParameterError("unknown degradation kind");
}

// --- dataset -------------------------------------------------------------------

std::vector<Degradation> Manifest::kinds() const {
    std::vector<Degradation> out;
    for (auto kind : kAllDegradations) {
        const auto name = to_string(kind);
        if (std::any_of(samples.begin(), samples.end(), [&](const auto& s) { return s.kind == name; })) {
            out.push_back(kind);
        }
    }
    return out;
}

bool is_validation_scene(int scene_id) { return scene_id % 10 == 9; }

namespace {

std::string scene_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06d", id);
    return buf;
}

std::string clean_path(int scene) { return "scenes/" + scene_name(scene) + ".awtf"; }
std::string degraded_path(int scene, const std::string& kind, Severity severity) {
    return "degraded/" + scene_name(scene) + "_" + kind + "_" + to_string(severity) + ".awtf";
}

struct RenderJob {
    std::string path;
    std::function<Image()> render;
};

std::uint64_t kind_code(const std::string& kind) {
    if (kind == kMixtureKind) return 3;
    return static_cast<std::uint64_t>(parse_degradation(kind));
}

// Seed of everything drawn for (scene, kind); shared by both severities.
std::uint64_t scene_kind_seed(std::uint64_t seed, int scene, std::uint64_t kind) {
    return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(scene)), kind);
}

}  // namespace

Manifest build_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir) {
    if (options.scenes == 0) throw ParameterError("build_dataset: need at least one scene");
    if (options.kinds.empty()) throw ParameterError("build_dataset: need at least one degradation kind");
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"scenes", "degraded", "previews"}) {
        fs::create_directories(out_dir / sub, ec);
        if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
    }

    const std::size_t h = options.height, w = options.width;
    const std::uint64_t seed = options.seed;
    const int n = static_cast<int>(options.scenes);
    auto clean_of = [&](int scene) { return render_scene({derive_seed(seed, 0x5CE11E0000ULL + scene), h, w}); };

    Manifest manifest;
    manifest.root = out_dir;
    std::vector<RenderJob> jobs;
    for (int s = 0; s < n; ++s) jobs.push_back({clean_path(s), [=] { return clean_of(s); }});

    // Context scenes get fresh ids after the query scenes, one per sample.
    int next_scene = n;
    for (int s = 0; s < n; ++s) {
        for (auto kind : options.kinds) {
            const auto kname = to_string(kind);
            const auto query_seed = scene_kind_seed(seed, s, kind_code(kname));
            for (auto severity : kAllSeverities) {
                const int c = next_scene++;
                const auto ctx_seed = scene_kind_seed(seed, c, kind_code(kname));
                SampleRecord r;
                r.query = degraded_path(s, kname, severity);
                r.gt = clean_path(s);
                r.ctx_degraded = degraded_path(c, kname, severity);
                r.ctx_clean = clean_path(c);
                r.kind = kname;
                r.severity = severity;
                r.scene_id = s;
                r.ctx_scene_id = r.ctx_clean_scene_id = c;
                manifest.samples.push_back(r);
                // The context shares the query's degradation style but not its
                // placement or its scene.
                const auto style = tagged(query_seed, kTagStyle);
                jobs.push_back({r.query, [=] {
                                    return apply_degradation(clean_of(s),
                                                             sample_degradation(kind, severity, style, query_seed));
                                }});
                jobs.push_back({r.ctx_clean, [=] { return clean_of(c); }});
                jobs.push_back({r.ctx_degraded, [=] {
                                    return apply_degradation(clean_of(c),
                                                             sample_degradation(kind, severity, style, ctx_seed));
                                }});
            }
        }
    }

    const bool has_haze = std::count(options.kinds.begin(), options.kinds.end(), Degradation::haze) > 0;
    const bool has_snow = std::count(options.kinds.begin(), options.kinds.end(), Degradation::snow) > 0;
    if (options.mixtures && has_haze && has_snow) {
        for (int j = 0; j < n; ++j) {
            const int m = next_scene++;
            const Severity severity = kAllSeverities[j % 2];
            const auto haze_seed = scene_kind_seed(seed, m, kind_code("haze"));
            const auto snow_seed = scene_kind_seed(seed, m, kind_code("snow"));
            const auto haze = sample_degradation(Degradation::haze, severity, tagged(haze_seed, kTagStyle), haze_seed);
            const auto snow = sample_degradation(Degradation::snow, severity, tagged(snow_seed, kTagStyle), snow_seed);
            SampleRecord r;
            r.query = degraded_path(m, kMixtureKind, severity);
            r.gt = clean_path(m);
            r.ctx_degraded = degraded_path(m, "haze", severity);
            r.ctx_clean = degraded_path(m, "snow", severity);
            r.kind = kMixtureKind;
            r.severity = severity;
            r.scene_id = r.ctx_scene_id = r.ctx_clean_scene_id = m;
            manifest.samples.push_back(r);
            jobs.push_back({r.gt, [=] { return clean_of(m); }});
            jobs.push_back({r.ctx_degraded, [=] { return apply_haze(clean_of(m), haze); }});
            jobs.push_back({r.ctx_clean, [=] { return apply_snow(clean_of(m), snow); }});
            jobs.push_back({r.query, [=] { return apply_haze(apply_snow(clean_of(m), snow), haze); }});
        }
    }

    parallel_for(jobs.size(), [&](std::size_t i) {
        const auto image = jobs[i].render();
        save_awtf(out_dir / jobs[i].path, image);
        auto preview = fs::path("previews") / fs::path(jobs[i].path).filename();
        preview.replace_extension(".ppm");
        write_ppm(out_dir / preview, image);
    });
    write_manifest(out_dir / "manifest.tsv", manifest);
    return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& s : manifest.samples) {
        out << s.query << '\t' << s.gt << '\t' << s.ctx_degraded << '\t' << s.ctx_clean << '\t' << s.kind << '\t'
            << to_string(s.severity) << '\t' << s.scene_id << '\t' << s.ctx_scene_id << '\t' << s.ctx_clean_scene_id
            << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Manifest read_manifest(const std::filesystem::path& dir_or_file) {
    namespace fs = std::filesystem;
    const fs::path file = fs::is_directory(dir_or_file) ? dir_or_file / "manifest.tsv" : dir_or_file;
    std::ifstream in(file);
    if (!in) throw IoError("cannot read manifest " + file.string());
    Manifest manifest;
    manifest.root = file.parent_path();
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        const auto where = file.string() + ":" + std::to_string(number);
        if (cols.size() != 8 && cols.size() != 9) {
            throw FormatError(where + ": expected 8 or 9 tab-separated columns, found " + std::to_string(cols.size()));
        }
        SampleRecord r;
        r.query = cols[0];
        r.gt = cols[1];
        r.ctx_degraded = cols[2];
        r.ctx_clean = cols[3];
        r.kind = cols[4];
        try {
            if (!r.is_mixture()) (void)parse_degradation(r.kind);
            r.severity = parse_severity(cols[5]);
            r.scene_id = std::stoi(cols[6]);
            r.ctx_scene_id = std::stoi(cols[7]);
            r.ctx_clean_scene_id = cols.size() == 9 ? std::stoi(cols[8]) : r.ctx_scene_id;
        } catch (const ParameterError& e) {
            throw FormatError(where + ": " + e.what());
        } catch (const std::logic_error&) {
            throw FormatError(where + ": scene ids must be integers");
        }
        manifest.samples.push_back(std::move(r));
    }
    return manifest;
}

LoadedSample load_sample(const Manifest& manifest, const SampleRecord& record) {
    LoadedSample out;
    out.record = record;
    out.query = load_image(manifest.resolve(record.query));
    out.gt = load_image(manifest.resolve(record.gt));
    out.ctx_degraded = load_image(manifest.resolve(record.ctx_degraded));
    out.ctx_clean = load_image(manifest.resolve(record.ctx_clean));
    if (out.query.shape() != out.gt.shape()) {
        throw FormatError("query " + record.query + " and gt " + record.gt + " differ in shape");
    }
    return out;
}

Manifest make_unpaired(const Manifest& manifest, std::uint64_t seed) {
    Manifest out = manifest;
    std::map<std::string, std::vector<std::size_t>> by_kind;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        if (!out.samples[i].is_mixture()) by_kind[out.samples[i].kind].push_back(i);
    }
    for (const auto& [kind, rows] : by_kind) {
        for (std::size_t k = 0; k < rows.size(); ++k) {
            auto& row = out.samples[rows[k]];
            Rng rng(derive_seed(tagged(seed, kTagUnpair), rows[k]));
            // Try random partners first, then fall back to a linear scan.
            std::optional<std::size_t> partner;
            for (int attempt = 0; attempt < 16 && !partner; ++attempt) {
                const auto& cand = manifest.samples[rows[rng.index(rows.size())]];
                if (cand.ctx_clean_scene_id != row.ctx_scene_id) partner = &cand - manifest.samples.data();
            }
            for (std::size_t j = 0; j < rows.size() && !partner; ++j) {
                if (manifest.samples[rows[j]].ctx_clean_scene_id != row.ctx_scene_id) partner = rows[j];
            }
            if (!partner) continue;
            row.ctx_clean = manifest.samples[*partner].ctx_clean;
            row.ctx_clean_scene_id = manifest.samples[*partner].ctx_clean_scene_id;
        }
    }
    return out;
}

}  // namespace awracle
