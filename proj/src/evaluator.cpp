// SPDX-License-Identifier: Apache-2.0
#include "awracle/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "awracle/awtf.hpp"
#include "awracle/config.hpp"
#include "awracle/metrics.hpp"
#include "awracle/parallel.hpp"
#include "awracle/rng.hpp"

namespace awracle {

namespace fs = std::filesystem;

std::string ContextPolicy::name() const {
    switch (kind) {
        case Kind::own: return "own";
        case Kind::random_per_image: return "random_per_image";
        case Kind::incorrect_kind: return "incorrect_kind";
        case Kind::fixed:
            return first == last ? "fixed:" + std::to_string(first)
                                 : "fixed:" + std::to_string(first) + ".." + std::to_string(last);
    }
    return "unknown";
}

ContextPolicy parse_policy(const std::string& text) {
    ContextPolicy p;
    if (text == "own") {
        p.kind = ContextPolicy::Kind::own;
    } else if (text == "random_per_image") {
        p.kind = ContextPolicy::Kind::random_per_image;
    } else if (text == "incorrect_kind") {
        p.kind = ContextPolicy::Kind::incorrect_kind;
    } else if (text.rfind("fixed:", 0) == 0) {
        p.kind = ContextPolicy::Kind::fixed;
        const auto range = text.substr(6);
        const auto dots = range.find("..");
        try {
            if (dots == std::string::npos) {
                p.first = p.last = parse_size("policy", range);
            } else {
                p.first = parse_size("policy", range.substr(0, dots));
                p.last = parse_size("policy", range.substr(dots + 2));
            }
        } catch (const ConfigError&) {
            throw ParameterError("malformed fixed policy '" + text + "' (expected fixed:i or fixed:a..b)");
        }
        if (p.last < p.first) throw ParameterError("fixed policy range '" + text + "' is empty");
    } else {
        throw ParameterError("unknown context policy '" + text +
                             "' (expected own, random_per_image, fixed:a..b or incorrect_kind)");
    }
    return p;
}

void EvalReport::add(std::string protocol, std::string kind, std::string metric, double value) {
    rows.push_back({std::move(protocol), std::move(kind), std::move(metric), value});
}

std::optional<double> EvalReport::find(const std::string& protocol, const std::string& kind,
                                       const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.protocol == protocol && r.kind == kind && r.metric == metric) return r.value;
    }
    return std::nullopt;
}

double EvalReport::at(const std::string& protocol, const std::string& kind, const std::string& metric) const {
    if (auto v = find(protocol, kind, metric)) return *v;
    throw LookupError("report has no row " + protocol + "/" + kind + "/" + metric);
}

void EvalReport::append(const EvalReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

void write_report(const fs::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "protocol\tkind\tmetric\tvalue\n";
    for (const auto& r : report.rows) {
        out << r.protocol << '\t' << r.kind << '\t' << r.metric << '\t' << format_double(r.value) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

EvalReport read_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report " + path.string());
    EvalReport report;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cols;
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() != 4) throw FormatError(path.string() + ": malformed report line '" + line + "'");
        report.add(cols[0], cols[1], cols[2], parse_double("value", cols[3]));
    }
    return report;
}

namespace {

struct Split {
    std::vector<const SampleRecord*> test, pool;  // pool: training context pairs
    std::map<std::pair<std::string, Severity>, std::vector<const SampleRecord*>> pool_by;
    std::map<std::string, std::vector<const SampleRecord*>> pool_by_kind;
    std::vector<std::string> kinds;
};

Split split_manifest(const Manifest& manifest, bool validation_only) {
    Split s;
    for (const auto& r : manifest.samples) {
        if (r.is_mixture()) continue;
        const bool val = is_validation_scene(r.scene_id);
        if (!val) {
            s.pool.push_back(&r);
            s.pool_by[{r.kind, r.severity}].push_back(&r);
            s.pool_by_kind[r.kind].push_back(&r);
        }
        if (val || !validation_only) s.test.push_back(&r);
    }
    for (auto k : manifest.kinds()) s.kinds.push_back(to_string(k));
    return s;
}

const SampleRecord* pick(const std::vector<const SampleRecord*>& rows, Rng& rng, const std::string& what) {
    if (rows.empty()) throw ConfigError("no training context pair available for " + what);
    return rows[rng.index(rows.size())];
}

// Embeddings are cached per context row: many queries share one pair.
class ContextCache {
   public:
    ContextCache(const ContextEmbedder* embedder, const Manifest& manifest) : embedder_(embedder), manifest_(manifest) {}

    Tensor32 get(const SampleRecord* row) {
        if (!embedder_) return {};
        auto it = cache_.find(row);
        if (it != cache_.end()) return it->second;
        const auto degraded = load_image(manifest_.resolve(row->ctx_degraded));
        const auto clean = load_image(manifest_.resolve(row->ctx_clean));
        auto e = embedder_->embed_context(ContextPair::unpaired(degraded, clean, row->degradation(), row->severity,
                                                                row->ctx_scene_id, row->ctx_clean_scene_id));
        cache_.emplace(row, e);
        return e;
    }

   private:
    const ContextEmbedder* embedder_;
    const Manifest& manifest_;
    std::map<const SampleRecord*, Tensor32> cache_;
};

struct Scores {
    std::vector<double> psnr, ssim;
};

// Per-kind means in `kinds` order plus the overall mean over kinds.
void add_kind_rows(EvalReport& report, const std::string& protocol, const std::vector<std::string>& kinds,
                   const std::vector<const SampleRecord*>& rows, const Scores& scores) {
    std::vector<double> kp, ks;
    for (const auto& kind : kinds) {
        std::vector<double> p, s;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i]->kind != kind) continue;
            p.push_back(scores.psnr[i]);
            s.push_back(scores.ssim[i]);
        }
        if (p.empty()) continue;
        kp.push_back(mean_of(p));
        ks.push_back(mean_of(s));
        report.add(protocol, kind, "psnr", kp.back());
        report.add(protocol, kind, "ssim", ks.back());
    }
    if (kp.empty()) throw ConfigError("evaluation set is empty");
    report.add(protocol, "overall", "psnr", mean_of(kp));
    report.add(protocol, "overall", "ssim", mean_of(ks));
}

}  // namespace

EvalReport eval_model(const AwracleNet<float>& model, const ContextEmbedder* embedder, const Manifest& manifest,
                      const ContextPolicy& policy, const EvalOptions& options) {
    const bool uses_context = model.config().use_context;
    if (uses_context && !embedder) throw UsageError("eval_model: the model needs a context embedder");
    const auto split = split_manifest(manifest, options.validation_only);
    if (split.test.empty()) throw ConfigError("manifest has no evaluation rows");
    if (policy.kind == ContextPolicy::Kind::incorrect_kind && split.kinds.size() < 2) {
        throw ConfigError("incorrect_kind policy needs at least two degradation kinds, manifest has " +
                          std::to_string(split.kinds.size()));
    }

    const std::size_t n = split.test.size();
    std::vector<LoadedSample> samples(n);
    parallel_for(n, [&](std::size_t i) {
        samples[i].record = *split.test[i];
        samples[i].query = load_image(manifest.resolve(split.test[i]->query));
        samples[i].gt = load_image(manifest.resolve(split.test[i]->gt));
    });

    EvalReport report;
    Scores identity{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        identity.psnr[i] = psnr(samples[i].query, samples[i].gt);
        identity.ssim[i] = ssim(samples[i].query, samples[i].gt);
    }
    add_kind_rows(report, "identity", split.kinds, split.test, identity);

    ContextCache cache(uses_context ? embedder : nullptr, manifest);
    auto run = [&](const std::vector<const SampleRecord*>& contexts) {
        std::vector<Tensor32> embeddings(n);
        for (std::size_t i = 0; i < n; ++i) embeddings[i] = cache.get(contexts[i]);
        Scores s{std::vector<double>(n), std::vector<double>(n)};
        parallel_for(n, [&](std::size_t i) {
            const auto out = model.restore(samples[i].query, embeddings[i]);
            s.psnr[i] = psnr(out, samples[i].gt);
            s.ssim[i] = ssim(out, samples[i].gt);
        });
        return s;
    };

    const auto policy_name = policy.name();
    if (policy.kind == ContextPolicy::Kind::fixed) {
        std::map<std::string, std::vector<const SampleRecord*>> shuffled;
        for (const auto& kind : split.kinds) {
            auto rows = split.pool_by_kind.count(kind) ? split.pool_by_kind.at(kind) : std::vector<const SampleRecord*>{};
            if (rows.size() <= policy.last) {
                throw ConfigError("fixed policy needs " + std::to_string(policy.last + 1) + " training pairs of kind " +
                                  kind + ", manifest has " + std::to_string(rows.size()));
            }
            Rng rng(derive_seed(options.seed, 0xF1ED));
            std::shuffle(rows.begin(), rows.end(), rng.engine());
            shuffled[kind] = rows;
        }
        std::map<std::string, std::vector<double>> pair_psnr, pair_ssim;
        for (std::size_t j = policy.first; j <= policy.last; ++j) {
            std::vector<const SampleRecord*> contexts(n);
            for (std::size_t i = 0; i < n; ++i) contexts[i] = shuffled.at(split.test[i]->kind)[j];
            EvalReport one;
            add_kind_rows(one, "fixed:" + std::to_string(j), split.kinds, split.test, run(contexts));
            for (const auto& r : one.rows) {
                (r.metric == "psnr" ? pair_psnr : pair_ssim)[r.kind].push_back(r.value);
            }
            report.append(one);
        }
        std::vector<std::string> keys = split.kinds;
        keys.push_back("overall");
        for (const auto& kind : keys) {
            report.add(policy_name, kind, "psnr_mean", mean_of(pair_psnr.at(kind)));
            report.add(policy_name, kind, "psnr_std", stddev_of(pair_psnr.at(kind)));
            report.add(policy_name, kind, "ssim_mean", mean_of(pair_ssim.at(kind)));
            report.add(policy_name, kind, "ssim_std", stddev_of(pair_ssim.at(kind)));
        }
        return report;
    }

    std::vector<const SampleRecord*> contexts(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* row = split.test[i];
        // Same draw for correct and incorrect policies, so they differ only
        // in the kind of the chosen pair.
        Rng rng(derive_seed(options.seed, i));
        switch (policy.kind) {
            case ContextPolicy::Kind::own: contexts[i] = row; break;
            case ContextPolicy::Kind::random_per_image: {
                const auto key = std::make_pair(row->kind, row->severity);
                contexts[i] = pick(split.pool_by.count(key) ? split.pool_by.at(key) : std::vector<const SampleRecord*>{},
                                   rng, row->kind + "/" + to_string(row->severity));
                break;
            }
            case ContextPolicy::Kind::incorrect_kind: {
                const auto it = std::find(split.kinds.begin(), split.kinds.end(), row->kind);
                const auto& other = split.kinds[(static_cast<std::size_t>(it - split.kinds.begin()) + 1) % split.kinds.size()];
                const auto key = std::make_pair(other, row->severity);
                contexts[i] = pick(split.pool_by.count(key) ? split.pool_by.at(key) : std::vector<const SampleRecord*>{},
                                   rng, other + "/" + to_string(row->severity));
                break;
            }
            case ContextPolicy::Kind::fixed: break;
        }
    }
    add_kind_rows(report, policy_name, split.kinds, split.test, run(contexts));
    return report;
}

namespace {

std::vector<double> pooled_dce(const AwracleNet<float>& model, std::size_t level, const Tensor32& context) {
    const auto out = model.dce_outputs(context).at(level);
    const std::size_t t = out.dim(0), c = out.dim(1);
    std::vector<double> v(c, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < c; ++j) v[j] += out[i * c + j];
    }
    for (auto& x : v) x /= static_cast<double>(t);
    return v;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

double cluster_separation(const AwracleNet<float>& model, const std::vector<std::pair<Degradation, Tensor32>>& contexts,
                          std::size_t min_per_kind) {
    const auto levels = model.config().fusion_levels();
    if (levels.empty()) throw ConfigError("cluster_separation: model has no DCE blocks");
    const std::size_t level = levels.back();

    std::map<Degradation, std::vector<std::vector<double>>> by_kind;
    for (const auto& [kind, e] : contexts) by_kind[kind].push_back(pooled_dce(model, level, e));
    if (by_kind.size() < 2) throw ConfigError("cluster_separation: need contexts of at least two kinds");
    for (const auto& [kind, vs] : by_kind) {
        if (vs.size() < min_per_kind) {
            throw ConfigError("cluster_separation: kind " + to_string(kind) + " has " + std::to_string(vs.size()) +
                              " pairs, need " + std::to_string(min_per_kind));
        }
    }
    std::vector<std::vector<double>> centroids;
    CompensatedSum intra;
    std::size_t count = 0;
    for (const auto& [kind, vs] : by_kind) {
        std::vector<double> c(vs.front().size(), 0.0);
        for (const auto& v : vs) {
            for (std::size_t j = 0; j < c.size(); ++j) c[j] += v[j];
        }
        for (auto& x : c) x /= static_cast<double>(vs.size());
        for (const auto& v : vs) {
            intra.add(distance(v, c));
            ++count;
        }
        centroids.push_back(std::move(c));
    }
    CompensatedSum inter;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < centroids.size(); ++a) {
        for (std::size_t b = a + 1; b < centroids.size(); ++b) {
            inter.add(distance(centroids[a], centroids[b]));
            ++pairs;
        }
    }
    constexpr double kCap = 1e6;
    const double intra_mean = intra.value() / static_cast<double>(count);
    const double inter_mean = inter.value() / static_cast<double>(pairs);
    if (intra_mean < 1e-12) return kCap;
    return std::min(kCap, inter_mean / intra_mean);
}

std::vector<std::pair<Degradation, Tensor32>> test_contexts(const ContextEmbedder& embedder, const Manifest& manifest) {
    const auto split = split_manifest(manifest, true);
    std::vector<std::pair<Degradation, Tensor32>> out(split.test.size());
    parallel_for(split.test.size(), [&](std::size_t i) {
        const auto* row = split.test[i];
        const auto degraded = load_image(manifest.resolve(row->ctx_degraded));
        const auto clean = load_image(manifest.resolve(row->ctx_clean));
        out[i] = {row->degradation(),
                  embedder.embed_context(ContextPair::unpaired(degraded, clean, row->degradation(), row->severity,
                                                               row->ctx_scene_id, row->ctx_clean_scene_id))};
    });
    return out;
}

SelectiveRemoval selective_removal_score(const AwracleNet<float>& model, const ContextEmbedder& embedder,
                                         const Manifest& manifest, std::uint64_t seed) {
    if (!model.config().use_context) throw ConfigError("selective removal needs a context-conditioned model");
    const auto split = split_manifest(manifest, true);
    std::vector<const SampleRecord*> mixtures;
    for (const auto& r : manifest.samples) {
        if (r.is_mixture()) mixtures.push_back(&r);
    }
    if (mixtures.empty()) throw ConfigError("manifest has no mixture rows");

    ContextCache cache(&embedder, manifest);
    const std::size_t n = mixtures.size();
    std::vector<Tensor32> haze_ctx(n), snow_ctx(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed ^ 0x5E1EC7ULL, i));
        const auto sev = mixtures[i]->severity;
        auto pool = [&](const char* kind) {
            const auto key = std::make_pair(std::string(kind), sev);
            return split.pool_by.count(key) ? split.pool_by.at(key) : std::vector<const SampleRecord*>{};
        };
        haze_ctx[i] = cache.get(pick(pool("haze"), rng, "haze/" + to_string(sev)));
        snow_ctx[i] = cache.get(pick(pool("snow"), rng, "snow/" + to_string(sev)));
    }
    std::vector<std::array<double, 4>> scores(n);
    parallel_for(n, [&](std::size_t i) {
        const auto* row = mixtures[i];
        const auto query = load_image(manifest.resolve(row->query));
        const auto haze_only = load_image(manifest.resolve(row->haze_only()));
        const auto snow_only = load_image(manifest.resolve(row->snow_only()));
        const auto out_h = model.restore(query, haze_ctx[i]);
        const auto out_s = model.restore(query, snow_ctx[i]);
        scores[i] = {psnr(out_h, snow_only), psnr(out_h, haze_only), psnr(out_s, snow_only), psnr(out_s, haze_only)};
    });
    SelectiveRemoval r;
    r.samples = n;
    CompensatedSum a, b, c, d;
    std::size_t ok_h = 0, ok_s = 0, ok_both = 0;
    for (const auto& s : scores) {
        a.add(s[0]);
        b.add(s[1]);
        c.add(s[2]);
        d.add(s[3]);
        const bool h = s[0] > s[1], sn = s[3] > s[2];
        ok_h += h;
        ok_s += sn;
        ok_both += h && sn;
    }
    const double dn = static_cast<double>(n);
    r.haze_ctx_vs_snow_only = a.value() / dn;
    r.haze_ctx_vs_haze_only = b.value() / dn;
    r.snow_ctx_vs_snow_only = c.value() / dn;
    r.snow_ctx_vs_haze_only = d.value() / dn;
    r.haze_ctx_success = static_cast<double>(ok_h) / dn;
    r.snow_ctx_success = static_cast<double>(ok_s) / dn;
    r.both_success = static_cast<double>(ok_both) / dn;
    return r;
}

void add_to_report(EvalReport& report, const SelectiveRemoval& r) {
    report.add("selective", "mixture", "samples", static_cast<double>(r.samples));
    report.add("selective", "haze_ctx", "psnr_vs_snow_only", r.haze_ctx_vs_snow_only);
    report.add("selective", "haze_ctx", "psnr_vs_haze_only", r.haze_ctx_vs_haze_only);
    report.add("selective", "snow_ctx", "psnr_vs_snow_only", r.snow_ctx_vs_snow_only);
    report.add("selective", "snow_ctx", "psnr_vs_haze_only", r.snow_ctx_vs_haze_only);
    report.add("selective", "haze_ctx", "success_rate", r.haze_ctx_success);
    report.add("selective", "snow_ctx", "success_rate", r.snow_ctx_success);
    report.add("selective", "mixture", "both_success_rate", r.both_success);
}

std::size_t dump_dce_activations(const AwracleNet<float>& model, const ContextEmbedder& embedder,
                                 const Manifest& manifest, const fs::path& out_dir, std::size_t max_samples) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    const auto contexts = test_contexts(embedder, manifest);
    std::size_t written = 0;
    for (std::size_t i = 0; i < std::min(max_samples, contexts.size()); ++i) {
        for (const auto& [level, act] : model.dce_outputs(contexts[i].second)) {
            save_awtf(out_dir / ("dce_act_" + std::to_string(level) + "_" + std::to_string(i) + ".awtf"), act);
            ++written;
        }
    }
    return written;
}

}  // namespace awracle
