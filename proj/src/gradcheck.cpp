// SPDX-License-Identifier: Apache-2.0
#include "awracle/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "awracle/errors.hpp"
#include "awracle/model.hpp"
#include "awracle/nn.hpp"
#include "awracle/ops.hpp"
#include "awracle/rng.hpp"

namespace awracle {

double grad_relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

double check_gradients(const ScalarFn& fn, std::vector<Tensor64> inputs, double step, std::size_t max_entries) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        tape.backward(fn());
    }
    std::vector<std::vector<double>> analytic;
    std::size_t total = 0;
    for (const auto& t : inputs) {
        const auto g = t.grad();
        analytic.emplace_back(t.numel(), 0.0);
        if (!g.empty()) std::copy(g.begin(), g.end(), analytic.back().begin());
        total += t.numel();
    }
    const std::size_t stride = (max_entries == 0 || total <= max_entries) ? 1 : (total + max_entries - 1) / max_entries;

    auto eval = [&] {
        NoGradScope<double> off;
        return fn().item();
    };
    double worst = 0.0;
    std::size_t flat = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_data();
        for (std::size_t j = 0; j < values.size(); ++j, ++flat) {
            if (flat % stride != 0) continue;
            const double original = values[j];
            values[j] = original + step;
            const double plus = eval();
            values[j] = original - step;
            const double minus = eval();
            values[j] = original;
            worst = std::max(worst, grad_relative_error(analytic[k][j], (plus - minus) / (2.0 * step)));
        }
    }
    return worst;
}

namespace {

Tensor64 random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor64(shape, std::move(v), true);
}

Tensor64 constant(const Shape& shape, Rng& rng) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor64(shape, std::move(v));
}

// Random linear functional of an op output, so every output entry matters.
Tensor64 weighted(const Tensor64& y, const Tensor64& w) { return sum(mul(y, w)); }

// y = x^2 with a backward that forgets the factor 2. Harness self-test only.
Tensor64 faulty_square(const Tensor64& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
    auto y = Tensor64::from_op(x.shape(), std::move(out));
    if (auto* tape = active_tape<double>(); tape && x.requires_grad()) {
        tape->record(y, [x](std::span<const double> g) {
            std::vector<double> dx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * x[i];
            accumulate_grad(x, std::span<const double>(dx));
        });
    }
    return y;
}

struct Case {
    bool composed = false;
    // Builds inputs and a scalar function for one seed.
    std::function<std::pair<ScalarFn, std::vector<Tensor64>>(Rng&)> make;
};

template <typename F>
Case unary(Shape shape, F op, double lo = -1.0, double hi = 1.0) {
    return {false, [shape, op, lo, hi](Rng& rng) {
                auto x = random_tensor(shape, rng, lo, hi);
                auto w = constant(op(x).shape(), rng);
                return std::make_pair(ScalarFn([=] { return weighted(op(x), w); }), std::vector<Tensor64>{x});
            }};
}

template <typename F>
Case binary(Shape sa, Shape sb, F op) {
    return {false, [sa, sb, op](Rng& rng) {
                auto a = random_tensor(sa, rng);
                auto b = random_tensor(sb, rng);
                auto w = constant(op(a, b).shape(), rng);
                return std::make_pair(ScalarFn([=] { return weighted(op(a, b), w); }), std::vector<Tensor64>{a, b});
            }};
}

template <typename Module>
std::vector<Tensor64> params_of(const Module& m) {
    NamedParams<double> named;
    m.collect("m", named);
    std::vector<Tensor64> out;
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

// Non-trivial norm affine parameters; the defaults (1, 0) hide mistakes.
template <typename Module>
void randomize(const Module& m, Rng& rng) {
    for (auto t : params_of(m)) {
        for (auto& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
    }
}

ModelConfig tiny_model_config(std::uint64_t seed, bool mhca) {
    ModelConfig c;
    c.num_levels = 2;
    c.backbone_channels = {4, 6};
    c.dce_channels = {4, 4};
    c.heads = 2;
    c.blocks_per_level = 1;
    c.embed_tokens = 2;
    c.embed_dim = 6;
    c.zero_init_head = false;
    c.ablation.use_cf_mhca = mhca;
    c.seed = seed;
    return c;
}

std::map<std::string, Case> build_cases() {
    std::map<std::string, Case> cases;
    cases["matmul"] = binary({3, 4}, {4, 5}, [](auto a, auto b) { return matmul(a, b); });
    cases["transpose"] = unary({3, 5}, [](auto x) { return transpose(x); });
    cases["reshape"] = unary({2, 3, 4}, [](auto x) { return reshape(x, {6, 4}); });
    cases["concat_rows"] = binary({2, 3}, {4, 3}, [](auto a, auto b) { return concat_rows(a, b); });
    cases["split_rows"] = {false, [](Rng& rng) {
                               auto x = random_tensor({5, 3}, rng);
                               auto w1 = constant({2, 3}, rng), w2 = constant({3, 3}, rng);
                               return std::make_pair(ScalarFn([=] {
                                                         auto [a, b] = split_rows(x, 2);
                                                         return add(weighted(a, w1), weighted(b, w2));
                                                     }),
                                                     std::vector<Tensor64>{x});
                           }};
    cases["slice_cols"] = unary({3, 6}, [](auto x) { return slice_cols(x, 2, 3); });
    cases["concat_cols"] = binary({3, 2}, {3, 4}, [](auto a, auto b) { return concat_cols<double>({a, b, a}); });
    cases["gather_rows"] = unary({4, 3}, [](auto x) { return gather_rows(x, {0, 0, 3, 1, 3}); });
    cases["add"] = binary({3, 4}, {3, 4}, [](auto a, auto b) { return add(a, b); });
    cases["sub"] = binary({3, 4}, {3, 4}, [](auto a, auto b) { return sub(a, b); });
    cases["mul"] = binary({3, 4}, {3, 4}, [](auto a, auto b) { return mul(a, b); });
    cases["scale"] = unary({3, 4}, [](auto x) { return scale(x, -1.7); });
    cases["add_row_bias"] = binary({3, 4}, {4}, [](auto a, auto b) { return add_row_bias(a, b); });
    cases["gelu"] = unary({4, 5}, [](auto x) { return gelu(x); }, -3.0, 3.0);
    cases["layer_norm"] = {false, [](Rng& rng) {
                               auto x = random_tensor({3, 5}, rng);
                               auto g = random_tensor({5}, rng), b = random_tensor({5}, rng);
                               auto w = constant({3, 5}, rng);
                               return std::make_pair(ScalarFn([=] { return weighted(layer_norm(x, g, b), w); }),
                                                     std::vector<Tensor64>{x, g, b});
                           }};
    cases["softmax_rows"] = unary({3, 5}, [](auto x) { return softmax_rows(x); }, -2.0, 2.0);
    for (auto [name, k, stride] : {std::tuple{"conv2d_1x1", 1, 1}, {"conv2d_3x3", 3, 1}, {"conv2d_3x3_stride2", 3, 2}}) {
        const std::size_t kk = k, ss = stride;
        cases[name] = {false, [kk, ss](Rng& rng) {
                           auto x = random_tensor({2, 6, 6}, rng);
                           auto kernel = random_tensor({3, 2, kk, kk}, rng);
                           auto bias = random_tensor({3}, rng);
                           auto w = constant(conv2d(x, kernel, bias, ss).shape(), rng);
                           return std::make_pair(ScalarFn([=] { return weighted(conv2d(x, kernel, bias, ss), w); }),
                                                 std::vector<Tensor64>{x, kernel, bias});
                       }};
    }
    cases["upsample_nearest2x"] = unary({2, 3, 3}, [](auto x) { return upsample_nearest2x(x); });
    cases["sum"] = unary({3, 4}, [](auto x) { return scale(sum(x), 1.3); });
    cases["mean"] = unary({3, 4}, [](auto x) { return scale(mean(x), 1.3); });
    cases["l1_loss"] = {false, [](Rng& rng) {
                            auto pred = random_tensor({2, 3, 3}, rng);
                            // Keep every difference away from the kink at zero.
                            std::vector<double> t(pred.numel());
                            for (std::size_t i = 0; i < t.size(); ++i) {
                                t[i] = pred[i] + (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 0.5);
                            }
                            auto target = Tensor64(pred.shape(), std::move(t), true);
                            return std::make_pair(ScalarFn([=] { return l1_loss(pred, target); }),
                                                  std::vector<Tensor64>{pred, target});
                        }};
    cases["linear"] = {false, [](Rng& rng) {
                           auto layer = std::make_shared<Linear<double>>(4, 3, rng);
                           randomize(*layer, rng);
                           auto x = random_tensor({5, 4}, rng);
                           auto w = constant({5, 3}, rng);
                           auto inputs = params_of(*layer);
                           inputs.push_back(x);
                           return std::make_pair(ScalarFn([=] { return weighted(layer->forward(x), w); }), inputs);
                       }};
    for (bool self : {true, false}) {
        cases[self ? "mhsa" : "mhca"] = {false, [self](Rng& rng) {
                                             auto att = std::make_shared<MultiHeadAttention<double>>(4, 2, rng);
                                             randomize(*att, rng);
                                             auto q = random_tensor({5, 4}, rng);
                                             auto c = random_tensor({3, 4}, rng);
                                             auto w = constant({5, 4}, rng);
                                             auto inputs = params_of(*att);
                                             inputs.push_back(q);
                                             if (!self) inputs.push_back(c);
                                             return std::make_pair(
                                                 ScalarFn([=] {
                                                     return weighted(self ? att->self_attention(q)
                                                                          : att->cross_attention(q, c),
                                                                     w);
                                                 }),
                                                 inputs);
                                         }};
    }
    for (bool attn : {true, false}) {
        cases[attn ? "dce_block" : "dce_block_no_mhsa"] = {
            false, [attn](Rng& rng) {
                auto block = std::make_shared<DceBlock<double>>(6, 4, 2, attn, rng);
                randomize(*block, rng);
                auto e = random_tensor({4, 6}, rng);
                auto w = constant({4, 4}, rng);
                auto inputs = params_of(*block);
                inputs.push_back(e);
                return std::make_pair(ScalarFn([=] { return weighted(dce_forward(*block, e), w); }), inputs);
            }};
        cases[attn ? "cf_block" : "cf_block_no_mhca"] = {
            false, [attn](Rng& rng) {
                auto block = std::make_shared<CfBlock<double>>(3, 4, 2, attn, rng);
                randomize(*block, rng);
                auto f = random_tensor({3, 4, 4}, rng);
                auto o = random_tensor({4, 4}, rng);
                auto w = constant({3, 4, 4}, rng);
                auto inputs = params_of(*block);
                inputs.push_back(f);
                inputs.push_back(o);
                return std::make_pair(ScalarFn([=] { return weighted(cf_forward(*block, f, o), w); }), inputs);
            }};
    }
    for (bool mhca : {true, false}) {
        cases[mhca ? "awracle_net" : "awracle_net_no_mhca"] = {
            true, [mhca](Rng& rng) {
                auto net = std::make_shared<AwracleNet<double>>(tiny_model_config(rng.engine()(), mhca));
                std::vector<Tensor64> inputs;
                for (auto& [name, t] : net->parameters()) {
                    if (name.find(".gamma") != std::string::npos || name.find(".beta") != std::string::npos ||
                        name.find(".bias") != std::string::npos) {
                        for (auto& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
                    }
                    inputs.push_back(t);
                }
                auto q = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
                auto e = random_tensor({4, 6}, rng);
                auto w = constant({3, 4, 4}, rng);
                inputs.push_back(q);
                inputs.push_back(e);
                return std::make_pair(ScalarFn([=] { return weighted(net->forward(q, e), w); }), inputs);
            }};
    }
    cases["fault_fixture"] = unary({3, 4}, [](auto x) { return faulty_square(x); });
    return cases;
}

}  // namespace

std::vector<std::string> gradcheck_op_names(bool include_fault) {
    std::vector<std::string> names;
    for (const auto& [name, c] : build_cases()) {
        if (name != "fault_fixture" || include_fault) names.push_back(name);
    }
    return names;
}

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options,
                                           const std::function<void(const GradCheckResult&)>& on_result) {
    const auto cases = build_cases();
    if (!options.only.empty() && !cases.count(options.only)) {
        throw ParameterError("gradcheck: unknown op '" + options.only + "'");
    }
    std::vector<GradCheckResult> results;
    for (const auto& [name, c] : cases) {
        if (!options.only.empty() && name != options.only) continue;
        if (name == "fault_fixture" && !options.inject_fault && options.only != name) continue;
        GradCheckResult r;
        r.op = name;
        r.tolerance = c.composed ? options.graph_tolerance : options.op_tolerance;
        for (std::size_t s = 0; s < options.seeds; ++s) {
            Rng rng(derive_seed(0x6C4ECC, s));
            auto [fn, inputs] = c.make(rng);
            for (const auto& t : inputs) r.entries += t.numel();
            r.max_rel_error = std::max(
                r.max_rel_error, check_gradients(fn, inputs, options.step, c.composed ? options.max_graph_entries : 0));
        }
        if (on_result) on_result(r);
        results.push_back(r);
    }
    return results;
}

}  // namespace awracle
