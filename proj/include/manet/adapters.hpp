// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0
//
// Adapter layers: a shared generality-adapter (GA) convolution plus small
// per-modality modality-adapter (MA) kernels running in parallel. The two
// branches sum over raw convolution outputs, so an MA kernel can be folded
// into the GA kernel by zero-embedding it at the center and adding; the
// fused layer runs one convolution with no extra cost per output.

#pragma once

#include <array>
#include <chrono>
#include <map>
#include <string>
#include <vector>

#include "manet/ops.hpp"
#include "manet/rng.hpp"
#include "manet/tensor.hpp"

namespace manet {

inline constexpr int kPatchSize = 107;
inline constexpr int kFeatureChannels = 512;
inline constexpr int kFeatureSpatial = 3;
inline constexpr int kFeatureDim = kFeatureChannels * kFeatureSpatial * kFeatureSpatial; // 4608
inline constexpr int kHeadInputDim = 2 * kFeatureDim;                                    // 9216

inline const std::vector<std::string>& default_modalities() {
    static const std::vector<std::string> m{"rgb", "thermal"};
    return m;
}

enum class PathMode {
    kGaOnly,   // generality adapter alone
    kParallel, // GA conv + MA conv, outputs summed
    kFused     // single conv with the merged kernel
};

enum class MaExec {
    kEmbedded, // run MA as its zero-embedded L x L kernel
    kDirect    // run the small kernel with a centered sampling origin
};

template <std::floating_point T>
struct MaBranch {
    Tensor<T> weights; // [C_out, C_in, a, b], a <= L, b <= L, parity matching L
    Tensor<T> bias;    // [C_out]
};

/// One network layer: shared GA convolution, per-modality MA convolutions,
/// and the post-ops applied once to the summed response.
template <std::floating_point T>
struct AdapterLayer {
    Tensor<T> ga_weights; // [C_out, C_in, L, L]
    Tensor<T> ga_bias;    // [C_out]
    std::map<std::string, MaBranch<T>> ma;
    ConvSpec conv;        // kernel_h == kernel_w == L
    bool relu = true;
    bool lrn = true;
    LrnSpec lrn_spec;
    bool pool = false;
    int pool_window = 3;
    int pool_stride = 2;

    const MaBranch<T>& ma_branch(const std::string& modality) const {
        auto it = ma.find(modality);
        if (it == ma.end()) throw ConfigError("adapter layer: unknown modality '" + modality + "'");
        return it->second;
    }
    MaBranch<T>& ma_branch(const std::string& modality) {
        auto it = ma.find(modality);
        if (it == ma.end()) throw ConfigError("adapter layer: unknown modality '" + modality + "'");
        return it->second;
    }
};

/// Merged kernel M = W_GA + embed(W_MA), bias summed. Same shape as the GA kernel.
template <std::floating_point T>
struct FusedKernel {
    Tensor<T> m_weights;
    Tensor<T> m_bias;
};

/// Zero-embeds a small [C_out, C_in, a, b] kernel at the center of an L x L
/// kernel: out[.., (L-a)/2 + i, (L-b)/2 + j] = in[.., i, j]. The sum of the
/// coefficients is preserved exactly.
template <std::floating_point T>
Tensor<T> embed_kernel(const Tensor<T>& ma_weights, int L) {
    if (ma_weights.rank() != 4)
        throw ShapeError("embed_kernel: weights rank " + std::to_string(ma_weights.rank()) + ", expected 4");
    const int a = static_cast<int>(ma_weights.dim(2));
    const int b = static_cast<int>(ma_weights.dim(3));
    if (a > L || b > L)
        throw ShapeError("embed_kernel: kernel " + std::to_string(a) + "x" + std::to_string(b) +
                         " larger than target " + std::to_string(L));
    if ((L - a) % 2 != 0 || (L - b) % 2 != 0)
        throw ConfigError("embed_kernel: parity mismatch, L-a and L-b must be even to center a " +
                          std::to_string(a) + "x" + std::to_string(b) + " kernel in " +
                          std::to_string(L) + "x" + std::to_string(L));
    const std::size_t co = ma_weights.dim(0), ci = ma_weights.dim(1);
    Tensor<T> out({co, ci, static_cast<std::size_t>(L), static_cast<std::size_t>(L)});
    const int dy = (L - a) / 2, dx = (L - b) / 2;
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c)
            for (int i = 0; i < a; ++i)
                for (int j = 0; j < b; ++j)
                    out.at4(o, c, static_cast<std::size_t>(dy + i), static_cast<std::size_t>(dx + j)) =
                        ma_weights.at4(o, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return out;
}

template <std::floating_point T>
FusedKernel<T> fuse_layer(const AdapterLayer<T>& layer, const std::string& modality) {
    const MaBranch<T>& branch = layer.ma_branch(modality);
    FusedKernel<T> f;
    f.m_weights = embed_kernel(branch.weights, layer.conv.kernel_h);
    for (std::size_t i = 0; i < f.m_weights.size(); ++i) f.m_weights[i] += layer.ga_weights[i];
    f.m_bias = layer.ga_bias;
    for (std::size_t i = 0; i < f.m_bias.size(); ++i) f.m_bias[i] += branch.bias[i];
    return f;
}

/// Activations a backward pass needs for one layer.
template <std::floating_point T>
struct LayerCache {
    Tensor<T> input;
    Tensor<T> relu_out;  // LRN input
    Tensor<T> lrn_scale; // k + (alpha/n) * windowed sum of squares
    std::vector<std::size_t> pre_pool_shape;
    std::vector<std::int32_t> pool_idx;
};

namespace detail {

/// ReLU -> LRN -> max-pool, as flagged on the layer.
template <std::floating_point T>
Tensor<T> apply_post_ops(const AdapterLayer<T>& layer, Tensor<T>&& summed, LayerCache<T>* cache) {
    Tensor<T> cur = std::move(summed);
    if (layer.relu) cur = relu_forward(cur);
    if (cache) cache->relu_out = cur;
    if (layer.lrn) cur = lrn_forward(cur, layer.lrn_spec, cache ? &cache->lrn_scale : nullptr);
    if (layer.pool) {
        if (cache) cache->pre_pool_shape = cur.shape();
        cur = maxpool_forward(cur, layer.pool_window, layer.pool_stride,
                              cache ? &cache->pool_idx : nullptr);
    }
    return cur;
}

template <std::floating_point T>
ConvSpec ma_spec(const AdapterLayer<T>& layer, const MaBranch<T>& branch) {
    ConvSpec s = layer.conv;
    s.kernel_h = static_cast<int>(branch.weights.dim(2));
    s.kernel_w = static_cast<int>(branch.weights.dim(3));
    return s;
}

} // namespace detail

/// Raw branch sum before the shared post-ops.
template <std::floating_point T>
Tensor<T> layer_conv_sum(const AdapterLayer<T>& layer, const Tensor<T>& input,
                         const std::string& modality, PathMode mode, MaExec exec) {
    switch (mode) {
        case PathMode::kGaOnly:
            return conv2d_forward(input, layer.ga_weights, layer.ga_bias, layer.conv);
        case PathMode::kFused: {
            const FusedKernel<T> f = fuse_layer(layer, modality);
            return conv2d_forward(input, f.m_weights, f.m_bias, layer.conv);
        }
        case PathMode::kParallel: {
            const MaBranch<T>& branch = layer.ma_branch(modality);
            Tensor<T> sum = conv2d_forward(input, layer.ga_weights, layer.ga_bias, layer.conv);
            Tensor<T> ma_out;
            if (exec == MaExec::kEmbedded) {
                const Tensor<T> embedded = embed_kernel(branch.weights, layer.conv.kernel_h);
                ma_out = conv2d_forward(input, embedded, branch.bias, layer.conv);
            } else {
                const ConvSpec spec = detail::ma_spec(layer, branch);
                const int oy = (layer.conv.kernel_h - spec.kernel_h) / 2;
                const int ox = (layer.conv.kernel_w - spec.kernel_w) / 2;
                ma_out = conv2d_forward(input, branch.weights, branch.bias, spec, oy, ox);
            }
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += ma_out[i];
            return sum;
        }
    }
    throw ConfigError("layer_forward: unknown path mode");
}

/// Full layer: branch sum, then ReLU/LRN/pool applied once to the sum.
template <std::floating_point T>
Tensor<T> layer_forward(const AdapterLayer<T>& layer, const Tensor<T>& input,
                        const std::string& modality, PathMode mode,
                        MaExec exec = MaExec::kEmbedded, LayerCache<T>* cache = nullptr) {
    if (cache) cache->input = input;
    return detail::apply_post_ops(layer, layer_conv_sum(layer, input, modality, mode, exec), cache);
}

/// Forward through a prefused kernel (hot path: fuse once, run many patches).
template <std::floating_point T>
Tensor<T> layer_forward_prefused(const AdapterLayer<T>& layer, const FusedKernel<T>& fused,
                                 const Tensor<T>& input, LayerCache<T>* cache = nullptr) {
    if (cache) cache->input = input;
    return detail::apply_post_ops(
        layer, conv2d_forward(input, fused.m_weights, fused.m_bias, layer.conv), cache);
}

/// Per-parameter gradients accumulated by name.
template <std::floating_point T>
using GradMap = std::map<std::string, Tensor<T>>;

template <std::floating_point T>
void accumulate(GradMap<T>& grads, const std::string& name, const Tensor<T>& g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, g);
        return;
    }
    Tensor<T>& acc = it->second;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

template <std::floating_point T>
struct LayerBackwardResult {
    Tensor<T> grad_input; // empty when not requested
};

/// Backward through post-ops and both conv branches. Gradients are
/// accumulated into `grads` under `<prefix>.weight` / `<prefix>.bias` keys
/// (prefixes: ga_prefix for the shared branch, ma_prefix for the modality
/// branch); pass an empty prefix to skip that branch's weight gradients.
template <std::floating_point T>
LayerBackwardResult<T> layer_backward(const AdapterLayer<T>& layer, const LayerCache<T>& cache,
                                      const Tensor<T>& grad_out, const std::string& modality,
                                      PathMode mode, MaExec exec, const std::string& ga_prefix,
                                      const std::string& ma_prefix, bool want_input_grad,
                                      GradMap<T>& grads) {
    Tensor<T> g = grad_out;
    if (layer.pool) g = maxpool_backward(g, cache.pool_idx, cache.pre_pool_shape);
    if (layer.lrn) g = lrn_backward(g, cache.relu_out, cache.lrn_scale, layer.lrn_spec);
    if (layer.relu) g = relu_backward(g, cache.relu_out);

    const bool want_ga = !ga_prefix.empty();
    const bool want_ma = mode == PathMode::kParallel && !ma_prefix.empty();

    LayerBackwardResult<T> r;
    if (mode == PathMode::kGaOnly || mode == PathMode::kParallel) {
        // Shared GA branch. Input gradient flows through it in every mode.
        Conv2dGrads<T> gg =
            conv2d_backward(g, cache.input, layer.ga_weights, layer.conv, want_input_grad);
        if (want_ga) {
            accumulate(grads, ga_prefix + ".weight", gg.weights);
            accumulate(grads, ga_prefix + ".bias", gg.bias);
        }
        if (want_input_grad) r.grad_input = std::move(gg.input);
    } else {
        throw ConfigError("layer_backward: fused mode has no per-branch gradients");
    }

    if (mode == PathMode::kParallel) {
        const MaBranch<T>& branch = layer.ma_branch(modality);
        if (exec == MaExec::kEmbedded) {
            const Tensor<T> embedded = embed_kernel(branch.weights, layer.conv.kernel_h);
            Conv2dGrads<T> mg = conv2d_backward(g, cache.input, embedded, layer.conv, want_input_grad);
            if (want_ma) {
                // Project the L x L weight gradient back onto the small kernel.
                const int L = layer.conv.kernel_h;
                const int a = static_cast<int>(branch.weights.dim(2));
                const int b = static_cast<int>(branch.weights.dim(3));
                const int dy = (L - a) / 2, dx = (L - b) / 2;
                Tensor<T> small(branch.weights.shape());
                for (std::size_t o = 0; o < small.dim(0); ++o)
                    for (std::size_t c = 0; c < small.dim(1); ++c)
                        for (int i = 0; i < a; ++i)
                            for (int j = 0; j < b; ++j)
                                small.at4(o, c, i, j) = mg.weights.at4(
                                    o, c, static_cast<std::size_t>(dy + i), static_cast<std::size_t>(dx + j));
                accumulate(grads, ma_prefix + ".weight", small);
                accumulate(grads, ma_prefix + ".bias", mg.bias);
            }
            if (want_input_grad)
                for (std::size_t i = 0; i < r.grad_input.size(); ++i) r.grad_input[i] += mg.input[i];
        } else {
            const ConvSpec spec = detail::ma_spec(layer, branch);
            const int oy = (layer.conv.kernel_h - spec.kernel_h) / 2;
            const int ox = (layer.conv.kernel_w - spec.kernel_w) / 2;
            Conv2dGrads<T> mg =
                conv2d_backward(g, cache.input, branch.weights, spec, want_input_grad, oy, ox);
            if (want_ma) {
                accumulate(grads, ma_prefix + ".weight", mg.weights);
                accumulate(grads, ma_prefix + ".bias", mg.bias);
            }
            if (want_input_grad)
                for (std::size_t i = 0; i < r.grad_input.size(); ++i) r.grad_input[i] += mg.input[i];
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// The three-layer feature stack

template <std::floating_point T>
struct AdapterStack {
    std::array<AdapterLayer<T>, 3> layers;
};

/// GA kernels 7x7x3->96 /s2, 5x5x96->256 /s2, 3x3x256->512 /s1 with MA
/// kernels 3x3, 1x1, 1x1; max-pool 3/2 after layers 1 and 2. A 3x107x107
/// patch maps to a 512x3x3 feature per modality
/// (107 -> 51 -> 25 -> 11 -> 5 -> 3).
template <std::floating_point T>
AdapterStack<T> make_default_stack(const std::vector<std::string>& modalities, Rng& rng) {
    struct LayerShape {
        int in_c, out_c, L, ma_k, stride;
        bool pool;
    };
    static constexpr LayerShape shapes[3] = {
        {3, 96, 7, 3, 2, true},
        {96, 256, 5, 1, 2, true},
        {256, 512, 3, 1, 1, false},
    };
    AdapterStack<T> stack;
    for (int li = 0; li < 3; ++li) {
        const LayerShape& s = shapes[li];
        AdapterLayer<T>& layer = stack.layers[li];
        layer.conv = ConvSpec{s.L, s.L, s.in_c, s.out_c, s.stride, 0};
        const double ga_std = std::sqrt(2.0 / (s.in_c * s.L * s.L));
        layer.ga_weights = Tensor<T>::randn({static_cast<std::size_t>(s.out_c),
                                             static_cast<std::size_t>(s.in_c),
                                             static_cast<std::size_t>(s.L),
                                             static_cast<std::size_t>(s.L)},
                                            rng, ga_std);
        layer.ga_bias = Tensor<T>({static_cast<std::size_t>(s.out_c)});
        for (const auto& m : modalities) {
            MaBranch<T> branch;
            // MA starts at zero: the parallel layer initially equals GA alone.
            branch.weights = Tensor<T>({static_cast<std::size_t>(s.out_c),
                                        static_cast<std::size_t>(s.in_c),
                                        static_cast<std::size_t>(s.ma_k),
                                        static_cast<std::size_t>(s.ma_k)});
            branch.bias = Tensor<T>({static_cast<std::size_t>(s.out_c)});
            layer.ma.emplace(m, std::move(branch));
        }
        layer.relu = true;
        layer.lrn = true;
        layer.pool = s.pool;
    }
    return stack;
}

template <std::floating_point T>
using StackCache = std::array<LayerCache<T>, 3>;

template <std::floating_point T>
Tensor<T> stack_forward(const AdapterStack<T>& stack, const Tensor<T>& patch,
                        const std::string& modality, PathMode mode,
                        MaExec exec = MaExec::kEmbedded, StackCache<T>* cache = nullptr) {
    Tensor<T> cur = patch;
    for (int li = 0; li < 3; ++li)
        cur = layer_forward(stack.layers[li], cur, modality, mode, exec,
                            cache ? &(*cache)[li] : nullptr);
    return cur;
}

/// Prefused stack kernels for one modality.
template <std::floating_point T>
using FusedStack = std::array<FusedKernel<T>, 3>;

template <std::floating_point T>
FusedStack<T> fuse_stack(const AdapterStack<T>& stack, const std::string& modality) {
    return {fuse_layer(stack.layers[0], modality), fuse_layer(stack.layers[1], modality),
            fuse_layer(stack.layers[2], modality)};
}

template <std::floating_point T>
Tensor<T> stack_forward_prefused(const AdapterStack<T>& stack, const FusedStack<T>& fused,
                                 const Tensor<T>& patch) {
    Tensor<T> cur = patch;
    for (int li = 0; li < 3; ++li)
        cur = layer_forward_prefused(stack.layers[li], fused[li], cur, (LayerCache<T>*)nullptr);
    return cur;
}

/// Backward through the stack for one modality. Gradients land under
/// "ga.conv<i>.*" and "ma.<modality>.conv<i>.*"; pass train_ga=false (e.g. a
/// frozen GA) to skip GA weight gradients while still propagating through it.
template <std::floating_point T>
void stack_backward(const AdapterStack<T>& stack, const StackCache<T>& cache,
                    const Tensor<T>& grad_feature, const std::string& modality, PathMode mode,
                    MaExec exec, bool train_ga, bool train_ma, GradMap<T>& grads) {
    Tensor<T> g = grad_feature;
    for (int li = 2; li >= 0; --li) {
        const std::string idx = std::to_string(li + 1);
        const std::string ga_prefix = train_ga ? "ga.conv" + idx : std::string();
        const std::string ma_prefix =
            train_ma && mode == PathMode::kParallel ? "ma." + modality + ".conv" + idx : std::string();
        LayerBackwardResult<T> r =
            layer_backward(stack.layers[li], cache[li], g, modality, mode, exec, ga_prefix,
                           ma_prefix, /*want_input_grad=*/li > 0, grads);
        if (li > 0) g = std::move(r.grad_input);
    }
}

/// GA convolution weight coefficients (biases excluded).
template <std::floating_point T>
std::size_t ga_weight_count(const AdapterStack<T>& stack) {
    std::size_t n = 0;
    for (const auto& l : stack.layers) n += l.ga_weights.size();
    return n;
}

/// MA convolution weight coefficients for one modality (biases excluded).
template <std::floating_point T>
std::size_t ma_weight_count(const AdapterStack<T>& stack, const std::string& modality) {
    std::size_t n = 0;
    for (const auto& l : stack.layers) n += l.ma_branch(modality).weights.size();
    return n;
}

// ---------------------------------------------------------------------------
// Cost model and micro-benchmark for the fusion claim

struct StackMacCounts {
    std::uint64_t ga_only = 0;
    std::uint64_t parallel = 0; // GA + small-kernel MA branch
    std::uint64_t fused = 0;    // identical geometry to GA-only
};

template <std::floating_point T>
StackMacCounts stack_mac_counts(const AdapterStack<T>& stack, int input_size) {
    StackMacCounts c;
    int h = input_size;
    for (const auto& l : stack.layers) {
        const int out = conv_out_extent(h, l.conv.kernel_h, l.conv.stride, l.conv.padding);
        const std::uint64_t positions = static_cast<std::uint64_t>(out) * out;
        const std::uint64_t ga_mac = positions * l.conv.out_channels * l.conv.in_channels *
                                     l.conv.kernel_h * l.conv.kernel_w;
        const auto& ma0 = l.ma.begin()->second;
        const std::uint64_t ma_mac = positions * l.conv.out_channels * l.conv.in_channels *
                                     ma0.weights.dim(2) * ma0.weights.dim(3);
        c.ga_only += ga_mac;
        c.fused += ga_mac;
        c.parallel += ga_mac + ma_mac;
        h = out;
        if (l.pool) h = conv_out_extent(h, l.pool_window, l.pool_stride, 0);
    }
    return c;
}

struct FusionBenchReport {
    StackMacCounts macs;
    double ms_ga_only = 0;
    double ms_parallel = 0;
    double ms_fused = 0;
    double max_abs_diff = 0; // parallel vs fused output
    int repetitions = 0;
    int input_size = 0;
};

/// Times the three execution paths on one random input and reports analytic
/// MAC counts plus the parallel-vs-fused output difference. The fused path is
/// prefused once outside the timed region, matching how tracking runs it.
template <std::floating_point T>
FusionBenchReport fusion_benchmark(const AdapterStack<T>& stack, int input_size, int repetitions,
                                   Rng& rng) {
    if (repetitions < 10) throw ConfigError("fusion_benchmark: repetitions must be >= 10");
    FusionBenchReport rep;
    rep.macs = stack_mac_counts(stack, input_size);
    rep.repetitions = repetitions;
    rep.input_size = input_size;

    const std::string modality = stack.layers[0].ma.begin()->first;
    const Tensor<T> input = Tensor<T>::randn(
        {static_cast<std::size_t>(stack.layers[0].conv.in_channels),
         static_cast<std::size_t>(input_size), static_cast<std::size_t>(input_size)},
        rng, 1.0);
    const FusedStack<T> fused = fuse_stack(stack, modality);

    using clock = std::chrono::steady_clock;
    auto median_ms = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };

    Tensor<T> out_parallel, out_fused;
    std::vector<double> t_ga, t_par, t_fused;
    // Warm-up outside the timed reps.
    (void)stack_forward(stack, input, modality, PathMode::kGaOnly, MaExec::kDirect);
    (void)stack_forward(stack, input, modality, PathMode::kParallel, MaExec::kDirect);
    (void)stack_forward_prefused(stack, fused, input);
    for (int r = 0; r < repetitions; ++r) {
        auto t0 = clock::now();
        (void)stack_forward(stack, input, modality, PathMode::kGaOnly, MaExec::kDirect);
        auto t1 = clock::now();
        out_parallel = stack_forward(stack, input, modality, PathMode::kParallel, MaExec::kDirect);
        auto t2 = clock::now();
        out_fused = stack_forward_prefused(stack, fused, input);
        auto t3 = clock::now();
        t_ga.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        t_par.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
        t_fused.push_back(std::chrono::duration<double, std::milli>(t3 - t2).count());
    }
    rep.ms_ga_only = median_ms(t_ga);
    rep.ms_parallel = median_ms(t_par);
    rep.ms_fused = median_ms(t_fused);
    rep.max_abs_diff = static_cast<double>(max_abs_diff(out_parallel, out_fused));
    return rep;
}

} // namespace manet
