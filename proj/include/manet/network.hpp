// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0
//
// Full network: two-modality adapter stack -> concatenated 9216-d feature ->
// instance head FC4 -> FC5 -> FC6(branch). FC6 holds one branch per training
// sequence offline; tracking replaces them with a single fresh branch.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "manet/adapters.hpp"
#include "manet/ops.hpp"
#include "manet/parallel.hpp"
#include "manet/sgd.hpp"

namespace manet {

template <std::floating_point T>
struct FcLayer {
    Tensor<T> weights; // [out, in]
    Tensor<T> bias;    // [out]
};

template <std::floating_point T>
FcLayer<T> make_fc(int out_dim, int in_dim, Rng& rng) {
    FcLayer<T> fc;
    fc.weights = Tensor<T>::randn({static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim)},
                                  rng, std::sqrt(2.0 / in_dim));
    fc.bias = Tensor<T>({static_cast<std::size_t>(out_dim)});
    return fc;
}

/// FC4 (9216->512), FC5 (512->512), FC6 branches (512->2 each). Dropout on
/// the FC4/FC5 activations, active only in train mode.
template <std::floating_point T>
struct InstanceHead {
    FcLayer<T> fc4;
    FcLayer<T> fc5;
    std::vector<FcLayer<T>> branches;
    double dropout_keep = 0.5;
};

template <std::floating_point T>
InstanceHead<T> make_default_head(int n_branches, Rng& rng) {
    InstanceHead<T> head;
    head.fc4 = make_fc<T>(512, kHeadInputDim, rng);
    head.fc5 = make_fc<T>(512, 512, rng);
    head.branches.reserve(n_branches);
    for (int i = 0; i < n_branches; ++i) head.branches.push_back(make_fc<T>(2, 512, rng));
    return head;
}

template <std::floating_point T>
struct HeadCache {
    Tensor<T> input;     // [9216, n]
    Tensor<T> relu4;     // post-ReLU FC4
    Tensor<T> mask4;     // dropout mask (empty in eval mode)
    Tensor<T> drop4;     // FC5 input
    Tensor<T> relu5;
    Tensor<T> mask5;
    Tensor<T> drop5;     // FC6 input
    int branch = 0;
};

template <std::floating_point T>
Tensor<T> head_forward(const InstanceHead<T>& head, const Tensor<T>& x, int branch, bool train_mode,
                       Rng* rng = nullptr, HeadCache<T>* cache = nullptr) {
    if (branch < 0 || branch >= static_cast<int>(head.branches.size()))
        throw ConfigError("instance head: branch index " + std::to_string(branch) + " out of range (" +
                          std::to_string(head.branches.size()) + " branches)");
    if (x.rank() != 2 || static_cast<int>(x.dim(0)) != kHeadInputDim)
        throw ShapeError("instance head: input must be [" + std::to_string(kHeadInputDim) +
                         ", n], got " + x.shape_str());
    if (train_mode && rng == nullptr)
        throw ConfigError("instance head: train mode requires a random source for dropout");

    Tensor<T> a4 = relu_forward(fc_forward(head.fc4.weights, head.fc4.bias, x));
    Tensor<T> d4, m4;
    if (train_mode) {
        DropoutResult<T> r = dropout_forward(a4, head.dropout_keep, *rng);
        d4 = std::move(r.output);
        m4 = std::move(r.mask);
    } else {
        d4 = a4;
    }
    Tensor<T> a5 = relu_forward(fc_forward(head.fc5.weights, head.fc5.bias, d4));
    Tensor<T> d5, m5;
    if (train_mode) {
        DropoutResult<T> r = dropout_forward(a5, head.dropout_keep, *rng);
        d5 = std::move(r.output);
        m5 = std::move(r.mask);
    } else {
        d5 = a5;
    }
    Tensor<T> logits = fc_forward(head.branches[branch].weights, head.branches[branch].bias, d5);
    if (cache) {
        cache->input = x;
        cache->relu4 = std::move(a4);
        cache->mask4 = std::move(m4);
        cache->drop4 = std::move(d4);
        cache->relu5 = std::move(a5);
        cache->mask5 = std::move(m5);
        cache->drop5 = std::move(d5);
        cache->branch = branch;
    }
    return logits;
}

/// Backward through the head; accumulates fc4/fc5/fc6.<branch> gradients and
/// returns d(input) when requested.
template <std::floating_point T>
Tensor<T> head_backward(const InstanceHead<T>& head, const HeadCache<T>& cache,
                        const Tensor<T>& grad_logits, GradMap<T>& grads, bool want_input_grad) {
    const FcLayer<T>& fc6 = head.branches[cache.branch];
    const std::string b6 = "fc6." + std::to_string(cache.branch);
    FcGrads<T> g6 = fc_backward(grad_logits, fc6.weights, cache.drop5, true);
    accumulate(grads, b6 + ".weight", g6.weights);
    accumulate(grads, b6 + ".bias", g6.bias);

    Tensor<T> g = std::move(g6.input);
    if (cache.mask5.size() > 0) g = dropout_backward(g, cache.mask5);
    g = relu_backward(g, cache.relu5);
    FcGrads<T> g5 = fc_backward(g, head.fc5.weights, cache.drop4, true);
    accumulate(grads, "fc5.weight", g5.weights);
    accumulate(grads, "fc5.bias", g5.bias);

    g = std::move(g5.input);
    if (cache.mask4.size() > 0) g = dropout_backward(g, cache.mask4);
    g = relu_backward(g, cache.relu4);
    FcGrads<T> g4 = fc_backward(g, head.fc4.weights, cache.input, want_input_grad);
    accumulate(grads, "fc4.weight", g4.weights);
    accumulate(grads, "fc4.bias", g4.bias);
    return want_input_grad ? std::move(g4.input) : Tensor<T>();
}

// ---------------------------------------------------------------------------

template <std::floating_point T>
struct Network {
    AdapterStack<T> stack;
    InstanceHead<T> head;
    std::vector<std::string> modalities; // concatenation order of the features
};

template <std::floating_point T>
Network<T> make_default_network(int n_branches, Rng& rng) {
    Network<T> net;
    net.modalities = default_modalities();
    net.stack = make_default_stack<T>(net.modalities, rng);
    net.head = make_default_head<T>(n_branches, rng);
    return net;
}

/// All named parameters with their learning-rate groups:
/// ga_conv, ma_conv, fc45, fc6.
template <std::floating_point T>
std::vector<ParamRef<T>> network_params(Network<T>& net) {
    std::vector<ParamRef<T>> out;
    for (int li = 0; li < 3; ++li) {
        const std::string idx = std::to_string(li + 1);
        out.push_back({"ga.conv" + idx + ".weight", "ga_conv", &net.stack.layers[li].ga_weights});
        out.push_back({"ga.conv" + idx + ".bias", "ga_conv", &net.stack.layers[li].ga_bias});
    }
    for (const auto& m : net.modalities) {
        for (int li = 0; li < 3; ++li) {
            const std::string idx = std::to_string(li + 1);
            MaBranch<T>& b = net.stack.layers[li].ma_branch(m);
            out.push_back({"ma." + m + ".conv" + idx + ".weight", "ma_conv", &b.weights});
            out.push_back({"ma." + m + ".conv" + idx + ".bias", "ma_conv", &b.bias});
        }
    }
    out.push_back({"fc4.weight", "fc45", &net.head.fc4.weights});
    out.push_back({"fc4.bias", "fc45", &net.head.fc4.bias});
    out.push_back({"fc5.weight", "fc45", &net.head.fc5.weights});
    out.push_back({"fc5.bias", "fc45", &net.head.fc5.bias});
    for (std::size_t k = 0; k < net.head.branches.size(); ++k) {
        const std::string p = "fc6." + std::to_string(k);
        out.push_back({p + ".weight", "fc6", &net.head.branches[k].weights});
        out.push_back({p + ".bias", "fc6", &net.head.branches[k].bias});
    }
    return out;
}

template <std::floating_point T>
void check_patch(const Tensor<T>& patch, const char* which) {
    if (patch.rank() != 3 || patch.dim(0) != 3 || patch.dim(1) != kPatchSize ||
        patch.dim(2) != kPatchSize)
        throw ShapeError(std::string(which) + " patch shape " + patch.shape_str() + " != [3," +
                         std::to_string(kPatchSize) + "," + std::to_string(kPatchSize) + "]");
}

/// Copies a [512,3,3] feature map into rows [row0, row0+4608) of column `col`
/// of the head input matrix.
template <std::floating_point T>
void place_feature_column(const Tensor<T>& feat, Tensor<T>& x, std::size_t row0, std::size_t col) {
    const std::size_t n = x.dim(1);
    for (std::size_t i = 0; i < feat.size(); ++i) x[(row0 + i) * n + col] = feat[i];
}

template <std::floating_point T>
struct NetworkCache {
    std::vector<StackCache<T>> stacks; // one per modality
    HeadCache<T> head;
};

template <std::floating_point T>
struct Scores {
    T f_minus = 0;
    T f_plus = 0;
};

template <std::floating_point T>
Scores<T> softmax_pair(T z_minus, T z_plus) {
    const T m = std::max(z_minus, z_plus);
    const T en = std::exp(z_minus - m), ep = std::exp(z_plus - m);
    return {en / (en + ep), ep / (en + ep)};
}

/// Single patch-pair forward. Feature order along the head input is
/// [modalities[0] | modalities[1]].
template <std::floating_point T>
Scores<T> network_forward(const Network<T>& net, const Tensor<T>& rgb_patch,
                          const Tensor<T>& thermal_patch, int branch, bool train_mode,
                          PathMode mode = PathMode::kParallel, MaExec exec = MaExec::kEmbedded,
                          Rng* rng = nullptr, NetworkCache<T>* cache = nullptr) {
    check_patch(rgb_patch, "rgb");
    check_patch(thermal_patch, "thermal");
    Tensor<T> x({static_cast<std::size_t>(kHeadInputDim), 1});
    if (cache) cache->stacks.assign(net.modalities.size(), StackCache<T>{});
    for (std::size_t mi = 0; mi < net.modalities.size(); ++mi) {
        const Tensor<T>& patch = net.modalities[mi] == "thermal" ? thermal_patch : rgb_patch;
        Tensor<T> feat = stack_forward(net.stack, patch, net.modalities[mi], mode, exec,
                                       cache ? &cache->stacks[mi] : nullptr);
        place_feature_column(feat, x, mi * kFeatureDim, 0);
    }
    Tensor<T> logits =
        head_forward(net.head, x, branch, train_mode, rng, cache ? &cache->head : nullptr);
    return softmax_pair(logits[0], logits[1]);
}

} // namespace manet
