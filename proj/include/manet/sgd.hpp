// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "manet/common.hpp"
#include "manet/tensor.hpp"

namespace manet {

/// Momentum SGD settings. Learning rates are looked up per parameter group;
/// a group that is absent from group_lr is frozen (receives no update).
struct SgdConfig {
    std::map<std::string, double> group_lr;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;

    void validate() const {
        for (const auto& [g, lr] : group_lr)
            if (lr <= 0) throw ConfigError("sgd: learning rate for group '" + g + "' must be > 0");
        if (momentum < 0 || momentum >= 1) throw ConfigError("sgd: momentum must be in [0, 1)");
        if (weight_decay < 0) throw ConfigError("sgd: weight_decay must be >= 0");
    }
};

/// One named tensor bound to a learning-rate group.
template <std::floating_point T>
struct ParamRef {
    std::string name;
    std::string group;
    Tensor<T>* tensor = nullptr;
};

template <std::floating_point T>
class SgdState {
public:
    Tensor<T>& velocity_for(const std::string& name, const Tensor<T>& param) {
        auto it = velocity_.find(name);
        if (it == velocity_.end()) it = velocity_.emplace(name, Tensor<T>::zeros_like(param)).first;
        return it->second;
    }

private:
    std::map<std::string, Tensor<T>> velocity_;
};

/// v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v.
/// Grads are matched to params by name; params without a grad entry or whose
/// group has no learning rate are left untouched.
template <std::floating_point T>
void sgd_step(const std::vector<ParamRef<T>>& params,
              const std::map<std::string, Tensor<T>>& grads, SgdState<T>& state,
              const SgdConfig& config) {
    config.validate();
    for (const auto& p : params) {
        const auto lr_it = config.group_lr.find(p.group);
        if (lr_it == config.group_lr.end()) continue;
        const auto g_it = grads.find(p.name);
        if (g_it == grads.end()) continue;
        const Tensor<T>& grad = g_it->second;
        Tensor<T>& param = *p.tensor;
        if (!grad.same_shape(param))
            throw ShapeError("sgd: grad shape " + grad.shape_str() + " != param '" + p.name + "' " +
                             param.shape_str());
        const T lr = static_cast<T>(lr_it->second);
        const T mu = static_cast<T>(config.momentum);
        const T wd = static_cast<T>(config.weight_decay);
        Tensor<T>& v = state.velocity_for(p.name, param);
        for (std::size_t i = 0; i < param.size(); ++i) {
            const T g = grad[i];
            if (!(g - g == T(0)))
                throw NumericError("sgd: non-finite gradient in '" + p.name + "'");
            v[i] = mu * v[i] - lr * (g + wd * param[i]);
            param[i] += v[i];
        }
    }
}

} // namespace manet
