// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable layer primitives on CHW tensors. Convolution is
// cross-correlation (no kernel flip) and runs as im2col + GEMM; a naive
// direct implementation is kept alongside as an independent reference.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "manet/common.hpp"
#include "manet/rng.hpp"
#include "manet/tensor.hpp"

namespace manet {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct ConvSpec {
    int kernel_h = 0;
    int kernel_w = 0;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int padding = 0;
};

struct LrnSpec {
    int local_size = 5;
    double alpha = 1e-4;
    double beta = 0.75;
    double k = 2.0;
};

inline void validate(const LrnSpec& s) {
    if (s.local_size < 1 || s.local_size % 2 == 0)
        throw ConfigError("lrn: local_size must be odd and >= 1, got " + std::to_string(s.local_size));
    if (s.beta <= 0) throw ConfigError("lrn: beta must be > 0");
    if (s.k <= 0) throw ConfigError("lrn: k must be > 0");
}

/// floor((in + 2*padding - kernel)/stride) + 1; rejected if < 1.
inline int conv_out_extent(int in, int kernel, int stride, int padding) {
    if (kernel < 1 || stride < 1 || padding < 0)
        throw ConfigError("conv: kernel/stride/padding invalid");
    const int span = in + 2 * padding - kernel;
    if (span < 0) {
        std::ostringstream os;
        os << "conv: kernel " << kernel << " exceeds padded input extent " << (in + 2 * padding);
        throw ShapeError(os.str());
    }
    return span / stride + 1;
}

template <std::floating_point T>
void require_finite(const Tensor<T>& t, const char* layer) {
    const T* p = t.data();
    const std::size_t n = t.size();
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) ok &= (p[i] - p[i]) == T(0);
    if (!ok) throw NumericError(std::string(layer) + ": non-finite input value");
}

namespace detail {

template <std::floating_point T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                       const ConvSpec& spec) {
    if (input.rank() != 3)
        throw ShapeError("conv2d: input rank " + std::to_string(input.rank()) + ", expected 3 (C,H,W)");
    if (weights.rank() != 4)
        throw ShapeError("conv2d: weights rank " + std::to_string(weights.rank()) + ", expected 4");
    if (static_cast<int>(input.dim(0)) != spec.in_channels)
        throw ShapeError("conv2d: input channel dim " + std::to_string(input.dim(0)) +
                         " != spec.in_channels " + std::to_string(spec.in_channels));
    if (static_cast<int>(weights.dim(0)) != spec.out_channels ||
        static_cast<int>(weights.dim(1)) != spec.in_channels ||
        static_cast<int>(weights.dim(2)) != spec.kernel_h ||
        static_cast<int>(weights.dim(3)) != spec.kernel_w)
        throw ShapeError("conv2d: weights shape " + weights.shape_str() + " != spec [" +
                         std::to_string(spec.out_channels) + "," + std::to_string(spec.in_channels) +
                         "," + std::to_string(spec.kernel_h) + "," + std::to_string(spec.kernel_w) + "]");
    if (bias.rank() != 1 || static_cast<int>(bias.dim(0)) != spec.out_channels)
        throw ShapeError("conv2d: bias shape " + bias.shape_str() + " != out_channels " +
                         std::to_string(spec.out_channels));
}

/// Gathers conv patches into col [C*kh*kw, outH*outW]. Sample row for output
/// position (y,x), kernel cell (i,j): input[y*stride - pad + oy + i, ...].
/// (oy,ox) shift the sampling origin; used to run a small centered kernel with
/// the geometry of its zero-embedded large kernel.
template <std::floating_point T>
void im2col(const T* src, int C, int H, int W, int kh, int kw, int stride, int pad, int oy, int ox,
            int outH, int outW, T* col) {
    const int P = outH * outW;
    for (int c = 0; c < C; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                T* dst = col + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * P;
                for (int y = 0; y < outH; ++y) {
                    const int sy = y * stride - pad + oy + i;
                    if (sy < 0 || sy >= H) {
                        for (int x = 0; x < outW; ++x) dst[y * outW + x] = T(0);
                        continue;
                    }
                    const T* row = plane + static_cast<std::size_t>(sy) * W;
                    const int sx0 = -pad + ox + j;
                    for (int x = 0; x < outW; ++x) {
                        const int sx = x * stride + sx0;
                        dst[y * outW + x] = (sx >= 0 && sx < W) ? row[sx] : T(0);
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of im2col.
template <std::floating_point T>
void col2im(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int oy, int ox,
            int outH, int outW, T* dst) {
    const int P = outH * outW;
    for (int c = 0; c < C; ++c) {
        T* plane = dst + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const T* src = col + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * P;
                for (int y = 0; y < outH; ++y) {
                    const int sy = y * stride - pad + oy + i;
                    if (sy < 0 || sy >= H) continue;
                    T* row = plane + static_cast<std::size_t>(sy) * W;
                    const int sx0 = -pad + ox + j;
                    for (int x = 0; x < outW; ++x) {
                        const int sx = x * stride + sx0;
                        if (sx >= 0 && sx < W) row[sx] += src[y * outW + x];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Cross-correlation with bias. Output [C_out, H', W'] per ConvSpec.
template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         const ConvSpec& spec, int origin_y = 0, int origin_x = 0) {
    detail::check_conv_shapes(input, weights, bias, spec);
    const int H = static_cast<int>(input.dim(1));
    const int W = static_cast<int>(input.dim(2));
    const int outH = conv_out_extent(H - 2 * origin_y, spec.kernel_h, spec.stride, spec.padding);
    const int outW = conv_out_extent(W - 2 * origin_x, spec.kernel_w, spec.stride, spec.padding);
    const int K = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const int P = outH * outW;

    std::vector<T> col(static_cast<std::size_t>(K) * P);
    detail::im2col(input.data(), spec.in_channels, H, W, spec.kernel_h, spec.kernel_w, spec.stride,
                   spec.padding, origin_y, origin_x, outH, outW, col.data());

    Tensor<T> out({static_cast<std::size_t>(spec.out_channels), static_cast<std::size_t>(outH),
                   static_cast<std::size_t>(outW)});
    ConstMatMap<T> Wm(weights.data(), spec.out_channels, K);
    ConstMatMap<T> Cm(col.data(), K, P);
    MatMap<T> Om(out.data(), spec.out_channels, P);
    Om.noalias() = Wm * Cm;
    for (int o = 0; o < spec.out_channels; ++o) Om.row(o).array() += bias[o];
    return out;
}

/// Naive reference path; kept independent of the im2col route for testing.
template <std::floating_point T>
Tensor<T> conv2d_forward_direct(const Tensor<T>& input, const Tensor<T>& weights,
                                const Tensor<T>& bias, const ConvSpec& spec, int origin_y = 0,
                                int origin_x = 0) {
    detail::check_conv_shapes(input, weights, bias, spec);
    const int H = static_cast<int>(input.dim(1));
    const int W = static_cast<int>(input.dim(2));
    const int outH = conv_out_extent(H - 2 * origin_y, spec.kernel_h, spec.stride, spec.padding);
    const int outW = conv_out_extent(W - 2 * origin_x, spec.kernel_w, spec.stride, spec.padding);
    Tensor<T> out({static_cast<std::size_t>(spec.out_channels), static_cast<std::size_t>(outH),
                   static_cast<std::size_t>(outW)});
    for (int o = 0; o < spec.out_channels; ++o) {
        for (int y = 0; y < outH; ++y) {
            for (int x = 0; x < outW; ++x) {
                T acc = bias[o];
                for (int c = 0; c < spec.in_channels; ++c) {
                    for (int i = 0; i < spec.kernel_h; ++i) {
                        const int sy = y * spec.stride - spec.padding + origin_y + i;
                        if (sy < 0 || sy >= H) continue;
                        for (int j = 0; j < spec.kernel_w; ++j) {
                            const int sx = x * spec.stride - spec.padding + origin_x + j;
                            if (sx < 0 || sx >= W) continue;
                            acc += weights.at4(o, c, i, j) * input.at3(c, sy, sx);
                        }
                    }
                }
                out.at3(o, y, x) = acc;
            }
        }
    }
    return out;
}

template <std::floating_point T>
struct Conv2dGrads {
    Tensor<T> input;   // empty when not requested
    Tensor<T> weights;
    Tensor<T> bias;
};

template <std::floating_point T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                               const Tensor<T>& weights, const ConvSpec& spec,
                               bool want_input_grad = true, int origin_y = 0, int origin_x = 0) {
    if (input.rank() != 3 || weights.rank() != 4)
        throw ShapeError("conv2d_backward: missing forward operands (input/weights shape)");
    const int H = static_cast<int>(input.dim(1));
    const int W = static_cast<int>(input.dim(2));
    const int outH = conv_out_extent(H - 2 * origin_y, spec.kernel_h, spec.stride, spec.padding);
    const int outW = conv_out_extent(W - 2 * origin_x, spec.kernel_w, spec.stride, spec.padding);
    if (grad_out.rank() != 3 || static_cast<int>(grad_out.dim(0)) != spec.out_channels ||
        static_cast<int>(grad_out.dim(1)) != outH || static_cast<int>(grad_out.dim(2)) != outW) {
        std::ostringstream os;
        os << "conv2d_backward: grad_out shape " << grad_out.shape_str() << " != forward output ["
           << spec.out_channels << "," << outH << "," << outW << "]";
        throw ShapeError(os.str());
    }

    const int K = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const int P = outH * outW;
    std::vector<T> col(static_cast<std::size_t>(K) * P);
    detail::im2col(input.data(), spec.in_channels, H, W, spec.kernel_h, spec.kernel_w, spec.stride,
                   spec.padding, origin_y, origin_x, outH, outW, col.data());

    Conv2dGrads<T> g;
    g.weights = Tensor<T>(
        {static_cast<std::size_t>(spec.out_channels), static_cast<std::size_t>(spec.in_channels),
         static_cast<std::size_t>(spec.kernel_h), static_cast<std::size_t>(spec.kernel_w)});
    g.bias = Tensor<T>({static_cast<std::size_t>(spec.out_channels)});

    ConstMatMap<T> Gm(grad_out.data(), spec.out_channels, P);
    ConstMatMap<T> Cm(col.data(), K, P);
    MatMap<T> GWm(g.weights.data(), spec.out_channels, K);
    GWm.noalias() = Gm * Cm.transpose();
    for (int o = 0; o < spec.out_channels; ++o) g.bias[o] = Gm.row(o).sum();

    if (want_input_grad) {
        std::vector<T> col_grad(static_cast<std::size_t>(K) * P);
        ConstMatMap<T> Wm(weights.data(), spec.out_channels, K);
        MatMap<T> CG(col_grad.data(), K, P);
        CG.noalias() = Wm.transpose() * Gm;
        g.input = Tensor<T>(std::vector<std::size_t>{input.dim(0), input.dim(1), input.dim(2)});
        detail::col2im(col_grad.data(), spec.in_channels, H, W, spec.kernel_h, spec.kernel_w,
                       spec.stride, spec.padding, origin_y, origin_x, outH, outW, g.input.data());
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU

template <std::floating_point T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    require_finite(x, "relu");
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

/// dx = dy where the forward output was positive. Passing the forward output
/// (not the input) is enough: y > 0 iff x > 0.
template <std::floating_point T>
Tensor<T> relu_backward(const Tensor<T>& grad, const Tensor<T>& out) {
    if (!grad.same_shape(out)) throw ShapeError("relu_backward: grad shape " + grad.shape_str() + " != output " + out.shape_str());
    Tensor<T> dx(grad.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = out[i] > T(0) ? grad[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// Local response normalization (across channels)
//
//   y_c = x_c / (k + (alpha/n) * sum_{c' in window} x_{c'}^2)^beta

template <std::floating_point T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnSpec& spec, Tensor<T>* scale_out = nullptr) {
    validate(spec);
    require_finite(x, "lrn");
    if (x.rank() != 3) throw ShapeError("lrn: input rank " + std::to_string(x.rank()) + ", expected 3");
    const int C = static_cast<int>(x.dim(0));
    const int HW = static_cast<int>(x.dim(1) * x.dim(2));
    const int half = spec.local_size / 2;
    const T coeff = static_cast<T>(spec.alpha / spec.local_size);

    Tensor<T> scale(x.shape());
    Tensor<T> y(x.shape());
    for (int p = 0; p < HW; ++p) {
        for (int c = 0; c < C; ++c) {
            T acc = 0;
            const int lo = std::max(0, c - half), hi = std::min(C - 1, c + half);
            for (int cc = lo; cc <= hi; ++cc) {
                const T v = x[static_cast<std::size_t>(cc) * HW + p];
                acc += v * v;
            }
            const std::size_t idx = static_cast<std::size_t>(c) * HW + p;
            const T s = static_cast<T>(spec.k) + coeff * acc;
            scale[idx] = s;
            y[idx] = x[idx] * static_cast<T>(std::pow(s, -spec.beta));
        }
    }
    if (scale_out) *scale_out = std::move(scale);
    return y;
}

template <std::floating_point T>
Tensor<T> lrn_backward(const Tensor<T>& grad, const Tensor<T>& x, const Tensor<T>& scale,
                       const LrnSpec& spec) {
    if (!grad.same_shape(x) || !scale.same_shape(x))
        throw ShapeError("lrn_backward: shape mismatch");
    const int C = static_cast<int>(x.dim(0));
    const int HW = static_cast<int>(x.dim(1) * x.dim(2));
    const int half = spec.local_size / 2;
    const T coeff = static_cast<T>(spec.alpha / spec.local_size);
    const T beta = static_cast<T>(spec.beta);

    Tensor<T> dx(x.shape());
    std::vector<T> gys(C); // g_c * x_c * S_c^(-beta-1) per channel at one position
    for (int p = 0; p < HW; ++p) {
        for (int c = 0; c < C; ++c) {
            const std::size_t idx = static_cast<std::size_t>(c) * HW + p;
            gys[c] = grad[idx] * x[idx] * static_cast<T>(std::pow(scale[idx], -spec.beta - 1.0));
        }
        for (int i = 0; i < C; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * HW + p;
            T acc = 0;
            const int lo = std::max(0, i - half), hi = std::min(C - 1, i + half);
            for (int c = lo; c <= hi; ++c) acc += gys[c];
            dx[idx] = grad[idx] * static_cast<T>(std::pow(scale[idx], -spec.beta)) -
                      T(2) * beta * coeff * x[idx] * acc;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Max pooling

template <std::floating_point T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride,
                          std::vector<std::int32_t>* argmax_out = nullptr) {
    require_finite(x, "maxpool");
    if (x.rank() != 3) throw ShapeError("maxpool: input rank " + std::to_string(x.rank()) + ", expected 3");
    const int C = static_cast<int>(x.dim(0));
    const int H = static_cast<int>(x.dim(1));
    const int W = static_cast<int>(x.dim(2));
    const int outH = conv_out_extent(H, window, stride, 0);
    const int outW = conv_out_extent(W, window, stride, 0);
    Tensor<T> y({static_cast<std::size_t>(C), static_cast<std::size_t>(outH),
                 static_cast<std::size_t>(outW)});
    if (argmax_out) argmax_out->assign(y.size(), 0);
    for (int c = 0; c < C; ++c) {
        const T* plane = x.data() + static_cast<std::size_t>(c) * H * W;
        for (int oy = 0; oy < outH; ++oy) {
            for (int ox = 0; ox < outW; ++ox) {
                int best = oy * stride * W + ox * stride;
                T bv = plane[best];
                for (int i = 0; i < window; ++i) {
                    for (int j = 0; j < window; ++j) {
                        const int idx = (oy * stride + i) * W + ox * stride + j;
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t out_idx =
                    (static_cast<std::size_t>(c) * outH + oy) * outW + ox;
                y[out_idx] = bv;
                if (argmax_out) (*argmax_out)[out_idx] = best;
            }
        }
    }
    return y;
}

template <std::floating_point T>
Tensor<T> maxpool_backward(const Tensor<T>& grad, const std::vector<std::int32_t>& argmax,
                           const std::vector<std::size_t>& in_shape) {
    if (argmax.size() != grad.size()) throw ShapeError("maxpool_backward: argmax cache missing or stale");
    Tensor<T> dx(in_shape);
    const std::size_t C = grad.dim(0);
    const std::size_t planeOut = grad.dim(1) * grad.dim(2);
    const std::size_t planeIn = in_shape[1] * in_shape[2];
    for (std::size_t c = 0; c < C; ++c) {
        T* plane = dx.data() + c * planeIn;
        for (std::size_t p = 0; p < planeOut; ++p) {
            plane[argmax[c * planeOut + p]] += grad[c * planeOut + p];
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Fully connected, columns = samples

/// y = W x + b for each column of X. X is [in, n], result [out, n].
template <std::floating_point T>
Tensor<T> fc_forward(const Tensor<T>& weights, const Tensor<T>& bias, const Tensor<T>& x) {
    require_finite(x, "fully_connected");
    if (x.rank() != 2) throw ShapeError("fully_connected: input rank must be 2 ([in, batch])");
    const int out_dim = static_cast<int>(weights.dim(0));
    const int in_dim = static_cast<int>(weights.dim(1));
    if (static_cast<int>(x.dim(0)) != in_dim)
        throw ShapeError("fully_connected: input dim " + std::to_string(x.dim(0)) +
                         " != weight columns " + std::to_string(in_dim));
    const int n = static_cast<int>(x.dim(1));
    Tensor<T> y({static_cast<std::size_t>(out_dim), static_cast<std::size_t>(n)});
    ConstMatMap<T> Wm(weights.data(), out_dim, in_dim);
    ConstMatMap<T> Xm(x.data(), in_dim, n);
    MatMap<T> Ym(y.data(), out_dim, n);
    Ym.noalias() = Wm * Xm;
    for (int o = 0; o < out_dim; ++o) Ym.row(o).array() += bias[o];
    return y;
}

template <std::floating_point T>
struct FcGrads {
    Tensor<T> weights;
    Tensor<T> bias;
    Tensor<T> input; // empty when not requested
};

template <std::floating_point T>
FcGrads<T> fc_backward(const Tensor<T>& grad, const Tensor<T>& weights, const Tensor<T>& x,
                       bool want_input_grad = true) {
    const int out_dim = static_cast<int>(weights.dim(0));
    const int in_dim = static_cast<int>(weights.dim(1));
    const int n = static_cast<int>(x.dim(1));
    if (static_cast<int>(grad.dim(0)) != out_dim || static_cast<int>(grad.dim(1)) != n)
        throw ShapeError("fc_backward: grad shape " + grad.shape_str() + " mismatch");
    FcGrads<T> g;
    g.weights = Tensor<T>({static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim)});
    g.bias = Tensor<T>({static_cast<std::size_t>(out_dim)});
    ConstMatMap<T> Gm(grad.data(), out_dim, n);
    ConstMatMap<T> Xm(x.data(), in_dim, n);
    ConstMatMap<T> Wm(weights.data(), out_dim, in_dim);
    MatMap<T> GW(g.weights.data(), out_dim, in_dim);
    GW.noalias() = Gm * Xm.transpose();
    for (int o = 0; o < out_dim; ++o) g.bias[o] = Gm.row(o).sum();
    if (want_input_grad) {
        g.input = Tensor<T>({static_cast<std::size_t>(in_dim), static_cast<std::size_t>(n)});
        MatMap<T> GX(g.input.data(), in_dim, n);
        GX.noalias() = Wm.transpose() * Gm;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: kept units scaled by 1/keep at train time)

template <std::floating_point T>
struct DropoutResult {
    Tensor<T> output;
    Tensor<T> mask; // 0 or 1/keep per element
};

template <std::floating_point T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double keep_prob, Rng& rng) {
    require_finite(x, "dropout");
    if (keep_prob <= 0.0 || keep_prob > 1.0)
        throw ConfigError("dropout: keep probability must be in (0, 1]");
    DropoutResult<T> r{Tensor<T>(x.shape()), Tensor<T>(x.shape())};
    const T scale = static_cast<T>(1.0 / keep_prob);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T m = rng.uniform() < keep_prob ? scale : T(0);
        r.mask[i] = m;
        r.output[i] = x[i] * m;
    }
    return r;
}

template <std::floating_point T>
Tensor<T> dropout_backward(const Tensor<T>& grad, const Tensor<T>& mask) {
    if (!grad.same_shape(mask)) throw ShapeError("dropout_backward: shape mismatch");
    Tensor<T> dx(grad.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = grad[i] * mask[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Binary softmax cross-entropy. Logit/probability index 0 is the negative
// class f-, index 1 the positive class f+.

template <std::floating_point T>
struct SoftmaxXentResult {
    std::vector<T> losses;  // per sample
    Tensor<T> probs;        // [2, n]
    Tensor<T> grad_logits;  // [2, n], d(mean loss)/d logits
};

template <std::floating_point T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    require_finite(logits, "softmax_cross_entropy");
    if (logits.rank() != 2 || logits.dim(0) != 2)
        throw ShapeError("softmax_cross_entropy: logits must be [2, n], got " + logits.shape_str());
    const std::size_t n = logits.dim(1);
    if (labels.size() != n)
        throw ShapeError("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                         " != batch " + std::to_string(n));
    SoftmaxXentResult<T> r;
    r.losses.resize(n);
    r.probs = Tensor<T>({2, n});
    r.grad_logits = Tensor<T>({2, n});
    const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const T zn = logits[i], zp = logits[n + i];
        const T m = std::max(zn, zp);
        const T en = std::exp(zn - m), ep = std::exp(zp - m);
        const T Z = en + ep;
        const T pn = en / Z, pp = ep / Z;
        r.probs[i] = pn;
        r.probs[n + i] = pp;
        const int y = labels[i];
        if (y != 0 && y != 1) throw ConfigError("softmax_cross_entropy: label must be 0 or 1");
        r.losses[i] = -std::log(y == 1 ? pp : pn);
        r.grad_logits[i] = (pn - (y == 0 ? T(1) : T(0))) * inv_n;
        r.grad_logits[n + i] = (pp - (y == 1 ? T(1) : T(0))) * inv_n;
    }
    return r;
}

template <std::floating_point T>
T mean_loss(const SoftmaxXentResult<T>& r) {
    T s = 0;
    for (const T v : r.losses) s += v;
    return s / static_cast<T>(r.losses.size());
}

} // namespace manet
