// SPDX-License-Identifier: Apache-2.0
//
// Layer kernels for the GRCNN detectors. Every forward kernel has a matching
// backward kernel that accumulates parameter gradients into caller-owned
// tensors and returns the gradient with respect to the layer input.
//
// Tensor layouts:
//   Conv2D input   h x w x c_in, kernel kh x kw x c_in x c_out
//   GRU input      t x f, kernel f x 3u, recurrent kernel u x 3u, bias 3u,
//                  gate blocks ordered [update | reset | candidate]
//   Dense input    f, kernel f x u, bias u
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "stutter/tensor.hpp"

namespace stutter {

enum class ActivationFn { Linear, Relu, Sigmoid, Tanh };

std::string_view to_string(ActivationFn fn);
ActivationFn activation_from_string(std::string_view name);

namespace layers {

Tensor activation_forward(const Tensor& x, ActivationFn fn);
/// Uses the forward output `y`, which determines the derivative for every
/// supported function.
Tensor activation_backward(const Tensor& y, const Tensor& dy, ActivationFn fn);

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride_h,
                      std::size_t stride_w);
Tensor conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, std::size_t stride_h,
                       std::size_t stride_w, Tensor& d_kernel, Tensor& d_bias);

/// Per-step gate values kept for backpropagation through time.
struct GruCache {
  Tensor hidden;     // (t + 1) x u, row 0 is the zero initial state
  Tensor update;     // t x u
  Tensor reset;      // t x u
  Tensor candidate;  // t x u
};

Tensor gru_forward(const Tensor& x, const Tensor& kernel, const Tensor& recurrent, const Tensor& bias,
                   bool return_sequences, GruCache* cache = nullptr);
Tensor gru_backward(const Tensor& x, const Tensor& kernel, const Tensor& recurrent, const GruCache& cache,
                    const Tensor& dy, bool return_sequences, Tensor& d_kernel, Tensor& d_recurrent,
                    Tensor& d_bias);

Tensor dense_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     ActivationFn fn = ActivationFn::Linear);
/// `y` is the forward output (after activation).
Tensor dense_backward(const Tensor& x, const Tensor& kernel, const Tensor& y, const Tensor& dy, ActivationFn fn,
                      Tensor& d_kernel, Tensor& d_bias);

/// Inverted-dropout keep mask (values 0 or 1/(1-rate)), reproducible from
/// `seed`.
Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed);

}  // namespace layers
}  // namespace stutter
