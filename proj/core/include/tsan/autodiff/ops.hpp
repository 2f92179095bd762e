#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tsan/autodiff/tape.hpp"

namespace tsan {

enum class Mode { train, eval };

// Primitive differentiable ops. Every op records itself on the tape of its
// first argument; all arguments must live on the same tape. Instantiated for
// float and double.

// [m,k] x [k,n] -> [m,n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// Batched [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b, b is [B,n,k].
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

// x[..., in] . w[in, out] (+ bias[out]) over the last axis.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight);
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Elementwise a + b, where b's shape must equal a trailing suffix of a's
// shape (b is broadcast over the leading axes).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);
// Mean over one axis; the axis is removed from the shape.
template <typename T>
Var<T> mean_axis(const Var<T>& a, std::size_t axis);

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
// Softmax over the last axis, max-subtracted.
template <typename T>
Var<T> softmax(const Var<T>& x);

// (x - mean) / sqrt(var + eps) * gamma + beta over the last axis.
template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

// Valid stride-1 convolution. x is [L, c_in] or [B, L, c_in]; w is
// [k, c_in, c_out]; b is [c_out].
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// Non-overlapping max pooling along the length axis of [L, c] or [B, L, c].
// The trailing remainder is dropped; ties route gradient to the first max.
template <typename T>
Var<T> maxpool1d(const Var<T>& x, std::size_t window);

struct BatchNormOptions {
  Mode mode = Mode::train;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over every axis but the last. Train mode uses
// batch statistics (biased variance) and updates the running estimates as
// running = (1 - momentum) * running + momentum * batch. Empty running
// tensors mean "not initialized": train mode initializes them to zeros/ones,
// eval mode throws.
template <typename T>
Var<T> batchnorm1d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                   const BatchNormOptions& options);

// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity in eval.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, std::mt19937_64& rng);

// Batch-mean binary cross-entropy on probabilities clipped to [clip, 1-clip].
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prob, const BasicTensor<T>& target, T clip = T(1e-7));
template <typename T>
Var<T> mean_squared_error(const Var<T>& pred, const BasicTensor<T>& target);
// Rows of `prob` are distributions over the last axis; the loss is the mean
// over rows of -sum(target * log(clip(prob))).
template <typename T>
Var<T> categorical_cross_entropy(const Var<T>& prob, const BasicTensor<T>& target,
                                 T clip = T(1e-7));

}  // namespace tsan
