#pragma once

#include <span>
#include <vector>

#include "mscmhmst/graph.hpp"

namespace mscmhmst {

// Differentiable operations. Channel-first layouts accept an optional
// leading batch axis: [C, L] or [B, C, L]. All shape errors raise ConfigError.

/// Zero-padded "same" cross-correlation with odd kernel size k:
/// out[c,i] = bias[c] + sum_{c',m} w[c,c',m] * x[c', i + m - k/2].
Var conv1d_same(const Var& input, const Var& weights, const Var& bias);

enum class Pointwise { relu, sigmoid };
Var pointwise(const Var& x, Pointwise kind);
inline Var relu(const Var& x) { return pointwise(x, Pointwise::relu); }
inline Var sigmoid(const Var& x) { return pointwise(x, Pointwise::sigmoid); }

Var hadamard(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// x + y where y's shape equals the trailing dimensions of x.
Var add_broadcast(const Var& x, const Var& y);
Var scale(const Var& x, double factor);

/// Entries below `threshold` become exactly 0. Returns `x` itself when
/// threshold <= 0, since sigmoid outputs are never below 0.
Var prune_below(const Var& x, double threshold);

/// Stacks along the channel axis (second to last) in argument order.
Var concat_channels(std::span<const Var> parts);
/// Stacks along the last axis in argument order.
Var concat_last(std::span<const Var> parts);
Var slice_last(const Var& x, std::size_t offset, std::size_t width);

/// x[..., D_in] * W[D_in, D_out] + b[D_out], rows broadcast.
Var linear(const Var& x, const Var& weights, const Var& bias);
/// Batched matrix product a[B,N,K] * b[B,K,M], or a * b^T with b[B,M,K].
Var batched_matmul(const Var& a, const Var& b, bool transpose_b = false);

/// Softmax over the last axis with max subtraction.
Var softmax_rows(const Var& x);
/// Per-row standardization over the last axis, then gain/shift.
Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5);

Var transpose_last2(const Var& x);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);
Var mse_loss(const Var& pred, const Var& target);
Var mae_loss(const Var& pred, const Var& target);

namespace debug {
/// Test hook: when enabled, the sigmoid gradient rule is deliberately
/// wrong so gradient checks can be shown to fail.
void set_gradient_fault(bool enabled);
bool gradient_fault();
}  // namespace debug

}  // namespace mscmhmst
