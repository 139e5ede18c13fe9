// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "scat/grid.hpp"

namespace scat {

// Gradient-bounded densification of sparse voxel features: a depthwise
// transposed 3x3x3 convolution whose kernel is softmax-normalized over the 27
// spatial positions per channel, followed by a pointwise channel mix whose
// kernel is softmax-normalized over the output channel per input channel.
// Both stages are linear, elementwise non-negative, and mass-conserving away
// from the grid boundary.

/// logits [3,3,3,C] -> per-channel simplex over the 27 positions.
DenseGrid normalize_spatial(const DenseGrid& logits);
/// d_logits += softmax backward of d_weights at `weights`.
void normalize_spatial_backward(const DenseGrid& weights, const DenseGrid& d_weights,
                                DenseGrid& d_logits);

/// logits [C,C] -> row-stochastic mix (softmax over the second index).
DenseGrid normalize_channel(const DenseGrid& logits);
void normalize_channel_backward(const DenseGrid& weights, const DenseGrid& d_weights,
                                DenseGrid& d_logits);

/// Scatter semantics: every input voxel distributes its value over its 3x3x3
/// output neighborhood; out-of-grid mass is dropped. volume is [H,W,Z,C].
DenseGrid transposed_depthwise(const DenseGrid& volume, const DenseGrid& weights);

/// Transpose of transposed_depthwise (a gather). Also the forward step of the
/// influence chain.
DenseGrid transposed_depthwise_adjoint(const DenseGrid& cotangent, const DenseGrid& weights);

/// d_weights[dh,dw,dz,c] += sum_x a(x,c) * b(x+delta,c). With (a,b) =
/// (input, cotangent) this is the kernel gradient of the scatter; with
/// (a,b) = (cotangent, input) it is the kernel gradient of the gather.
void depthwise_kernel_grad(const DenseGrid& a, const DenseGrid& b, DenseGrid& d_weights);

/// out[x, c_out] = sum_c_in in[x, c_in] * weights[c_in, c_out].
DenseGrid pointwise(const DenseGrid& volume, const DenseGrid& weights);
DenseGrid pointwise_adjoint(const DenseGrid& cotangent, const DenseGrid& weights);
/// d_weights[ci, co] += sum_x a(x, ci) * b(x, co).
void pointwise_kernel_grad(const DenseGrid& a, const DenseGrid& b, DenseGrid& d_weights);

} // namespace scat
