// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace scat {

// Row-major dense layers shared by all per-pixel / per-voxel heads.
// x: [rows, in], w: [in, out], b: [out], y: [rows, out].

void affine_forward(const double* x, std::size_t rows, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y);

/// Accumulates into dw/db/dx (pass nullptr to skip a term).
void affine_backward(const double* x, std::size_t rows, std::size_t in, const double* w,
                     std::size_t out, const double* dy, double* dx, double* dw, double* db);

void tanh_forward(const double* x, std::size_t n, double* y);

/// dx += dy * (1 - y^2), where y = tanh(x).
void tanh_backward_accum(const double* y, const double* dy, std::size_t n, double* dx);

/// In-place softmax over contiguous blocks of length `n` (max-subtracted).
void softmax_rows(double* x, std::size_t rows, std::size_t n);

/// d_logits = y .* (dy - <dy, y>) per row; accumulates into d_logits.
void softmax_backward_accum(const double* y, const double* dy, std::size_t rows, std::size_t n,
                            double* d_logits);

} // namespace scat
