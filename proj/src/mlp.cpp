// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace scat {

void affine_forward(const double* x, std::size_t rows, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * in;
        double* yr = y + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = b ? b[o] : 0.0;
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wrow = w + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wrow[o];
        }
    }
}

void affine_backward(const double* x, std::size_t rows, std::size_t in, const double* w,
                     std::size_t out, const double* dy, double* dx, double* dw, double* db) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * in;
        const double* dyr = dy + r * out;
        if (db)
            for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
        if (dw) {
            for (std::size_t i = 0; i < in; ++i) {
                const double xi = xr[i];
                if (xi == 0.0) continue;
                double* dwrow = dw + i * out;
                for (std::size_t o = 0; o < out; ++o) dwrow[o] += xi * dyr[o];
            }
        }
        if (dx) {
            double* dxr = dx + r * in;
            for (std::size_t i = 0; i < in; ++i) {
                const double* wrow = w + i * out;
                double s = 0.0;
                for (std::size_t o = 0; o < out; ++o) s += wrow[o] * dyr[o];
                dxr[i] += s;
            }
        }
    }
}

void tanh_forward(const double* x, std::size_t n, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward_accum(const double* y, const double* dy, std::size_t n, double* dx) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void softmax_rows(double* x, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * n;
        double mx = row[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        const double inv = 1.0 / sum;
        for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
    }
}

void softmax_backward_accum(const double* y, const double* dy, std::size_t rows, std::size_t n,
                            double* d_logits) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * n;
        const double* dyr = dy + r * n;
        double* dl = d_logits + r * n;
        double inner = 0.0;
        for (std::size_t i = 0; i < n; ++i) inner += dyr[i] * yr[i];
        for (std::size_t i = 0; i < n; ++i) dl[i] += yr[i] * (dyr[i] - inner);
    }
}

} // namespace scat
