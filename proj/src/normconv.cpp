// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/normconv.hpp"

#include <cmath>

#include "scat/check.hpp"
#include "scat/mlp.hpp"

namespace scat {

namespace {

void check_spatial_shape(const DenseGrid& k) {
    SCAT_CHECK(k.rank() == 4 && k.extent(0) == 3 && k.extent(1) == 3 && k.extent(2) == 3,
               "depthwise kernel must be 3x3x3xC");
}

} // namespace

DenseGrid normalize_spatial(const DenseGrid& logits) {
    check_spatial_shape(logits);
    const std::size_t C = logits.extent(3);
    DenseGrid w = logits;
    // softmax over the 27 spatial positions, separately per channel
    for (std::size_t c = 0; c < C; ++c) {
        double mx = w[c];
        for (std::size_t s = 1; s < 27; ++s) mx = std::max(mx, w[s * C + c]);
        double sum = 0.0;
        for (std::size_t s = 0; s < 27; ++s) {
            const double e = std::exp(w[s * C + c] - mx);
            w[s * C + c] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::size_t s = 0; s < 27; ++s) w[s * C + c] *= inv;
    }
    return w;
}

void normalize_spatial_backward(const DenseGrid& weights, const DenseGrid& d_weights,
                                DenseGrid& d_logits) {
    const std::size_t C = weights.extent(3);
    for (std::size_t c = 0; c < C; ++c) {
        double inner = 0.0;
        for (std::size_t s = 0; s < 27; ++s) inner += d_weights[s * C + c] * weights[s * C + c];
        for (std::size_t s = 0; s < 27; ++s)
            d_logits[s * C + c] += weights[s * C + c] * (d_weights[s * C + c] - inner);
    }
}

DenseGrid normalize_channel(const DenseGrid& logits) {
    SCAT_CHECK(logits.rank() == 2 && logits.extent(0) == logits.extent(1),
               "pointwise kernel must be CxC");
    DenseGrid w = logits;
    softmax_rows(w.data(), w.extent(0), w.extent(1));
    return w;
}

void normalize_channel_backward(const DenseGrid& weights, const DenseGrid& d_weights,
                                DenseGrid& d_logits) {
    softmax_backward_accum(weights.data(), d_weights.data(), weights.extent(0),
                           weights.extent(1), d_logits.data());
}

DenseGrid transposed_depthwise(const DenseGrid& volume, const DenseGrid& weights) {
    check_spatial_shape(weights);
    const std::size_t H = volume.extent(0), W = volume.extent(1), Z = volume.extent(2),
                      C = volume.extent(3);
    SCAT_CHECK(weights.extent(3) == C, "transposed_depthwise: channel mismatch");
    SCAT_CHECK(H >= 3 && W >= 3 && Z >= 3, "transposed_depthwise: grid extents must be >= 3");
    DenseGrid out(volume.shape());

    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
            for (std::size_t z = 0; z < Z; ++z) {
                const double* in = volume.data() + ((h * W + w) * Z + z) * C;
                bool any = false;
                for (std::size_t c = 0; c < C; ++c)
                    if (in[c] != 0.0) {
                        any = true;
                        break;
                    }
                if (!any) continue; // zero voxels contribute nothing
                for (int dh = -1; dh <= 1; ++dh) {
                    const long oh = static_cast<long>(h) + dh;
                    if (oh < 0 || oh >= static_cast<long>(H)) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const long ow = static_cast<long>(w) + dw;
                        if (ow < 0 || ow >= static_cast<long>(W)) continue;
                        for (int dz = -1; dz <= 1; ++dz) {
                            const long oz = static_cast<long>(z) + dz;
                            if (oz < 0 || oz >= static_cast<long>(Z)) continue;
                            const std::size_t s =
                                static_cast<std::size_t>(((dh + 1) * 3 + (dw + 1)) * 3 + (dz + 1));
                            const double* wk = weights.data() + s * C;
                            double* o = out.data() +
                                        ((static_cast<std::size_t>(oh) * W +
                                          static_cast<std::size_t>(ow)) *
                                             Z +
                                         static_cast<std::size_t>(oz)) *
                                            C;
                            for (std::size_t c = 0; c < C; ++c) o[c] += in[c] * wk[c];
                        }
                    }
                }
            }
        }
    }
    return out;
}

DenseGrid transposed_depthwise_adjoint(const DenseGrid& cotangent, const DenseGrid& weights) {
    check_spatial_shape(weights);
    const std::size_t H = cotangent.extent(0), W = cotangent.extent(1), Z = cotangent.extent(2),
                      C = cotangent.extent(3);
    DenseGrid out(cotangent.shape());

    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
            for (std::size_t z = 0; z < Z; ++z) {
                double* o = out.data() + ((h * W + w) * Z + z) * C;
                for (int dh = -1; dh <= 1; ++dh) {
                    const long sh = static_cast<long>(h) + dh;
                    if (sh < 0 || sh >= static_cast<long>(H)) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const long sw = static_cast<long>(w) + dw;
                        if (sw < 0 || sw >= static_cast<long>(W)) continue;
                        for (int dz = -1; dz <= 1; ++dz) {
                            const long sz = static_cast<long>(z) + dz;
                            if (sz < 0 || sz >= static_cast<long>(Z)) continue;
                            const std::size_t s =
                                static_cast<std::size_t>(((dh + 1) * 3 + (dw + 1)) * 3 + (dz + 1));
                            const double* wk = weights.data() + s * C;
                            const double* in = cotangent.data() +
                                               ((static_cast<std::size_t>(sh) * W +
                                                 static_cast<std::size_t>(sw)) *
                                                    Z +
                                                static_cast<std::size_t>(sz)) *
                                                   C;
                            for (std::size_t c = 0; c < C; ++c) o[c] += wk[c] * in[c];
                        }
                    }
                }
            }
        }
    }
    return out;
}

void depthwise_kernel_grad(const DenseGrid& a, const DenseGrid& b, DenseGrid& d_weights) {
    const std::size_t H = a.extent(0), W = a.extent(1), Z = a.extent(2), C = a.extent(3);
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
            for (std::size_t z = 0; z < Z; ++z) {
                const double* av = a.data() + ((h * W + w) * Z + z) * C;
                bool any = false;
                for (std::size_t c = 0; c < C; ++c)
                    if (av[c] != 0.0) {
                        any = true;
                        break;
                    }
                if (!any) continue;
                for (int dh = -1; dh <= 1; ++dh) {
                    const long oh = static_cast<long>(h) + dh;
                    if (oh < 0 || oh >= static_cast<long>(H)) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const long ow = static_cast<long>(w) + dw;
                        if (ow < 0 || ow >= static_cast<long>(W)) continue;
                        for (int dz = -1; dz <= 1; ++dz) {
                            const long oz = static_cast<long>(z) + dz;
                            if (oz < 0 || oz >= static_cast<long>(Z)) continue;
                            const std::size_t s =
                                static_cast<std::size_t>(((dh + 1) * 3 + (dw + 1)) * 3 + (dz + 1));
                            const double* bv = b.data() +
                                               ((static_cast<std::size_t>(oh) * W +
                                                 static_cast<std::size_t>(ow)) *
                                                    Z +
                                                static_cast<std::size_t>(oz)) *
                                                   C;
                            double* dw_out = d_weights.data() + s * C;
                            for (std::size_t c = 0; c < C; ++c) dw_out[c] += av[c] * bv[c];
                        }
                    }
                }
            }
        }
    }
}

DenseGrid pointwise(const DenseGrid& volume, const DenseGrid& weights) {
    const std::size_t C = volume.shape().back();
    SCAT_CHECK(weights.rank() == 2 && weights.extent(0) == C && weights.extent(1) == C,
               "pointwise: kernel/channel mismatch");
    const std::size_t n = volume.size() / C;
    DenseGrid out(volume.shape());
    for (std::size_t x = 0; x < n; ++x) {
        const double* in = volume.data() + x * C;
        double* o = out.data() + x * C;
        for (std::size_t ci = 0; ci < C; ++ci) {
            const double v = in[ci];
            if (v == 0.0) continue;
            const double* wrow = weights.data() + ci * C;
            for (std::size_t co = 0; co < C; ++co) o[co] += v * wrow[co];
        }
    }
    return out;
}

DenseGrid pointwise_adjoint(const DenseGrid& cotangent, const DenseGrid& weights) {
    const std::size_t C = cotangent.shape().back();
    const std::size_t n = cotangent.size() / C;
    DenseGrid out(cotangent.shape());
    for (std::size_t x = 0; x < n; ++x) {
        const double* ct = cotangent.data() + x * C;
        double* o = out.data() + x * C;
        for (std::size_t ci = 0; ci < C; ++ci) {
            const double* wrow = weights.data() + ci * C;
            double s = 0.0;
            for (std::size_t co = 0; co < C; ++co) s += wrow[co] * ct[co];
            o[ci] = s;
        }
    }
    return out;
}

void pointwise_kernel_grad(const DenseGrid& a, const DenseGrid& b, DenseGrid& d_weights) {
    const std::size_t C = a.shape().back();
    const std::size_t n = a.size() / C;
    for (std::size_t x = 0; x < n; ++x) {
        const double* av = a.data() + x * C;
        const double* bv = b.data() + x * C;
        for (std::size_t ci = 0; ci < C; ++ci) {
            const double v = av[ci];
            if (v == 0.0) continue;
            double* drow = d_weights.data() + ci * C;
            for (std::size_t co = 0; co < C; ++co) drow[co] += v * bv[co];
        }
    }
}

} // namespace scat
