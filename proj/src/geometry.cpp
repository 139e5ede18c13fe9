// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scat/check.hpp"
#include "scat/mlp.hpp"

namespace scat {

ProjectionMatrix ProjectionMatrix::identity_depth() {
    ProjectionMatrix p;
    p(0, 0) = 1.0;
    p(1, 1) = 1.0;
    p(2, 2) = 1.0;
    return p;
}

namespace {

// Largest/smallest eigenvalues of the symmetric 3x3 matrix A^T A by cyclic
// Jacobi rotations; enough accuracy for a conditioning gate.
void sym3_eigenvalues(double a[3][3], double out[3]) {
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-300) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    out[0] = a[0][0];
    out[1] = a[1][1];
    out[2] = a[2][2];
}

} // namespace

double projection_condition(const ProjectionMatrix& p) {
    double ata[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += p(k, i) * p(k, j);
            ata[i][j] = s;
        }
    double ev[3];
    sym3_eigenvalues(ata, ev);
    double lo = std::min({ev[0], ev[1], ev[2]});
    double hi = std::max({ev[0], ev[1], ev[2]});
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(hi / lo);
}

bool projection_well_conditioned(const ProjectionMatrix& p, double max_cond) {
    for (double v : p.m)
        if (!std::isfinite(v)) return false;
    return projection_condition(p) < max_cond;
}

ProjectionMatrix perturb(const ProjectionMatrix& p, const CameraPerturbation& pert) {
    SCAT_CHECK(pert.sigma >= 0.0, "perturb: sigma must be >= 0");
    if (pert.sigma == 0.0) return p;

    SeededRng rng(pert.seed);
    for (int attempt = 0; attempt < 10; ++attempt) {
        ProjectionMatrix q = p;
        for (double& v : q.m) v += pert.sigma * rng.normal();
        if (projection_well_conditioned(q)) return q;
    }
    throw NumericalError("perturb: no well-conditioned matrix after 10 resamples");
}

Vec3 VoxelGridSpec::world_to_index(const Vec3& w) const {
    return {(w.x - origin[0]) / voxel_size[0], (w.y - origin[1]) / voxel_size[1],
            (w.z - origin[2]) / voxel_size[2]};
}

Vec3 VoxelGridSpec::index_to_world(const Vec3& idx) const {
    return {origin[0] + idx.x * voxel_size[0], origin[1] + idx.y * voxel_size[1],
            origin[2] + idx.z * voxel_size[2]};
}

bool VoxelGridSpec::index_in_margin_band(const Vec3& idx) const {
    for (std::size_t a = 0; a < 3; ++a) {
        const double v = idx[a];
        if (!(v >= -1.0 && v <= static_cast<double>(extents[a]))) return false;
    }
    return true;
}

Vec3 project(const ProjectionMatrix& p, double u, double v, double d, const VoxelGridSpec& spec) {
    SCAT_CHECK(d > 0.0, "project: depth must be positive");
    const double hom[4] = {u * d, v * d, d, 1.0};
    Vec3 world;
    double* w = &world.x;
    for (int r = 0; r < 3; ++r) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += p(r, c) * hom[c];
        w[r] = s;
    }
    return spec.world_to_index(world);
}

void project_jacobian(const ProjectionMatrix& p, double u, double v, double d,
                      const VoxelGridSpec& spec, Vec3& j_du, Vec3& j_dv, Vec3& j_dd) {
    double* du = &j_du.x;
    double* dv = &j_dv.x;
    double* dd = &j_dd.x;
    for (int r = 0; r < 3; ++r) {
        const double inv = 1.0 / spec.voxel_size[r];
        du[r] = p(r, 0) * d * inv;
        dv[r] = p(r, 1) * d * inv;
        dd[r] = (p(r, 0) * u + p(r, 1) * v + p(r, 2)) * inv;
    }
}

// --- learnable offsets -------------------------------------------------------

void init_offset_params(ParamStore& store, std::size_t channels, std::size_t depth_bins,
                        const OffsetConfig& cfg, SeededRng& rng) {
    const std::size_t gin = channels + 12;
    Param& gw1 = store.add("offset_global.w1", {gin, cfg.hidden});
    store.add("offset_global.b1", {cfg.hidden});
    store.add("offset_global.w2", {cfg.hidden, 12});
    store.add("offset_global.b2", {12});
    Param& pw1 = store.add("offset_pixel.w1", {channels, cfg.hidden});
    store.add("offset_pixel.b1", {cfg.hidden});
    store.add("offset_pixel.w2", {cfg.hidden, 3 * depth_bins});
    store.add("offset_pixel.b2", {3 * depth_bins});

    const double gs = 1.0 / std::sqrt(static_cast<double>(gin));
    for (std::size_t i = 0; i < gw1.value.size(); ++i) gw1.value[i] = gs * rng.normal();
    const double ps = 1.0 / std::sqrt(static_cast<double>(channels));
    for (std::size_t i = 0; i < pw1.value.size(); ++i) pw1.value[i] = ps * rng.normal();
}

namespace {

// Mean feature over all pixels; fi is [U, V, C].
DenseGrid pooled_feature(const DenseGrid& fi) {
    SCAT_CHECK(fi.rank() == 3, "offset head: feature image must be U x V x C");
    const std::size_t px = fi.extent(0) * fi.extent(1);
    const std::size_t C = fi.extent(2);
    DenseGrid pooled({C});
    for (std::size_t p = 0; p < px; ++p)
        for (std::size_t c = 0; c < C; ++c) pooled[c] += fi[p * C + c];
    pooled.scale(1.0 / static_cast<double>(px));
    return pooled;
}

} // namespace

GlobalOffsetCache predict_global_offset(const DenseGrid& fi, const ProjectionMatrix& p,
                                        const ParamStore& store, const OffsetConfig& cfg) {
    const std::size_t C = fi.extent(2);
    GlobalOffsetCache cache;
    cache.input = DenseGrid({1, C + 12});
    DenseGrid pooled = pooled_feature(fi);
    for (std::size_t c = 0; c < C; ++c) cache.input[c] = pooled[c];
    for (std::size_t k = 0; k < 12; ++k) cache.input[C + k] = p.m[k];

    const DenseGrid& w1 = store.at("offset_global.w1").value;
    const DenseGrid& b1 = store.at("offset_global.b1").value;
    const DenseGrid& w2 = store.at("offset_global.w2").value;
    const DenseGrid& b2 = store.at("offset_global.b2").value;

    cache.hidden = DenseGrid({1, cfg.hidden});
    affine_forward(cache.input.data(), 1, C + 12, w1.data(), b1.data(), cfg.hidden,
                   cache.hidden.data());
    tanh_forward(cache.hidden.data(), cfg.hidden, cache.hidden.data());

    cache.raw = DenseGrid({1, 12});
    affine_forward(cache.hidden.data(), 1, cfg.hidden, w2.data(), b2.data(), 12,
                   cache.raw.data());

    for (std::size_t k = 0; k < 12; ++k) {
        cache.bound[k] = cfg.p_offset_scale * (std::abs(p.m[k]) + 1.0);
        cache.delta.m[k] = cache.bound[k] * std::tanh(cache.raw[k]);
    }
    return cache;
}

void global_offset_backward(const GlobalOffsetCache& cache, const ParamStore& store,
                            const OffsetConfig& cfg, const std::array<double, 12>& d_delta,
                            ParamStore& grads_store, DenseGrid* d_fi) {
    DenseGrid d_raw({1, 12});
    for (std::size_t k = 0; k < 12; ++k) {
        const double t = std::tanh(cache.raw[k]);
        d_raw[k] = d_delta[k] * cache.bound[k] * (1.0 - t * t);
    }

    const DenseGrid& w1 = store.at("offset_global.w1").value;
    const DenseGrid& w2 = store.at("offset_global.w2").value;
    Param& gw1 = grads_store.at("offset_global.w1");
    Param& gb1 = grads_store.at("offset_global.b1");
    Param& gw2 = grads_store.at("offset_global.w2");
    Param& gb2 = grads_store.at("offset_global.b2");

    DenseGrid dh({1, cfg.hidden});
    affine_backward(cache.hidden.data(), 1, cfg.hidden, w2.data(), 12, d_raw.data(), dh.data(),
                    gw2.grad.data(), gb2.grad.data());

    DenseGrid dh_pre({1, cfg.hidden});
    tanh_backward_accum(cache.hidden.data(), dh.data(), cfg.hidden, dh_pre.data());

    const std::size_t gin = cache.input.extent(1);
    DenseGrid din({1, gin});
    affine_backward(cache.input.data(), 1, gin, w1.data(), cfg.hidden, dh_pre.data(),
                    d_fi ? din.data() : nullptr, gw1.grad.data(), gb1.grad.data());

    if (d_fi) {
        // Pooled-feature path: each pixel received weight 1/(U*V).
        const std::size_t px = d_fi->extent(0) * d_fi->extent(1);
        const std::size_t C = d_fi->extent(2);
        const double inv = 1.0 / static_cast<double>(px);
        for (std::size_t p = 0; p < px; ++p)
            for (std::size_t c = 0; c < C; ++c) (*d_fi)[p * C + c] += inv * din[c];
    }
}

PixelOffsetCache predict_pixel_offsets(const DenseGrid& fi, std::size_t depth_bins,
                                       const ParamStore& store, const OffsetConfig& cfg) {
    SCAT_CHECK(fi.rank() == 3, "predict_pixel_offsets: feature image must be U x V x C");
    const std::size_t U = fi.extent(0), V = fi.extent(1), C = fi.extent(2);
    const std::size_t rows = U * V;
    const std::size_t out = 3 * depth_bins;

    const DenseGrid& w1 = store.at("offset_pixel.w1").value;
    const DenseGrid& b1 = store.at("offset_pixel.b1").value;
    const DenseGrid& w2 = store.at("offset_pixel.w2").value;
    const DenseGrid& b2 = store.at("offset_pixel.b2").value;

    PixelOffsetCache cache;
    cache.hidden = DenseGrid({rows, cfg.hidden});
    affine_forward(fi.data(), rows, C, w1.data(), b1.data(), cfg.hidden, cache.hidden.data());
    tanh_forward(cache.hidden.data(), rows * cfg.hidden, cache.hidden.data());

    cache.raw = DenseGrid({rows, out});
    affine_forward(cache.hidden.data(), rows, cfg.hidden, w2.data(), b2.data(), out,
                   cache.raw.data());

    cache.offsets = DenseGrid({U, V, depth_bins, 3});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j)
            cache.offsets[r * out + j] = cfg.offset_scale * std::tanh(cache.raw[r * out + j]);
    return cache;
}

void pixel_offset_backward(const PixelOffsetCache& cache, const DenseGrid& fi,
                           const ParamStore& store, const OffsetConfig& cfg,
                           const DenseGrid& d_offsets, ParamStore& grads_store, DenseGrid* d_fi) {
    const std::size_t rows = cache.hidden.extent(0);
    const std::size_t out = cache.raw.extent(1);
    const std::size_t C = fi.extent(2);

    DenseGrid d_raw({rows, out});
    for (std::size_t i = 0; i < rows * out; ++i) {
        const double t = std::tanh(cache.raw[i]);
        d_raw[i] = d_offsets[i] * cfg.offset_scale * (1.0 - t * t);
    }

    const DenseGrid& w1 = store.at("offset_pixel.w1").value;
    const DenseGrid& w2 = store.at("offset_pixel.w2").value;
    Param& gw1 = grads_store.at("offset_pixel.w1");
    Param& gb1 = grads_store.at("offset_pixel.b1");
    Param& gw2 = grads_store.at("offset_pixel.w2");
    Param& gb2 = grads_store.at("offset_pixel.b2");

    DenseGrid dh({rows, cfg.hidden});
    affine_backward(cache.hidden.data(), rows, cfg.hidden, w2.data(), out, d_raw.data(),
                    dh.data(), gw2.grad.data(), gb2.grad.data());

    DenseGrid dh_pre({rows, cfg.hidden});
    tanh_backward_accum(cache.hidden.data(), dh.data(), rows * cfg.hidden, dh_pre.data());

    affine_backward(fi.data(), rows, C, w1.data(), cfg.hidden, dh_pre.data(),
                    d_fi ? d_fi->data() : nullptr, gw1.grad.data(), gb1.grad.data());
}

} // namespace scat
