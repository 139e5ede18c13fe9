// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "scat/grid.hpp"
#include "scat/params.hpp"
#include "scat/rng.hpp"

namespace scat {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

/// 3x4 back-projection matrix P: [h,w,z]^T = P * [u*d, v*d, d, 1]^T up to the
/// world-to-voxel affine map of VoxelGridSpec.
struct ProjectionMatrix {
    std::array<double, 12> m{}; // row-major 3x4

    double operator()(std::size_t r, std::size_t c) const { return m[r * 4 + c]; }
    double& operator()(std::size_t r, std::size_t c) { return m[r * 4 + c]; }

    static ProjectionMatrix identity_depth(); // [I | 0]
};

/// Condition number of the top-left 3x3 block (2-norm, via Jacobi eigenvalues
/// of A^T A). Infinite when singular.
double projection_condition(const ProjectionMatrix& p);
bool projection_well_conditioned(const ProjectionMatrix& p, double max_cond = 1e8);

struct CameraPerturbation {
    double sigma = 0.0; // standard deviation of additive Gaussian noise per entry
    std::uint64_t seed = 0;
};

/// P + elementwise Gaussian noise; resamples (fresh draws, max 10 tries) if
/// the result violates the conditioning invariant. sigma == 0 returns P
/// bit-identically.
ProjectionMatrix perturb(const ProjectionMatrix& p, const CameraPerturbation& pert);

struct VoxelGridSpec {
    std::array<std::size_t, 3> extents{};  // H, W, Z
    std::array<double, 3> origin{};        // world position of voxel index (0,0,0)
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0};

    // Voxel i is centered at origin + i*voxel_size and spans +-0.5 voxel.
    Vec3 world_to_index(const Vec3& w) const;
    Vec3 index_to_world(const Vec3& idx) const;
    bool index_in_margin_band(const Vec3& idx) const; // [-1, extent] per axis
    std::size_t voxel_count() const { return extents[0] * extents[1] * extents[2]; }
};

/// Continuous voxel coordinates of image point (u,v) at metric depth d > 0.
Vec3 project(const ProjectionMatrix& p, double u, double v, double d, const VoxelGridSpec& spec);

/// d(index coords)/d(u,v,d), each a 3-vector over output axes.
void project_jacobian(const ProjectionMatrix& p, double u, double v, double d,
                      const VoxelGridSpec& spec, Vec3& j_du, Vec3& j_dv, Vec3& j_dd);

// ---------------------------------------------------------------------------
// Learnable camera offsets: a global 3x4 correction predicted from the pooled
// image feature plus P, and per-(u,v,d) offsets (du, dv, dd) predicted from
// the pixel feature. Both heads are affine-tanh-affine with a saturating
// output bound; zero parameters produce exactly zero offsets.
// ---------------------------------------------------------------------------

struct OffsetConfig {
    std::size_t hidden = 16;
    double offset_scale = 1.0;   // bound on |du|,|dv| (pixels) and |dd| (bins)
    double p_offset_scale = 0.05; // |dP_rc| <= p_offset_scale * (|P_rc| + 1)
};

/// Adds offset_global.* / offset_pixel.* parameters. Hidden layers get small
/// seeded values, output layers start at zero (exact no-op at init).
void init_offset_params(ParamStore& store, std::size_t channels, std::size_t depth_bins,
                        const OffsetConfig& cfg, SeededRng& rng);

struct GlobalOffsetCache {
    DenseGrid input;  // [1, C+12]
    DenseGrid hidden; // [1, hidden] post-tanh
    DenseGrid raw;    // [1, 12]
    std::array<double, 12> bound{};
    ProjectionMatrix delta;
};

GlobalOffsetCache predict_global_offset(const DenseGrid& fi, const ProjectionMatrix& p,
                                        const ParamStore& store, const OffsetConfig& cfg);

/// d_delta is dL/d(delta P) over the 12 entries. Accumulates parameter grads;
/// optionally accumulates dL/d(fi) (pooled-feature path).
void global_offset_backward(const GlobalOffsetCache& cache, const ParamStore& store,
                            const OffsetConfig& cfg, const std::array<double, 12>& d_delta,
                            ParamStore& grads_store, DenseGrid* d_fi);

struct PixelOffsetCache {
    DenseGrid hidden;  // [U*V, hidden] post-tanh
    DenseGrid raw;     // [U*V, 3*D]
    DenseGrid offsets; // [U, V, D, 3]
};

PixelOffsetCache predict_pixel_offsets(const DenseGrid& fi, std::size_t depth_bins,
                                       const ParamStore& store, const OffsetConfig& cfg);

void pixel_offset_backward(const PixelOffsetCache& cache, const DenseGrid& fi,
                           const ParamStore& store, const OffsetConfig& cfg,
                           const DenseGrid& d_offsets, ParamStore& grads_store, DenseGrid* d_fi);

} // namespace scat
