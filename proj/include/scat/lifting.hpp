// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "scat/geometry.hpp"
#include "scat/grid.hpp"
#include "scat/params.hpp"
#include "scat/world.hpp"

namespace scat {

struct LiftConfig {
    std::size_t depth_bins = 16;
    std::size_t groups = 1; // must divide the channel count
    double d_min = 1.0;
    double d_max = 9.0;

    double bin_step() const {
        return depth_bins > 1 ? (d_max - d_min) / static_cast<double>(depth_bins - 1)
                              : (d_max - d_min);
    }
    /// Metric depth of continuous bin coordinate b (bin 0 at d_min).
    double bin_depth(double b) const {
        return depth_bins > 1 ? d_min + b * bin_step() : 0.5 * (d_min + d_max) + b * bin_step();
    }
};

// --- learned depth simplices --------------------------------------------------

void init_lift_params(ParamStore& store, std::size_t channels, std::size_t hidden,
                      const LiftConfig& cfg, SeededRng& rng);

struct LiftHeadCache {
    DenseGrid hidden; // [U*V, hidden] post-tanh
    DenseGrid omega;  // [U, V, G, D]; softmax over D per (pixel, group)
};

/// Per-pixel affine-tanh-affine map to G*D logits, softmaxed over depth per
/// group. Zero logits give the uniform simplex 1/D.
LiftHeadCache predict_group_weights(const DenseGrid& fi, const LiftConfig& cfg,
                                    const ParamStore& store, std::size_t hidden);

void lift_head_backward(const LiftHeadCache& cache, const DenseGrid& fi, const LiftConfig& cfg,
                        const ParamStore& store, std::size_t hidden, const DenseGrid& d_omega,
                        ParamStore& grads_store, DenseGrid* d_fi);

/// Simplex invariant: max |sum_d values - 1| over (pixel, group).
double simplex_violation(const DenseGrid& omega);

// --- trilinear weights --------------------------------------------------------

struct TrilinearCorner {
    std::array<long, 3> idx{};
    double w = 0.0;
    std::array<double, 3> dw{}; // d w / d (h, w, z)
    bool inside = false;
    std::int64_t flat = -1; // voxel flat index when inside
};

/// The 8 lattice corners of a continuous index coordinate (floor-cell
/// convention); weights are >= 0 and sum to 1 before out-of-range dropping.
void trilinear_weights(const Vec3& coord, const VoxelGridSpec& spec,
                       std::array<TrilinearCorner, 8>& out);

// --- splat cache --------------------------------------------------------------

struct SplatHypo {
    bool active = false;
    Vec3 coord;
    std::array<TrilinearCorner, 8> corners;
    std::int64_t nearest_flat = -1; // round-half-up voxel, -1 when outside
    Vec3 j_du, j_dv, j_dd;          // d coord / d (u_eff, v_eff, depth)
    double depth = 0.0;
    std::array<double, 4> hom{};    // [u*d, v*d, d, 1] at the effective inputs
};

/// Projection geometry for every (u, v, depth-bin) hypothesis of one view,
/// cached once per forward pass and reused by the adjoint passes.
struct SplatCache {
    std::size_t U = 0, V = 0, D = 0;
    std::array<double, 3> inv_voxel_size{1.0, 1.0, 1.0};
    std::vector<SplatHypo> hypos;

    const SplatHypo& at(std::size_t u, std::size_t v, std::size_t d) const {
        return hypos[(u * V + v) * D + d];
    }
};

/// Additive coordinate-error field for the error-propagation experiments,
/// in voxel units.
struct CoordInjection {
    const DenseGrid* direction = nullptr; // [U, V, D, 3] unit directions
    double magnitude = 0.0;
};

void build_splat_cache(const ProjectionMatrix& p_eff, const VoxelGridSpec& spec, std::size_t U,
                       std::size_t V, const LiftConfig& cfg, const DenseGrid* pixel_offsets,
                       const CoordInjection* inject, SplatCache& cache);

// --- lifting ------------------------------------------------------------------

/// Soft-filling splat: every (pixel, group, depth) hypothesis distributes
/// omega * trilinear * feature over its in-grid corners. Accumulates into
/// `volume` [H, W, Z, C]; linear in `fi`.
void splat_soft(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                DenseGrid& volume);

/// Nearest-rounding baseline: all hypothesis mass goes to the round-half-up
/// voxel. Not differentiable w.r.t. coordinates.
void splat_nearest(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                   DenseGrid& volume);

struct SplatGrads {
    DenseGrid d_omega; // [U, V, G, D]
    DenseGrid d_coord; // [U, V, D, 3] w.r.t. continuous index coords
    std::array<double, 12> d_p{};
    DenseGrid d_fi; // [U, V, C], allocated only when requested
};

void init_splat_grads(SplatGrads& grads, std::size_t U, std::size_t V, std::size_t G,
                      std::size_t D, std::size_t C, bool want_fi);

/// Adjoint of splat_soft: scatters d(volume) back onto omega, coordinates, P
/// entries, and optionally fi. Coordinate terms are skipped for the nearest
/// baseline (set want_coords = false).
void splat_soft_backward(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                         const DenseGrid& d_volume, bool want_coords, SplatGrads& grads);

void splat_nearest_backward(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                            const DenseGrid& d_volume, SplatGrads& grads);

/// Gather transpose of the splat geometry: t[u,v,d,c] = sum_k w_k * g[corner_k, c].
void splat_gather(const SplatCache& cache, const DenseGrid& g, DenseGrid& t);

/// Gather transpose of the nearest-rounding splat: t[u,v,d,c] = g[nearest, c].
void splat_gather_nearest(const SplatCache& cache, const DenseGrid& g, DenseGrid& t);

/// Converts per-hypothesis coordinate gradients into pixel-offset gradients
/// [U, V, D, 3] (du, dv, dd in bin units) and P-entry gradients using the
/// cached projection Jacobians.
void coord_grads_to_inputs(const SplatCache& cache, const LiftConfig& cfg,
                           const DenseGrid& d_coord, DenseGrid* d_pixel_offsets,
                           std::array<double, 12>* d_p_extra);

// --- SCL oracle ---------------------------------------------------------------

/// Binary indicator geometry: bin d of pixel (u, v) is 1 when the voxel at
/// the projected coordinate carries the pixel's 2D class. No normalization.
DenseGrid scl_oracle_geometry(const SemanticWorld& world, const std::vector<std::int32_t>& label2d,
                              std::size_t U, std::size_t V, const ProjectionMatrix& p,
                              const VoxelGridSpec& spec, const LiftConfig& cfg);

} // namespace scat
