// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scat/geometry.hpp"
#include "scat/grid.hpp"
#include "scat/world.hpp"

namespace scat {

struct CameraModel {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1}; // world->camera, row-major
    std::array<double, 3> pos{};                          // camera center in world

    /// Back-projection [R^T K^-1 | pos]: maps [u*d, v*d, d, 1] to world.
    ProjectionMatrix back_projection() const;
};

struct SceneConfig {
    std::array<std::size_t, 3> grid{12, 12, 6};
    double voxel_size = 0.5;
    std::size_t classes = 4; // S, excluding empty
    std::size_t boxes_per_class = 2;
    std::size_t box_min = 2, box_max = 4;
    std::size_t cameras = 2;
    std::size_t image_u = 8, image_v = 8;
    double focal = 6.0;
    double camera_radius = 0.0; // 0 = auto from grid size
    std::size_t embed_dim = 8;
    double feature_noise = 0.1;

    void validate() const;
};

struct RenderedView {
    std::size_t U = 0, V = 0;
    std::vector<std::int32_t> labels; // first-hit class, 0 = background
    DenseGrid depth;                  // [U, V], +inf where no hit
    DenseGrid features;               // [U, V, C]
    CameraModel camera;
    ProjectionMatrix P;
};

struct Scene {
    SceneConfig cfg;
    std::uint64_t seed = 0;
    VoxelGridSpec spec;
    SemanticWorld world;
    DenseGrid embeddings; // [S+1, C], unit-norm rows
    std::vector<RenderedView> views;
};

VoxelGridSpec make_grid_spec(const SceneConfig& cfg);

/// Unit-norm class embeddings (row 0 = empty/background). Fixed per run, not
/// per scene, so class identity is learnable across scenes.
DenseGrid make_embeddings(std::size_t classes, std::size_t dim, std::uint64_t seed);

/// Seeded non-overlapping axis-aligned boxes, one batch per class; whole
/// worlds are regenerated (bounded retries) until at least two non-empty
/// classes exist and the empty fraction lies in [0.3, 0.9].
SemanticWorld gen_world(const SceneConfig& cfg, std::uint64_t seed);

std::vector<CameraModel> make_camera_rig(const SceneConfig& cfg, const VoxelGridSpec& spec,
                                         std::uint64_t seed);

/// Per-pixel ray march at 0.25-voxel steps with a bisection refinement of the
/// hit depth; deterministic.
RenderedView render_view(const SemanticWorld& world, const VoxelGridSpec& spec,
                         const CameraModel& camera, std::size_t U, std::size_t V);

/// features(u,v) = embedding[label(u,v)] + seeded Gaussian noise.
void make_features(RenderedView& view, const DenseGrid& embeddings, double sigma,
                   std::uint64_t seed);

Scene build_scene(const SceneConfig& cfg, std::uint64_t scene_seed, const DenseGrid& embeddings);

/// Scene bundle file: "SCATSCN1" magic, u64 header length, JSON header, then
/// raw little-endian payload sections (f64 / i32).
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

/// Analytic ray-box entry depth for tests and oracles: the smallest d >= 0
/// where origin + d * dir enters the world-space box [lo, hi]; returns +inf
/// when the ray misses.
double ray_box_entry(const std::array<double, 3>& origin, const std::array<double, 3>& dir,
                     const std::array<double, 3>& lo, const std::array<double, 3>& hi);

} // namespace scat
