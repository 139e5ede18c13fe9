// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "scat/model.hpp"
#include "scat/scene.hpp"

namespace scat::test {

inline SceneConfig tiny_scene_config() {
    SceneConfig cfg;
    cfg.grid = {6, 6, 6};
    cfg.voxel_size = 1.0;
    cfg.classes = 3;
    cfg.boxes_per_class = 1;
    cfg.box_min = 2;
    cfg.box_max = 3;
    cfg.cameras = 1;
    cfg.image_u = 4;
    cfg.image_v = 4;
    cfg.focal = 3.0;
    cfg.embed_dim = 8;
    cfg.feature_noise = 0.1;
    return cfg;
}

inline ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.depth_bins = 6;
    cfg.groups = 2;
    cfg.conv_stages = 1;
    cfg.lift_hidden = 8;
    cfg.offset_hidden = 8;
    cfg.decoder_hidden = 8;
    cfg.d_min = 2.0;
    cfg.d_max = 8.0;
    cfg.learnable_offsets = false;
    return cfg;
}

inline Scene tiny_scene(std::uint64_t seed) {
    const SceneConfig cfg = tiny_scene_config();
    return build_scene(cfg, seed, make_embeddings(cfg.classes, cfg.embed_dim, mix_seed(seed, 77)));
}

/// A hand-built scene whose single camera is the canonical P = [I | 0] pinhole
/// over an identity voxel map: pixel (u, v) at integer depth d projects to the
/// lattice point (u*d, v*d, d) exactly, so soft filling has zero leakage.
/// The world is labeled so that the SCL premise holds per construction.
struct LatticeInstance {
    Scene scene;
    VoxelGridSpec spec;
};

inline LatticeInstance lattice_instance(std::size_t classes = 3) {
    LatticeInstance li;
    const std::size_t U = 3, V = 3, C = 8;
    // depths 1..3 with U=V=3 need extents up to (u*d, v*d, d) = (6, 6, 3)
    VoxelGridSpec spec{{7, 7, 4}, {0, 0, 0}, {1.0, 1.0, 1.0}};
    li.spec = spec;

    SemanticWorld world;
    world.extents = spec.extents;
    world.labels.assign(world.voxel_count(), 0);
    world.n_classes = classes;
    world.dynamic_flag.assign(classes + 1, false);
    for (std::size_t s = 1; s <= classes / 2; ++s) world.dynamic_flag[s] = true;

    RenderedView view;
    view.U = U;
    view.V = V;
    view.P = ProjectionMatrix::identity_depth();
    view.labels.assign(U * V, 0);
    view.depth = DenseGrid({U, V});

    // Give each pixel a first-hit depth in {1, 2, 3} and label the hit voxel
    // (and everything behind it along the ray) with the pixel's class.
    SeededRng rng(41);
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const std::size_t d_hit = 1 + rng.below(3);
            const std::int32_t cls = static_cast<std::int32_t>(1 + rng.below(classes));
            view.labels[u * V + v] = cls;
            view.depth[u * V + v] = static_cast<double>(d_hit);
            for (std::size_t d = d_hit; d <= 3; ++d) {
                const std::size_t h = u * d, w = v * d;
                if (h < spec.extents[0] && w < spec.extents[1] && d < spec.extents[2])
                    world.labels[world.flat(h, w, d)] = cls;
            }
        }
    }

    SceneConfig cfg = tiny_scene_config();
    cfg.grid = spec.extents;
    cfg.image_u = U;
    cfg.image_v = V;
    cfg.classes = classes;
    cfg.embed_dim = C;

    DenseGrid emb = make_embeddings(classes, C, 99);
    make_features(view, emb, 0.05, 7);

    li.scene.cfg = cfg;
    li.scene.seed = 41;
    li.scene.spec = spec;
    li.scene.world = std::move(world);
    li.scene.embeddings = std::move(emb);
    li.scene.views.push_back(std::move(view));
    return li;
}

inline double l2_norm(const DenseGrid& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * g[i];
    return std::sqrt(s);
}

} // namespace scat::test
