// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "scat/causal.hpp"
#include "scat/geometry.hpp"
#include "scat/grid.hpp"
#include "scat/lifting.hpp"
#include "scat/normconv.hpp"
#include "scat/occhead.hpp"
#include "scat/params.hpp"
#include "scat/scene.hpp"

namespace scat {

struct ModelConfig {
    std::size_t depth_bins = 16;
    std::size_t groups = 2;
    std::size_t conv_stages = 1;
    std::size_t lift_hidden = 16;
    std::size_t offset_hidden = 16;
    std::size_t decoder_hidden = 16;
    double d_min = 1.0, d_max = 9.0;
    double offset_scale = 1.0;
    double p_offset_scale = 0.05;
    bool learnable_offsets = true;
    bool soft_lift = true;       // false: nearest-rounding baseline
    bool oracle_geometry = false; // fixed SCL-aware indicator geometry
};

/// The full 2D-to-3D transformation stack: depth-simplex (or oracle) geometry,
/// optional learnable camera offsets, soft or nearest splat, normalized
/// convolution stages, and the per-voxel decoder.
struct Model {
    ModelConfig cfg;
    std::size_t channels = 0; // C
    std::size_t classes = 0;  // S (non-empty)
    ParamStore params;

    static Model init(const ModelConfig& cfg, std::size_t channels, std::size_t classes,
                      std::uint64_t seed);

    LiftConfig lift_config() const {
        return {cfg.depth_bins, cfg.oracle_geometry ? std::size_t{1} : cfg.groups, cfg.d_min,
                cfg.d_max};
    }
    OffsetConfig offset_config() const {
        return {cfg.offset_hidden, cfg.offset_scale, cfg.p_offset_scale};
    }
};

/// One scene's forward/adjoint state against a frozen Model. Construction
/// captures the (possibly perturbed) per-view projection matrices.
class Pipeline {
  public:
    Pipeline(Model& model, const Scene& scene, std::vector<ProjectionMatrix> view_p,
             const CoordInjection* inject = nullptr);
    Pipeline(Model& model, const Scene& scene);

    void forward();

    double occupancy_loss() const { return ce_; }
    const DenseGrid& lifted() const { return f_lift_; }
    const DenseGrid& volume() const { return f_out_; }
    const DenseGrid& logits() const { return dec_.logits; }
    const DenseGrid& omega(std::size_t view) const;

    /// Per-class gradient map of one view (adjoint pass of the linear
    /// feature chain applied to the class indicator).
    DenseGrid influence_map(int cls, std::size_t view);

    /// Mean BCE over views for one class; caches state for backward().
    double causal_for_class(int cls);
    double causal_sampled(SeededRng& rng, int* sampled_cls);
    double exact_expected_causal();
    const DenseGrid& attention_map(std::size_t view) const;

    /// Accumulates parameter gradients: d_ce scales the occupancy-CE path,
    /// d_causal scales the causal path (state from the last causal_for_class).
    void backward(double d_ce, double d_causal, bool want_fi_grads = false);
    const DenseGrid& fi_grad(std::size_t view) const;

    /// Test hook: mutable normalized kernels (fault-injection fixtures).
    DenseGrid& stage_spatial_weights(std::size_t k);
    DenseGrid& stage_channel_weights(std::size_t k);

  private:
    struct StageCache {
        DenseGrid input, mid;   // before depthwise / before pointwise
        DenseGrid wsp, wch;     // normalized kernels
        DenseGrid d_wsp, d_wch; // grads w.r.t. normalized kernels
    };
    struct ViewCache {
        ProjectionMatrix p_in, p_eff;
        LiftHeadCache lift;
        DenseGrid oracle_omega; // [U,V,1,D] in oracle mode
        GlobalOffsetCache goff;
        PixelOffsetCache poff;
        SplatCache splat;
        DenseGrid t;        // [U,V,D,C] causal gather
        DenseGrid grad_map; // [U,V,C]
        DenseGrid att;      // [U,V]
        DenseGrid d_fi;     // optional
    };

    const DenseGrid& view_omega(const ViewCache& vc) const {
        return model_->cfg.oracle_geometry ? vc.oracle_omega : vc.lift.omega;
    }
    void compute_causal_chain(int cls);

    Model* model_ = nullptr;
    const Scene* scene_ = nullptr;
    std::vector<ViewCache> views_;
    DenseGrid f_lift_, f_out_;
    std::vector<StageCache> stages_;
    DecoderCache dec_;
    double ce_ = 0.0;
    int causal_cls_ = -1;
    std::vector<DenseGrid> chain_; // indicator, then alternating pw/dw adjoints
    CoordInjection inject_;
    bool has_inject_ = false;
    bool forwarded_ = false;
};

/// Per-view projection matrices for a scene, optionally perturbed with
/// per-view seeds derived from `seed_base`.
std::vector<ProjectionMatrix> view_projections(const Scene& scene, double sigma,
                                               std::uint64_t seed_base);

} // namespace scat
