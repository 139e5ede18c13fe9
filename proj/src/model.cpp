// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/model.hpp"

#include <cmath>

#include "scat/check.hpp"

namespace scat {

Model Model::init(const ModelConfig& cfg, std::size_t channels, std::size_t classes,
                  std::uint64_t seed) {
    SCAT_CHECK(channels >= 1 && classes >= 1, "Model::init: need channels >= 1, classes >= 1");
    SCAT_CHECK(cfg.oracle_geometry || channels % cfg.groups == 0,
               "Model::init: groups must divide channels");
    SCAT_CHECK(cfg.depth_bins >= 1, "Model::init: depth_bins must be >= 1");
    SCAT_CHECK(cfg.d_max > cfg.d_min && cfg.d_min > 0.0, "Model::init: bad depth range");

    Model m;
    m.cfg = cfg;
    m.channels = channels;
    m.classes = classes;

    SeededRng rng(mix_seed(seed, 0x5ca7ull));
    if (!cfg.oracle_geometry) {
        SeededRng r = rng.fork(1);
        init_lift_params(m.params, channels, cfg.lift_hidden, m.lift_config(), r);
    }
    if (cfg.learnable_offsets) {
        SeededRng r = rng.fork(2);
        init_offset_params(m.params, channels, cfg.depth_bins, m.offset_config(), r);
    }
    for (std::size_t k = 0; k < cfg.conv_stages; ++k) {
        const std::string prefix = "conv" + std::to_string(k);
        Param& sp = m.params.add(prefix + ".spatial", {3, 3, 3, channels});
        Param& ch = m.params.add(prefix + ".channel", {channels, channels});
        // locality-preserving start: most mass on the center tap / own channel,
        // mild diffusion elsewhere; training reshapes from there
        SeededRng r = rng.fork(100 + k);
        for (std::size_t c = 0; c < channels; ++c)
            sp.value[(13 * channels) + c] = 4.0; // center of the 3x3x3 kernel
        for (std::size_t i = 0; i < ch.value.size(); ++i) ch.value[i] = 0.1 * r.normal();
        for (std::size_t c = 0; c < channels; ++c) ch.value[c * channels + c] += 4.0;
    }
    {
        SeededRng r = rng.fork(3);
        init_decoder_params(m.params, channels, cfg.decoder_hidden, classes + 1, r);
    }
    return m;
}

std::vector<ProjectionMatrix> view_projections(const Scene& scene, double sigma,
                                               std::uint64_t seed_base) {
    std::vector<ProjectionMatrix> out;
    out.reserve(scene.views.size());
    for (std::size_t i = 0; i < scene.views.size(); ++i)
        out.push_back(perturb(scene.views[i].P, {sigma, mix_seed(seed_base, i)}));
    return out;
}

Pipeline::Pipeline(Model& model, const Scene& scene, std::vector<ProjectionMatrix> view_p,
                   const CoordInjection* inject)
    : model_(&model), scene_(&scene) {
    SCAT_CHECK(view_p.size() == scene.views.size(), "Pipeline: one matrix per view required");
    SCAT_CHECK(scene.cfg.embed_dim == model.channels,
               "Pipeline: scene embed_dim must match model channels");
    SCAT_CHECK(scene.world.n_classes == model.classes,
               "Pipeline: scene classes must match model classes");
    views_.resize(scene.views.size());
    for (std::size_t i = 0; i < views_.size(); ++i) views_[i].p_in = view_p[i];
    if (inject) {
        inject_ = *inject;
        has_inject_ = true;
    }
}

Pipeline::Pipeline(Model& model, const Scene& scene)
    : Pipeline(model, scene, view_projections(scene, 0.0, 0)) {}

void Pipeline::forward() {
    const ModelConfig& cfg = model_->cfg;
    const LiftConfig lift_cfg = model_->lift_config();
    const OffsetConfig off_cfg = model_->offset_config();
    const std::size_t C = model_->channels;
    const VoxelGridSpec& spec = scene_->spec;

    f_lift_ = DenseGrid({spec.extents[0], spec.extents[1], spec.extents[2], C});

    for (std::size_t i = 0; i < views_.size(); ++i) {
        ViewCache& vc = views_[i];
        const RenderedView& view = scene_->views[i];
        const DenseGrid& fi = view.features;

        if (cfg.oracle_geometry) {
            DenseGrid geom = scl_oracle_geometry(scene_->world, view.labels, view.U, view.V,
                                                 vc.p_in, spec, lift_cfg);
            vc.oracle_omega = DenseGrid({view.U, view.V, 1, lift_cfg.depth_bins});
            for (std::size_t j = 0; j < geom.size(); ++j) vc.oracle_omega[j] = geom[j];
        } else {
            vc.lift = predict_group_weights(fi, lift_cfg, model_->params, cfg.lift_hidden);
        }

        const DenseGrid* offsets = nullptr;
        if (cfg.learnable_offsets) {
            vc.goff = predict_global_offset(fi, vc.p_in, model_->params, off_cfg);
            vc.p_eff = vc.p_in;
            for (std::size_t k = 0; k < 12; ++k) vc.p_eff.m[k] += vc.goff.delta.m[k];
            vc.poff = predict_pixel_offsets(fi, cfg.depth_bins, model_->params, off_cfg);
            offsets = &vc.poff.offsets;
        } else {
            vc.p_eff = vc.p_in;
        }

        const CoordInjection* inj = has_inject_ ? &inject_ : nullptr;
        build_splat_cache(vc.p_eff, spec, view.U, view.V, lift_cfg, offsets, inj, vc.splat);

        if (cfg.soft_lift)
            splat_soft(fi, view_omega(vc), vc.splat, f_lift_);
        else
            splat_nearest(fi, view_omega(vc), vc.splat, f_lift_);
    }

    stages_.clear();
    stages_.resize(cfg.conv_stages);
    const DenseGrid* cur = &f_lift_;
    for (std::size_t k = 0; k < cfg.conv_stages; ++k) {
        StageCache& st = stages_[k];
        const std::string prefix = "conv" + std::to_string(k);
        st.wsp = normalize_spatial(model_->params.at(prefix + ".spatial").value);
        st.wch = normalize_channel(model_->params.at(prefix + ".channel").value);
        st.input = *cur;
        st.mid = transposed_depthwise(st.input, st.wsp);
        f_out_ = pointwise(st.mid, st.wch);
        cur = &f_out_;
    }
    if (cfg.conv_stages == 0) f_out_ = f_lift_;

    dec_ = decode(f_out_, model_->params, cfg.decoder_hidden, model_->classes + 1);
    ce_ = occupancy_ce(dec_.logits, scene_->world, nullptr);
    SCAT_NUMERIC_CHECK(std::isfinite(ce_), "Pipeline::forward: non-finite occupancy loss");

    causal_cls_ = -1;
    forwarded_ = true;
}

const DenseGrid& Pipeline::omega(std::size_t view) const { return view_omega(views_[view]); }

void Pipeline::compute_causal_chain(int cls) {
    const std::size_t C = model_->channels;
    chain_.clear();
    chain_.push_back(class_indicator_volume(scene_->world, cls, C));
    for (std::size_t kk = stages_.size(); kk-- > 0;) {
        const StageCache& st = stages_[kk];
        chain_.push_back(pointwise_adjoint(chain_.back(), st.wch));
        chain_.push_back(transposed_depthwise_adjoint(chain_.back(), st.wsp));
    }
}

DenseGrid Pipeline::influence_map(int cls, std::size_t view) {
    SCAT_CHECK(forwarded_, "influence_map: call forward() first");
    compute_causal_chain(cls);
    const DenseGrid& g_final = chain_.back();
    ViewCache& vc = views_[view];
    const RenderedView& rv = scene_->views[view];
    const std::size_t C = model_->channels;
    const LiftConfig lift_cfg = model_->lift_config();
    const std::size_t G = lift_cfg.groups;
    const std::size_t gs = C / G;
    const std::size_t D = lift_cfg.depth_bins;

    DenseGrid t({rv.U, rv.V, D, C});
    if (model_->cfg.soft_lift)
        splat_gather(vc.splat, g_final, t);
    else
        splat_gather_nearest(vc.splat, g_final, t);

    DenseGrid map({rv.U, rv.V, C});
    const DenseGrid& om = view_omega(vc);
    for (std::size_t px = 0; px < rv.U * rv.V; ++px)
        for (std::size_t d = 0; d < D; ++d) {
            const double* trow = t.data() + (px * D + d) * C;
            const double* omrow = om.data() + px * G * D;
            double* mrow = map.data() + px * C;
            for (std::size_t c = 0; c < C; ++c) mrow[c] += omrow[(c / gs) * D + d] * trow[c];
        }
    return map;
}

double Pipeline::causal_for_class(int cls) {
    SCAT_CHECK(forwarded_, "causal_for_class: call forward() first");
    compute_causal_chain(cls);
    const DenseGrid& g_final = chain_.back();
    const std::size_t C = model_->channels;
    const LiftConfig lift_cfg = model_->lift_config();
    const std::size_t G = lift_cfg.groups;
    const std::size_t gs = C / G;
    const std::size_t D = lift_cfg.depth_bins;

    double loss = 0.0;
    for (std::size_t i = 0; i < views_.size(); ++i) {
        ViewCache& vc = views_[i];
        const RenderedView& rv = scene_->views[i];
        vc.t = DenseGrid({rv.U, rv.V, D, C});
        if (model_->cfg.soft_lift)
            splat_gather(vc.splat, g_final, vc.t);
        else
            splat_gather_nearest(vc.splat, g_final, vc.t);

        vc.grad_map = DenseGrid({rv.U, rv.V, C});
        const DenseGrid& om = view_omega(vc);
        for (std::size_t px = 0; px < rv.U * rv.V; ++px)
            for (std::size_t d = 0; d < D; ++d) {
                const double* trow = vc.t.data() + (px * D + d) * C;
                const double* omrow = om.data() + px * G * D;
                double* mrow = vc.grad_map.data() + px * C;
                for (std::size_t c = 0; c < C; ++c) mrow[c] += omrow[(c / gs) * D + d] * trow[c];
            }
        vc.att = attention(vc.grad_map);
        loss += bce_loss(vc.att, rv.labels, cls, nullptr);
    }
    causal_cls_ = cls;
    return loss / static_cast<double>(views_.size());
}

double Pipeline::causal_sampled(SeededRng& rng, int* sampled_cls) {
    const std::vector<int> pool = causal_class_pool(scene_->world);
    SCAT_CHECK(!pool.empty(), "causal_sampled: no classes present in scene");
    const int cls = pool[rng.below(pool.size())];
    if (sampled_cls) *sampled_cls = cls;
    return causal_for_class(cls);
}

double Pipeline::exact_expected_causal() {
    const std::vector<int> pool = causal_class_pool(scene_->world);
    double sum = 0.0;
    for (int cls : pool) sum += causal_for_class(cls);
    return sum / static_cast<double>(pool.size());
}

const DenseGrid& Pipeline::attention_map(std::size_t view) const {
    SCAT_CHECK(causal_cls_ >= 0, "attention_map: compute a causal loss first");
    return views_[view].att;
}

const DenseGrid& Pipeline::fi_grad(std::size_t view) const {
    SCAT_CHECK(views_[view].d_fi.size() > 0, "fi_grad: backward(want_fi_grads=true) required");
    return views_[view].d_fi;
}

DenseGrid& Pipeline::stage_spatial_weights(std::size_t k) { return stages_[k].wsp; }
DenseGrid& Pipeline::stage_channel_weights(std::size_t k) { return stages_[k].wch; }

void Pipeline::backward(double d_ce, double d_causal, bool want_fi_grads) {
    SCAT_CHECK(forwarded_, "backward: call forward() first");
    SCAT_CHECK(d_causal == 0.0 || causal_cls_ >= 0,
               "backward: causal scale given but no causal state cached");
    const ModelConfig& cfg = model_->cfg;
    const LiftConfig lift_cfg = model_->lift_config();
    const OffsetConfig off_cfg = model_->offset_config();
    const std::size_t C = model_->channels;
    const std::size_t G = lift_cfg.groups;
    const std::size_t gs = C / G;
    const std::size_t D = lift_cfg.depth_bins;
    ParamStore& params = model_->params;

    for (auto& st : stages_) {
        st.d_wsp = DenseGrid(st.wsp.shape());
        st.d_wch = DenseGrid(st.wch.shape());
    }

    // Per-view gradient buffers filled by both loss paths.
    std::vector<DenseGrid> d_omega(views_.size());
    std::vector<DenseGrid> d_coord(views_.size());
    for (std::size_t i = 0; i < views_.size(); ++i) {
        const RenderedView& rv = scene_->views[i];
        d_omega[i] = DenseGrid({rv.U, rv.V, G, D});
        d_coord[i] = DenseGrid({rv.U, rv.V, D, 3});
        if (want_fi_grads) views_[i].d_fi = DenseGrid({rv.U, rv.V, C});
    }

    // --- occupancy CE path ---
    if (d_ce != 0.0) {
        DenseGrid d_logits(dec_.logits.shape());
        occupancy_ce(dec_.logits, scene_->world, &d_logits, d_ce);

        DenseGrid d_vol(f_out_.shape());
        decode_backward(dec_, f_out_, params, cfg.decoder_hidden, d_logits, params, &d_vol);

        for (std::size_t kk = stages_.size(); kk-- > 0;) {
            StageCache& st = stages_[kk];
            pointwise_kernel_grad(st.mid, d_vol, st.d_wch);
            DenseGrid d_mid = pointwise_adjoint(d_vol, st.wch);
            depthwise_kernel_grad(st.input, d_mid, st.d_wsp);
            d_vol = transposed_depthwise_adjoint(d_mid, st.wsp);
        }

        for (std::size_t i = 0; i < views_.size(); ++i) {
            ViewCache& vc = views_[i];
            const RenderedView& rv = scene_->views[i];
            SplatGrads sg;
            sg.d_omega = std::move(d_omega[i]);
            sg.d_coord = std::move(d_coord[i]);
            if (want_fi_grads) sg.d_fi = std::move(vc.d_fi);
            if (cfg.soft_lift)
                splat_soft_backward(rv.features, view_omega(vc), vc.splat, d_vol, true, sg);
            else
                splat_nearest_backward(rv.features, view_omega(vc), vc.splat, d_vol, sg);
            d_omega[i] = std::move(sg.d_omega);
            d_coord[i] = std::move(sg.d_coord);
            if (want_fi_grads) vc.d_fi = std::move(sg.d_fi);
        }
    }

    // --- causal path (adjoint-pass formulation differentiated as an
    // ordinary forward computation) ---
    if (d_causal != 0.0) {
        const double view_scale = d_causal / static_cast<double>(views_.size());
        DenseGrid d_g_final(chain_.back().shape());

        for (std::size_t i = 0; i < views_.size(); ++i) {
            ViewCache& vc = views_[i];
            const RenderedView& rv = scene_->views[i];
            const DenseGrid& om = view_omega(vc);

            DenseGrid d_att({rv.U, rv.V});
            bce_loss(vc.att, rv.labels, causal_cls_, &d_att, view_scale);

            // d grad_map = d_att / C per channel
            const double invC = 1.0 / static_cast<double>(C);
            for (std::size_t px = 0; px < rv.U * rv.V; ++px) {
                const double da = d_att[px] * invC;
                if (da == 0.0) continue;
                const double* omrow = om.data() + px * G * D;
                double* domrow = d_omega[i].data() + px * G * D;
                for (std::size_t d = 0; d < D; ++d) {
                    const SplatHypo& h = vc.splat.at(px / rv.V, px % rv.V, d);
                    const double* trow = vc.t.data() + (px * D + d) * C;
                    // d omega and d t
                    for (std::size_t g = 0; g < G; ++g) {
                        double tg = 0.0;
                        for (std::size_t c = g * gs; c < (g + 1) * gs; ++c) tg += trow[c];
                        domrow[g * D + d] += da * tg;
                    }
                    if (!h.active) continue;
                    if (cfg.soft_lift) {
                        double dc[3] = {0.0, 0.0, 0.0};
                        for (const TrilinearCorner& k : h.corners) {
                            if (!k.inside) continue;
                            const double* gf =
                                chain_.back().data() + static_cast<std::size_t>(k.flat) * C;
                            double* dgf =
                                d_g_final.data() + static_cast<std::size_t>(k.flat) * C;
                            double weighted = 0.0;
                            for (std::size_t c = 0; c < C; ++c) {
                                const double dt = da * omrow[(c / gs) * D + d];
                                dgf[c] += k.w * dt;
                                weighted += dt * gf[c];
                            }
                            dc[0] += weighted * k.dw[0];
                            dc[1] += weighted * k.dw[1];
                            dc[2] += weighted * k.dw[2];
                        }
                        double* dcrow = d_coord[i].data() + (px * D + d) * 3;
                        dcrow[0] += dc[0];
                        dcrow[1] += dc[1];
                        dcrow[2] += dc[2];
                    } else if (h.nearest_flat >= 0) {
                        double* dgf =
                            d_g_final.data() + static_cast<std::size_t>(h.nearest_flat) * C;
                        for (std::size_t c = 0; c < C; ++c)
                            dgf[c] += da * omrow[(c / gs) * D + d];
                    }
                }
            }
        }

        // Back through the adjoint chain in construction-reverse order.
        // chain_ = [ind, a_{K-1}, b_{K-1}, ..., a_0, b_0]; b_k = dw_adj(a_k),
        // a_k = pw_adj(prev).
        DenseGrid db = std::move(d_g_final);
        const std::size_t K = stages_.size();
        for (std::size_t k = 0; k < K; ++k) {
            StageCache& st = stages_[k];
            const DenseGrid& a_k = chain_[2 * (K - 1 - k) + 1];
            const DenseGrid& prev = chain_[2 * (K - 1 - k)];
            depthwise_kernel_grad(db, a_k, st.d_wsp);
            DenseGrid da = transposed_depthwise(db, st.wsp);
            pointwise_kernel_grad(da, prev, st.d_wch);
            db = pointwise(da, st.wch);
        }
    }

    // --- kernels: softmax backward into logit grads ---
    for (std::size_t k = 0; k < stages_.size(); ++k) {
        const std::string prefix = "conv" + std::to_string(k);
        normalize_spatial_backward(stages_[k].wsp, stages_[k].d_wsp,
                                   params.at(prefix + ".spatial").grad);
        normalize_channel_backward(stages_[k].wch, stages_[k].d_wch,
                                   params.at(prefix + ".channel").grad);
    }

    // --- heads ---
    for (std::size_t i = 0; i < views_.size(); ++i) {
        ViewCache& vc = views_[i];
        const RenderedView& rv = scene_->views[i];

        if (cfg.learnable_offsets && cfg.soft_lift) {
            DenseGrid d_pix({rv.U, rv.V, D, 3});
            std::array<double, 12> d_p{};
            coord_grads_to_inputs(vc.splat, lift_cfg, d_coord[i], &d_pix, &d_p);
            pixel_offset_backward(vc.poff, rv.features, params, off_cfg, d_pix, params,
                                  want_fi_grads ? &vc.d_fi : nullptr);
            global_offset_backward(vc.goff, params, off_cfg, d_p, params,
                                   want_fi_grads ? &vc.d_fi : nullptr);
        }
        if (!cfg.oracle_geometry) {
            lift_head_backward(vc.lift, rv.features, lift_cfg, params, cfg.lift_hidden,
                               d_omega[i], params, want_fi_grads ? &vc.d_fi : nullptr);
        }
    }
}

} // namespace scat
