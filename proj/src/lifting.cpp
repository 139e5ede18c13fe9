// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/lifting.hpp"

#include <cmath>

#include "scat/check.hpp"
#include "scat/mlp.hpp"

namespace scat {

void init_lift_params(ParamStore& store, std::size_t channels, std::size_t hidden,
                      const LiftConfig& cfg, SeededRng& rng) {
    Param& w1 = store.add("lift.w1", {channels, hidden});
    store.add("lift.b1", {hidden});
    store.add("lift.w2", {hidden, cfg.groups * cfg.depth_bins});
    store.add("lift.b2", {cfg.groups * cfg.depth_bins});
    const double s = 1.0 / std::sqrt(static_cast<double>(channels));
    for (std::size_t i = 0; i < w1.value.size(); ++i) w1.value[i] = s * rng.normal();
}

LiftHeadCache predict_group_weights(const DenseGrid& fi, const LiftConfig& cfg,
                                    const ParamStore& store, std::size_t hidden) {
    SCAT_CHECK(fi.rank() == 3, "predict_group_weights: feature image must be U x V x C");
    const std::size_t U = fi.extent(0), V = fi.extent(1), C = fi.extent(2);
    SCAT_CHECK(C % cfg.groups == 0, "predict_group_weights: groups (", cfg.groups,
               ") must divide channels (", C, ")");
    const std::size_t rows = U * V;
    const std::size_t out = cfg.groups * cfg.depth_bins;

    const DenseGrid& w1 = store.at("lift.w1").value;
    const DenseGrid& b1 = store.at("lift.b1").value;
    const DenseGrid& w2 = store.at("lift.w2").value;
    const DenseGrid& b2 = store.at("lift.b2").value;

    LiftHeadCache cache;
    cache.hidden = DenseGrid({rows, hidden});
    affine_forward(fi.data(), rows, C, w1.data(), b1.data(), hidden, cache.hidden.data());
    tanh_forward(cache.hidden.data(), rows * hidden, cache.hidden.data());

    cache.omega = DenseGrid({U, V, cfg.groups, cfg.depth_bins});
    affine_forward(cache.hidden.data(), rows, hidden, w2.data(), b2.data(), out,
                   cache.omega.data());
    softmax_rows(cache.omega.data(), rows * cfg.groups, cfg.depth_bins);
    return cache;
}

void lift_head_backward(const LiftHeadCache& cache, const DenseGrid& fi, const LiftConfig& cfg,
                        const ParamStore& store, std::size_t hidden, const DenseGrid& d_omega,
                        ParamStore& grads_store, DenseGrid* d_fi) {
    const std::size_t rows = cache.hidden.extent(0);
    const std::size_t out = cfg.groups * cfg.depth_bins;
    const std::size_t C = fi.extent(2);

    DenseGrid d_logits({rows, out});
    softmax_backward_accum(cache.omega.data(), d_omega.data(), rows * cfg.groups, cfg.depth_bins,
                           d_logits.data());

    const DenseGrid& w1 = store.at("lift.w1").value;
    const DenseGrid& w2 = store.at("lift.w2").value;
    Param& gw1 = grads_store.at("lift.w1");
    Param& gb1 = grads_store.at("lift.b1");
    Param& gw2 = grads_store.at("lift.w2");
    Param& gb2 = grads_store.at("lift.b2");

    DenseGrid dh({rows, hidden});
    affine_backward(cache.hidden.data(), rows, hidden, w2.data(), out, d_logits.data(), dh.data(),
                    gw2.grad.data(), gb2.grad.data());

    DenseGrid dh_pre({rows, hidden});
    tanh_backward_accum(cache.hidden.data(), dh.data(), rows * hidden, dh_pre.data());

    affine_backward(fi.data(), rows, C, w1.data(), hidden, dh_pre.data(),
                    d_fi ? d_fi->data() : nullptr, gw1.grad.data(), gb1.grad.data());
}

double simplex_violation(const DenseGrid& omega) {
    const std::size_t D = omega.shape().back();
    const std::size_t rows = omega.size() / D;
    double worst = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += omega[r * D + d];
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

void trilinear_weights(const Vec3& coord, const VoxelGridSpec& spec,
                       std::array<TrilinearCorner, 8>& out) {
    const double c[3] = {coord.x, coord.y, coord.z};
    long base[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        base[a] = static_cast<long>(std::floor(c[a]));
        f[a] = c[a] - static_cast<double>(base[a]);
    }
    const long ext[3] = {static_cast<long>(spec.extents[0]), static_cast<long>(spec.extents[1]),
                         static_cast<long>(spec.extents[2])};

    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            for (int l = 0; l < 2; ++l) {
                TrilinearCorner& k = out[static_cast<std::size_t>(i * 4 + j * 2 + l)];
                k.idx = {base[0] + i, base[1] + j, base[2] + l};
                const double wx = i ? f[0] : 1.0 - f[0];
                const double wy = j ? f[1] : 1.0 - f[1];
                const double wz = l ? f[2] : 1.0 - f[2];
                k.w = wx * wy * wz;
                k.dw = {(i ? 1.0 : -1.0) * wy * wz, (j ? 1.0 : -1.0) * wx * wz,
                        (l ? 1.0 : -1.0) * wx * wy};
                k.inside = k.idx[0] >= 0 && k.idx[0] < ext[0] && k.idx[1] >= 0 &&
                           k.idx[1] < ext[1] && k.idx[2] >= 0 && k.idx[2] < ext[2];
                k.flat = k.inside
                             ? (k.idx[0] * ext[1] + k.idx[1]) * ext[2] + k.idx[2]
                             : -1;
            }
        }
    }
}

void build_splat_cache(const ProjectionMatrix& p_eff, const VoxelGridSpec& spec, std::size_t U,
                       std::size_t V, const LiftConfig& cfg, const DenseGrid* pixel_offsets,
                       const CoordInjection* inject, SplatCache& cache) {
    cache.U = U;
    cache.V = V;
    cache.D = cfg.depth_bins;
    for (int a = 0; a < 3; ++a) cache.inv_voxel_size[a] = 1.0 / spec.voxel_size[a];
    cache.hypos.assign(U * V * cfg.depth_bins, SplatHypo{});

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            for (std::size_t d = 0; d < cfg.depth_bins; ++d) {
                SplatHypo& h = cache.hypos[(u * V + v) * cfg.depth_bins + d];
                double uu = static_cast<double>(u);
                double vv = static_cast<double>(v);
                double bb = static_cast<double>(d);
                if (pixel_offsets) {
                    const std::size_t off = ((u * V + v) * cfg.depth_bins + d) * 3;
                    uu += (*pixel_offsets)[off + 0];
                    vv += (*pixel_offsets)[off + 1];
                    bb += (*pixel_offsets)[off + 2];
                }
                const double depth = cfg.bin_depth(bb);
                if (depth <= 0.0) continue; // invalid hypothesis, no mass, no gradient

                Vec3 coord = project(p_eff, uu, vv, depth, spec);
                if (inject && inject->direction) {
                    const std::size_t off = ((u * V + v) * cfg.depth_bins + d) * 3;
                    coord.x += inject->magnitude * (*inject->direction)[off + 0];
                    coord.y += inject->magnitude * (*inject->direction)[off + 1];
                    coord.z += inject->magnitude * (*inject->direction)[off + 2];
                }
                if (!spec.index_in_margin_band(coord)) continue; // out of frustum: mass dropped

                h.active = true;
                h.coord = coord;
                h.depth = depth;
                h.hom = {uu * depth, vv * depth, depth, 1.0};
                trilinear_weights(coord, spec, h.corners);
                project_jacobian(p_eff, uu, vv, depth, spec, h.j_du, h.j_dv, h.j_dd);

                const long hn = static_cast<long>(std::floor(coord.x + 0.5));
                const long wn = static_cast<long>(std::floor(coord.y + 0.5));
                const long zn = static_cast<long>(std::floor(coord.z + 0.5));
                if (hn >= 0 && wn >= 0 && zn >= 0 && hn < static_cast<long>(spec.extents[0]) &&
                    wn < static_cast<long>(spec.extents[1]) &&
                    zn < static_cast<long>(spec.extents[2]))
                    h.nearest_flat = (hn * static_cast<long>(spec.extents[1]) + wn) *
                                         static_cast<long>(spec.extents[2]) +
                                     zn;
            }
        }
    }
}

namespace {

inline std::size_t group_of(std::size_t c, std::size_t group_size) { return c / group_size; }

} // namespace

void splat_soft(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                DenseGrid& volume) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = fi.extent(2);
    const std::size_t G = omega.extent(2);
    SCAT_CHECK(C % G == 0, "splat_soft: groups must divide channels");
    const std::size_t gs = C / G;

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const double* f = fi.data() + (u * V + v) * C;
            const double* om = omega.data() + (u * V + v) * G * D;
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active) continue;
                for (const TrilinearCorner& k : h.corners) {
                    if (!k.inside || k.w == 0.0) continue;
                    double* out = volume.data() + static_cast<std::size_t>(k.flat) * C;
                    for (std::size_t c = 0; c < C; ++c)
                        out[c] += om[group_of(c, gs) * D + d] * k.w * f[c];
                }
            }
        }
    }
}

void splat_nearest(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                   DenseGrid& volume) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = fi.extent(2);
    const std::size_t G = omega.extent(2);
    const std::size_t gs = C / G;

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const double* f = fi.data() + (u * V + v) * C;
            const double* om = omega.data() + (u * V + v) * G * D;
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active || h.nearest_flat < 0) continue;
                double* out = volume.data() + static_cast<std::size_t>(h.nearest_flat) * C;
                for (std::size_t c = 0; c < C; ++c) out[c] += om[group_of(c, gs) * D + d] * f[c];
            }
        }
    }
}

void init_splat_grads(SplatGrads& grads, std::size_t U, std::size_t V, std::size_t G,
                      std::size_t D, std::size_t C, bool want_fi) {
    grads.d_omega = DenseGrid({U, V, G, D});
    grads.d_coord = DenseGrid({U, V, D, 3});
    grads.d_p.fill(0.0);
    if (want_fi) grads.d_fi = DenseGrid({U, V, C});
}

void splat_soft_backward(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                         const DenseGrid& d_volume, bool want_coords, SplatGrads& grads) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = fi.extent(2);
    const std::size_t G = omega.extent(2);
    const std::size_t gs = C / G;
    const bool want_fi = grads.d_fi.size() > 0;

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const double* f = fi.data() + (u * V + v) * C;
            const double* om = omega.data() + (u * V + v) * G * D;
            double* dom = grads.d_omega.data() + (u * V + v) * G * D;
            double* df = want_fi ? grads.d_fi.data() + (u * V + v) * C : nullptr;
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active) continue;
                double dc[3] = {0.0, 0.0, 0.0};
                for (const TrilinearCorner& k : h.corners) {
                    if (!k.inside) continue;
                    const double* dv = d_volume.data() + static_cast<std::size_t>(k.flat) * C;
                    double weighted = 0.0; // sum_c omega_gd * f_c * dv_c
                    for (std::size_t g = 0; g < G; ++g) {
                        const double og = om[g * D + d];
                        double fg = 0.0; // sum over channels in group of f_c * dv_c
                        for (std::size_t c = g * gs; c < (g + 1) * gs; ++c) fg += f[c] * dv[c];
                        dom[g * D + d] += k.w * fg;
                        weighted += og * fg;
                        if (want_fi)
                            for (std::size_t c = g * gs; c < (g + 1) * gs; ++c)
                                df[c] += k.w * og * dv[c];
                    }
                    if (want_coords) {
                        dc[0] += weighted * k.dw[0];
                        dc[1] += weighted * k.dw[1];
                        dc[2] += weighted * k.dw[2];
                    }
                }
                if (want_coords) {
                    double* out = grads.d_coord.data() + ((u * V + v) * D + d) * 3;
                    out[0] += dc[0];
                    out[1] += dc[1];
                    out[2] += dc[2];
                }
            }
        }
    }
}

void splat_nearest_backward(const DenseGrid& fi, const DenseGrid& omega, const SplatCache& cache,
                            const DenseGrid& d_volume, SplatGrads& grads) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = fi.extent(2);
    const std::size_t G = omega.extent(2);
    const std::size_t gs = C / G;
    const bool want_fi = grads.d_fi.size() > 0;

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const double* f = fi.data() + (u * V + v) * C;
            const double* om = omega.data() + (u * V + v) * G * D;
            double* dom = grads.d_omega.data() + (u * V + v) * G * D;
            double* df = want_fi ? grads.d_fi.data() + (u * V + v) * C : nullptr;
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active || h.nearest_flat < 0) continue;
                const double* dv = d_volume.data() + static_cast<std::size_t>(h.nearest_flat) * C;
                for (std::size_t g = 0; g < G; ++g) {
                    double fg = 0.0;
                    for (std::size_t c = g * gs; c < (g + 1) * gs; ++c) fg += f[c] * dv[c];
                    dom[g * D + d] += fg;
                    if (want_fi)
                        for (std::size_t c = g * gs; c < (g + 1) * gs; ++c)
                            df[c] += om[g * D + d] * dv[c];
                }
                // Hard rounding: no coordinate or P gradients by construction.
            }
        }
    }
}

void splat_gather(const SplatCache& cache, const DenseGrid& g, DenseGrid& t) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = g.shape().back();
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                double* out = t.data() + ((u * V + v) * D + d) * C;
                if (!h.active) continue;
                for (const TrilinearCorner& k : h.corners) {
                    if (!k.inside || k.w == 0.0) continue;
                    const double* in = g.data() + static_cast<std::size_t>(k.flat) * C;
                    for (std::size_t c = 0; c < C; ++c) out[c] += k.w * in[c];
                }
            }
        }
    }
}

void splat_gather_nearest(const SplatCache& cache, const DenseGrid& g, DenseGrid& t) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const std::size_t C = g.shape().back();
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active || h.nearest_flat < 0) continue;
                const double* in = g.data() + static_cast<std::size_t>(h.nearest_flat) * C;
                double* out = t.data() + ((u * V + v) * D + d) * C;
                for (std::size_t c = 0; c < C; ++c) out[c] += in[c];
            }
        }
    }
}

void coord_grads_to_inputs(const SplatCache& cache, const LiftConfig& cfg,
                           const DenseGrid& d_coord, DenseGrid* d_pixel_offsets,
                           std::array<double, 12>* d_p_extra) {
    const std::size_t U = cache.U, V = cache.V, D = cache.D;
    const double step = cfg.bin_step();
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            for (std::size_t d = 0; d < D; ++d) {
                const SplatHypo& h = cache.at(u, v, d);
                if (!h.active) continue;
                const double* dc = d_coord.data() + ((u * V + v) * D + d) * 3;
                if (d_pixel_offsets) {
                    double* out = d_pixel_offsets->data() + ((u * V + v) * D + d) * 3;
                    out[0] += dc[0] * h.j_du.x + dc[1] * h.j_du.y + dc[2] * h.j_du.z;
                    out[1] += dc[0] * h.j_dv.x + dc[1] * h.j_dv.y + dc[2] * h.j_dv.z;
                    // depth offset is in bin units; chain through bin_depth.
                    out[2] += (dc[0] * h.j_dd.x + dc[1] * h.j_dd.y + dc[2] * h.j_dd.z) * step;
                }
                if (d_p_extra) {
                    // coord[r] = (sum_c P[r][c]*hom[c] - origin[r]) / vs[r]
                    for (int r = 0; r < 3; ++r)
                        for (int c = 0; c < 4; ++c)
                            (*d_p_extra)[static_cast<std::size_t>(r * 4 + c)] +=
                                dc[r] * h.hom[static_cast<std::size_t>(c)] *
                                cache.inv_voxel_size[static_cast<std::size_t>(r)];
                }
            }
        }
    }
}

DenseGrid scl_oracle_geometry(const SemanticWorld& world, const std::vector<std::int32_t>& label2d,
                              std::size_t U, std::size_t V, const ProjectionMatrix& p,
                              const VoxelGridSpec& spec, const LiftConfig& cfg) {
    SCAT_CHECK(label2d.size() == U * V, "scl_oracle_geometry: label image size mismatch");
    DenseGrid geom({U, V, cfg.depth_bins});
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            const std::int32_t s = label2d[u * V + v];
            for (std::size_t d = 0; d < cfg.depth_bins; ++d) {
                const double depth = cfg.bin_depth(static_cast<double>(d));
                if (depth <= 0.0) continue;
                const Vec3 idx = project(p, static_cast<double>(u), static_cast<double>(v), depth,
                                         spec);
                if (world.label_at_index(idx) == s) geom[(u * V + v) * cfg.depth_bins + d] = 1.0;
            }
        }
    }
    return geom;
}

} // namespace scat
