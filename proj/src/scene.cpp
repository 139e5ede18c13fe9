// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "scat/check.hpp"

static_assert(std::endian::native == std::endian::little,
              "scene bundles assume a little-endian host");

namespace scat {

using ordered_json = nlohmann::ordered_json;

ProjectionMatrix CameraModel::back_projection() const {
    // K^-1 maps (u*d, v*d, d) to camera coords; R^T maps camera to world.
    const double kinv[9] = {1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0};
    ProjectionMatrix p;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += rot[k * 3 + r] * kinv[k * 3 + c]; // R^T * K^-1
            p(r, c) = s;
        }
        p(r, 3) = pos[r];
    }
    return p;
}

void SceneConfig::validate() const {
    SCAT_CHECK(grid[0] >= 6 && grid[1] >= 6 && grid[2] >= 6, "scene: all grid extents must be >= 6");
    SCAT_CHECK(classes >= 2, "scene: at least 2 semantic classes required");
    SCAT_CHECK(voxel_size > 0.0, "scene: voxel_size must be positive");
    SCAT_CHECK(box_min >= 1 && box_max >= box_min, "scene: invalid box size range");
    SCAT_CHECK(cameras >= 1, "scene: at least one camera");
    SCAT_CHECK(image_u >= 2 && image_v >= 2, "scene: image must be at least 2x2");
    SCAT_CHECK(embed_dim >= 1, "scene: embed_dim must be >= 1");
    SCAT_CHECK(focal > 0.0, "scene: focal must be positive");
    SCAT_CHECK(feature_noise >= 0.0, "scene: feature_noise must be >= 0");
}

VoxelGridSpec make_grid_spec(const SceneConfig& cfg) {
    VoxelGridSpec spec;
    spec.extents = cfg.grid;
    spec.origin = {0.0, 0.0, 0.0};
    spec.voxel_size = {cfg.voxel_size, cfg.voxel_size, cfg.voxel_size};
    return spec;
}

DenseGrid make_embeddings(std::size_t classes, std::size_t dim, std::uint64_t seed) {
    SeededRng rng(seed);
    DenseGrid emb({classes + 1, dim});
    for (std::size_t s = 0; s <= classes; ++s) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double v = rng.normal();
            emb[s * dim + c] = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
        for (std::size_t c = 0; c < dim; ++c) emb[s * dim + c] *= inv;
    }
    return emb;
}

SemanticWorld gen_world(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t H = cfg.grid[0], W = cfg.grid[1], Z = cfg.grid[2];

    for (int attempt = 0; attempt < 20; ++attempt) {
        SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
        SemanticWorld world;
        world.extents = cfg.grid;
        world.labels.assign(H * W * Z, 0);
        world.n_classes = cfg.classes;
        world.dynamic_flag.assign(cfg.classes + 1, false);
        for (std::size_t s = 1; s <= cfg.classes / 2; ++s) world.dynamic_flag[s] = true;

        for (std::size_t s = 1; s <= cfg.classes; ++s) {
            for (std::size_t b = 0; b < cfg.boxes_per_class; ++b) {
                // colliding placements are skipped after bounded retries
                for (int tries = 0; tries < 64; ++tries) {
                    std::size_t size[3], lo[3];
                    bool fits = true;
                    for (int a = 0; a < 3; ++a) {
                        size[a] = cfg.box_min + rng.below(cfg.box_max - cfg.box_min + 1);
                        if (size[a] > cfg.grid[a]) {
                            fits = false;
                            break;
                        }
                        lo[a] = rng.below(cfg.grid[a] - size[a] + 1);
                    }
                    if (!fits) continue;
                    bool clear = true;
                    for (std::size_t h = lo[0]; clear && h < lo[0] + size[0]; ++h)
                        for (std::size_t w = lo[1]; clear && w < lo[1] + size[1]; ++w)
                            for (std::size_t z = lo[2]; z < lo[2] + size[2]; ++z)
                                if (world.labels[world.flat(h, w, z)] != 0) {
                                    clear = false;
                                    break;
                                }
                    if (!clear) continue;
                    for (std::size_t h = lo[0]; h < lo[0] + size[0]; ++h)
                        for (std::size_t w = lo[1]; w < lo[1] + size[1]; ++w)
                            for (std::size_t z = lo[2]; z < lo[2] + size[2]; ++z)
                                world.labels[world.flat(h, w, z)] = static_cast<std::int32_t>(s);
                    break;
                }
            }
        }

        const auto counts = world.class_voxel_counts();
        std::size_t present = 0;
        for (std::size_t s = 1; s <= cfg.classes; ++s)
            if (counts[s] > 0) ++present;
        const double empty = world.empty_fraction();
        if (present >= 2 && empty >= 0.3 && empty <= 0.9) return world;
    }
    throw ValidationError("gen_world: could not satisfy world invariants after 20 attempts; "
                          "adjust box sizes / counts");
}

std::vector<CameraModel> make_camera_rig(const SceneConfig& cfg, const VoxelGridSpec& spec,
                                         std::uint64_t seed) {
    SeededRng rng(mix_seed(seed, 0xCA3E5Aull));
    const double cx_world[3] = {
        spec.origin[0] + 0.5 * spec.voxel_size[0] * static_cast<double>(spec.extents[0] - 1),
        spec.origin[1] + 0.5 * spec.voxel_size[1] * static_cast<double>(spec.extents[1] - 1),
        spec.origin[2] + 0.5 * spec.voxel_size[2] * static_cast<double>(spec.extents[2] - 1)};
    double radius = cfg.camera_radius;
    if (radius <= 0.0) {
        double m = 0.0;
        for (int a = 0; a < 3; ++a)
            m = std::max(m, spec.voxel_size[a] * static_cast<double>(spec.extents[a]));
        radius = 1.0 * m;
    }

    std::vector<CameraModel> rig;
    for (std::size_t i = 0; i < cfg.cameras; ++i) {
        const double phi = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(cfg.cameras) +
                           0.3 * rng.uniform();
        const double elev = 0.25 + 0.2 * rng.uniform();
        CameraModel cam;
        cam.fx = cam.fy = cfg.focal;
        cam.cx = 0.5 * static_cast<double>(cfg.image_u - 1);
        cam.cy = 0.5 * static_cast<double>(cfg.image_v - 1);
        cam.pos = {cx_world[0] + radius * std::cos(phi) * std::cos(elev),
                   cx_world[1] + radius * std::sin(phi) * std::cos(elev),
                   cx_world[2] + radius * std::sin(elev)};

        double f[3] = {cx_world[0] - cam.pos[0], cx_world[1] - cam.pos[1],
                       cx_world[2] - cam.pos[2]};
        double fn = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
        for (double& v : f) v /= fn;
        const double up[3] = {0.0, 0.0, 1.0};
        double right[3] = {f[1] * up[2] - f[2] * up[1], f[2] * up[0] - f[0] * up[2],
                           f[0] * up[1] - f[1] * up[0]};
        double rn = std::sqrt(right[0] * right[0] + right[1] * right[1] + right[2] * right[2]);
        SCAT_CHECK(rn > 1e-9, "make_camera_rig: degenerate camera orientation");
        for (double& v : right) v /= rn;
        const double down[3] = {f[1] * right[2] - f[2] * right[1],
                                f[2] * right[0] - f[0] * right[2],
                                f[0] * right[1] - f[1] * right[0]};
        // rows: right (image u), down (image v), forward (depth)
        cam.rot = {right[0], right[1], right[2], down[0], down[1], down[2], f[0], f[1], f[2]};
        rig.push_back(cam);
    }
    return rig;
}

double ray_box_entry(const std::array<double, 3>& origin, const std::array<double, 3>& dir,
                     const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
    double t_in = 0.0;
    double t_out = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-300) {
            if (origin[a] < lo[a] || origin[a] > hi[a])
                return std::numeric_limits<double>::infinity();
            continue;
        }
        double t0 = (lo[a] - origin[a]) / dir[a];
        double t1 = (hi[a] - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_in = std::max(t_in, t0);
        t_out = std::min(t_out, t1);
    }
    if (t_out < t_in) return std::numeric_limits<double>::infinity();
    return t_in;
}

namespace {

std::int32_t voxel_label_at_world(const SemanticWorld& world, const VoxelGridSpec& spec,
                                  const double pt[3]) {
    const Vec3 idx = spec.world_to_index({pt[0], pt[1], pt[2]});
    return world.label_at_index(idx);
}

} // namespace

RenderedView render_view(const SemanticWorld& world, const VoxelGridSpec& spec,
                         const CameraModel& camera, std::size_t U, std::size_t V) {
    RenderedView view;
    view.U = U;
    view.V = V;
    view.camera = camera;
    view.P = camera.back_projection();
    view.labels.assign(U * V, 0);
    view.depth = DenseGrid({U, V}, std::numeric_limits<double>::infinity());

    const ProjectionMatrix& p = view.P;
    std::array<double, 3> box_lo, box_hi;
    double min_vs = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        box_lo[a] = spec.origin[a] - 0.5 * spec.voxel_size[a];
        box_hi[a] = spec.origin[a] +
                    (static_cast<double>(spec.extents[a]) - 0.5) * spec.voxel_size[a];
        min_vs = std::min(min_vs, spec.voxel_size[a]);
    }

    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t v = 0; v < V; ++v) {
            // ray(d) = P * [u*d, v*d, d, 1] = origin + d * dir
            std::array<double, 3> o, dir;
            for (int r = 0; r < 3; ++r) {
                o[r] = p(r, 3);
                dir[r] = p(r, 0) * static_cast<double>(u) + p(r, 1) * static_cast<double>(v) +
                         p(r, 2);
            }
            const double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            if (dn < 1e-12) continue;
            const double t_in = ray_box_entry(o, dir, box_lo, box_hi);
            if (!std::isfinite(t_in)) continue;
            double t_out = std::numeric_limits<double>::infinity();
            for (int a = 0; a < 3; ++a) {
                if (std::abs(dir[a]) < 1e-300) continue;
                double t0 = (box_lo[a] - o[a]) / dir[a];
                double t1 = (box_hi[a] - o[a]) / dir[a];
                if (t0 > t1) std::swap(t0, t1);
                t_out = std::min(t_out, t1);
            }

            const double step = 0.25 * min_vs / dn; // 0.25-voxel world steps in depth units
            double prev = std::max(t_in, 0.0) + 1e-9;
            double hit = -1.0;
            const auto occupied = [&](double d) {
                const double pt[3] = {o[0] + d * dir[0], o[1] + d * dir[1], o[2] + d * dir[2]};
                return voxel_label_at_world(world, spec, pt) > 0;
            };
            if (occupied(prev)) {
                hit = prev;
            } else {
                for (double d = prev + step; d <= t_out + step; d += step) {
                    if (occupied(d)) {
                        // refine the entry point between the last empty sample
                        // and the first occupied one
                        double lo_d = prev, hi_d = d;
                        for (int it = 0; it < 48; ++it) {
                            const double mid = 0.5 * (lo_d + hi_d);
                            if (occupied(mid))
                                hi_d = mid;
                            else
                                lo_d = mid;
                        }
                        // keep the reported depth robustly inside the hit
                        // voxel rather than on its knife-edge face
                        hit = occupied(hi_d + 0.25 * step) ? hi_d + 0.25 * step : hi_d;
                        break;
                    }
                    prev = d;
                }
            }
            if (hit > 0.0) {
                const double pt[3] = {o[0] + hit * dir[0], o[1] + hit * dir[1],
                                      o[2] + hit * dir[2]};
                const std::int32_t label = voxel_label_at_world(world, spec, pt);
                view.labels[u * V + v] = label;
                view.depth[u * V + v] = hit;
            }
        }
    }
    return view;
}

void make_features(RenderedView& view, const DenseGrid& embeddings, double sigma,
                   std::uint64_t seed) {
    const std::size_t C = embeddings.extent(1);
    SeededRng rng(seed);
    view.features = DenseGrid({view.U, view.V, C});
    for (std::size_t px = 0; px < view.U * view.V; ++px) {
        const std::size_t label = static_cast<std::size_t>(view.labels[px]);
        for (std::size_t c = 0; c < C; ++c)
            view.features[px * C + c] =
                embeddings[label * C + c] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
    }
}

Scene build_scene(const SceneConfig& cfg, std::uint64_t scene_seed, const DenseGrid& embeddings) {
    cfg.validate();
    SCAT_CHECK(embeddings.rank() == 2 && embeddings.extent(0) == cfg.classes + 1 &&
                   embeddings.extent(1) == cfg.embed_dim,
               "build_scene: embedding table shape mismatch");
    Scene scene;
    scene.cfg = cfg;
    scene.seed = scene_seed;
    scene.spec = make_grid_spec(cfg);
    scene.world = gen_world(cfg, scene_seed);
    scene.embeddings = embeddings;
    const auto rig = make_camera_rig(cfg, scene.spec, scene_seed);
    for (std::size_t i = 0; i < rig.size(); ++i) {
        RenderedView view = render_view(scene.world, scene.spec, rig[i], cfg.image_u, cfg.image_v);
        make_features(view, embeddings, cfg.feature_noise, mix_seed(scene_seed, 101 + i));
        scene.views.push_back(std::move(view));
    }
    return scene;
}

// --- serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'T', 'S', 'C', 'N', '1'};

struct SectionDesc {
    std::string name, dtype;
    std::vector<std::size_t> shape;
    std::size_t offset = 0, nbytes = 0;
};

void append_bytes(std::string& payload, const void* src, std::size_t n) {
    const std::size_t off = payload.size();
    payload.resize(off + n);
    std::memcpy(payload.data() + off, src, n);
}

ordered_json config_to_json(const SceneConfig& cfg) {
    ordered_json j;
    j["grid"] = cfg.grid;
    j["voxel_size"] = cfg.voxel_size;
    j["classes"] = cfg.classes;
    j["boxes_per_class"] = cfg.boxes_per_class;
    j["box_min"] = cfg.box_min;
    j["box_max"] = cfg.box_max;
    j["cameras"] = cfg.cameras;
    j["image_u"] = cfg.image_u;
    j["image_v"] = cfg.image_v;
    j["focal"] = cfg.focal;
    j["camera_radius"] = cfg.camera_radius;
    j["embed_dim"] = cfg.embed_dim;
    j["feature_noise"] = cfg.feature_noise;
    return j;
}

SceneConfig config_from_json(const ordered_json& j) {
    SceneConfig cfg;
    cfg.grid = j.at("grid").get<std::array<std::size_t, 3>>();
    cfg.voxel_size = j.at("voxel_size").get<double>();
    cfg.classes = j.at("classes").get<std::size_t>();
    cfg.boxes_per_class = j.at("boxes_per_class").get<std::size_t>();
    cfg.box_min = j.at("box_min").get<std::size_t>();
    cfg.box_max = j.at("box_max").get<std::size_t>();
    cfg.cameras = j.at("cameras").get<std::size_t>();
    cfg.image_u = j.at("image_u").get<std::size_t>();
    cfg.image_v = j.at("image_v").get<std::size_t>();
    cfg.focal = j.at("focal").get<double>();
    cfg.camera_radius = j.at("camera_radius").get<double>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.feature_noise = j.at("feature_noise").get<double>();
    return cfg;
}

} // namespace

void save_scene(const Scene& scene, const std::string& path) {
    std::string payload;
    ordered_json sections = ordered_json::array();

    const auto add_f64 = [&](const std::string& name, const DenseGrid& g) {
        ordered_json s;
        s["name"] = name;
        s["dtype"] = "f64";
        s["shape"] = g.shape();
        s["offset"] = payload.size();
        s["nbytes"] = g.size() * sizeof(double);
        sections.push_back(s);
        append_bytes(payload, g.data(), g.size() * sizeof(double));
    };
    const auto add_i32 = [&](const std::string& name, const std::vector<std::int32_t>& v,
                             std::vector<std::size_t> shape) {
        ordered_json s;
        s["name"] = name;
        s["dtype"] = "i32";
        s["shape"] = shape;
        s["offset"] = payload.size();
        s["nbytes"] = v.size() * sizeof(std::int32_t);
        sections.push_back(s);
        append_bytes(payload, v.data(), v.size() * sizeof(std::int32_t));
    };

    add_i32("world_labels", scene.world.labels,
            {scene.world.extents[0], scene.world.extents[1], scene.world.extents[2]});
    add_f64("embeddings", scene.embeddings);
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
        const RenderedView& view = scene.views[i];
        const std::string prefix = "view" + std::to_string(i) + "/";
        add_i32(prefix + "labels", view.labels, {view.U, view.V});
        add_f64(prefix + "depth", view.depth);
        add_f64(prefix + "features", view.features);
    }

    ordered_json header;
    header["version"] = 1;
    header["seed"] = scene.seed;
    header["config"] = config_to_json(scene.cfg);
    std::vector<bool> dyn(scene.world.dynamic_flag.begin(), scene.world.dynamic_flag.end());
    header["dynamic_flags"] = dyn;
    ordered_json cams = ordered_json::array();
    for (const auto& view : scene.views) {
        ordered_json c;
        c["fx"] = view.camera.fx;
        c["fy"] = view.camera.fy;
        c["cx"] = view.camera.cx;
        c["cy"] = view.camera.cy;
        c["rot"] = view.camera.rot;
        c["pos"] = view.camera.pos;
        c["P"] = view.P.m;
        cams.push_back(c);
    }
    header["cameras"] = cams;
    header["sections"] = sections;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    SCAT_CHECK(out.good(), "save_scene: cannot open '", path, "' for writing");
    out.write(kMagic, 8);
    const std::uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    SCAT_CHECK(out.good(), "save_scene: write failed for '", path, "'");
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SCAT_CHECK(in.good(), "load_scene: cannot open '", path, "'");
    char magic[8];
    in.read(magic, 8);
    SCAT_CHECK(in.good() && std::memcmp(magic, kMagic, 8) == 0,
               "load_scene: '", path, "' is not a scene bundle (bad magic)");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    SCAT_CHECK(in.good(), "load_scene: truncated header in '", path, "'");
    ordered_json header = ordered_json::parse(header_str);
    SCAT_CHECK(header.at("version").get<int>() == 1, "load_scene: unsupported version");

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Scene scene;
    scene.cfg = config_from_json(header.at("config"));
    scene.seed = header.at("seed").get<std::uint64_t>();
    scene.spec = make_grid_spec(scene.cfg);

    const auto read_f64 = [&](const ordered_json& s) {
        DenseGrid g(s.at("shape").get<std::vector<std::size_t>>());
        const std::size_t off = s.at("offset").get<std::size_t>();
        const std::size_t n = s.at("nbytes").get<std::size_t>();
        SCAT_CHECK(off + n <= payload.size() && n == g.size() * sizeof(double),
                   "load_scene: bad f64 section bounds");
        std::memcpy(g.data(), payload.data() + off, n);
        return g;
    };
    const auto read_i32 = [&](const ordered_json& s) {
        const auto shape = s.at("shape").get<std::vector<std::size_t>>();
        std::vector<std::int32_t> v(shape_product(shape));
        const std::size_t off = s.at("offset").get<std::size_t>();
        const std::size_t n = s.at("nbytes").get<std::size_t>();
        SCAT_CHECK(off + n <= payload.size() && n == v.size() * sizeof(std::int32_t),
                   "load_scene: bad i32 section bounds");
        std::memcpy(v.data(), payload.data() + off, n);
        return v;
    };

    std::size_t view_count = header.at("cameras").size();
    scene.views.resize(view_count);
    for (const auto& s : header.at("sections")) {
        const std::string name = s.at("name").get<std::string>();
        if (name == "world_labels") {
            scene.world.extents = scene.cfg.grid;
            scene.world.labels = read_i32(s);
            scene.world.n_classes = scene.cfg.classes;
        } else if (name == "embeddings") {
            scene.embeddings = read_f64(s);
        } else if (name.rfind("view", 0) == 0) {
            const std::size_t slash = name.find('/');
            const std::size_t idx = std::stoul(name.substr(4, slash - 4));
            SCAT_CHECK(idx < view_count, "load_scene: view index out of range");
            RenderedView& view = scene.views[idx];
            view.U = scene.cfg.image_u;
            view.V = scene.cfg.image_v;
            const std::string field = name.substr(slash + 1);
            if (field == "labels")
                view.labels = read_i32(s);
            else if (field == "depth")
                view.depth = read_f64(s);
            else if (field == "features")
                view.features = read_f64(s);
        }
    }
    const auto dyn = header.at("dynamic_flags").get<std::vector<bool>>();
    scene.world.dynamic_flag.assign(dyn.begin(), dyn.end());
    for (std::size_t i = 0; i < view_count; ++i) {
        const auto& c = header.at("cameras")[i];
        CameraModel cam;
        cam.fx = c.at("fx").get<double>();
        cam.fy = c.at("fy").get<double>();
        cam.cx = c.at("cx").get<double>();
        cam.cy = c.at("cy").get<double>();
        cam.rot = c.at("rot").get<std::array<double, 9>>();
        cam.pos = c.at("pos").get<std::array<double, 3>>();
        scene.views[i].camera = cam;
        scene.views[i].P.m = c.at("P").get<std::array<double, 12>>();
    }
    return scene;
}

} // namespace scat
