// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scat/check.hpp"
#include "scat/gradcheck.hpp"
#include "scat/harness.hpp"

namespace scat {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kArtifact = "scat-occ";
constexpr const char* kVersion = "0.1.0";

class WallClock {
  public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    SCAT_CHECK(out.good(), "cannot open '", path, "' for writing");
    out << text;
    SCAT_CHECK(out.good(), "write failed for '", path, "'");
}

ordered_json record_header(const char* command, const ExperimentConfig& cfg, std::uint64_t seed) {
    ordered_json j;
    j["artifact"] = kArtifact;
    j["version"] = kVersion;
    j["command"] = command;
    j["config_hash"] = cfg.hash();
    j["seed"] = seed;
    j["config"] = cfg.to_json();
    return j;
}

void finish_record(const std::string& out_dir, ordered_json record, const WallClock& clock) {
    fs::create_directories(out_dir);
    write_text(out_dir + "/record.json", record.dump(2) + "\n");
    ordered_json timing;
    timing["wall_clock_seconds"] = clock.seconds();
    write_text(out_dir + "/timing.json", timing.dump(2) + "\n");
}

ordered_json metrics_to_json(const MetricsReport& m) {
    return ordered_json::parse(m.to_json());
}

std::string metrics_csv_row(const MetricsReport& m) {
    return format_double(m.miou) + "," + format_double(m.miou_dynamic) + "," +
           format_double(m.iou_occupied);
}

double median(std::vector<double> v) {
    SCAT_CHECK(!v.empty(), "median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

std::vector<Scene> build_scene_suite(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (!cfg.scenes_dir.empty()) return load_scene_suite(cfg.scenes_dir);
    const std::uint64_t suite_seed = mix_seed(seed, 0x5CE9E5ull);
    const DenseGrid emb =
        make_embeddings(cfg.scene.classes, cfg.scene.embed_dim, mix_seed(suite_seed, 0xE9BEDull));
    std::vector<Scene> scenes;
    scenes.reserve(cfg.scene_count);
    for (std::size_t i = 0; i < cfg.scene_count; ++i)
        scenes.push_back(build_scene(cfg.scene, mix_seed(suite_seed, i), emb));
    return scenes;
}

std::vector<Scene> load_scene_suite(const std::string& dir) {
    std::ifstream in(dir + "/index.json");
    SCAT_CHECK(in.good(), "load_scene_suite: cannot open '", dir, "/index.json'");
    ordered_json idx;
    in >> idx;
    std::vector<Scene> scenes;
    for (const auto& f : idx.at("files"))
        scenes.push_back(load_scene(dir + "/" + f.get<std::string>()));
    SCAT_CHECK(!scenes.empty(), "load_scene_suite: empty suite");
    return scenes;
}

MetricsReport evaluate_model(Model& model, const std::vector<Scene>& scenes, double eval_sigma,
                             std::uint64_t seed) {
    Confusion conf;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto ps = view_projections(scenes[i], eval_sigma, mix_seed(mix_seed(seed, 0xEE7ull), i));
        Pipeline p(model, scenes[i], std::move(ps));
        p.forward();
        conf.add(predict_labels(p.logits()), scenes[i].world);
    }
    return conf.report(scenes.front().world.dynamic_flag);
}

TrainOutput train_model(const ExperimentConfig& cfg, const std::vector<Scene>& scenes,
                        std::uint64_t seed, const TrainVariant& variant) {
    SCAT_CHECK(!scenes.empty(), "train_model: no scenes");
    ModelConfig mcfg = cfg.model;
    mcfg.oracle_geometry = variant.oracle_geometry;
    mcfg.learnable_offsets = variant.learnable_offsets;
    mcfg.soft_lift = variant.soft_lift;

    TrainOutput out{.losses = {},
                    .metrics = {},
                    .model = Model::init(mcfg, cfg.scene.embed_dim, cfg.scene.classes,
                                         mix_seed(seed, 0xA11ull))};
    Model& model = out.model;
    AdamW opt(cfg.optim.adam);
    const double weight = variant.causal_weight;
    const std::size_t batch = cfg.optim.batch;

    for (std::size_t step = 0; step < cfg.optim.steps; ++step) {
        model.params.zero_grads();
        double occ_mean = 0.0, causal_mean = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t idx = (step * batch + b) % scenes.size();
            const Scene& scene = scenes[idx];
            std::vector<ProjectionMatrix> ps =
                variant.train_sigma > 0.0
                    ? view_projections(scene, variant.train_sigma,
                                       mix_seed(mix_seed(seed, 0x401ull), step * batch + b))
                    : view_projections(scene, 0.0, 0);
            Pipeline p(model, scene, std::move(ps));
            p.forward();
            const double occ = p.occupancy_loss();
            double causal = 0.0;
            if (weight > 0.0) {
                SeededRng rng(mix_seed(mix_seed(seed, 0xCA05A1ull), step * batch + b));
                int cls = -1;
                causal = p.causal_sampled(rng, &cls);
            }
            SCAT_NUMERIC_CHECK(std::isfinite(occ) && std::isfinite(causal),
                               "train_model: non-finite loss at step ", step);
            p.backward(1.0 / static_cast<double>(batch),
                       weight > 0.0 ? weight / static_cast<double>(batch) : 0.0);
            occ_mean += occ / static_cast<double>(batch);
            causal_mean += causal / static_cast<double>(batch);
        }
        opt.step(model.params);
        out.losses.push_back({occ_mean, causal_mean, occ_mean + weight * causal_mean});
    }

    out.metrics = evaluate_model(model, scenes, variant.eval_sigma, seed);
    return out;
}

// --- commands ------------------------------------------------------------------

void cmd_gen_scenes(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);
    ExperimentConfig gen_cfg = cfg;
    gen_cfg.scenes_dir.clear(); // always generate here
    std::vector<Scene> scenes = build_scene_suite(gen_cfg, seed);

    ordered_json files = ordered_json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04zu.scatscn", i);
        save_scene(scenes[i], out_dir + "/" + name);
        files.push_back(name);
    }
    ordered_json index;
    index["count"] = scenes.size();
    index["files"] = files;
    write_text(out_dir + "/index.json", index.dump(2) + "\n");

    ordered_json record = record_header("gen-scenes", cfg, seed);
    record["scenes"] = scenes.size();
    finish_record(out_dir, std::move(record), clock);
}

void cmd_gradcheck(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);
    const auto suite = build_gradcheck_suite();
    const auto results = run_gradcheck_entries(suite, 10, mix_seed(seed, 0x6Cull));

    std::string csv = "operator,max_rel_err,tol,worst_flat_index,pass\n";
    ordered_json ops = ordered_json::array();
    std::string first_failure;
    for (const auto& r : results) {
        csv += r.name + "," + format_double(r.worst.max_rel_err) + "," + format_double(r.tol) +
               "," + std::to_string(r.worst.worst_index) + "," + (r.pass ? "1" : "0") + "\n";
        ordered_json o;
        o["name"] = r.name;
        o["max_rel_err"] = r.worst.max_rel_err;
        o["tol"] = r.tol;
        o["worst_flat_index"] = r.worst.worst_index;
        o["worst_analytic"] = r.worst.worst_analytic;
        o["worst_numeric"] = r.worst.worst_numeric;
        o["pass"] = r.pass;
        ops.push_back(o);
        if (!r.pass && first_failure.empty())
            first_failure = r.name + " (rel err " + format_double(r.worst.max_rel_err) +
                            " at flat index " + std::to_string(r.worst.worst_index) + ")";
    }
    write_text(out_dir + "/gradcheck.csv", csv);

    ordered_json record = record_header("gradcheck", cfg, seed);
    record["operators"] = ops;
    record["operator_count"] = results.size();
    record["all_pass"] = first_failure.empty();
    finish_record(out_dir, std::move(record), clock);

    if (!first_failure.empty())
        throw NumericalError("gradcheck failed: " + first_failure);
}

namespace {

void write_losses_csv(const std::string& path, const std::vector<std::array<double, 3>>& losses) {
    std::string csv = "step,occupancy,causal,total\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
        csv += std::to_string(i) + "," + format_double(losses[i][0]) + "," +
               format_double(losses[i][1]) + "," + format_double(losses[i][2]) + "\n";
    write_text(path, csv);
}

void emit_attention_rasters(const ExperimentConfig& cfg, Model& model, const Scene& scene,
                            const std::string& dir) {
    fs::create_directories(dir);
    Pipeline p(model, scene);
    p.forward();
    for (int cls : causal_class_pool(scene.world)) {
        p.causal_for_class(cls);
        for (std::size_t v = 0; v < scene.views.size(); ++v) {
            char name[64];
            std::snprintf(name, sizeof(name), "attention_class%d_view%zu.pgm", cls, v);
            write_pgm(dir + "/" + name, p.attention_map(v));
        }
    }
    (void)cfg;
}

} // namespace

void cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);
    std::vector<Scene> scenes = build_scene_suite(cfg, seed);
    TrainOutput result = train_model(cfg, scenes, seed, default_variant(cfg));

    write_losses_csv(out_dir + "/losses.csv", result.losses);
    write_text(out_dir + "/metrics.csv",
               "seed,miou,miou_d,iou\n" + std::to_string(seed) + "," +
                   metrics_csv_row(result.metrics) + "\n");

    ordered_json record = record_header("train", cfg, seed);
    record["steps"] = result.losses.size();
    record["initial_occupancy"] = result.losses.empty() ? 0.0 : result.losses.front()[0];
    record["final_occupancy"] = result.losses.empty() ? 0.0 : result.losses.back()[0];
    record["metrics"] = metrics_to_json(result.metrics);
    ordered_json trace = ordered_json::array();
    for (const auto& l : result.losses)
        trace.push_back(ordered_json::array({l[0], l[1], l[2]}));
    record["losses"] = trace;
    finish_record(out_dir, std::move(record), clock);

    if (cfg.emit_attention)
        emit_attention_rasters(cfg, result.model, scenes.front(), out_dir + "/attention");
}

void cmd_compare_causal(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);

    ordered_json record = record_header("compare-causal", cfg, seed);
    ordered_json runs = ordered_json::array();
    std::string metrics_csv = "variant,seed,miou,miou_d,iou\n";
    std::size_t improved = 0;
    std::size_t tail_lower = 0;

    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
        const std::uint64_t s = seed + k;
        std::vector<Scene> scenes = build_scene_suite(cfg, s);

        TrainVariant base = default_variant(cfg);
        base.causal_weight = 0.0;
        TrainVariant with = default_variant(cfg);
        SCAT_CHECK(with.causal_weight > 0.0,
                   "compare-causal: loss.causal_weight must be > 0 in the config");

        TrainOutput rb = train_model(cfg, scenes, s, base);
        TrainOutput rw = train_model(cfg, scenes, s, with);

        std::string csv = "step,occ_base,occ_causal,gap\n";
        double tail_base = 0.0, tail_with = 0.0;
        const std::size_t n = rb.losses.size();
        const std::size_t tail_start = n - n / 4;
        for (std::size_t i = 0; i < n; ++i) {
            const double gap = rb.losses[i][0] - rw.losses[i][0];
            csv += std::to_string(i) + "," + format_double(rb.losses[i][0]) + "," +
                   format_double(rw.losses[i][0]) + "," + format_double(gap) + "\n";
            if (i >= tail_start) {
                tail_base += rb.losses[i][0];
                tail_with += rw.losses[i][0];
            }
        }
        char name[64];
        std::snprintf(name, sizeof(name), "losses_seed%zu.csv", k);
        write_text(out_dir + "/" + name, csv);

        metrics_csv += "base," + std::to_string(s) + "," + metrics_csv_row(rb.metrics) + "\n";
        metrics_csv += "causal," + std::to_string(s) + "," + metrics_csv_row(rw.metrics) + "\n";

        const double final_base = rb.losses.back()[0];
        const double final_with = rw.losses.back()[0];
        if (final_with <= final_base) ++improved;
        if (tail_with < tail_base) ++tail_lower;

        ordered_json r;
        r["seed"] = s;
        r["final_occ_base"] = final_base;
        r["final_occ_causal"] = final_with;
        r["tail_mean_occ_base"] = tail_base / static_cast<double>(n - tail_start);
        r["tail_mean_occ_causal"] = tail_with / static_cast<double>(n - tail_start);
        r["metrics_base"] = metrics_to_json(rb.metrics);
        r["metrics_causal"] = metrics_to_json(rw.metrics);
        runs.push_back(r);
    }

    write_text(out_dir + "/metrics.csv", metrics_csv);
    record["runs"] = runs;
    record["seeds_final_not_worse"] = improved;
    record["seeds_tail_mean_lower"] = tail_lower;
    record["n_seeds"] = cfg.n_seeds;
    finish_record(out_dir, std::move(record), clock);
}

void cmd_oracle_gap(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);

    ordered_json record = record_header("oracle-gap", cfg, seed);
    ordered_json runs = ordered_json::array();
    std::string csv = "variant,seed,miou,miou_d,iou\n";
    std::vector<double> gaps;
    bool all_higher = true;

    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
        const std::uint64_t s = seed + k;
        std::vector<Scene> scenes = build_scene_suite(cfg, s);

        // Table-1 style comparison: plain lifting baselines on both sides,
        // no causal auxiliary, so the gap isolates the geometry information.
        TrainVariant learned = default_variant(cfg);
        learned.causal_weight = 0.0;
        TrainVariant oracle = default_variant(cfg);
        oracle.causal_weight = 0.0;
        oracle.oracle_geometry = true;
        oracle.learnable_offsets = false;

        TrainOutput rl = train_model(cfg, scenes, s, learned);
        TrainOutput ro = train_model(cfg, scenes, s, oracle);

        csv += "learned," + std::to_string(s) + "," + metrics_csv_row(rl.metrics) + "\n";
        csv += "oracle," + std::to_string(s) + "," + metrics_csv_row(ro.metrics) + "\n";

        const double gap = ro.metrics.miou - rl.metrics.miou;
        gaps.push_back(gap);
        if (!(ro.metrics.miou > rl.metrics.miou)) all_higher = false;

        ordered_json r;
        r["seed"] = s;
        r["learned"] = metrics_to_json(rl.metrics);
        r["oracle"] = metrics_to_json(ro.metrics);
        r["miou_gap"] = gap;
        runs.push_back(r);
    }

    write_text(out_dir + "/metrics.csv", csv);
    record["runs"] = runs;
    record["median_miou_gap"] = median(gaps);
    record["oracle_higher_in_every_seed"] = all_higher;
    finish_record(out_dir, std::move(record), clock);
}

void cmd_robustness(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);

    std::vector<double> sigmas = cfg.noise_sigmas;
    if (std::find(sigmas.begin(), sigmas.end(), 0.0) == sigmas.end())
        sigmas.insert(sigmas.begin(), 0.0);
    std::sort(sigmas.begin(), sigmas.end());

    ordered_json record = record_header("robustness", cfg, seed);
    std::string csv = "sigma,variant,seed,miou,miou_d,iou,drop_pct\n";
    ordered_json rows = ordered_json::array();

    // clean[variant][k] = sigma-0 mIoU per seed
    std::vector<std::vector<double>> clean(2, std::vector<double>(cfg.n_seeds, 0.0));
    const char* variant_names[2] = {"fixed", "offsets"};
    ordered_json med = ordered_json::array();

    for (double sigma : sigmas) {
        std::vector<std::vector<double>> drops(2);
        for (int vi = 0; vi < 2; ++vi) {
            for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
                const std::uint64_t s = seed + k;
                std::vector<Scene> scenes = build_scene_suite(cfg, s);
                TrainVariant var = default_variant(cfg);
                var.learnable_offsets = (vi == 1);
                var.train_sigma = sigma;
                var.eval_sigma = sigma;
                TrainOutput r = train_model(cfg, scenes, s, var);
                if (sigma == 0.0) clean[vi][k] = r.metrics.miou;
                const double drop = drop_pct(clean[vi][k], r.metrics.miou);
                drops[vi].push_back(drop);
                csv += format_double(sigma) + "," + std::string(variant_names[vi]) + "," +
                       std::to_string(s) + "," + metrics_csv_row(r.metrics) + "," +
                       format_double(drop) + "\n";
                ordered_json row;
                row["sigma"] = sigma;
                row["variant"] = variant_names[vi];
                row["seed"] = s;
                row["metrics"] = metrics_to_json(r.metrics);
                row["drop_pct"] = drop;
                rows.push_back(row);
            }
        }
        ordered_json m;
        m["sigma"] = sigma;
        m["median_drop_fixed"] = median(drops[0]);
        m["median_drop_offsets"] = median(drops[1]);
        med.push_back(m);
    }

    write_text(out_dir + "/metrics.csv", csv);
    record["rows"] = rows;
    record["median_drops"] = med;
    finish_record(out_dir, std::move(record), clock);
}

void cmd_theorem1(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);

    ordered_json record = record_header("theorem1", cfg, seed);
    std::string csv = "delta_m,seed,feat_dev,grad_dev,coord_grad_nearest,coord_grad_soft\n";
    // per delta: devs over seeds
    std::vector<std::vector<double>> feat_devs(cfg.delta_m.size()), grad_devs(cfg.delta_m.size());
    bool nearest_all_zero = true;
    bool soft_nonzero_at_positive = true;

    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
        const std::uint64_t s = seed + k;
        std::vector<Scene> scenes = build_scene_suite(cfg, s);

        ExperimentConfig ref_cfg = cfg;
        ref_cfg.optim.steps = cfg.theorem1_ref_steps;
        TrainVariant var = default_variant(cfg);
        var.learnable_offsets = true;
        var.soft_lift = true;
        TrainOutput ref = train_model(ref_cfg, scenes, s, var);

        // fixed error-direction field, unit vectors per (u, v, depth bin)
        SeededRng dir_rng(mix_seed(s, 0xD17ull));
        DenseGrid dirs({cfg.scene.image_u, cfg.scene.image_v, cfg.model.depth_bins, 3});
        for (std::size_t i = 0; i < dirs.size(); i += 3) {
            double n2 = 0.0;
            double v[3];
            for (double& x : v) {
                x = dir_rng.normal();
                n2 += x * x;
            }
            const double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
            for (int a = 0; a < 3; ++a) dirs[i + a] = v[a] * inv;
        }

        const std::size_t batch = std::min(cfg.optim.batch, scenes.size());
        const auto offset_names = ref.model.params.names_with_prefix("offset_");

        // one deterministic class per scene, fixed across the sweep
        std::vector<int> fixed_cls(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto pool = causal_class_pool(scenes[b].world);
            fixed_cls[b] = pool[mix_seed(s, b) % pool.size()];
        }

        const auto run_pass = [&](Model& model, double dm, std::vector<DenseGrid>* lifted_out)
            -> DenseGrid {
            model.params.zero_grads();
            for (std::size_t b = 0; b < batch; ++b) {
                CoordInjection inj{&dirs, dm};
                Pipeline p(model, scenes[b], view_projections(scenes[b], 0.0, 0), &inj);
                p.forward();
                if (cfg.causal_weight > 0.0) p.causal_for_class(fixed_cls[b]);
                p.backward(1.0 / static_cast<double>(batch),
                           cfg.causal_weight > 0.0
                               ? cfg.causal_weight / static_cast<double>(batch)
                               : 0.0);
                if (lifted_out) lifted_out->push_back(p.lifted());
            }
            return pack_grads(model.params, model.params.names());
        };

        std::vector<DenseGrid> lifted0;
        DenseGrid g0 = run_pass(ref.model, 0.0, &lifted0);

        Model nearest_model = ref.model;
        nearest_model.cfg.soft_lift = false;

        for (std::size_t di = 0; di < cfg.delta_m.size(); ++di) {
            const double dm = cfg.delta_m[di];
            std::vector<DenseGrid> lifted;
            DenseGrid g = run_pass(ref.model, dm, &lifted);

            double feat_dev2 = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t i = 0; i < lifted[b].size(); ++i) {
                    const double d = lifted[b][i] - lifted0[b][i];
                    feat_dev2 += d * d;
                }
            const double feat_dev = std::sqrt(feat_dev2);

            double grad_dev2 = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double d = g[i] - g0[i];
                grad_dev2 += d * d;
            }
            const double grad_dev = std::sqrt(grad_dev2);

            double soft_coord2 = 0.0;
            {
                DenseGrid og = pack_grads(ref.model.params, offset_names);
                for (std::size_t i = 0; i < og.size(); ++i) soft_coord2 += og[i] * og[i];
            }
            (void)run_pass(nearest_model, dm, nullptr);
            double nearest_coord2 = 0.0;
            {
                DenseGrid og = pack_grads(nearest_model.params, offset_names);
                for (std::size_t i = 0; i < og.size(); ++i) nearest_coord2 += og[i] * og[i];
            }

            const double soft_coord = std::sqrt(soft_coord2);
            const double nearest_coord = std::sqrt(nearest_coord2);
            if (nearest_coord != 0.0) nearest_all_zero = false;
            if (soft_coord == 0.0) soft_nonzero_at_positive = false;

            feat_devs[di].push_back(feat_dev);
            grad_devs[di].push_back(grad_dev);
            csv += format_double(dm) + "," + std::to_string(s) + "," + format_double(feat_dev) +
                   "," + format_double(grad_dev) + "," + format_double(nearest_coord) + "," +
                   format_double(soft_coord) + "\n";
        }
    }

    write_text(out_dir + "/metrics.csv", csv);

    ordered_json curves = ordered_json::array();
    bool feat_monotone = true, grad_monotone = true;
    double prev_f = -1.0, prev_g = -1.0;
    for (std::size_t di = 0; di < cfg.delta_m.size(); ++di) {
        const double mf = median(feat_devs[di]);
        const double mg = median(grad_devs[di]);
        if (di > 0) {
            if (mf < prev_f) feat_monotone = false;
            if (mg < prev_g) grad_monotone = false;
        }
        prev_f = mf;
        prev_g = mg;
        ordered_json c;
        c["delta_m"] = cfg.delta_m[di];
        c["median_feat_dev"] = mf;
        c["median_grad_dev"] = mg;
        curves.push_back(c);
    }
    record["curves"] = curves;
    record["feat_dev_monotone"] = feat_monotone;
    record["grad_dev_monotone"] = grad_monotone;
    record["nearest_coord_grads_all_zero"] = nearest_all_zero;
    record["soft_coord_grads_nonzero"] = soft_nonzero_at_positive;
    finish_record(out_dir, std::move(record), clock);
}

void cmd_estimator_test(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::string& out_dir) {
    WallClock clock;
    fs::create_directories(out_dir);

    std::vector<Scene> scenes = build_scene_suite(cfg, seed);
    const Scene& scene = scenes.front();
    Model model = Model::init(cfg.model, cfg.scene.embed_dim, cfg.scene.classes,
                              mix_seed(seed, 0xA11ull));
    Pipeline p(model, scene);
    p.forward();

    const std::vector<int> pool = causal_class_pool(scene.world);
    std::vector<double> class_loss(pool.size());
    double exact = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        class_loss[i] = p.causal_for_class(pool[i]);
        exact += class_loss[i];
    }
    exact /= static_cast<double>(pool.size());

    const std::size_t n = cfg.estimator_draws;
    SeededRng rng(mix_seed(seed, 0xE57ull));
    std::vector<std::size_t> counts(pool.size(), 0);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int cls = -1;
        const double loss = p.causal_sampled(rng, &cls);
        sum += loss;
        sum2 += loss * loss;
        for (std::size_t c = 0; c < pool.size(); ++c)
            if (pool[c] == cls) {
                counts[c]++;
                break;
            }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
    const double se = std::sqrt(var / static_cast<double>(n));
    const bool mean_ok = se > 0.0 ? std::abs(mean - exact) <= 3.0 * se : mean == exact;

    const double p_cls = 1.0 / static_cast<double>(pool.size());
    const double sigma_cls = std::sqrt(static_cast<double>(n) * p_cls * (1.0 - p_cls));
    bool uniform_ok = true;
    std::string csv = "class,count,expected,loss\n";
    for (std::size_t c = 0; c < pool.size(); ++c) {
        const double expected = static_cast<double>(n) * p_cls;
        if (std::abs(static_cast<double>(counts[c]) - expected) > 3.0 * sigma_cls)
            uniform_ok = false;
        csv += std::to_string(pool[c]) + "," + std::to_string(counts[c]) + "," +
               format_double(expected) + "," + format_double(class_loss[c]) + "\n";
    }
    write_text(out_dir + "/metrics.csv", csv);

    ordered_json record = record_header("estimator-test", cfg, seed);
    record["draws"] = n;
    record["pool"] = pool;
    record["exact_expected_loss"] = exact;
    record["mc_mean"] = mean;
    record["mc_se"] = se;
    record["mean_within_3se"] = mean_ok;
    record["class_frequencies_uniform"] = uniform_ok;
    finish_record(out_dir, std::move(record), clock);

    if (!mean_ok)
        throw NumericalError("estimator-test: Monte Carlo mean outside 3 standard errors");
    if (!uniform_ok)
        throw NumericalError("estimator-test: sampled class frequencies fail uniformity check");
}

} // namespace scat
