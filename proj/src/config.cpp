// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <fstream>

#include "scat/check.hpp"
#include "scat/harness.hpp"

namespace scat {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    SCAT_CHECK(ec == std::errc(), "format_double: conversion failed");
    return std::string(buf, ptr);
}

namespace {

void check_keys(const ordered_json& j, std::initializer_list<const char*> allowed,
                const char* ctx) {
    SCAT_CHECK(j.is_object(), "config: '", ctx, "' must be a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        SCAT_CHECK(ok, "config: unknown key '", item.key(), "' in '", ctx, "'");
    }
}

template <typename T>
void get_if(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
    ExperimentConfig cfg;
    check_keys(j,
               {"scene", "scene_count", "model", "optim", "loss", "noise", "theorem1", "n_seeds",
                "estimator_draws", "scenes_dir", "emit_attention"},
               "<root>");

    if (j.contains("scene")) {
        const auto& s = j.at("scene");
        check_keys(s,
                   {"grid", "voxel_size", "classes", "boxes_per_class", "box_min", "box_max",
                    "cameras", "image_u", "image_v", "focal", "camera_radius", "embed_dim",
                    "feature_noise"},
                   "scene");
        get_if(s, "grid", cfg.scene.grid);
        get_if(s, "voxel_size", cfg.scene.voxel_size);
        get_if(s, "classes", cfg.scene.classes);
        get_if(s, "boxes_per_class", cfg.scene.boxes_per_class);
        get_if(s, "box_min", cfg.scene.box_min);
        get_if(s, "box_max", cfg.scene.box_max);
        get_if(s, "cameras", cfg.scene.cameras);
        get_if(s, "image_u", cfg.scene.image_u);
        get_if(s, "image_v", cfg.scene.image_v);
        get_if(s, "focal", cfg.scene.focal);
        get_if(s, "camera_radius", cfg.scene.camera_radius);
        get_if(s, "embed_dim", cfg.scene.embed_dim);
        get_if(s, "feature_noise", cfg.scene.feature_noise);
    }
    get_if(j, "scene_count", cfg.scene_count);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m,
                   {"depth_bins", "groups", "conv_stages", "lift_hidden", "offset_hidden",
                    "decoder_hidden", "d_min", "d_max", "offset_scale", "p_offset_scale",
                    "learnable_offsets", "soft_lift", "oracle_geometry"},
                   "model");
        get_if(m, "depth_bins", cfg.model.depth_bins);
        get_if(m, "groups", cfg.model.groups);
        get_if(m, "conv_stages", cfg.model.conv_stages);
        get_if(m, "lift_hidden", cfg.model.lift_hidden);
        get_if(m, "offset_hidden", cfg.model.offset_hidden);
        get_if(m, "decoder_hidden", cfg.model.decoder_hidden);
        get_if(m, "d_min", cfg.model.d_min);
        get_if(m, "d_max", cfg.model.d_max);
        get_if(m, "offset_scale", cfg.model.offset_scale);
        get_if(m, "p_offset_scale", cfg.model.p_offset_scale);
        get_if(m, "learnable_offsets", cfg.model.learnable_offsets);
        get_if(m, "soft_lift", cfg.model.soft_lift);
        get_if(m, "oracle_geometry", cfg.model.oracle_geometry);
    }

    if (j.contains("optim")) {
        const auto& o = j.at("optim");
        check_keys(o, {"lr", "beta1", "beta2", "eps", "weight_decay", "steps", "batch"}, "optim");
        get_if(o, "lr", cfg.optim.adam.lr);
        get_if(o, "beta1", cfg.optim.adam.beta1);
        get_if(o, "beta2", cfg.optim.adam.beta2);
        get_if(o, "eps", cfg.optim.adam.eps);
        get_if(o, "weight_decay", cfg.optim.adam.weight_decay);
        get_if(o, "steps", cfg.optim.steps);
        get_if(o, "batch", cfg.optim.batch);
    }

    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        check_keys(l, {"causal_weight"}, "loss");
        get_if(l, "causal_weight", cfg.causal_weight);
    }

    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        check_keys(n, {"sigmas"}, "noise");
        get_if(n, "sigmas", cfg.noise_sigmas);
    }

    if (j.contains("theorem1")) {
        const auto& t = j.at("theorem1");
        check_keys(t, {"delta_m", "ref_steps"}, "theorem1");
        get_if(t, "delta_m", cfg.delta_m);
        get_if(t, "ref_steps", cfg.theorem1_ref_steps);
    }

    get_if(j, "n_seeds", cfg.n_seeds);
    get_if(j, "estimator_draws", cfg.estimator_draws);
    get_if(j, "scenes_dir", cfg.scenes_dir);
    get_if(j, "emit_attention", cfg.emit_attention);

    // validation before any compute
    cfg.scene.validate();
    SCAT_CHECK(cfg.scene_count >= 1, "config: scene_count must be >= 1");
    SCAT_CHECK(cfg.n_seeds >= 1, "config: n_seeds must be >= 1");
    SCAT_CHECK(cfg.optim.batch >= 1, "config: batch must be >= 1");
    SCAT_CHECK(cfg.model.oracle_geometry || cfg.scene.embed_dim % cfg.model.groups == 0,
               "config: model.groups must divide scene.embed_dim");
    SCAT_CHECK(cfg.model.d_max > cfg.model.d_min && cfg.model.d_min > 0.0,
               "config: bad model depth range");
    SCAT_CHECK(cfg.causal_weight >= 0.0, "config: causal_weight must be >= 0");
    for (double s : cfg.noise_sigmas) SCAT_CHECK(s >= 0.0, "config: noise sigmas must be >= 0");
    SCAT_CHECK(cfg.estimator_draws >= 100, "config: estimator_draws must be >= 100");
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    SCAT_CHECK(in.good(), "config: cannot open '", path, "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config: JSON parse error: ") + e.what());
    }
    return from_json(j);
}

ordered_json ExperimentConfig::to_json() const {
    ordered_json j;
    ordered_json s;
    s["grid"] = scene.grid;
    s["voxel_size"] = scene.voxel_size;
    s["classes"] = scene.classes;
    s["boxes_per_class"] = scene.boxes_per_class;
    s["box_min"] = scene.box_min;
    s["box_max"] = scene.box_max;
    s["cameras"] = scene.cameras;
    s["image_u"] = scene.image_u;
    s["image_v"] = scene.image_v;
    s["focal"] = scene.focal;
    s["camera_radius"] = scene.camera_radius;
    s["embed_dim"] = scene.embed_dim;
    s["feature_noise"] = scene.feature_noise;
    j["scene"] = s;
    j["scene_count"] = scene_count;

    ordered_json m;
    m["depth_bins"] = model.depth_bins;
    m["groups"] = model.groups;
    m["conv_stages"] = model.conv_stages;
    m["lift_hidden"] = model.lift_hidden;
    m["offset_hidden"] = model.offset_hidden;
    m["decoder_hidden"] = model.decoder_hidden;
    m["d_min"] = model.d_min;
    m["d_max"] = model.d_max;
    m["offset_scale"] = model.offset_scale;
    m["p_offset_scale"] = model.p_offset_scale;
    m["learnable_offsets"] = model.learnable_offsets;
    m["soft_lift"] = model.soft_lift;
    m["oracle_geometry"] = model.oracle_geometry;
    j["model"] = m;

    ordered_json o;
    o["lr"] = optim.adam.lr;
    o["beta1"] = optim.adam.beta1;
    o["beta2"] = optim.adam.beta2;
    o["eps"] = optim.adam.eps;
    o["weight_decay"] = optim.adam.weight_decay;
    o["steps"] = optim.steps;
    o["batch"] = optim.batch;
    j["optim"] = o;

    j["loss"] = ordered_json{{"causal_weight", causal_weight}};
    j["noise"] = ordered_json{{"sigmas", noise_sigmas}};
    j["theorem1"] = ordered_json{{"delta_m", delta_m}, {"ref_steps", theorem1_ref_steps}};
    j["n_seeds"] = n_seeds;
    j["estimator_draws"] = estimator_draws;
    j["scenes_dir"] = scenes_dir;
    j["emit_attention"] = emit_attention;
    return j;
}

std::string ExperimentConfig::hash() const {
    // canonical: sorted keys
    const nlohmann::json sorted = nlohmann::json::parse(to_json().dump());
    const std::string dump = sorted.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

double drop_pct(double clean, double noisy) {
    if (clean == 0.0) return 0.0;
    return 100.0 * (noisy - clean) / clean;
}

TrainVariant default_variant(const ExperimentConfig& cfg) {
    TrainVariant v;
    v.oracle_geometry = cfg.model.oracle_geometry;
    v.learnable_offsets = cfg.model.learnable_offsets;
    v.soft_lift = cfg.model.soft_lift;
    v.causal_weight = cfg.causal_weight;
    return v;
}

} // namespace scat
