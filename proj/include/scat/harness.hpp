// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scat/model.hpp"
#include "scat/occhead.hpp"
#include "scat/scene.hpp"

namespace scat {

struct OptimConfig {
    AdamWConfig adam;
    std::size_t steps = 2000;
    std::size_t batch = 4;
};

struct ExperimentConfig {
    SceneConfig scene;
    std::size_t scene_count = 10;
    ModelConfig model;
    OptimConfig optim;
    double causal_weight = 0.02;
    std::vector<double> noise_sigmas = {0.0, 0.05}; // robustness sweep
    std::vector<double> delta_m = {0.0, 0.25, 0.5, 1.0, 2.0};
    std::size_t theorem1_ref_steps = 300;
    std::size_t n_seeds = 5;
    std::size_t estimator_draws = 100000;
    std::string scenes_dir; // optional: load bundles instead of generating
    bool emit_attention = false;

    /// Strict parse: unknown keys anywhere are rejected; missing keys keep
    /// their defaults.
    static ExperimentConfig from_json(const nlohmann::ordered_json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::ordered_json to_json() const;
    /// FNV-1a 64 over the canonical (sorted-key) dump.
    std::string hash() const;
};

struct TrainVariant {
    bool oracle_geometry = false;
    bool learnable_offsets = true;
    bool soft_lift = true;
    double causal_weight = 0.02;
    double train_sigma = 0.0; // fresh camera noise per scene per step
    double eval_sigma = 0.0;  // fixed per scene at evaluation
};

TrainVariant default_variant(const ExperimentConfig& cfg);

struct TrainOutput {
    std::vector<std::array<double, 3>> losses; // occupancy, causal, total
    MetricsReport metrics;
    Model model;
};

std::vector<Scene> build_scene_suite(const ExperimentConfig& cfg, std::uint64_t seed);
std::vector<Scene> load_scene_suite(const std::string& dir);

TrainOutput train_model(const ExperimentConfig& cfg, const std::vector<Scene>& scenes,
                        std::uint64_t seed, const TrainVariant& variant);

MetricsReport evaluate_model(Model& model, const std::vector<Scene>& scenes, double eval_sigma,
                             std::uint64_t seed);

/// Relative drop in Table-2 semantics: 100 * (noisy - clean) / clean
/// (negative when performance degrades).
double drop_pct(double clean, double noisy);

/// Locale-free shortest round-trip formatting used by every CSV/JSON writer.
std::string format_double(double v);

// Commands. Each writes record.json (and CSVs) under out_dir; deterministic
// given (config, seed). Wall-clock goes to a separate timing.json so
// record.json is bit-identical across reruns.
void cmd_gen_scenes(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_gradcheck(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_compare_causal(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::string& out_dir);
void cmd_robustness(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_theorem1(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_oracle_gap(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_estimator_test(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::string& out_dir);

} // namespace scat
