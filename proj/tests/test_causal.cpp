// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "scat/check.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scat/causal.hpp"
#include "scat/model.hpp"
#include "test_util.hpp"

using namespace scat;

TEST_SUITE_BEGIN("causal");

TEST_CASE("influence: D=1, weight 0.7 onto one voxel of the class gives 0.7 per channel") {
    // minimal hand-built chain: indicator gather through a weight-1 splat
    SemanticWorld world;
    world.extents = {6, 6, 6};
    world.labels.assign(216, 0);
    world.n_classes = 2;
    world.dynamic_flag.assign(3, false);
    world.labels[world.flat(2, 3, 4)] = 1;

    const std::size_t C = 5;
    DenseGrid indicator = class_indicator_volume(world, 1, C);
    CHECK(sum_all(indicator) == static_cast<double>(C));

    SplatCache cache;
    cache.U = 1;
    cache.V = 1;
    cache.D = 1;
    cache.hypos.assign(1, SplatHypo{});
    SplatHypo& h = cache.hypos[0];
    h.active = true;
    h.coord = {2, 3, 4};
    h.depth = 1.0;
    trilinear_weights(h.coord, {{6, 6, 6}, {0, 0, 0}, {1, 1, 1}}, h.corners);

    DenseGrid t({1, 1, 1, C});
    splat_gather(cache, indicator, t);
    DenseGrid map({1, 1, C});
    for (std::size_t c = 0; c < C; ++c) map[c] = 0.7 * t[c]; // omega = p_d = 0.7
    for (std::size_t c = 0; c < C; ++c) CHECK(map[c] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("attention: channel mean, constants preserved, range preserved") {
    DenseGrid m({2, 2, 3}, 0.4);
    DenseGrid a = attention(m);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(0.4).epsilon(1e-15));

    DenseGrid m2({1, 1, 2});
    m2[0] = 0.2;
    m2[1] = 0.6;
    CHECK(attention(m2)[0] == doctest::Approx(0.4).epsilon(1e-15));

    SeededRng rng(3);
    DenseGrid m3 = random_uniform(rng, {4, 4, 8}, 0.0, 1.0);
    DenseGrid a3 = attention(m3);
    for (std::size_t i = 0; i < a3.size(); ++i) {
        CHECK(a3[i] >= 0.0);
        CHECK(a3[i] <= 1.0);
    }
}

TEST_CASE("bce: perfect 0/1 prediction costs only the clamp epsilon") {
    DenseGrid a({2, 2});
    a[0] = 1.0;
    a[1] = 0.0;
    a[2] = 0.0;
    a[3] = 1.0;
    std::vector<std::int32_t> labels = {1, 2, 0, 1};
    const double loss = bce_loss(a, labels, 1, nullptr);
    CHECK(loss == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-9));
    CHECK(loss <= 2e-7);
}

TEST_CASE("bce: a flat 0.5 map costs log 2") {
    DenseGrid a({3, 3}, 0.5);
    std::vector<std::int32_t> labels(9, 1);
    labels[4] = 0;
    CHECK(bce_loss(a, labels, 1, nullptr) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce matches the scalar reference on random 3x3 inputs to 1e-12") {
    SeededRng rng(5);
    DenseGrid a = random_uniform(rng, {3, 3}, 0.01, 0.99);
    std::vector<std::int32_t> labels(9);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(3));
    double ref = 0.0;
    for (std::size_t p = 0; p < 9; ++p) {
        const double y = labels[p] == 2 ? 1.0 : 0.0;
        ref -= y * std::log(a[p]) + (1.0 - y) * std::log(1.0 - a[p]);
    }
    ref /= 9.0;
    CHECK(std::abs(bce_loss(a, labels, 2, nullptr) - ref) <= 1e-12);
}

TEST_CASE("class pool contains exactly the classes present, including empty") {
    SemanticWorld world;
    world.extents = {6, 6, 6};
    world.labels.assign(216, 0);
    world.n_classes = 3;
    world.dynamic_flag.assign(4, false);
    world.labels[0] = 2; // class 1 and 3 absent
    const auto pool = causal_class_pool(world);
    CHECK(pool == std::vector<int>{0, 2});
}

TEST_CASE("single-class pool always samples that class") {
    SemanticWorld world;
    world.extents = {6, 6, 6};
    world.labels.assign(216, 1); // only class 1, empty absent
    world.n_classes = 2;
    world.dynamic_flag.assign(3, false);
    CHECK(causal_class_pool(world) == std::vector<int>{1});
}

// --- full-pipeline properties -------------------------------------------------

namespace {

struct CausalFixture {
    Scene scene;
    Model model;
    CausalFixture(std::uint64_t seed, std::size_t conv_stages, bool offsets)
        : scene(test::tiny_scene(seed)),
          model(Model::init(
              [&] {
                  ModelConfig cfg = test::tiny_model_config();
                  cfg.conv_stages = conv_stages;
                  cfg.learnable_offsets = offsets;
                  return cfg;
              }(),
              8, 3, mix_seed(seed, 1))) {}
};

} // namespace

TEST_CASE("influence maps stay in [0, 1 + 1e-9] and partition into the all-grid map") {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        CausalFixture fx(seed, 1, false);
        Pipeline p(fx.model, fx.scene);
        p.forward();

        DenseGrid total;
        for (std::size_t s = 0; s <= 3; ++s) {
            DenseGrid m = p.influence_map(static_cast<int>(s), 0);
            CHECK(influence_in_range(m));
            if (total.size() == 0)
                total = m;
            else
                total.axpy(1.0, m);
        }
        // the all-grid influence map: indicator over every voxel
        SemanticWorld all = fx.scene.world;
        for (auto& l : all.labels) l = 1;
        all.n_classes = 1;
        Scene all_scene = fx.scene;
        all_scene.world = all;
        ModelConfig cfg1 = fx.model.cfg;
        Model m1 = Model::init(cfg1, 8, 1, mix_seed(seed, 1));
        // reuse the same transformation parameters (decoder shape differs only)
        for (const auto& name : m1.params.names())
            if (name.rfind("dec.", 0) != 0)
                m1.params.at(name).value = fx.model.params.at(name).value;
        Pipeline p1(m1, all_scene);
        p1.forward();
        DenseGrid all_map = p1.influence_map(1, 0);
        REQUIRE(all_map.size() == total.size());
        for (std::size_t i = 0; i < total.size(); ++i)
            CHECK(std::abs(total[i] - all_map[i]) <= 1e-10);
    }
}

namespace {

// Every (pixel, depth-bin) hypothesis lands on a strictly interior lattice
// point: P = [I | (1,1,0)] maps (u, v, d) to (u*d + 1, v*d + 1, d) for
// u, v in {0, 1} and d in {1, 2, 3}, all one voxel away from the 6x6x5
// boundary, so neither the splat nor the depthwise scatter loses mass.
Scene interior_all_grid_scene() {
    Scene scene;
    SceneConfig cfg = test::tiny_scene_config();
    cfg.grid = {6, 6, 5};
    cfg.image_u = 2;
    cfg.image_v = 2;
    cfg.classes = 1;
    scene.cfg = cfg;
    scene.seed = 77;
    scene.spec = {{6, 6, 5}, {0, 0, 0}, {1.0, 1.0, 1.0}};

    scene.world.extents = {6, 6, 5};
    scene.world.labels.assign(6 * 6 * 5, 1);
    scene.world.n_classes = 1;
    scene.world.dynamic_flag.assign(2, false);

    RenderedView view;
    view.U = 2;
    view.V = 2;
    view.P = ProjectionMatrix::identity_depth();
    view.P(0, 3) = 1.0;
    view.P(1, 3) = 1.0;
    view.labels.assign(4, 1);
    view.depth = DenseGrid({2, 2}, 1.0);
    DenseGrid emb = make_embeddings(1, 8, 5);
    make_features(view, emb, 0.05, 9);
    scene.embeddings = std::move(emb);
    scene.views.push_back(std::move(view));
    return scene;
}

} // namespace

TEST_CASE("all-grid influence is exactly 1 per pixel-channel when nothing exits the grid") {
    Scene scene = interior_all_grid_scene();
    ModelConfig cfg = test::tiny_model_config();
    cfg.depth_bins = 3;
    cfg.d_min = 1.0;
    cfg.d_max = 3.0;
    cfg.conv_stages = 1;
    Model model = Model::init(cfg, 8, 1, 21);
    Pipeline p(model, scene);
    p.forward();
    DenseGrid map = p.influence_map(1, 0);
    CHECK(map.size() == 2 * 2 * 8);
    for (std::size_t i = 0; i < map.size(); ++i)
        CHECK(map[i] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("influence map equals the brute-force feature Jacobian row sums") {
    // linearity identity on small instances: central differences on the
    // forward volume, rows summed over the class region
    for (std::uint64_t seed : {31ull, 32ull}) {
        CausalFixture fx(seed, 1, false);
        Pipeline p(fx.model, fx.scene);
        p.forward();

        const RenderedView& view = fx.scene.views[0];
        const std::size_t C = 8;
        for (int cls : causal_class_pool(fx.scene.world)) {
            DenseGrid analytic = p.influence_map(cls, 0);
            const double h = 1e-5;
            for (std::size_t probe = 0; probe < 10; ++probe) {
                SeededRng rng(mix_seed(seed, 1000 + probe));
                const std::size_t idx = rng.below(view.U * view.V * C);

                Scene mutated = fx.scene;
                mutated.views[0].features[idx] += h;
                Pipeline pp(fx.model, mutated);
                pp.forward();
                double up = 0.0;
                for (std::size_t x = 0; x < fx.scene.world.voxel_count(); ++x)
                    if (fx.scene.world.labels[x] == cls)
                        for (std::size_t c = 0; c < C; ++c) up += pp.volume()[x * C + c];

                mutated.views[0].features[idx] -= 2 * h;
                Pipeline pm(fx.model, mutated);
                pm.forward();
                double down = 0.0;
                for (std::size_t x = 0; x < fx.scene.world.voxel_count(); ++x)
                    if (fx.scene.world.labels[x] == cls)
                        for (std::size_t c = 0; c < C; ++c) down += pm.volume()[x * C + c];

                const double numeric = (up - down) / (2 * h);
                CHECK(std::abs(analytic[idx] - numeric) <=
                      1e-6 * std::max(1.0, std::abs(numeric)));
            }
        }
    }
}

TEST_CASE("unnormalized kernels are caught by the range check (fault fixture)") {
    Scene scene = interior_all_grid_scene();
    ModelConfig cfg = test::tiny_model_config();
    cfg.depth_bins = 3;
    cfg.d_min = 1.0;
    cfg.d_max = 3.0;
    Model model = Model::init(cfg, 8, 1, 22);
    Pipeline p(model, scene);
    p.forward();
    CHECK(influence_in_range(p.influence_map(1, 0)));

    // substitute an unnormalized spatial kernel: every weight 1 instead of a
    // simplex over the 27 positions
    p.stage_spatial_weights(0).fill(1.0);
    CHECK_FALSE(influence_in_range(p.influence_map(1, 0)));
}

TEST_CASE("sampled causal loss is an unbiased estimator with uniform class draws") {
    CausalFixture fx(41, 1, false);
    Pipeline p(fx.model, fx.scene);
    p.forward();

    const auto pool = causal_class_pool(fx.scene.world);
    const double exact = p.exact_expected_causal();
    // exact expectation equals the mean of the per-class losses
    double manual = 0.0;
    for (int cls : pool) manual += p.causal_for_class(cls);
    manual /= static_cast<double>(pool.size());
    CHECK(exact == doctest::Approx(manual).epsilon(1e-15));

    const std::size_t n = 20000;
    SeededRng rng(99);
    std::vector<std::size_t> counts(pool.size(), 0);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int cls = -1;
        const double loss = p.causal_sampled(rng, &cls);
        sum += loss;
        sum2 += loss * loss;
        for (std::size_t k = 0; k < pool.size(); ++k)
            if (pool[k] == cls) counts[k]++;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - exact) <= 3.0 * se);

    const double pc = 1.0 / static_cast<double>(pool.size());
    const double sigma = std::sqrt(n * pc * (1 - pc));
    for (std::size_t k = 0; k < pool.size(); ++k)
        CHECK(std::abs(static_cast<double>(counts[k]) - n * pc) <= 3.0 * sigma);
}

TEST_CASE("identical per-class maps give the single-class loss as the expectation") {
    // one class present plus empty: pool has two entries; if both losses are
    // computed from the same map structure the mean matches element-wise
    CausalFixture fx(43, 0, false);
    Pipeline p(fx.model, fx.scene);
    p.forward();
    const auto pool = causal_class_pool(fx.scene.world);
    double mean = 0.0;
    for (int cls : pool) mean += p.causal_for_class(cls);
    mean /= static_cast<double>(pool.size());
    CHECK(p.exact_expected_causal() == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("attention rasters export as PGM") {
    CausalFixture fx(44, 1, false);
    Pipeline p(fx.model, fx.scene);
    p.forward();
    p.causal_for_class(causal_class_pool(fx.scene.world).front());
    const std::string path =
        (std::filesystem::temp_directory_path() / "scat_attention.pgm").string();
    write_pgm(path, p.attention_map(0));
    std::ifstream in(path, std::ios::binary);
    std::string header(2, '\0');
    in.read(header.data(), 2);
    CHECK(header == "P5");
    std::filesystem::remove(path);
}

TEST_SUITE_END();
