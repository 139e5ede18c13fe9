// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "scat/check.hpp"

#include <cmath>

#include "scat/lifting.hpp"
#include "scat/normconv.hpp"
#include "test_util.hpp"

using namespace scat;

TEST_SUITE_BEGIN("normconv");

TEST_CASE("spatial softmax: zero logits give uniform 1/27 weights") {
    DenseGrid logits({3, 3, 3, 4});
    DenseGrid w = normalize_spatial(logits);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w[i] == doctest::Approx(1.0 / 27.0).epsilon(1e-14));
}

TEST_CASE("spatial softmax: a +50 logit saturates its position") {
    DenseGrid logits({3, 3, 3, 2});
    logits.at({1, 1, 1, 0}) = 50.0;
    DenseGrid w = normalize_spatial(logits);
    CHECK(w.at({1, 1, 1, 0}) >= 1.0 - 1e-9);
}

TEST_CASE("spatial softmax: per-channel sums are 1 within 1e-12 and entries positive") {
    SeededRng rng(41);
    DenseGrid logits = random_normal(rng, {3, 3, 3, 8}, 0.0, 2.0);
    DenseGrid w = normalize_spatial(logits);
    for (std::size_t c = 0; c < 8; ++c) {
        double s = 0.0;
        for (std::size_t pos = 0; pos < 27; ++pos) {
            CHECK(w[pos * 8 + c] > 0.0);
            s += w[pos * 8 + c];
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("channel softmax: rows are simplices; C=1 collapses to identity mixing") {
    SeededRng rng(42);
    DenseGrid logits = random_normal(rng, {5, 5}, 0.0, 2.0);
    DenseGrid w = normalize_channel(logits);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) s += w[r * 5 + c];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }

    DenseGrid one({1, 1}, 3.7);
    CHECK(normalize_channel(one)[0] == 1.0);
    DenseGrid vol = random_normal(rng, {3, 3, 3, 1}, 0.0, 1.0);
    DenseGrid out = pointwise(vol, normalize_channel(one));
    for (std::size_t i = 0; i < vol.size(); ++i) CHECK(out[i] == vol[i]);
}

TEST_CASE("transposed depthwise: one interior voxel with a uniform kernel spreads 1/27") {
    DenseGrid vol({6, 6, 6, 1});
    vol.at({3, 3, 3, 0}) = 1.0;
    DenseGrid w = normalize_spatial(DenseGrid({3, 3, 3, 1}));
    DenseGrid out = transposed_depthwise(vol, w);
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] != 0.0) {
            CHECK(out[i] == doctest::Approx(1.0 / 27.0).epsilon(1e-14));
            ++nonzero;
        }
    CHECK(nonzero == 27);
    CHECK(sum_all(out) == doctest::Approx(1.0).epsilon(1e-12));

    // boundary voxel keeps fewer neighbors and drops the rest
    DenseGrid corner({6, 6, 6, 1});
    corner.at({0, 0, 0, 0}) = 1.0;
    DenseGrid out2 = transposed_depthwise(corner, w);
    std::size_t reached = 0;
    for (std::size_t i = 0; i < out2.size(); ++i)
        if (out2[i] != 0.0) ++reached;
    CHECK(reached == 8);
    CHECK(sum_all(out2) == doctest::Approx(8.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("transposed depthwise: zero input maps to zero output") {
    SeededRng rng(43);
    DenseGrid w = normalize_spatial(random_normal(rng, {3, 3, 3, 4}, 0.0, 1.0));
    DenseGrid out = transposed_depthwise(DenseGrid({6, 6, 6, 4}), w);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("transposed depthwise conserves interior mass per channel to 1e-10") {
    SeededRng rng(44);
    DenseGrid w = normalize_spatial(random_normal(rng, {3, 3, 3, 3}, 0.0, 1.0));
    DenseGrid vol({8, 8, 8, 3});
    for (std::size_t h = 1; h < 7; ++h)
        for (std::size_t ww = 1; ww < 7; ++ww)
            for (std::size_t z = 1; z < 7; ++z)
                for (std::size_t c = 0; c < 3; ++c)
                    vol.at({h, ww, z, c}) = rng.normal();
    DenseGrid out = transposed_depthwise(vol, w);
    DenseGrid in_sum = reduce_sum(vol, {0, 1, 2});
    DenseGrid out_sum = reduce_sum(out, {0, 1, 2});
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(in_sum[c] - out_sum[c]) <= 1e-10);
}

TEST_CASE("pointwise: zero logits with C=4 mix one-hot input to 0.25 everywhere") {
    DenseGrid w = normalize_channel(DenseGrid({4, 4}));
    DenseGrid vol({3, 3, 3, 4});
    vol.at({1, 1, 1, 0}) = 1.0;
    DenseGrid out = pointwise(vol, w);
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(out.at({1, 1, 1, c}) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("pointwise conserves the per-voxel channel sum to 1e-12") {
    SeededRng rng(45);
    DenseGrid w = normalize_channel(random_normal(rng, {6, 6}, 0.0, 1.5));
    DenseGrid vol = random_normal(rng, {4, 4, 4, 6}, 0.0, 1.0);
    DenseGrid out = pointwise(vol, w);
    for (std::size_t x = 0; x < 64; ++x) {
        double si = 0.0, so = 0.0;
        for (std::size_t c = 0; c < 6; ++c) {
            si += vol[x * 6 + c];
            so += out[x * 6 + c];
        }
        CHECK(std::abs(si - so) <= 1e-12);
    }
}

TEST_CASE("adjoints are exact transposes: <Ax, y> equals <x, A^T y> to 1e-10") {
    SeededRng rng(46);
    DenseGrid wsp = normalize_spatial(random_normal(rng, {3, 3, 3, 4}, 0.0, 1.0));
    DenseGrid wch = normalize_channel(random_normal(rng, {4, 4}, 0.0, 1.0));
    for (int trial = 0; trial < 5; ++trial) {
        DenseGrid x = random_normal(rng, {5, 6, 7, 4}, 0.0, 1.0);
        DenseGrid y = random_normal(rng, {5, 6, 7, 4}, 0.0, 1.0);
        CHECK(std::abs(dot(transposed_depthwise(x, wsp), y) -
                       dot(x, transposed_depthwise_adjoint(y, wsp))) <= 1e-10);
        CHECK(std::abs(dot(pointwise(x, wch), y) - dot(x, pointwise_adjoint(y, wch))) <= 1e-10);
    }
}

TEST_CASE("composition stochasticity: a one-hot pixel deposits total mass at most 1") {
    test::LatticeInstance li = test::lattice_instance();
    const RenderedView& view = li.scene.views[0];
    const LiftConfig cfg{3, 1, 1.0, 3.0};
    SeededRng rng(47);

    DenseGrid omega({view.U, view.V, 1, 3});
    // a proper simplex per pixel
    for (std::size_t px = 0; px < view.U * view.V; ++px) {
        double s = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
            omega[px * 3 + d] = rng.uniform(0.1, 1.0);
            s += omega[px * 3 + d];
        }
        for (std::size_t d = 0; d < 3; ++d) omega[px * 3 + d] /= s;
    }

    SplatCache cache;
    build_splat_cache(view.P, li.spec, view.U, view.V, cfg, nullptr, nullptr, cache);
    const std::size_t C = 4;
    DenseGrid wsp = normalize_spatial(random_normal(rng, {3, 3, 3, C}, 0.0, 1.0));
    DenseGrid wch = normalize_channel(random_normal(rng, {C, C}, 0.0, 1.0));

    for (std::size_t px = 0; px < view.U * view.V; ++px) {
        DenseGrid fi({view.U, view.V, C});
        fi[px * C + 1] = 1.0;
        DenseGrid vol({li.spec.extents[0], li.spec.extents[1], li.spec.extents[2], C});
        splat_soft(fi, omega, cache, vol);
        DenseGrid out = pointwise(transposed_depthwise(vol, wsp), wch);
        const double mass = sum_all(out);
        CHECK(mass <= 1.0 + 1e-9);
        CHECK(mass >= -1e-12);
    }
}

TEST_CASE("kernel extents below 3 are rejected") {
    SeededRng rng(48);
    DenseGrid w = normalize_spatial(random_normal(rng, {3, 3, 3, 2}, 0.0, 1.0));
    DenseGrid small({2, 4, 4, 2});
    CHECK_THROWS_AS(transposed_depthwise(small, w), ValidationError);
}

TEST_SUITE_END();
