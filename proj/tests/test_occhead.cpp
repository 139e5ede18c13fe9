// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "scat/check.hpp"

#include <cmath>

#include "scat/occhead.hpp"
#include "test_util.hpp"

using namespace scat;

TEST_SUITE_BEGIN("occhead");

namespace {

SemanticWorld flat_world(std::array<std::size_t, 3> ext, std::size_t classes,
                         const std::vector<std::int32_t>& labels) {
    SemanticWorld w;
    w.extents = ext;
    w.labels = labels;
    w.n_classes = classes;
    w.dynamic_flag.assign(classes + 1, false);
    for (std::size_t s = 1; s <= classes / 2; ++s) w.dynamic_flag[s] = true;
    return w;
}

} // namespace

TEST_CASE("decode: zero parameters give uniform class probabilities") {
    ParamStore store;
    SeededRng rng(3);
    init_decoder_params(store, 4, 8, 5, rng);
    store.at("dec.w1").value.fill(0.0);
    store.at("dec.w2").value.fill(0.0);
    DenseGrid vol = random_normal(rng, {3, 3, 3, 4}, 0.0, 1.0);
    const DecoderCache cache = decode(vol, store, 8, 5);
    DenseGrid probs = occupancy_probabilities(cache.logits);
    for (std::size_t i = 0; i < probs.size(); ++i)
        CHECK(probs[i] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one per voxel") {
    ParamStore store;
    SeededRng rng(4);
    init_decoder_params(store, 4, 8, 4, rng);
    DenseGrid vol = random_normal(rng, {4, 4, 4, 4}, 0.0, 1.0);
    DenseGrid probs = occupancy_probabilities(decode(vol, store, 8, 4).logits);
    for (std::size_t x = 0; x < 64; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += probs[x * 4 + k];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("occupancy_ce: uniform prediction scores log(S+1)") {
    SemanticWorld world = flat_world({2, 2, 2}, 3, {0, 1, 2, 3, 0, 1, 2, 3});
    DenseGrid logits({2, 2, 2, 4}); // all zeros -> uniform
    CHECK(occupancy_ce(logits, world, nullptr) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("occupancy_ce: a +50 logit on the true class scores near zero") {
    SemanticWorld world = flat_world({2, 2, 1}, 2, {1, 2, 0, 1});
    DenseGrid logits({2, 2, 1, 3});
    for (std::size_t x = 0; x < 4; ++x)
        logits[x * 3 + static_cast<std::size_t>(world.labels[x])] = 50.0;
    CHECK(occupancy_ce(logits, world, nullptr) <= 1e-9);
}

TEST_CASE("occupancy_ce matches the scalar reference formula to 1e-12") {
    SeededRng rng(5);
    std::vector<std::int32_t> labels(27);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(4));
    SemanticWorld world = flat_world({3, 3, 3}, 3, labels);
    DenseGrid logits = random_normal(rng, {3, 3, 3, 4}, 0.0, 2.0);

    double ref = 0.0;
    for (std::size_t x = 0; x < 27; ++x) {
        double denom = 0.0;
        for (std::size_t k = 0; k < 4; ++k) denom += std::exp(logits[x * 4 + k]);
        ref -= std::log(std::exp(logits[x * 4 + static_cast<std::size_t>(labels[x])]) / denom);
    }
    ref /= 27.0;
    CHECK(std::abs(occupancy_ce(logits, world, nullptr) - ref) <= 1e-12);
}

TEST_CASE("evaluate: perfect prediction scores 1.0 on every metric") {
    SeededRng rng(6);
    std::vector<std::int32_t> labels(27);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(4));
    labels[0] = 1;
    labels[1] = 2;
    labels[2] = 3; // make sure everything is present
    SemanticWorld world = flat_world({3, 3, 3}, 3, labels);
    DenseGrid logits({3, 3, 3, 4});
    for (std::size_t x = 0; x < 27; ++x)
        logits[x * 4 + static_cast<std::size_t>(labels[x])] = 10.0;
    const MetricsReport m = evaluate(logits, world);
    CHECK(m.miou == 1.0);
    CHECK(m.miou_dynamic == 1.0);
    CHECK(m.iou_occupied == 1.0);
    for (double iou : m.class_iou) CHECK(iou == 1.0);
}

TEST_CASE("evaluate: all-empty prediction on a half-occupied world has binary IoU 0") {
    SemanticWorld world = flat_world({2, 2, 2}, 2, {1, 1, 1, 1, 0, 0, 0, 0});
    DenseGrid logits({2, 2, 2, 3});
    for (std::size_t x = 0; x < 8; ++x) logits[x * 3 + 0] = 10.0;
    const MetricsReport m = evaluate(logits, world);
    CHECK(m.iou_occupied == 0.0);
    CHECK(m.miou == 0.0);
}

TEST_CASE("evaluate: hand-counted 2x2x1 case with one flipped voxel") {
    // GT: two class-1 voxels, two empty. Prediction flips one class-1 to empty.
    SemanticWorld world = flat_world({2, 2, 1}, 2, {1, 1, 0, 0});
    DenseGrid logits({2, 2, 1, 3});
    logits[0 * 3 + 1] = 10.0; // correct class-1
    logits[1 * 3 + 0] = 10.0; // flipped to empty
    logits[2 * 3 + 0] = 10.0;
    logits[3 * 3 + 0] = 10.0;
    const MetricsReport m = evaluate(logits, world);
    // class 1: intersection 1, union 2
    REQUIRE(m.class_ids.size() == 1);
    CHECK(m.class_ids[0] == 1);
    CHECK(m.class_iou[0] == 0.5);
    CHECK(m.iou_occupied == 0.5);
    CHECK(m.miou == 0.5);
}

TEST_CASE("evaluate: argmax ties break toward the lower class id") {
    SemanticWorld world = flat_world({1, 1, 1}, 2, {0});
    DenseGrid logits({1, 1, 1, 3}, 1.0); // all equal
    const auto pred = predict_labels(logits);
    CHECK(pred[0] == 0);
}

TEST_CASE("metrics are stable under a consistent class relabeling") {
    SeededRng rng(7);
    std::vector<std::int32_t> gt(27), pd(27);
    for (std::size_t i = 0; i < 27; ++i) {
        gt[i] = static_cast<std::int32_t>(rng.below(4));
        pd[i] = static_cast<std::int32_t>(rng.below(4));
    }
    SemanticWorld world = flat_world({3, 3, 3}, 3, gt);

    // swap class ids 1 and 3 in both prediction and ground truth
    const auto swap13 = [](std::int32_t v) { return v == 1 ? 3 : (v == 3 ? 1 : v); };
    std::vector<std::int32_t> gt2(27), pd2(27);
    for (std::size_t i = 0; i < 27; ++i) {
        gt2[i] = swap13(gt[i]);
        pd2[i] = swap13(pd[i]);
    }
    SemanticWorld world2 = flat_world({3, 3, 3}, 3, gt2);

    Confusion c1, c2;
    c1.add(pd, world);
    c2.add(pd2, world2);
    // mIoU is permutation-invariant; use all-static flags so dynamics do not differ
    const MetricsReport m1 = c1.report(std::vector<bool>(4, false));
    const MetricsReport m2 = c2.report(std::vector<bool>(4, false));
    CHECK(m1.miou == doctest::Approx(m2.miou).epsilon(1e-15));
    CHECK(m1.iou_occupied == doctest::Approx(m2.iou_occupied).epsilon(1e-15));
}

TEST_CASE("evaluate is invariant to positive logit scaling") {
    SeededRng rng(8);
    std::vector<std::int32_t> labels(27);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(4));
    SemanticWorld world = flat_world({3, 3, 3}, 3, labels);
    DenseGrid logits = random_normal(rng, {3, 3, 3, 4}, 0.0, 1.0);
    DenseGrid scaled = logits;
    scaled.scale(7.5);
    const MetricsReport a = evaluate(logits, world);
    const MetricsReport b = evaluate(scaled, world);
    CHECK(a.miou == b.miou);
    CHECK(a.miou_dynamic == b.miou_dynamic);
    CHECK(a.iou_occupied == b.iou_occupied);
}

TEST_CASE("metrics report serializes to JSON") {
    MetricsReport m;
    m.class_ids = {1, 2};
    m.class_iou = {0.5, 0.25};
    m.miou = 0.375;
    m.miou_dynamic = 0.5;
    m.iou_occupied = 0.8;
    const std::string j = m.to_json();
    CHECK(j.find("\"miou\":0.375") != std::string::npos);
    CHECK(j.find("\"1\":0.5") != std::string::npos);
}

TEST_SUITE_END();
