// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "scat/check.hpp"

#include <limits>

#include "scat/gradcheck.hpp"
#include "scat/grid.hpp"
#include "scat/params.hpp"
#include "scat/rng.hpp"

using namespace scat;

TEST_SUITE_BEGIN("diffcore");

TEST_CASE("dense grid shape and storage invariants") {
    DenseGrid g({2, 3, 4});
    CHECK(g.size() == 24);
    CHECK(g.rank() == 3);
    g.at({1, 2, 3}) = 7.0;
    CHECK(g[g.size() - 1] == 7.0);
    CHECK(g.all_finite());
    CHECK_THROWS_AS(DenseGrid({2, 0, 3}), ValidationError);
}

TEST_CASE("reduce_sum: all-ones 2x3 over both axes gives 6") {
    DenseGrid g({2, 3}, 1.0);
    DenseGrid r = reduce_sum(g, {0, 1});
    CHECK(r.size() == 1);
    CHECK(r[0] == 6.0);
}

TEST_CASE("reduce_sum: zero grid sums to zero") {
    DenseGrid g({4, 5});
    CHECK(reduce_sum(g, {0, 1})[0] == 0.0);
}

TEST_CASE("reduce_sum: empty axis list is an identity copy") {
    SeededRng rng(3);
    DenseGrid g = random_normal(rng, {3, 3}, 0.0, 1.0);
    DenseGrid r = reduce_sum(g, {});
    REQUIRE(r.same_shape(g));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(r[i] == g[i]);
}

TEST_CASE("reduce_sum: bit-identical across repeated runs") {
    SeededRng rng(99);
    DenseGrid g = random_normal(rng, {5, 5}, 0.0, 1.0);
    DenseGrid a = reduce_sum(g, {1});
    DenseGrid b = reduce_sum(g, {1});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("reduce_sum keeps remaining axes in order") {
    DenseGrid g({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) g[i] = static_cast<double>(i);
    DenseGrid r = reduce_sum(g, {1}); // shape 2x2
    CHECK(r.at({0, 0}) == 0.0 + 2.0);
    CHECK(r.at({0, 1}) == 1.0 + 3.0);
    CHECK(r.at({1, 0}) == 4.0 + 6.0);
    CHECK(r.at({1, 1}) == 5.0 + 7.0);
}

TEST_CASE("seeded rng reproduces value sequences exactly") {
    SeededRng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    SeededRng c(123), d(123);
    for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
    CHECK(SeededRng(1).fork(7).next_u64() == SeededRng(1).fork(7).next_u64());
    CHECK(SeededRng(1).fork(7).next_u64() != SeededRng(1).fork(8).next_u64());
}

TEST_CASE("rng draws stay in range") {
    SeededRng rng(5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.uniform() < 1.0);
        CHECK(rng.below(7) < 7);
    }
}

TEST_CASE("param store pairs every parameter with a same-shape grad buffer") {
    ParamStore store;
    store.add("a", {3, 4});
    store.add("b", {5});
    for (const auto& name : store.names()) {
        const Param& p = store.at(name);
        CHECK(p.value.same_shape(p.grad));
    }
    store.at("a").grad.fill(2.5);
    store.zero_grads();
    for (std::size_t i = 0; i < store.at("a").grad.size(); ++i)
        CHECK(store.at("a").grad[i] == 0.0);
    CHECK_THROWS_AS(store.add("a", {1}), ValidationError);
    CHECK_THROWS_AS(store.at("missing"), ValidationError);
}

TEST_CASE("pack/unpack round-trips parameter subsets") {
    ParamStore store;
    store.add("x", {2, 2});
    store.add("y", {3});
    SeededRng rng(11);
    for (auto& n : store.names())
        for (std::size_t i = 0; i < store.at(n).value.size(); ++i)
            store.at(n).value[i] = rng.normal();
    DenseGrid packed = pack_values(store, {"x", "y"});
    CHECK(packed.size() == 7);
    DenseGrid modified = packed;
    modified[3] += 1.0;
    unpack_values(store, {"x", "y"}, modified);
    CHECK(store.at("x").value[3] == packed[3] + 1.0);
}

TEST_CASE("adamw steps are deterministic and respect the step counter") {
    auto make = [] {
        ParamStore s;
        s.add("w", {4});
        for (std::size_t i = 0; i < 4; ++i) {
            s.at("w").value[i] = 1.0;
            s.at("w").grad[i] = 0.5;
        }
        return s;
    };
    ParamStore s1 = make(), s2 = make();
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    AdamW o1(cfg), o2(cfg);
    o1.step(s1);
    o2.step(s2);
    CHECK(s1.step_count() == 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s1.at("w").value[i] == s2.at("w").value[i]);
    // the first Adam step moves by about lr against the gradient sign
    CHECK(s1.at("w").value[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
}

TEST_CASE("vjp_check: elementwise doubling is exact to 1e-10") {
    SeededRng rng(21);
    DenseGrid x = random_normal(rng, {4, 4, 8}, 0.0, 1.0);
    DenseGrid ct = random_normal(rng, {4, 4, 8}, 0.0, 1.0);
    FunctionalDiffOp op(
        [](const DenseGrid& in) {
            DenseGrid out = in;
            out.scale(2.0);
            return out;
        },
        [](const DenseGrid&, const DenseGrid& c) {
            DenseGrid out = c;
            out.scale(2.0);
            return out;
        });
    CHECK(vjp_check(op, x, ct, 1e-5).max_rel_err <= 1e-10);
}

TEST_CASE("vjp_check rejects shape mismatches and reports non-finite outputs") {
    DenseGrid x({3});
    FunctionalDiffOp bad_shape([](const DenseGrid& in) { return in; },
                               [](const DenseGrid& in, const DenseGrid&) { return in; });
    CHECK_THROWS_AS(vjp_check(bad_shape, x, DenseGrid({4}), 1e-5), ValidationError);

    FunctionalDiffOp nan_op(
        [](const DenseGrid& in) {
            DenseGrid out = in;
            out[1] = std::numeric_limits<double>::quiet_NaN();
            return out;
        },
        [](const DenseGrid& in, const DenseGrid&) { return in; });
    CHECK_THROWS_AS(vjp_check(nan_op, x, DenseGrid({3}), 1e-5), NumericalError);
}

TEST_CASE("corrupted adjoint is flagged with the operator name") {
    GradcheckEntry entry{"fixture.corrupted_double", 1e-5, 1e-6, [](std::uint64_t seed) {
                             SeededRng rng(seed);
                             DenseGrid x = random_normal(rng, {5}, 0.0, 1.0);
                             DenseGrid ct = random_normal(rng, {5}, 0.0, 1.0);
                             FunctionalDiffOp op(
                                 [](const DenseGrid& in) {
                                     DenseGrid out = in;
                                     out.scale(2.0);
                                     return out;
                                 },
                                 [](const DenseGrid&, const DenseGrid& c) {
                                     DenseGrid out = c;
                                     out.scale(2.2); // wrong on purpose
                                     return out;
                                 });
                             return vjp_check(op, x, ct, 1e-5);
                         }};
    auto results = run_gradcheck_entries({entry}, 3, 1);
    REQUIRE(results.size() == 1);
    CHECK(results[0].name == "fixture.corrupted_double");
    CHECK_FALSE(results[0].pass);
    CHECK(results[0].worst.max_rel_err > 1e-2);
}

TEST_CASE("registry lists at least 12 differentiable operators") {
    CHECK(build_gradcheck_suite().size() >= 12);
}

TEST_SUITE_END();
