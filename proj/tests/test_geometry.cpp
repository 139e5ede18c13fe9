// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "scat/check.hpp"

#include <cmath>

#include "scat/geometry.hpp"
#include "scat/model.hpp"
#include "test_util.hpp"

using namespace scat;

TEST_SUITE_BEGIN("geometry");

namespace {

// Independent reference: 4x4 homogeneous multiply followed by the affine
// world-to-index map.
Vec3 project_reference(const ProjectionMatrix& p, double u, double v, double d,
                       const VoxelGridSpec& spec) {
    double m4[16] = {p(0, 0), p(0, 1), p(0, 2), p(0, 3), p(1, 0), p(1, 1), p(1, 2), p(1, 3),
                     p(2, 0), p(2, 1), p(2, 2), p(2, 3), 0.0,     0.0,     0.0,     1.0};
    const double hom[4] = {u * d, v * d, d, 1.0};
    double out[4] = {0, 0, 0, 0};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) out[r] += m4[r * 4 + c] * hom[c];
    for (int r = 0; r < 3; ++r) out[r] /= out[3];
    return spec.world_to_index({out[0], out[1], out[2]});
}

VoxelGridSpec identity_spec() { return {{32, 32, 32}, {0, 0, 0}, {1.0, 1.0, 1.0}}; }

} // namespace

TEST_CASE("project: [I|0] with identity voxel map sends (2,3,5) to (10,15,5)") {
    const Vec3 r = project(ProjectionMatrix::identity_depth(), 2, 3, 5, identity_spec());
    CHECK(r.x == 10.0);
    CHECK(r.y == 15.0);
    CHECK(r.z == 5.0);
}

TEST_CASE("project: non-positive depth violates the precondition") {
    CHECK_THROWS_AS(project(ProjectionMatrix::identity_depth(), 1, 1, 0.0, identity_spec()),
                    ValidationError);
    CHECK_THROWS_AS(project(ProjectionMatrix::identity_depth(), 1, 1, -2.0, identity_spec()),
                    ValidationError);
}

TEST_CASE("project matches the homogeneous multiply reference to 1e-12") {
    SeededRng rng(17);
    VoxelGridSpec spec{{10, 12, 8}, {-1.0, 0.5, 2.0}, {0.5, 0.4, 0.8}};
    for (int i = 0; i < 50; ++i) {
        ProjectionMatrix p;
        for (double& m : p.m) m = rng.normal();
        const double u = rng.uniform(0, 8), v = rng.uniform(0, 8), d = rng.uniform(0.5, 9);
        const Vec3 a = project(p, u, v, d, spec);
        const Vec3 b = project_reference(p, u, v, d, spec);
        CHECK(std::abs(a.x - b.x) <= 1e-12 * std::max(1.0, std::abs(b.x)));
        CHECK(std::abs(a.y - b.y) <= 1e-12 * std::max(1.0, std::abs(b.y)));
        CHECK(std::abs(a.z - b.z) <= 1e-12 * std::max(1.0, std::abs(b.z)));
    }
}

TEST_CASE("project jacobian matches finite differences") {
    SeededRng rng(23);
    VoxelGridSpec spec{{10, 10, 10}, {0, 0, 0}, {0.5, 0.5, 0.5}};
    ProjectionMatrix p;
    for (double& m : p.m) m = rng.normal();
    const double u = 1.3, v = 2.7, d = 4.1, h = 1e-6;
    Vec3 ju, jv, jd;
    project_jacobian(p, u, v, d, spec, ju, jv, jd);
    const auto fd = [&](double du, double dv, double dd) {
        const Vec3 a = project(p, u + du, v + dv, d + dd, spec);
        const Vec3 b = project(p, u - du, v - dv, d - dd, spec);
        return Vec3{(a.x - b.x) / (2 * h), (a.y - b.y) / (2 * h), (a.z - b.z) / (2 * h)};
    };
    const Vec3 nu = fd(h, 0, 0), nv = fd(0, h, 0), nd = fd(0, 0, h);
    for (int a = 0; a < 3; ++a) {
        CHECK(ju[a] == doctest::Approx(nu[a]).epsilon(1e-6));
        CHECK(jv[a] == doctest::Approx(nv[a]).epsilon(1e-6));
        CHECK(jd[a] == doctest::Approx(nd[a]).epsilon(1e-6));
    }
}

TEST_CASE("perturb: sigma 0 is the bitwise identity") {
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    p(0, 3) = 1.25;
    const ProjectionMatrix q = perturb(p, {0.0, 99});
    for (std::size_t i = 0; i < 12; ++i) CHECK(q.m[i] == p.m[i]);
}

TEST_CASE("perturb: fixed seed gives a deterministic matrix equal to a fresh redraw") {
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    const ProjectionMatrix a = perturb(p, {0.1, 1234});
    const ProjectionMatrix b = perturb(p, {0.1, 1234});
    for (std::size_t i = 0; i < 12; ++i) CHECK(a.m[i] == b.m[i]);

    // independent regeneration from the same seeded stream
    SeededRng rng(1234);
    ProjectionMatrix c = p;
    for (double& m : c.m) m += 0.1 * rng.normal();
    for (std::size_t i = 0; i < 12; ++i) CHECK(a.m[i] == c.m[i]);
}

TEST_CASE("perturb: sample mean over 1e4 draws stays within 3 sigma / 100") {
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    const double sigma = 0.1;
    const int n = 10000;
    double mean03 = 0.0;
    for (int i = 0; i < n; ++i)
        mean03 += perturb(p, {sigma, static_cast<std::uint64_t>(i)}).m[3];
    mean03 /= n;
    CHECK(std::abs(mean03 - p.m[3]) <= 3.0 * sigma / 100.0);
}

TEST_CASE("perturb: unrecoverable conditioning fails after bounded resamples") {
    // rank-2 block of unit scale: 1e-12 noise keeps the condition number ~1e12
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    p(2, 2) = 0.0;
    CHECK_THROWS_AS(perturb(p, {1e-12, 7}), NumericalError);
}

TEST_CASE("projection conditioning gate") {
    CHECK(projection_well_conditioned(ProjectionMatrix::identity_depth()));
    ProjectionMatrix bad;
    CHECK_FALSE(projection_well_conditioned(bad));
    ProjectionMatrix nan_p = ProjectionMatrix::identity_depth();
    nan_p.m[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(projection_well_conditioned(nan_p));
}

TEST_CASE("voxel grid spec: world/index maps invert each other") {
    VoxelGridSpec spec{{8, 8, 4}, {1.0, -2.0, 0.5}, {0.5, 0.25, 2.0}};
    const Vec3 idx{3.25, 7.5, 1.75};
    const Vec3 round_trip = spec.world_to_index(spec.index_to_world(idx));
    CHECK(round_trip.x == doctest::Approx(idx.x).epsilon(1e-12));
    CHECK(round_trip.y == doctest::Approx(idx.y).epsilon(1e-12));
    CHECK(round_trip.z == doctest::Approx(idx.z).epsilon(1e-12));
    CHECK(spec.index_in_margin_band({-1.0, 0.0, 4.0}));
    CHECK_FALSE(spec.index_in_margin_band({-1.1, 0.0, 0.0}));
    CHECK_FALSE(spec.index_in_margin_band({0.0, 8.5, 0.0}));
}

TEST_CASE("offset heads: zero parameters produce exactly zero offsets") {
    ParamStore store;
    OffsetConfig cfg{8, 1.0, 0.05};
    SeededRng rng(3);
    init_offset_params(store, 8, 5, cfg, rng);
    // zero the hidden layers too: the invariant is about all-zero parameters
    store.at("offset_global.w1").value.fill(0.0);
    store.at("offset_pixel.w1").value.fill(0.0);

    DenseGrid fi = random_normal(rng, {4, 4, 8}, 0.0, 1.0);
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    const GlobalOffsetCache g = predict_global_offset(fi, p, store, cfg);
    for (double v : g.delta.m) CHECK(v == 0.0);
    const PixelOffsetCache px = predict_pixel_offsets(fi, 5, store, cfg);
    for (std::size_t i = 0; i < px.offsets.size(); ++i) CHECK(px.offsets[i] == 0.0);
}

TEST_CASE("offset heads: outputs respect the saturating bounds for wild parameters") {
    ParamStore store;
    OffsetConfig cfg{8, 1.0, 0.05};
    SeededRng rng(4);
    init_offset_params(store, 8, 5, cfg, rng);
    for (const auto& name : store.names())
        for (std::size_t i = 0; i < store.at(name).value.size(); ++i)
            store.at(name).value[i] = 10.0 * rng.normal();

    DenseGrid fi = random_normal(rng, {4, 4, 8}, 0.0, 1.0);
    ProjectionMatrix p = ProjectionMatrix::identity_depth();
    p(0, 3) = 4.0;
    const GlobalOffsetCache g = predict_global_offset(fi, p, store, cfg);
    for (std::size_t k = 0; k < 12; ++k)
        CHECK(std::abs(g.delta.m[k]) <= cfg.p_offset_scale * (std::abs(p.m[k]) + 1.0));
    const PixelOffsetCache px = predict_pixel_offsets(fi, 5, store, cfg);
    for (std::size_t i = 0; i < px.offsets.size(); ++i)
        CHECK(std::abs(px.offsets[i]) <= cfg.offset_scale);
}

TEST_CASE("zero-initialized offset heads reproduce the offset-free pipeline bitwise") {
    Scene scene = test::tiny_scene(5);
    ModelConfig with = test::tiny_model_config();
    with.learnable_offsets = true;
    ModelConfig without = test::tiny_model_config();
    without.learnable_offsets = false;

    Model m_with = Model::init(with, 8, 3, 11);
    Model m_without = Model::init(without, 8, 3, 11);
    // lift/decoder params must agree; copy them over
    for (const auto& name : m_without.params.names())
        m_without.params.at(name).value = m_with.params.at(name).value;

    Pipeline p1(m_with, scene), p2(m_without, scene);
    p1.forward();
    p2.forward();
    REQUIRE(p1.volume().size() == p2.volume().size());
    for (std::size_t i = 0; i < p1.volume().size(); ++i)
        CHECK(p1.volume()[i] == p2.volume()[i]);
    CHECK(p1.occupancy_loss() == p2.occupancy_loss());
}

TEST_SUITE_END();
