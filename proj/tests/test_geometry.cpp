#include <cmath>
#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "handcontact/geometry.hpp"
#include "handcontact/rng.hpp"
#include "handcontact/synthdata.hpp"
#include "test_meshes.hpp"

using namespace hc;
using geom::TriMesh;
using geom::Vec3;
using testutil::make_cube;

TEST_CASE("mesh construction rejects bad input") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(TriMesh::create(v, {{0, 1, 3}}), InvalidInputError);   // index range
    CHECK_THROWS_AS(TriMesh::create(v, {{0, 1, 1}}), InvalidInputError);   // zero area
    CHECK_THROWS_AS(TriMesh::create({}, {}), InvalidInputError);
    CHECK_NOTHROW(TriMesh::create(v, {{0, 1, 2}}));
}

TEST_CASE("cube mesh invariants") {
    const auto cube = make_cube(Vec3(0, 0, 0), 0.05);
    CHECK(cube.is_closed());
    CHECK(cube.signed_volume() == doctest::Approx(0.001).epsilon(1e-12));  // (0.1)^3
    CHECK(cube.surface_area() == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(cube.diameter() == doctest::Approx(0.1 * std::sqrt(3.0)).epsilon(1e-12));

    auto open_faces = cube.faces;
    open_faces.pop_back();
    TriMesh open_mesh;
    open_mesh.vertices = cube.vertices;
    open_mesh.faces = open_faces;
    CHECK(!open_mesh.is_closed());

    Vec3 lo, hi;
    cube.bounds(lo, hi);
    CHECK(lo.isApprox(Vec3(-0.05, -0.05, -0.05)));
    CHECK(hi.isApprox(Vec3(0.05, 0.05, 0.05)));
}

TEST_CASE("closest point on triangle against dense sampling") {
    Rng rng(101);
    for (int trial = 0; trial < 40; ++trial) {
        const Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec3 b(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec3 c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if ((b - a).cross(c - a).norm() < 1e-3) continue;
        const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));

        Vec3 bary;
        const Vec3 q = geom::closest_point_on_triangle(p, a, b, c, &bary);
        const double d = (p - q).norm();

        CHECK(bary.minCoeff() >= -1e-12);
        CHECK(bary.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((bary[0] * a + bary[1] * b + bary[2] * c - q).norm() < 1e-12);

        // no sampled point on the triangle may be closer
        double best = 1e30;
        const int g = 60;
        for (int i = 0; i <= g; ++i)
            for (int j = 0; j <= g - i; ++j) {
                const double u = static_cast<double>(i) / g;
                const double v = static_cast<double>(j) / g;
                best = std::min(best, (p - (a + u * (b - a) + v * (c - a))).norm());
            }
        CHECK(d <= best + 1e-9);
    }
}

TEST_CASE("bvh and brute-force queries agree exactly") {
    const auto sphere = data::make_object("icosphere", 0.1, 3);
    REQUIRE(sphere.face_count() > geom::MeshDistanceIndex::kBruteForceFaceLimit);
    geom::MeshDistanceIndex index(sphere);

    Rng rng(55);
    for (int i = 0; i < 300; ++i) {
        const Vec3 p(rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12),
                     rng.uniform(-0.12, 0.12));
        const auto a = index.closest(p);
        const auto b = index.closest_brute(p);
        REQUIRE(a.dist == b.dist);
        REQUIRE(a.face == b.face);
        REQUIRE((a.point.array() == b.point.array()).all());
    }
}

TEST_CASE("inside test and signed distance on analytic shapes") {
    const auto sphere = data::make_object("icosphere", 0.1, 0);
    geom::MeshDistanceIndex index(sphere);
    const double r = (sphere.vertices[0]).norm();  // icosphere vertices sit on the sphere

    Rng rng(66);
    for (int i = 0; i < 150; ++i) {
        Vec3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
        const double rho = p.norm();
        if (std::abs(rho - r) < 0.003 || rho < 1e-3) continue;  // skip the faceted shell
        CHECK(index.contains(p) == (rho < r));
        // facet error bounds the gap to the analytic signed distance
        CHECK(std::abs(index.signed_distance(p) - (rho - r)) < 5e-4);
    }

    const auto cube = make_cube(Vec3(0, 0, 0), 0.05);
    geom::MeshDistanceIndex ci(cube);
    CHECK(ci.contains(Vec3(0.04, -0.02, 0.01)));
    CHECK(!ci.contains(Vec3(0.06, 0, 0)));
    CHECK(ci.signed_distance(Vec3(0, 0, 0)) == doctest::Approx(-0.05).epsilon(1e-9));
    CHECK(ci.signed_distance(Vec3(0, 0, 0.08)) == doctest::Approx(0.03).epsilon(1e-9));

    TriMesh open_mesh;
    open_mesh.vertices = cube.vertices;
    open_mesh.faces = {cube.faces[0], cube.faces[1]};
    geom::MeshDistanceIndex oi(open_mesh);
    CHECK(!oi.closed());
    CHECK_THROWS_AS(oi.contains(Vec3(0, 0, 0)), CapabilityError);
    CHECK_THROWS_AS(oi.signed_distance(Vec3(0, 0, 0)), CapabilityError);
}

TEST_CASE("object primitives are watertight and outward") {
    for (const char* kind : {"icosphere", "box", "cylinder", "capsule"}) {
        for (std::uint64_t seed : {0ull, 1ull, 9ull}) {
            const auto m = data::make_object(kind, 0.08, seed);
            INFO(kind, " seed ", seed);
            CHECK(m.is_closed());
            CHECK(m.signed_volume() > 0.0);
            Vec3 lo, hi;
            m.bounds(lo, hi);
            CHECK((hi - lo).maxCoeff() < 0.1);
            CHECK((hi - lo).minCoeff() > 0.015);
        }
    }
    CHECK_THROWS_AS(data::make_object("torus", 0.1, 0), InvalidInputError);
    CHECK_THROWS_AS(data::make_object("box", -1.0, 0), InvalidInputError);

    // box volume matches its bounds exactly
    const auto b = data::make_object("box", 0.06, 4);
    Vec3 lo, hi;
    b.bounds(lo, hi);
    CHECK(b.signed_volume() == doctest::Approx((hi - lo).prod()).epsilon(1e-12));
}

TEST_CASE("surface sampling is area-uniform and on-surface") {
    const auto cube = make_cube(Vec3(0.01, -0.02, 0.03), 0.04);
    const int n = 24000;
    const auto s = geom::sample_surface(cube, n, 42);
    REQUIRE(static_cast<int>(s.points.size()) == n);

    std::vector<int> per_face(cube.face_count(), 0);
    for (int i = 0; i < n; ++i) {
        const int f = s.face_ids[i];
        ++per_face[f];
        const Vec3& p = s.points[i];
        // sampled point lies on its face plane
        const double off = std::abs(cube.face_normal(f).dot(p - cube.vertices[cube.faces[f][0]]));
        REQUIRE(off < 1e-12);
        REQUIRE(s.normals[i].isApprox(cube.face_normal(f)));
    }
    // every face has equal area here: expect n/12 within 5 sigma of binomial
    const double expect = n / 12.0;
    const double sigma = std::sqrt(n * (1.0 / 12) * (11.0 / 12));
    for (int f = 0; f < 12; ++f)
        CHECK(std::abs(per_face[f] - expect) < 5.0 * sigma);

    const auto again = geom::sample_surface(cube, 100, 42);
    const auto other = geom::sample_surface(cube, 100, 43);
    CHECK((again.points[7].array() == s.points[7].array()).all());
    CHECK((again.points[99].array() != other.points[99].array()).any());
}

TEST_CASE("chamfer distance on hand-computed sets") {
    using geom::PointSet;
    const PointSet a = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    const PointSet b = {Vec3(0, 0, 0)};
    // a->b: (0 + 1)/2, b->a: 0
    CHECK(geom::chamfer(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(geom::chamfer(a, a) == 0.0);
    CHECK(geom::chamfer(b, b) == 0.0);

    const PointSet c = {Vec3(0, 0, 0), Vec3(0, 2, 0), Vec3(3, 0, 0)};
    const PointSet d = {Vec3(1, 0, 0)};
    // c->d: (1 + 5 + 4)/3; d->c: 1
    CHECK(geom::chamfer(c, d) == doctest::Approx(10.0 / 3.0 + 1.0).epsilon(1e-12));
    CHECK(geom::chamfer(c, d) == geom::chamfer(d, c));
    CHECK_THROWS_AS(geom::chamfer({}, b), InvalidInputError);
}

TEST_CASE("penetration depth sum") {
    const auto cube = make_cube(Vec3(0, 0, 0), 0.05);
    geom::MeshDistanceIndex index(cube);
    const geom::PointSet pts = {
        Vec3(0, 0, 0.047),   // 3 mm deep
        Vec3(0, 0, 0.2),     // outside
        Vec3(0.049, 0, 0),   // 1 mm deep
    };
    CHECK(geom::penetration_sum_mm(index, pts) == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(geom::penetration_sum_mm(index, {Vec3(0, 0, 1)}) == 0.0);
}

TEST_CASE("similarity alignment recovers a known transform") {
    Rng rng(77);
    geom::PointSet src;
    for (int i = 0; i < 21; ++i)
        src.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));

    const double angle = 0.8;
    geom::Mat3 R = Eigen::AngleAxisd(angle, Vec3(1, 2, -1).normalized()).toRotationMatrix();
    const double s = 1.3;
    const Vec3 t(0.05, -0.02, 0.11);

    geom::PointSet dst;
    for (const auto& p : src) dst.push_back(s * (R * p) + t);

    const auto result = geom::procrustes_align(src, dst);
    CHECK(result.residual_rms < 1e-12);
    CHECK(result.transform.scale == doctest::Approx(s).epsilon(1e-9));
    CHECK((result.transform.rotation - R).norm() < 1e-9);
    CHECK((result.transform.translation - t).norm() < 1e-9);
    CHECK(result.transform.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));

    // reflection in the data must still produce a proper rotation
    geom::PointSet mirrored;
    for (const auto& p : src) mirrored.emplace_back(-p[0], p[1], p[2]);
    const auto refl = geom::procrustes_align(src, mirrored);
    CHECK(refl.transform.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));

    geom::PointSet line;
    for (int i = 0; i < 5; ++i) line.emplace_back(i * 0.01, 0, 0);
    CHECK_THROWS_AS(geom::procrustes_align(line, line), InvalidInputError);
    CHECK_THROWS_AS(geom::procrustes_align(src, geom::PointSet{Vec3(0, 0, 0)}), DimensionError);
}

TEST_CASE("pose metrics on constructed cases") {
    Rng rng(88);
    geom::PointSet joints, hand, obj;
    for (int i = 0; i < 21; ++i)
        joints.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    for (int i = 0; i < 50; ++i)
        hand.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    for (int i = 0; i < 30; ++i)
        obj.emplace_back(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));

    SUBCASE("identical prediction scores zero") {
        const auto m = geom::pose_metrics(joints, joints, hand, hand, obj, obj, 0.1);
        CHECK(m.mpjpe_mm < 1e-9);
        CHECK(m.hand_mesh_err_mm < 1e-9);
        CHECK(m.obj_vert_err_mm == 0.0);
        CHECK(m.add_within_01d);
    }
    SUBCASE("a rigidly moved prediction is forgiven by alignment") {
        geom::Mat3 R = Eigen::AngleAxisd(0.5, Vec3(0, 0, 1)).toRotationMatrix();
        geom::PointSet ja, ha;
        for (const auto& p : joints) ja.push_back(R * p + Vec3(0.02, 0, 0));
        for (const auto& p : hand) ha.push_back(R * p + Vec3(0.02, 0, 0));
        const auto m = geom::pose_metrics(ja, joints, ha, hand, obj, obj, 0.1);
        CHECK(m.mpjpe_mm < 1e-6);
        CHECK(m.hand_mesh_err_mm < 1e-6);
    }
    SUBCASE("object error drives the pass flag") {
        geom::PointSet shifted;
        for (const auto& p : obj) shifted.push_back(p + Vec3(0.009, 0, 0));
        // diameter 0.1 -> threshold 10 mm; 9 mm passes, 11 mm fails
        CHECK(geom::pose_metrics(joints, joints, hand, hand, shifted, obj, 0.1).add_within_01d);
        geom::PointSet far;
        for (const auto& p : obj) far.push_back(p + Vec3(0.011, 0, 0));
        CHECK(!geom::pose_metrics(joints, joints, hand, hand, far, obj, 0.1).add_within_01d);
    }
}

TEST_CASE("contact metrics on grid-aligned boxes") {
    // 2 cm cubes overlapping in a 1 cm cube: intersection is exactly 1 cm^3
    const auto a = make_cube(Vec3(0.01, 0.01, 0.01), 0.01);
    const auto b = make_cube(Vec3(0.02, 0.02, 0.02), 0.01);
    const auto m = geom::contact_metrics(a, b);
    CHECK(m.intersection_cm3 == doctest::Approx(1.0).epsilon(1e-12));

    // disjoint: nothing shared, and coverage counts only near faces
    const auto c = make_cube(Vec3(0.2, 0, 0), 0.01);
    const auto far = geom::contact_metrics(a, c);
    CHECK(far.intersection_cm3 == 0.0);
    CHECK(far.coverage_pct == 0.0);

    // touching within 1 mm: the 4 facing corners of 8 are covered
    const auto near = make_cube(Vec3(0.041, 0.01, 0.01), 0.02);  // face at x=0.021, 1 mm gap
    const auto cov = geom::contact_metrics(a, near);
    CHECK(cov.coverage_pct == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("obj io round trip is bit exact") {
    Rng rng(99);
    auto mesh = data::make_object("capsule", 0.09, 5);
    // add awkward coordinates
    mesh.vertices[0][0] = 1.0 / 3.0;
    mesh.vertices[1][1] = -2.7755575615628914e-17;

    const std::string path = "/tmp/hc_test_roundtrip.obj";
    geom::write_obj(mesh, path);
    const auto back = geom::read_obj(path);
    REQUIRE(back.vertex_count() == mesh.vertex_count());
    REQUIRE(back.face_count() == mesh.face_count());
    for (int i = 0; i < mesh.vertex_count(); ++i)
        for (int k = 0; k < 3; ++k)
            REQUIRE(std::memcmp(&back.vertices[i][k], &mesh.vertices[i][k], sizeof(double)) == 0);
    REQUIRE(back.faces == mesh.faces);
    std::remove(path.c_str());
}

TEST_CASE("obj parser reports malformed input") {
    auto write_tmp = [](const char* body) {
        const std::string path = "/tmp/hc_test_bad.obj";
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs(body, f);
        std::fclose(f);
        return path;
    };
    CHECK_THROWS_AS(geom::read_obj("/tmp/does_not_exist_hc.obj"), ParseError);
    CHECK_THROWS_AS(geom::read_obj(write_tmp("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 1\n")),
                    ParseError);  // quad
    CHECK_THROWS_AS(geom::read_obj(write_tmp("v 0 0 zebra\n")), ParseError);
    CHECK_THROWS_AS(geom::read_obj(write_tmp("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")),
                    ParseError);  // face index out of range
    CHECK_THROWS_AS(geom::read_obj(write_tmp("vt 0 0\n")), ParseError);  // unsupported
    std::remove("/tmp/hc_test_bad.obj");
}
