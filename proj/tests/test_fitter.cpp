#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "handcontact/fitter.hpp"
#include "handcontact/synthdata.hpp"
#include "handcontact/tape.hpp"
#include "test_meshes.hpp"

using namespace hc;
using geom::TriMesh;
using geom::Vec3;

namespace {

// independent re-derivation of the clamp: log(1+e^{kt})/k at both ends,
// naive form (safe for the probe range)
double clamp_oracle(double x, double k) {
    const auto sp = [k](double t) { return std::log1p(std::exp(k * t)) / k; };
    return sp(x) - sp(x - 1.0);
}

double mean_joint_err(const hand::HandModel& model, const Tensor& a, const Tensor& b) {
    const auto ja = model.joint_positions(a);
    const auto jb = model.joint_positions(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < ja.size(); ++i) sum += (ja[i] - jb[i]).norm();
    return sum / static_cast<double>(ja.size());
}

}  // namespace

TEST_CASE("contact_response") {
    SUBCASE("matches the independent clamp formula") {
        for (double sd : {-0.05, -0.01, -0.002, 0.0, 0.001, 0.004, 0.005, 0.009, 0.01, 0.02}) {
            const double expect = clamp_oracle(-sd / 0.01 + 1.0, fit::kContactSharpness);
            CHECK(fit::contact_response(sd) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    SUBCASE("anchored at touch, falloff, and midpoint") {
        // k = 40: boundary softening is log(2)/40
        const double soft = std::log(2.0) / fit::kContactSharpness;
        CHECK(fit::contact_response(0.0) == doctest::Approx(1.0 - soft).epsilon(1e-9));
        CHECK(fit::contact_response(0.01) == doctest::Approx(soft).epsilon(1e-9));
        CHECK(fit::contact_response(0.005) == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(fit::contact_response(-0.05) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit::contact_response(0.5) == 0.0);  // underflows clean to zero
    }

    SUBCASE("monotone decreasing in distance") {
        // the clamp saturates to exact 0/1 in the far tails, so strictness
        // only holds across the active band
        double prev = 2.0;
        for (int i = -30; i <= 30; ++i) {
            const double sd = i * 0.001;
            const double v = fit::contact_response(sd);
            CHECK(v <= prev);
            if (sd >= -0.008 && sd <= 0.03) CHECK(v < prev);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            prev = v;
        }
    }

    SUBCASE("custom falloff rescales the ramp") {
        CHECK(fit::contact_response(0.02, 0.04) ==
              doctest::Approx(fit::contact_response(0.005, 0.01)).epsilon(1e-12));
        CHECK_THROWS_AS(fit::contact_response(0.0, 0.0), InvalidInputError);
    }

    SUBCASE("scalar path and tape op agree bitwise") {
        ad::Tape tape;
        Tensor sds({7}, {-0.02, -0.005, 0.0, 0.0025, 0.005, 0.0075, 0.012});
        const ad::NodeId leaf = tape.leaf(sds);
        const ad::NodeId c =
            tape.smooth_clamp01(tape.affine(leaf, -1.0 / 0.01, 1.0), fit::kContactSharpness);
        for (int i = 0; i < 7; ++i) CHECK(tape.value(c)[i] == fit::contact_response(sds[i]));
    }
}

TEST_CASE("achieved_contact") {
    // cube of half-width 5cm: points dropped along +x from the face center
    // have exact analytic signed distance
    const TriMesh cube = testutil::make_cube({0.0, 0.0, 0.0}, 0.05);

    SUBCASE("known offsets from a cube face") {
        geom::PointSet queries;
        std::vector<double> sds = {-0.02, -0.004, 0.0, 0.003, 0.008, 0.015};
        for (double sd : sds) queries.emplace_back(0.05 + sd, 0.0, 0.0);
        const auto got = fit::achieved_contact(cube, queries);
        for (std::size_t i = 0; i < sds.size(); ++i)
            CHECK(got[i] == doctest::Approx(fit::contact_response(sds[i])).epsilon(1e-12));
    }

    SUBCASE("far interior saturates, far exterior vanishes") {
        const auto got = fit::achieved_contact(cube, {{0.0, 0.0, 0.0}, {0.4, 0.0, 0.0}});
        CHECK(got[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(got[1] == 0.0);
    }
}

TEST_CASE("fit_pose exactness") {
    const hand::HandModel model;

    SUBCASE("ground truth with its own target is a fixed point, bitwise") {
        for (std::uint64_t seed : {1ULL, 2ULL}) {
            const data::SceneSample s = data::make_scene(model, 0, seed);
            fit::FitConfig cfg;
            cfg.iters = 6;
            const fit::FitResult r =
                fit::fit_pose(model, s.pose, s.object_mesh, s.object_points, s.contact, cfg);
            CHECK(r.initial_objective == 0.0);
            CHECK(r.final_objective == 0.0);
            CHECK(r.pose.vec() == s.pose.vec());
            CHECK_FALSE(r.aborted);
        }
    }

    SUBCASE("distant object with a zero target is a no-op") {
        const TriMesh obj = testutil::make_cube({1.0, 0.0, 0.0}, 0.04);
        const auto pts = geom::sample_surface(obj, 64, 3);
        fit::ContactTarget target;
        target.hand.assign(hand::kVertexCount, 0.0);
        target.object.assign(pts.points.size(), 0.0);
        const Tensor start = hand::HandModel::neutral_pose();
        fit::FitConfig cfg;
        cfg.iters = 4;
        const fit::FitResult r = fit::fit_pose(model, start, obj, pts.points, target, cfg);
        CHECK(r.initial_objective == 0.0);
        CHECK(r.final_objective == 0.0);
        CHECK(r.pose.vec() == start.vec());
    }
}

TEST_CASE("fit_pose recovery") {
    // a box breaks the rotational symmetry a sphere would leave free, so
    // absolute pose is pinned by the contact evidence
    const hand::HandModel model;
    const TriMesh obj = data::make_object("box", 0.06, 2);
    const Tensor gt = data::synth_grasp(model, obj, {0.0, 0.0, 1.0}, 3);
    const auto pts = geom::sample_surface(obj, 1024, 7);
    const fit::ContactTarget target = data::gt_contact(model.posed_mesh(gt), obj, pts.points);

    SUBCASE("a perturbed start is pulled back toward the grasp") {
        const Tensor noisy = data::perturb(model, gt, 0.005, 0.04, 0.05, 21);
        fit::FitConfig cfg;
        cfg.iters = 30;
        const fit::FitResult r = fit::fit_pose(model, noisy, obj, pts.points, target, cfg);
        CHECK(r.initial_objective > 0.0);
        CHECK(r.final_objective < 0.5 * r.initial_objective);
        CHECK(mean_joint_err(model, r.pose, gt) < mean_joint_err(model, noisy, gt));
    }

    SUBCASE("fitting is deterministic") {
        const Tensor noisy = data::perturb(model, gt, 0.005, 0.05, 0.05, 4);
        fit::FitConfig cfg;
        cfg.iters = 8;
        const fit::FitResult a = fit::fit_pose(model, noisy, obj, pts.points, target, cfg);
        const fit::FitResult b = fit::fit_pose(model, noisy, obj, pts.points, target, cfg);
        CHECK(a.pose.vec() == b.pose.vec());
        CHECK(a.final_objective == b.final_objective);
        CHECK(a.trace.size() == b.trace.size());
    }
}

TEST_CASE("fit_pose object refinement") {
    const hand::HandModel model;
    const data::SceneSample s = data::make_scene(model, 0, 2);

    SUBCASE("a shifted object is pulled back onto the contact evidence") {
        // hand and object share a joint-translation gauge, so absolute
        // placement is not testable; instead the reported objectives are
        // re-derived out of band and required to improve
        const Vec3 shift(0.006, -0.004, 0.003);
        const TriMesh moved = s.object_mesh.transformed(geom::Mat3::Identity(), shift);
        geom::PointSet moved_pts = s.object_points;
        for (Vec3& p : moved_pts) p += shift;
        fit::FitConfig cfg;
        cfg.iters = 30;
        cfg.refine_object = true;
        const fit::FitResult r = fit::fit_pose(model, s.pose, moved, moved_pts, s.contact, cfg);
        CHECK(r.final_objective < 0.25 * r.initial_objective);
        CHECK(r.object_translation.norm() > 0.0);

        // full objective as documented: weighted contact mse + 10 x summed
        // penetration + 0.01 x articulation drift from the start
        const auto objective = [&](const Tensor& pose, const geom::Mat3& rot, const Vec3& t) {
            const TriMesh object = moved.transformed(rot, t);
            geom::PointSet opts = moved_pts;
            for (Vec3& p : opts) p = rot * p + t;
            const TriMesh hand_mesh = model.posed_mesh(pose);
            const geom::MeshDistanceIndex obj_idx(object), hand_idx(hand_mesh);
            double ss_h = 0.0, ss_o = 0.0, pen = 0.0;
            for (int i = 0; i < hand::kVertexCount; ++i) {
                const double sd = obj_idx.signed_distance(hand_mesh.vertices[i]);
                const double d = fit::contact_response(sd) - s.contact.hand[i];
                ss_h += d * d;
                pen += std::max(0.0, -sd);
            }
            for (std::size_t i = 0; i < opts.size(); ++i) {
                const double sd = hand_idx.signed_distance(opts[i]);
                const double d = fit::contact_response(sd) - s.contact.object[i];
                ss_o += d * d;
                pen += std::max(0.0, -sd);
            }
            const double nh = hand::kVertexCount, no = static_cast<double>(opts.size());
            double drift = 0.0;
            for (int i = 6; i < hand::kPoseDof; ++i) {
                const double d = pose[i] - s.pose[i];
                drift += d * d;
            }
            return (ss_h + ss_o) / (nh + no) + 10.0 * pen + 0.01 * drift;
        };
        const double initial = objective(s.pose, geom::Mat3::Identity(), Vec3::Zero());
        const double final_rederived = objective(r.pose, r.object_rotation, r.object_translation);
        CHECK(r.initial_objective == doctest::Approx(initial).epsilon(1e-9));
        CHECK(r.final_objective == doctest::Approx(final_rederived).epsilon(1e-9));
    }

    SUBCASE("refinement stays put when the object is already right") {
        fit::FitConfig cfg;
        cfg.iters = 4;
        cfg.refine_object = true;
        const fit::FitResult r =
            fit::fit_pose(model, s.pose, s.object_mesh, s.object_points, s.contact, cfg);
        CHECK(r.initial_objective == 0.0);
        CHECK(r.final_objective == 0.0);
        CHECK(r.object_translation.norm() == 0.0);
    }
}

TEST_CASE("fit_pose trace") {
    const hand::HandModel model;
    const data::SceneSample s = data::make_scene(model, 0, 1);
    const Tensor noisy = data::perturb(model, s.pose, 0.004, 0.04, 0.04, 9);

    const auto csv = std::filesystem::temp_directory_path() / "hc_fit_trace.csv";
    std::filesystem::remove(csv);
    fit::FitConfig cfg;
    cfg.iters = 8;
    cfg.trace_path = csv.string();
    const fit::FitResult r = fit::fit_pose(model, noisy, s.object_mesh, s.object_points, s.contact, cfg);

    SUBCASE("accepted steps never increase the phase objective") {
        REQUIRE(!r.trace.empty());
        for (std::size_t i = 1; i < r.trace.size(); ++i)
            if (r.trace[i].accepted && r.trace[i].falloff == r.trace[i - 1].falloff)
                CHECK(r.trace[i].objective <= r.trace[i - 1].objective);
        // falloff schedule is non-increasing
        for (std::size_t i = 1; i < r.trace.size(); ++i)
            CHECK(r.trace[i].falloff <= r.trace[i - 1].falloff);
    }

    SUBCASE("csv mirrors the in-memory trace") {
        std::ifstream in(csv);
        REQUIRE(in.good());
        std::string line;
        std::getline(in, line);
        CHECK(line == "iter,falloff,objective,contact_mse,penetration_m,prior,step,accepted");
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            std::string field;
            std::getline(ss, field, ',');
            CHECK(std::stoi(field) == r.trace[rows].iter);
            std::getline(ss, field, ',');
            CHECK(std::stod(field) == r.trace[rows].falloff);
            std::getline(ss, field, ',');
            CHECK(std::stod(field) == r.trace[rows].objective);
            ++rows;
        }
        CHECK(rows == r.trace.size());
        std::filesystem::remove(csv);
    }
}

TEST_CASE("fit_pose input validation") {
    const hand::HandModel model;
    const TriMesh cube = testutil::make_cube({0.0, 0.0, 0.1}, 0.03);
    const auto pts = geom::sample_surface(cube, 32, 1);
    fit::ContactTarget target;
    target.hand.assign(hand::kVertexCount, 0.0);
    target.object.assign(pts.points.size(), 0.0);

    SUBCASE("shape mismatches are rejected") {
        CHECK_THROWS_AS(
            fit::fit_pose(model, Tensor({5}, 0.0), cube, pts.points, target, fit::FitConfig{}),
            DimensionError);
        fit::ContactTarget bad = target;
        bad.hand.pop_back();
        CHECK_THROWS_AS(fit::fit_pose(model, hand::HandModel::neutral_pose(), cube, pts.points,
                                      bad, fit::FitConfig{}),
                        DimensionError);
        bad = target;
        bad.object.pop_back();
        CHECK_THROWS_AS(fit::fit_pose(model, hand::HandModel::neutral_pose(), cube, pts.points,
                                      bad, fit::FitConfig{}),
                        DimensionError);
    }

    SUBCASE("bad config is rejected") {
        fit::FitConfig cfg;
        cfg.iters = 0;
        CHECK_THROWS_AS(
            fit::fit_pose(model, hand::HandModel::neutral_pose(), cube, pts.points, target, cfg),
            InvalidInputError);
        cfg = {};
        cfg.step = 0.0;
        CHECK_THROWS_AS(
            fit::fit_pose(model, hand::HandModel::neutral_pose(), cube, pts.points, target, cfg),
            InvalidInputError);
    }

    SUBCASE("open object mesh is rejected") {
        TriMesh open_mesh = cube;
        open_mesh.faces.pop_back();
        CHECK_THROWS_AS(fit::fit_pose(model, hand::HandModel::neutral_pose(), open_mesh,
                                      pts.points, target, fit::FitConfig{}),
                        CapabilityError);
    }
}
