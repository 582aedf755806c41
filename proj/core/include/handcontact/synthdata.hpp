#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handcontact/fitter.hpp"
#include "handcontact/geometry.hpp"
#include "handcontact/hand_model.hpp"
#include "handcontact/render.hpp"
#include "handcontact/tensor.hpp"

namespace hc::data {

// Watertight, outward-oriented desk-object primitives. kind is one of
// "icosphere", "box", "cylinder", "capsule"; size is the characteristic
// extent in meters. The seed applies a mild deterministic aspect jitter so
// one kind still yields varied instances.
geom::TriMesh make_object(const std::string& kind, double size, std::uint64_t seed);

// Grasp synthesis: the wrist is placed on the `approach` side of the object
// with the palm facing it, then each digit curls by bisection until its
// surface sits within [0, 1] mm of the object. Digits that cannot reach, or
// a placement that cannot avoid penetration, raise GenerationFailure. Seed
// jitters standoff, reach, and wrist roll only.
Tensor synth_grasp(const hand::HandModel& model, const geom::TriMesh& obj,
                   const geom::Vec3& approach, std::uint64_t seed);

// Gaussian pose noise: sigmas for wrist translation (m), wrist rotation
// (rad), and articulation (rad); articulation is clamped back to limits.
Tensor perturb(const hand::HandModel& model, const Tensor& pose, double trans_sigma,
               double rot_sigma, double joint_sigma, std::uint64_t seed);

// Proximity ground truth on both sides of the contact, sharing the fitter's
// falloff so a perfect refit reproduces it exactly.
fit::ContactTarget gt_contact(const geom::TriMesh& hand_mesh, const geom::TriMesh& obj,
                              const geom::PointSet& obj_points);

inline constexpr int kObjectPoints = 2048;

// One grasp scene: object, hand pose/mesh, proximity ground truth on both
// sides, and a rendered observation. The image is stored on the 16-bit
// grid so disk round trips are identity.
struct SceneSample {
    std::int64_t id = 0;
    Tensor pose;                   // hand DoF vector
    geom::TriMesh hand_mesh;
    geom::TriMesh object_mesh;
    geom::PointSet object_points;  // on-surface samples, kObjectPoints of them
    double object_diameter = 0.0;
    fit::ContactTarget contact;    // hand side per vertex, object side per point
    render::Image image;
    render::Image mask;
    render::Camera camera;
    bool labeled = false;
};

// Draws an object kind/size/approach and synthesizes one grasp scene.
// Pure function of (model, id, seed); draws that admit no grasp raise
// GenerationFailure.
SceneSample make_scene(const hand::HandModel& model, std::int64_t id, std::uint64_t seed);

// 80/20 prefix split by scene order.
inline int train_count(int scene_count) { return scene_count - scene_count / 5; }

// Sequential scene ids; a failed draw advances a per-id attempt counter, so
// the result is a pure function of (count, fraction, seed). The first
// round(fraction * train_count) scenes are labeled.
std::vector<SceneSample> generate_dataset(const hand::HandModel& model, int scene_count,
                                          double labeled_fraction, std::uint64_t seed);

// Versioned directory container: a manifest plus one subdirectory per scene
// holding the meshes as OBJ, the observation as PGM, and the pose/contact
// arrays as a raw binary block. read(write(x)) is bit-exact; truncation or
// tampering raises ParseError naming the scene and offset.
void write_dataset(const std::vector<SceneSample>& scenes, const std::string& path);
std::vector<SceneSample> read_dataset(const std::string& path);

}  // namespace hc::data
