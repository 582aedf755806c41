#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "handcontact/geometry.hpp"
#include "handcontact/tape.hpp"
#include "handcontact/tensor.hpp"

namespace hc::hand {

inline constexpr int kVertexCount = 778;
inline constexpr int kPoseDof = 51;   // 3 wrist rotation, 3 translation, 15 joints x 3
inline constexpr int kShapeDof = 10;
inline constexpr int kJointCount = 21;  // wrist + 5 digits x (mcp, pip, dip, tip)
inline constexpr int kBoneCount = 16;   // wrist + 5 digits x 3 segments
inline constexpr int kDigits = 5;       // thumb, index, middle, ring, pinky

struct TapeHand {
    ad::NodeId verts;   // [kVertexCount, 3]
    ad::NodeId joints;  // [kJointCount, 3]
};

// Watertight articulated hand built procedurally: a gridded palm block with
// five capped-tube digits extruded from it, linear-blend skinned over 16
// bones. Shape knobs scale the template; pose drives forward kinematics.
// The same kinematics run in plain doubles and on the tape.
class HandModel {
public:
    // beta [kShapeDof]: multiplicative template knobs, zeros give the
    // neutral hand. 0 overall size, 1 palm width, 2 palm length, 3 palm
    // thickness, 4 digit girth, 5..9 per-digit length.
    explicit HandModel(const Tensor& beta);
    HandModel() : HandModel(Tensor({kShapeDof}, 0.0)) {}

    const geom::PointSet& template_vertices() const { return template_verts_; }
    const std::vector<geom::Vec3>& template_joints() const { return template_joints_; }
    const std::vector<std::array<int, 3>>& faces() const { return *faces_; }
    std::shared_ptr<const std::vector<std::array<int, 3>>> faces_shared() const { return faces_; }

    static Tensor neutral_pose() { return Tensor({kPoseDof}, 0.0); }

    // theta layout: [0:3) wrist rotation about x,y,z; [3:6) translation;
    // then per digit, per joint root-to-tip: flexion, abduction, twist.
    static int flexion_dof(int digit, int joint) { return 6 + digit * 9 + joint * 3; }
    static int abduction_dof(int digit, int joint) { return 6 + digit * 9 + joint * 3 + 1; }
    static int twist_dof(int digit, int joint) { return 6 + digit * 9 + joint * 3 + 2; }

    // joint index into the 21-joint list
    static int joint_index(int digit, int along) { return 1 + digit * 4 + along; }  // 0=mcp..3=tip

    const std::vector<std::pair<double, double>>& dof_limits() const { return limits_; }

    // Per-vertex digit id (-1 for the palm) with axial fraction along the
    // digit; lets callers address one digit's surface.
    const std::vector<std::pair<int, double>>& vertex_digit() const { return digit_axial_; }

    // Articulation DoF outside their limits snap to the boundary; the wrist
    // six are free. Violated DoF indices are appended to clamped.
    Tensor clamp_pose(const Tensor& theta, std::vector<int>* clamped = nullptr) const;

    void pose_mesh(const Tensor& theta, geom::PointSet& verts,
                   std::vector<geom::Vec3>* joints = nullptr) const;
    geom::TriMesh posed_mesh(const Tensor& theta) const;
    std::vector<geom::Vec3> joint_positions(const Tensor& theta) const;

    TapeHand build(ad::Tape& tape, ad::NodeId theta) const;

private:
    struct Bone {
        int parent = -1;          // index into bones, -1 for the wrist root
        geom::Vec3 center;        // rotation pivot in template space
        geom::Mat3 flex_k, flex_k2;
        geom::Mat3 abd_k, abd_k2;
        geom::Mat3 twist_k, twist_k2;
        int dof = -1;             // first of this bone's three theta slots, -1 for root
    };

    void build_template(const Tensor& beta);
    void build_limits();

    geom::PointSet template_verts_;
    Tensor verts_tensor_;  // template verts as [kVertexCount,3]
    std::vector<geom::Vec3> template_joints_;
    std::vector<std::pair<int, geom::Vec3>> joint_frames_;  // carrying bone + template pos
    std::shared_ptr<std::vector<std::array<int, 3>>> faces_;
    std::vector<Bone> bones_;
    std::vector<std::vector<double>> bone_weights_;  // [kBoneCount][kVertexCount]
    std::vector<std::vector<std::pair<int, double>>> vert_bones_;  // sparse transpose
    std::vector<std::pair<int, double>> digit_axial_;  // digit id + axial fraction, -1 for palm
    std::vector<std::pair<double, double>> limits_;
};

}  // namespace hc::hand
