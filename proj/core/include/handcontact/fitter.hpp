#pragma once

#include <string>
#include <vector>

#include "handcontact/geometry.hpp"
#include "handcontact/hand_model.hpp"
#include "handcontact/tape.hpp"
#include "handcontact/tensor.hpp"

namespace hc::fit {

// Falloff distance: a point at this signed distance from the other surface
// reads as zero contact. Ground-truth generation shares these constants so
// a perfect fit can drive the contact error to exactly zero.
inline constexpr double kContactFalloff = 0.01;   // meters
inline constexpr double kContactSharpness = 40.0; // softplus steepness of the clamp

// Smoothly clamped 1 - sd/falloff: 1 at touch or penetration, 0 beyond the
// falloff, differentiable everywhere. Matches the tape path bitwise.
double contact_response(double signed_dist, double falloff = kContactFalloff);

// Contact of each query point against a closed surface.
std::vector<double> achieved_contact(const geom::MeshDistanceIndex& surface,
                                     const geom::PointSet& queries,
                                     double falloff = kContactFalloff);
std::vector<double> achieved_contact(const geom::TriMesh& surface, const geom::PointSet& queries,
                                     double falloff = kContactFalloff);

// Target contact on the combined cloud, hand vertices first.
struct ContactTarget {
    std::vector<double> hand;    // one per hand vertex
    std::vector<double> object;  // one per object sample point
};

struct FitConfig {
    int iters = 60;               // gradient steps, shared across falloff phases
    double step = 0.05;           // first-trial move per step, inf-norm over DoF
    double penalty_weight = 10.0; // on summed penetration depth, meters
    double prior_weight = 0.01;   // on squared articulation drift from the start
    double falloff = kContactFalloff;
    // Coarse-to-fine falloff schedule ending at `falloff`; wide early phases
    // give far-off digits a usable gradient.
    std::vector<double> continuation = {0.08, 0.04, 0.02};
    bool refine_object = false;   // also optimize a 6-DoF object offset
    std::string trace_path;       // per-iteration CSV when nonempty
};

struct TraceRow {
    int iter = 0;
    double falloff = 0.0;
    double objective = 0.0;       // at this row's falloff
    double contact_mse = 0.0;
    double penetration_m = 0.0;   // summed depths, both directions
    double prior = 0.0;
    double step = 0.0;            // accepted inf-norm move; last rejected try otherwise
    bool accepted = false;
};

struct FitResult {
    Tensor pose;                                        // best iterate, final falloff
    geom::Mat3 object_rotation = geom::Mat3::Identity();
    geom::Vec3 object_translation = geom::Vec3::Zero();
    double initial_objective = 0.0;  // final-falloff objective at the input pose
    double final_objective = 0.0;    // ... at the returned pose
    bool aborted = false;            // non-finite value cut the fit short
    std::vector<TraceRow> trace;
};

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

// Backtracking gradient descent on
//   contact MSE + penalty_weight * penetration + prior_weight * articulation drift,
// projected onto joint limits after every step. The returned pose is the
// iterate (including the start) with the lowest final-falloff objective, so
// a start that already matches its target comes back unchanged.
FitResult fit_pose(const hand::HandModel& model, const Tensor& initial, const geom::TriMesh& obj,
                   const geom::PointSet& obj_points, const ContactTarget& target,
                   const FitConfig& cfg = {});

}  // namespace hc::fit
