#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "handcontact/contactnet.hpp"
#include "handcontact/fitter.hpp"
#include "handcontact/geometry.hpp"
#include "handcontact/hand_model.hpp"
#include "handcontact/optim.hpp"
#include "handcontact/rng.hpp"
#include "handcontact/synthdata.hpp"
#include "handcontact/tensor.hpp"

namespace hc::semi {

// theta_t <- decay*theta_t + (1-decay)*theta_s, elementwise over matching
// parameter lists. decay 0 copies the student, decay 1 freezes the teacher.
void ema_update(net::NetworkWeights& teacher, const net::NetworkWeights& student, double decay);

// Stochastic cloud augmentation: optional per-axis mirror, a rotation about
// an arbitrary axis, then a uniform scale. The full linear map is
// scale * R * diag(flip); mirror and rotation together stay orthogonal, so
// normals move through that factor unscaled.
struct TransformSpec {
    std::array<bool, 3> flip{{false, false, false}};
    geom::Vec3 axis{0.0, 0.0, 1.0};  // unit rotation axis
    double angle = 0.0;              // radians
    double scale = 1.0;

    // Axes mirror independently with probability flip_prob; the axis is
    // uniform on the sphere, the angle uniform in +-pi, the scale uniform
    // in [0.8, 1.2].
    static TransformSpec draw(Rng& rng, double flip_prob = 0.2);

    geom::Mat3 orthogonal() const;  // rotation * mirror
    geom::Mat3 linear() const;      // scale * orthogonal()
};

// Positions through linear(), normal features through orthogonal(), the gap
// feature scaled with space and re-saturated at the storage clamp; is_hand
// and point order untouched.
net::FeaturedCloud apply_transform(const TransformSpec& spec, const net::FeaturedCloud& cloud);

// Mean absolute difference between decoded contact values, index-aligned.
double consistency_loss(const std::vector<double>& student_values,
                        const std::vector<double>& teacher_values);

// Acceptance gates for refined pseudo labels. Chamfer is measured in
// hundredths of a square meter (hand vertices against object points), the
// scale on which the default separates held objects from strays;
// penetration sums both directions in millimeters; visual is one minus
// structural similarity against the stored view.
struct FilterThresholds {
    double chamfer = 0.7;
    double penetration_mm = 6.0;
    double visual = 0.25;
};

struct FilterScores {
    double chamfer = 0.0;
    double penetration_mm = 0.0;
    double visual = 0.0;
};

// Teacher output plus the refined placement it was scored at. The object
// correction acts on the stored placement as world = R*p + t.
struct PseudoCandidate {
    std::int64_t scene_id = 0;
    fit::ContactTarget contact;  // teacher estimate, hand side then object side
    Tensor pose;                 // refined hand DoF vector
    geom::Mat3 object_rotation = geom::Mat3::Identity();
    geom::Vec3 object_translation = geom::Vec3::Zero();
};

// accepted iff every score sits at or under its threshold; a reject names
// each failed gate in reasons.
struct PseudoLabel {
    PseudoCandidate candidate;
    FilterScores scores;
    bool accepted = false;
    std::vector<std::string> reasons;
};

PseudoLabel score_candidate(const hand::HandModel& model, const data::SceneSample& scene,
                            const PseudoCandidate& cand, const FilterThresholds& th);

// Scores each candidate against the scene its scene_id names. A render
// failure rejects that candidate with a "render" reason instead of
// propagating. When ledger_path is nonempty, appends one JSON line per
// candidate recording scores, thresholds, decision, and reasons.
std::vector<PseudoLabel> filter_pseudo_labels(const hand::HandModel& model,
                                              const std::vector<data::SceneSample>& scenes,
                                              const std::vector<PseudoCandidate>& candidates,
                                              const FilterThresholds& th,
                                              const std::string& ledger_path = {});

// Network input for a hand/object pair: hand vertices with mesh normals
// first, then object points with nearest-face normals.
net::FeaturedCloud make_cloud(const geom::TriMesh& hand_mesh, const geom::TriMesh& object_mesh,
                              const geom::PointSet& object_points);
net::FeaturedCloud scene_cloud(const data::SceneSample& scene);  // stored geometry

// One scene prepared for a training step: the input cloud and per-point
// target contact, ground truth for labeled scenes or accepted teacher
// output for pseudo-labeled ones.
struct Example {
    net::FeaturedCloud cloud;
    std::vector<double> contact;
};

Example labeled_example(const data::SceneSample& scene);
// Rebuilds the scene geometry at the refined placement the filters passed,
// paired with the teacher contact.
Example pseudo_example(const hand::HandModel& model, const data::SceneSample& scene,
                       const PseudoLabel& label);

struct SemiConfig {
    double ema_decay = 0.999;
    double lambda_c = 0.5;   // weight of the consistency term
    double flip_prob = 0.2;  // per-axis mirror probability in drawn transforms
    bool soft_targets = false;  // pseudo CE against the teacher's current bin
                                // distribution instead of quantized bins
};

struct SemiStepStats {
    double loss_sup = 0.0;
    double loss_unsup = 0.0;
    double loss_cont = 0.0;
    double loss_total = 0.0;  // loss_sup + loss_unsup + lambda_c * loss_cont
    int labeled_count = 0;
    int pseudo_count = 0;
    bool unsup_empty = false;  // no pseudo examples; unsup and cont pinned to 0
};

// One optimizer step on the combined objective, then the EMA teacher
// update. The teacher is only read inside the step: it supplies the
// consistency targets (and soft bins) on the untransformed clouds while the
// student is scored on freshly drawn transforms, one per pseudo example.
// With no pseudo examples the step is exactly supervised training.
SemiStepStats semi_step(net::NetworkWeights& student, opt::AdamState& adam,
                        const opt::AdamConfig& adam_cfg, net::NetworkWeights& teacher,
                        const std::vector<Example>& labeled, const std::vector<Example>& pseudo,
                        const SemiConfig& cfg, Rng& rng);

}  // namespace hc::semi
