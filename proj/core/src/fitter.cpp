#include "handcontact/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <utility>

#include "handcontact/error.hpp"

namespace hc::fit {

namespace {

using geom::Mat3;
using geom::Vec3;

Mat3 skew_x() { Mat3 k; k << 0, 0, 0, 0, 0, -1, 0, 1, 0; return k; }
Mat3 skew_y() { Mat3 k; k << 0, 0, 1, 0, 0, 0, -1, 0, 0; return k; }
Mat3 skew_z() { Mat3 k; k << 0, -1, 0, 1, 0, 0, 0, 0, 0; return k; }

Mat3 axis_rot(double angle, const Mat3& k) {
    const double s = std::sin(angle);
    const double c2 = -1.0 * std::cos(angle) + 1.0;
    return (Mat3::Identity() + s * k) + c2 * (k * k);
}

// object pose [6]: rotation about x,y,z then translation; world = R p + t
void object_transform(const Tensor& objpose, Mat3& r, Vec3& t) {
    r = axis_rot(objpose[0], skew_x()) * (axis_rot(objpose[1], skew_y()) * axis_rot(objpose[2], skew_z()));
    t = Vec3(objpose[3], objpose[4], objpose[5]);
}

Tensor points_tensor(const geom::PointSet& pts) {
    Tensor out({static_cast<int>(pts.size()), 3}, 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int c = 0; c < 3; ++c) out[i * 3 + c] = pts[i][c];
    return out;
}

struct Problem {
    const hand::HandModel& model;
    const FitConfig& cfg;
    std::shared_ptr<const geom::MeshDistanceIndex> obj_index;
    Tensor obj_pts;    // [m,3], object local frame
    Tensor target_h;   // [hand verts]
    Tensor target_o;   // [m]
    Tensor initial_art;  // [45] anchor for the drift prior
    double wh = 0.0, wo = 0.0;  // contact MSE mix, proportional to point counts
};

struct Objective {
    double total = 0.0;
    double contact_mse = 0.0;
    double penetration = 0.0;  // meters, summed depths
    double prior = 0.0;
};

// Plain evaluation; the line search and best-iterate bookkeeping live
// entirely on this path so accept decisions are self-consistent.
Objective eval_plain(const Problem& p, const Tensor& theta, const Tensor& objpose, double delta) {
    geom::PointSet verts;
    p.model.pose_mesh(theta, verts);

    Mat3 r = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    if (p.cfg.refine_object) object_transform(objpose, r, t);

    const double mul = -1.0 / delta;
    Objective out;

    double ss_h = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const Vec3 q = p.cfg.refine_object ? Vec3(r.transpose() * (verts[i] - t)) : verts[i];
        const double sd = p.obj_index->signed_distance(q);
        const double c = ad::smooth_clamp01_value(mul * sd + 1.0, kContactSharpness);
        const double d = c - p.target_h[i];
        ss_h += d * d;
        out.penetration += std::max(0.0, -sd);
    }

    const geom::MeshDistanceIndex hand_index(verts, p.model.faces());
    const int m = p.obj_pts.dim(0);
    double ss_o = 0.0;
    for (int i = 0; i < m; ++i) {
        const Vec3 local(p.obj_pts.at2(i, 0), p.obj_pts.at2(i, 1), p.obj_pts.at2(i, 2));
        const Vec3 w = p.cfg.refine_object ? Vec3(r * local + t) : local;
        const double sd = hand_index.signed_distance(w);
        const double c = ad::smooth_clamp01_value(mul * sd + 1.0, kContactSharpness);
        const double d = c - p.target_o[i];
        ss_o += d * d;
        out.penetration += std::max(0.0, -sd);
    }

    out.contact_mse = p.wh * (ss_h / static_cast<double>(verts.size())) +
                      p.wo * (ss_o / static_cast<double>(m));
    for (int i = 6; i < hand::kPoseDof; ++i) {
        const double d = theta[i] - p.initial_art[i - 6];
        out.prior += d * d;
    }
    out.total = out.contact_mse + p.cfg.penalty_weight * out.penetration +
                p.cfg.prior_weight * out.prior;
    return out;
}

ad::NodeId rot_node(ad::Tape& tape, ad::NodeId objpose) {
    const auto axis = [&](int slot, const Mat3& k) {
        const ad::NodeId a = tape.slice(objpose, slot, 1);
        Tensor kt({3, 3}, 0.0), k2t({3, 3}, 0.0);
        const Mat3 k2 = k * k;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                kt[r * 3 + c] = k(r, c);
                k2t[r * 3 + c] = k2(r, c);
            }
        Tensor eye({3, 3}, 0.0);
        for (int d = 0; d < 3; ++d) eye[d * 3 + d] = 1.0;
        const ad::NodeId sk = tape.scalar_times(tape.sin(a), kt);
        const ad::NodeId ck = tape.scalar_times(tape.affine(tape.cos(a), -1.0, 1.0), k2t);
        return tape.add(tape.add(tape.constant(eye), sk), ck);
    };
    return tape.matmul(axis(0, skew_x()), tape.matmul(axis(1, skew_y()), axis(2, skew_z())));
}

struct Gradients {
    Objective objective;
    Tensor theta;    // [51]
    Tensor objpose;  // [6], zeros unless refining
};

Gradients eval_tape(const Problem& p, const Tensor& theta, const Tensor& objpose, double delta) {
    ad::Tape tape;
    const ad::NodeId th = tape.leaf(theta);
    const hand::TapeHand hand = p.model.build(tape, th);

    ad::NodeId pose_leaf = -1;
    ad::NodeId hand_queries = hand.verts;               // in the object frame
    ad::NodeId obj_world = tape.constant(p.obj_pts);    // object samples in world
    if (p.cfg.refine_object) {
        pose_leaf = tape.leaf(objpose);
        const ad::NodeId rot = rot_node(tape, pose_leaf);
        const ad::NodeId t_row = tape.reshape(tape.slice(pose_leaf, 3, 3), {1, 3});
        const ad::NodeId neg_tr = tape.reshape(tape.scale(tape.matmul(t_row, rot), -1.0), {3});
        hand_queries = tape.linear(hand.verts, tape.transpose(rot), neg_tr);
        obj_world = tape.linear(obj_world, rot, tape.reshape(t_row, {3}));
    }

    const ad::NodeId sd_hand = tape.signed_distance_to_fixed_mesh(hand_queries, p.obj_index);
    const ad::NodeId sd_obj =
        tape.signed_distance_to_deforming_mesh(hand.verts, p.model.faces_shared(), obj_world);

    const double mul = -1.0 / delta;
    const ad::NodeId c_h = tape.smooth_clamp01(tape.affine(sd_hand, mul, 1.0), kContactSharpness);
    const ad::NodeId c_o = tape.smooth_clamp01(tape.affine(sd_obj, mul, 1.0), kContactSharpness);
    const ad::NodeId mse =
        tape.add(tape.scale(tape.mse_loss(c_h, tape.constant(p.target_h)), p.wh),
                 tape.scale(tape.mse_loss(c_o, tape.constant(p.target_o)), p.wo));
    const ad::NodeId pen = tape.add(tape.sum(tape.relu(tape.scale(sd_hand, -1.0))),
                                    tape.sum(tape.relu(tape.scale(sd_obj, -1.0))));
    const ad::NodeId drift = tape.subtract(tape.slice(th, 6, hand::kPoseDof - 6),
                                           tape.constant(p.initial_art));
    const ad::NodeId prior = tape.sum(tape.mul(drift, drift));
    const ad::NodeId total = tape.add(tape.add(mse, tape.scale(pen, p.cfg.penalty_weight)),
                                      tape.scale(prior, p.cfg.prior_weight));
    tape.backward(total);

    Gradients g;
    g.objective.total = tape.value(total)[0];
    g.objective.contact_mse = tape.value(mse)[0];
    g.objective.penetration = tape.value(pen)[0];
    g.objective.prior = tape.value(prior)[0];
    g.theta = tape.grad(th);
    g.objpose = p.cfg.refine_object ? tape.grad(pose_leaf) : Tensor({6}, 0.0);
    return g;
}

double inf_norm(const Tensor& t) {
    double m = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
    return m;
}

}  // namespace

double contact_response(double signed_dist, double falloff) {
    if (!(falloff > 0.0)) throw InvalidInputError("falloff must be positive");
    const double mul = -1.0 / falloff;
    return ad::smooth_clamp01_value(mul * signed_dist + 1.0, kContactSharpness);
}

std::vector<double> achieved_contact(const geom::MeshDistanceIndex& surface,
                                     const geom::PointSet& queries, double falloff) {
    if (!(falloff > 0.0)) throw InvalidInputError("falloff must be positive");
    std::vector<double> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        out[i] = contact_response(surface.signed_distance(queries[i]), falloff);
    return out;
}

std::vector<double> achieved_contact(const geom::TriMesh& surface, const geom::PointSet& queries,
                                     double falloff) {
    return achieved_contact(geom::MeshDistanceIndex(surface), queries, falloff);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw InvalidInputError("cannot open for writing: " + path);
    std::fprintf(f, "iter,falloff,objective,contact_mse,penetration_m,prior,step,accepted\n");
    for (const auto& r : trace)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.iter, r.falloff,
                     r.objective, r.contact_mse, r.penetration_m, r.prior, r.step,
                     r.accepted ? 1 : 0);
    std::fclose(f);
}

FitResult fit_pose(const hand::HandModel& model, const Tensor& initial, const geom::TriMesh& obj,
                   const geom::PointSet& obj_points, const ContactTarget& target,
                   const FitConfig& cfg) {
    if (initial.rank() != 1 || initial.dim(0) != hand::kPoseDof)
        throw DimensionError("initial pose must be [" + std::to_string(hand::kPoseDof) + "]");
    if (static_cast<int>(target.hand.size()) != hand::kVertexCount)
        throw DimensionError("hand target must cover every vertex");
    if (target.object.size() != obj_points.size())
        throw DimensionError("object target size must match the sample points");
    if (obj_points.empty()) throw InvalidInputError("need at least one object point");
    if (cfg.iters < 1 || !(cfg.step > 0.0) || !(cfg.falloff > 0.0))
        throw InvalidInputError("iters, step, and falloff must be positive");
    for (double d : cfg.continuation)
        if (!(d > 0.0)) throw InvalidInputError("continuation falloffs must be positive");

    Problem p{model, cfg,
              std::make_shared<geom::MeshDistanceIndex>(obj),
              points_tensor(obj_points),
              Tensor({hand::kVertexCount}, 0.0),
              Tensor({static_cast<int>(obj_points.size())}, 0.0),
              Tensor({hand::kPoseDof - 6}, 0.0)};
    if (!p.obj_index->closed()) throw CapabilityError("object mesh must be closed");
    for (int i = 0; i < hand::kVertexCount; ++i) p.target_h[i] = target.hand[i];
    for (std::size_t i = 0; i < target.object.size(); ++i) p.target_o[i] = target.object[i];
    const double nh = hand::kVertexCount;
    const double no = static_cast<double>(obj_points.size());
    p.wh = nh / (nh + no);
    p.wo = no / (nh + no);

    Tensor theta = model.clamp_pose(initial);
    for (int i = 6; i < hand::kPoseDof; ++i) p.initial_art[i - 6] = theta[i];
    Tensor objpose({6}, 0.0);

    std::vector<double> phases = cfg.continuation;
    phases.push_back(cfg.falloff);
    const int coarse = std::max(1, cfg.iters / 6);
    std::vector<int> budget(phases.size(), coarse);
    budget.back() = std::max(1, cfg.iters - coarse * static_cast<int>(phases.size() - 1));

    FitResult result;
    const Objective at_start = eval_plain(p, theta, objpose, cfg.falloff);
    result.initial_objective = at_start.total;
    Tensor best_theta = theta;
    Tensor best_objpose = objpose;
    double best_final = at_start.total;

    int iter = 0;
    for (std::size_t ph = 0; ph < phases.size() && !result.aborted; ++ph) {
        const double delta = phases[ph];
        const bool last_phase = ph + 1 == phases.size();
        Objective cur = last_phase && iter == 0 ? at_start : eval_plain(p, theta, objpose, delta);
        for (int s = 0; s < budget[ph]; ++s, ++iter) {
            Gradients g;
            try {
                g = eval_tape(p, theta, objpose, delta);
            } catch (const NumericError&) {
                result.aborted = true;
                break;
            }
            const double gmax =
                std::max(inf_norm(g.theta), cfg.refine_object ? inf_norm(g.objpose) : 0.0);
            TraceRow row{iter, delta, cur.total, cur.contact_mse, cur.penetration, cur.prior,
                         0.0,  false};
            if (gmax < 1e-14) {  // flat; nothing left to follow in this phase
                result.trace.push_back(row);
                break;
            }

            double alpha = cfg.step / gmax;
            bool accepted = false;
            Tensor cand_theta, cand_objpose;
            Objective cand;
            for (int h = 0; h < 30; ++h, alpha *= 0.5) {
                cand_theta = theta;
                for (std::size_t i = 0; i < cand_theta.numel(); ++i)
                    cand_theta[i] -= alpha * g.theta[i];
                cand_theta = model.clamp_pose(cand_theta);
                cand_objpose = objpose;
                if (cfg.refine_object)
                    for (std::size_t i = 0; i < cand_objpose.numel(); ++i)
                        cand_objpose[i] -= alpha * g.objpose[i];
                cand = eval_plain(p, cand_theta, cand_objpose, delta);
                if (std::isfinite(cand.total) && cand.total < cur.total) {
                    accepted = true;
                    break;
                }
            }
            row.step = alpha * gmax;
            if (!accepted) {  // this gradient has no descent at any tried scale
                result.trace.push_back(row);
                break;
            }
            theta = std::move(cand_theta);
            objpose = std::move(cand_objpose);
            cur = cand;
            row.accepted = true;
            row.objective = cur.total;
            row.contact_mse = cur.contact_mse;
            row.penetration_m = cur.penetration;
            row.prior = cur.prior;
            result.trace.push_back(row);

            const double fobj =
                last_phase ? cur.total : eval_plain(p, theta, objpose, cfg.falloff).total;
            if (fobj < best_final) {
                best_final = fobj;
                best_theta = theta;
                best_objpose = objpose;
            }
        }
    }

    result.pose = std::move(best_theta);
    if (cfg.refine_object)
        object_transform(best_objpose, result.object_rotation, result.object_translation);
    result.final_objective = best_final;
    if (!cfg.trace_path.empty()) write_trace_csv(result.trace, cfg.trace_path);
    return result;
}

}  // namespace hc::fit
