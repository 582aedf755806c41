#include "handcontact/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "handcontact/error.hpp"

namespace hc::hand {

namespace {

// palm lattice cells per axis: x across the knuckles, y wrist-to-fingers,
// z through the thickness
constexpr int NX = 12, NY = 4, NZ = 2;

// Box faces parametrized so that axisU x axisV equals the outward normal;
// quads emitted in (u,v) order then come out counter-clockwise from outside.
struct FaceDef {
    int fixed_axis, fixed_val;
    int u_axis, v_axis;
};

constexpr FaceDef kFaces[6] = {
    {0, NX, 1, 2},  // +x
    {0, 0, 2, 1},   // -x
    {1, NY, 2, 0},  // +y
    {1, 0, 0, 2},   // -y
    {2, NZ, 0, 1},  // +z
    {2, 0, 1, 0},   // -z
};
constexpr int kFacePlusY = 2, kFacePlusX = 0;

constexpr int kLatticeDims[3] = {NX, NY, NZ};

// perimeter of a 2x2 cell patch, counter-clockwise in (u,v)
constexpr int kRingPattern[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {1, 0},
                                    {1, 1},   {0, 1},  {-1, 1}, {-1, 0}};

struct DigitSpec {
    int face;    // index into kFaces
    int u0, v0;  // patch origin cell in face coordinates
    int rings;
    double length;
    geom::Vec3 dir;  // growth direction before normalization
    double girth;    // ring radius at the base
};

// thumb, index, middle, ring, pinky; ring counts sum to 77 so the vertex
// total lands exactly on kVertexCount
const DigitSpec kDigits5[kDigits] = {
    {kFacePlusX, 1, 0, 15, 0.062, {0.35, 0.75, -0.55}, 0.0105},
    {kFacePlusY, 0, 10, 16, 0.072, {0.10, 1.0, 0.0}, 0.0082},
    {kFacePlusY, 0, 7, 17, 0.079, {0.03, 1.0, 0.0}, 0.0085},
    {kFacePlusY, 0, 4, 16, 0.073, {-0.05, 1.0, 0.0}, 0.0080},
    {kFacePlusY, 0, 1, 13, 0.058, {-0.12, 1.0, 0.0}, 0.0072},
};

double smoothstep(double x, double lo, double hi) {
    const double u = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

geom::Mat3 skew(const geom::Vec3& a) {
    geom::Mat3 k;
    k << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
    return k;
}

// same composition the tape uses, so the two paths agree to rounding
geom::Mat3 rodrigues(double angle, const geom::Mat3& k, const geom::Mat3& k2) {
    return geom::Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k2;
}

Tensor mat3_tensor(const geom::Mat3& m) {
    std::vector<double> v(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v[r * 3 + c] = m(r, c);
    return Tensor({3, 3}, std::move(v));
}

Tensor row_tensor(const geom::Vec3& v) { return Tensor({1, 3}, {v.x(), v.y(), v.z()}); }

struct LatticeKey {
    int i, j, k;
    bool operator<(const LatticeKey& o) const {
        if (i != o.i) return i < o.i;
        if (j != o.j) return j < o.j;
        return k < o.k;
    }
};

}  // namespace

void HandModel::build_template(const Tensor& beta) {
    if (beta.rank() != 1 || beta.dim(0) != kShapeDof)
        throw DimensionError("hand shape: beta must be [" + std::to_string(kShapeDof) +
                             "], got " + beta.shape_string());
    const auto knob = [&](int i, double gain) { return 1.0 + gain * beta.data()[i]; };
    const double overall = knob(0, 0.08);
    const double palm_w = 0.082 * overall * knob(1, 0.06);
    const double palm_l = 0.092 * overall * knob(2, 0.06);
    const double palm_t = 0.022 * overall * knob(3, 0.06);
    const double girth_k = overall * knob(4, 0.08);

    const double spacing[3] = {palm_w / NX, palm_l / NY, palm_t / NZ};
    const auto lattice_pos = [&](int i, int j, int k) -> geom::Vec3 {
        return {(static_cast<double>(i) / NX - 0.5) * palm_w,
                static_cast<double>(j) / NY * palm_l,
                (static_cast<double>(k) / NZ - 0.5) * palm_t};
    };

    template_verts_.clear();
    digit_axial_.clear();
    std::map<LatticeKey, int> lattice_id;
    const auto vert_of = [&](int i, int j, int k) {
        const LatticeKey key{i, j, k};
        auto it = lattice_id.find(key);
        if (it != lattice_id.end()) return it->second;
        const int id = static_cast<int>(template_verts_.size());
        template_verts_.push_back(lattice_pos(i, j, k));
        digit_axial_.push_back({-1, 0.0});
        lattice_id.emplace(key, id);
        return id;
    };

    const auto face_point = [&](const FaceDef& f, int u, int v) {
        int c[3];
        c[f.fixed_axis] = f.fixed_val;
        c[f.u_axis] = u;
        c[f.v_axis] = v;
        return vert_of(c[0], c[1], c[2]);
    };

    // digit patches, keyed by face index
    std::vector<std::array<int, 3>> patch;  // face, u0, v0
    for (const auto& d : kDigits5) patch.push_back({d.face, d.u0, d.v0});

    std::vector<std::array<int, 4>> quads;
    for (int fi = 0; fi < 6; ++fi) {
        const FaceDef& f = kFaces[fi];
        const int nu = kLatticeDims[f.u_axis];
        const int nv = kLatticeDims[f.v_axis];
        for (int u = 0; u < nu; ++u)
            for (int v = 0; v < nv; ++v) {
                bool removed = false;
                for (const auto& p : patch)
                    if (p[0] == fi && u >= p[1] && u < p[1] + 2 && v >= p[2] && v < p[2] + 2)
                        removed = true;
                if (removed) continue;
                quads.push_back({face_point(f, u, v), face_point(f, u + 1, v),
                                 face_point(f, u + 1, v + 1), face_point(f, u, v + 1)});
            }
    }

    bones_.assign(kBoneCount, Bone{});
    template_joints_.assign(kJointCount, geom::Vec3::Zero());
    joint_frames_.assign(kJointCount, {0, geom::Vec3::Zero()});
    const geom::Vec3 wrist_center(0.0, palm_l * 0.065, 0.0);
    bones_[0].parent = -1;
    bones_[0].center = wrist_center;
    template_joints_[0] = wrist_center;
    joint_frames_[0] = {0, wrist_center};

    std::vector<std::array<int, 3>> tris;
    const auto push_quad = [&](const std::array<int, 4>& q) {
        tris.push_back({q[0], q[1], q[2]});
        tris.push_back({q[0], q[2], q[3]});
    };
    for (const auto& q : quads) push_quad(q);

    for (int d = 0; d < kDigits; ++d) {
        const DigitSpec& spec = kDigits5[d];
        const FaceDef& f = kFaces[spec.face];
        const double length = spec.length * overall * knob(5 + d, 0.08);
        const double girth = spec.girth * girth_k;
        const geom::Vec3 dir = spec.dir.normalized();
        const geom::Vec3 u_hat = geom::Vec3::Unit(f.u_axis);
        const geom::Vec3 v_hat = geom::Vec3::Unit(f.v_axis);
        const double u_len = spacing[f.u_axis];
        const double v_len = spacing[f.v_axis];

        int c[3];
        c[f.fixed_axis] = f.fixed_val;
        c[f.u_axis] = spec.u0 + 1;
        c[f.v_axis] = spec.v0 + 1;
        const geom::Vec3 base_center = lattice_pos(c[0], c[1], c[2]);

        std::array<int, 8> prev_ring;
        for (int s = 0; s < 8; ++s)
            prev_ring[s] = face_point(f, spec.u0 + 1 + kRingPattern[s][0],
                                      spec.v0 + 1 + kRingPattern[s][1]);

        for (int r = 1; r <= spec.rings; ++r) {
            const double t = static_cast<double>(r) / (spec.rings + 0.8);
            const geom::Vec3 center = base_center + dir * (length * t);
            const double taper = 1.0 - 0.42 * t;
            const double blend = r == 1 ? 0.55 : 1.0;
            std::array<int, 8> ring;
            for (int s = 0; s < 8; ++s) {
                const double du = kRingPattern[s][0], dv = kRingPattern[s][1];
                const double norm = std::sqrt(du * du + dv * dv);
                const double sq_u = du * u_len * taper, sq_v = dv * v_len * taper;
                const double ci_u = girth * taper * du / norm, ci_v = girth * taper * dv / norm;
                const double off_u = (1.0 - blend) * sq_u + blend * ci_u;
                const double off_v = (1.0 - blend) * sq_v + blend * ci_v;
                ring[s] = static_cast<int>(template_verts_.size());
                template_verts_.push_back(center + u_hat * off_u + v_hat * off_v);
                digit_axial_.push_back({d, t});
            }
            for (int s = 0; s < 8; ++s) {
                const int sn = (s + 1) % 8;
                push_quad({prev_ring[s], prev_ring[sn], ring[sn], ring[s]});
            }
            prev_ring = ring;
        }

        const int apex = static_cast<int>(template_verts_.size());
        const geom::Vec3 apex_pos = base_center + dir * length;
        template_verts_.push_back(apex_pos);
        digit_axial_.push_back({d, 1.0});
        for (int s = 0; s < 8; ++s) tris.push_back({prev_ring[s], prev_ring[(s + 1) % 8], apex});

        // bones pivot at the knuckle line fractions; tip is a joint only
        const geom::Vec3 mcp = base_center - dir * 0.004;
        const geom::Vec3 pip = base_center + dir * (length * 0.45);
        const geom::Vec3 dip = base_center + dir * (length * 0.75);
        const geom::Vec3 t_hat = dir;
        const geom::Vec3 f_hat = dir.cross(geom::Vec3(0.0, 0.0, -1.0)).normalized();
        const geom::Vec3 a_hat = t_hat.cross(f_hat).normalized();
        const geom::Mat3 fk = skew(f_hat), ak = skew(a_hat), tk = skew(t_hat);

        const int prox = 1 + d * 3;
        const geom::Vec3 centers[3] = {mcp, pip, dip};
        for (int seg = 0; seg < 3; ++seg) {
            Bone& b = bones_[prox + seg];
            b.parent = seg == 0 ? 0 : prox + seg - 1;
            b.center = centers[seg];
            b.flex_k = fk;
            b.flex_k2 = fk * fk;
            b.abd_k = ak;
            b.abd_k2 = ak * ak;
            b.twist_k = tk;
            b.twist_k2 = tk * tk;
            b.dof = 6 + d * 9 + seg * 3;
        }
        for (int along = 0; along < 3; ++along) {
            const int j = joint_index(d, along);
            template_joints_[j] = centers[along];
            joint_frames_[j] = {along == 0 ? 0 : prox + along - 1, centers[along]};
        }
        const int jt = joint_index(d, 3);
        template_joints_[jt] = apex_pos;
        joint_frames_[jt] = {prox + 2, apex_pos};
    }

    if (static_cast<int>(template_verts_.size()) != kVertexCount)
        throw InvalidInputError("hand template: vertex budget broken, got " +
                                std::to_string(template_verts_.size()));

    faces_ = std::make_shared<std::vector<std::array<int, 3>>>(std::move(tris));

    // skinning: palm is rigid to the wrist; digits hand off along their axis
    bone_weights_.assign(kBoneCount, std::vector<double>(kVertexCount, 0.0));
    vert_bones_.assign(kVertexCount, {});
    for (int v = 0; v < kVertexCount; ++v) {
        const auto [digit, t] = digit_axial_[v];
        if (digit < 0) {
            bone_weights_[0][v] = 1.0;
            vert_bones_[v].push_back({0, 1.0});
            continue;
        }
        const int prox = 1 + digit * 3;
        const double wr = 1.0 - smoothstep(t, 0.0, 0.12);
        const double b1 = smoothstep(t, 0.37, 0.53);
        const double b2 = smoothstep(t, 0.67, 0.83);
        const double rest = 1.0 - wr;
        const double wp = rest * (1.0 - b1);
        const double wm = rest * b1 * (1.0 - b2);
        // distal takes the exact remainder so the four sum to 1.0
        const double w[4] = {wr, wp, wm, 1.0 - wr - wp - wm};
        const int idx[4] = {0, prox, prox + 1, prox + 2};
        for (int s = 0; s < 4; ++s)
            if (w[s] != 0.0) {
                bone_weights_[idx[s]][v] = w[s];
                vert_bones_[v].push_back({idx[s], w[s]});
            }
    }

    verts_tensor_ = Tensor({kVertexCount, 3}, 0.0);
    for (int v = 0; v < kVertexCount; ++v)
        for (int a = 0; a < 3; ++a) verts_tensor_.at2(v, a) = template_verts_[v][a];
}

void HandModel::build_limits() {
    limits_.assign(kPoseDof, {-1e18, 1e18});  // wrist six stay free
    for (int d = 0; d < kDigits; ++d) {
        const bool thumb = d == 0;
        for (int seg = 0; seg < 3; ++seg) {
            const int base = 6 + d * 9 + seg * 3;
            if (seg == 0) {
                limits_[base] = thumb ? std::pair{-0.7, 1.4} : std::pair{-0.35, 1.75};
                limits_[base + 1] = thumb ? std::pair{-0.85, 0.85} : std::pair{-0.35, 0.35};
                limits_[base + 2] = thumb ? std::pair{-0.5, 0.5} : std::pair{-0.3, 0.3};
            } else {
                limits_[base] = {-0.12, 1.95};
                limits_[base + 1] = {-0.06, 0.06};
                limits_[base + 2] = {-0.06, 0.06};
            }
        }
    }
}

HandModel::HandModel(const Tensor& beta) {
    build_template(beta);
    build_limits();
}

Tensor HandModel::clamp_pose(const Tensor& theta, std::vector<int>* clamped) const {
    if (theta.rank() != 1 || theta.dim(0) != kPoseDof)
        throw DimensionError("hand pose: theta must be [" + std::to_string(kPoseDof) + "], got " +
                             theta.shape_string());
    Tensor out = theta;
    for (int i = 6; i < kPoseDof; ++i) {
        const auto [lo, hi] = limits_[i];
        if (out.data()[i] < lo || out.data()[i] > hi) {
            out.data()[i] = std::clamp(out.data()[i], lo, hi);
            if (clamped) clamped->push_back(i);
        }
    }
    return out;
}

namespace {

struct PlainTf {
    geom::Mat3 rot;
    geom::Vec3 trans;
};

}  // namespace

void HandModel::pose_mesh(const Tensor& theta, geom::PointSet& verts,
                          std::vector<geom::Vec3>* joints) const {
    if (theta.rank() != 1 || theta.dim(0) != kPoseDof)
        throw DimensionError("hand pose: theta must be [" + std::to_string(kPoseDof) + "], got " +
                             theta.shape_string());
    const double* th = theta.data();

    static const geom::Mat3 kx = skew(geom::Vec3::UnitX()), kx2 = kx * kx;
    static const geom::Mat3 ky = skew(geom::Vec3::UnitY()), ky2 = ky * ky;
    static const geom::Mat3 kz = skew(geom::Vec3::UnitZ()), kz2 = kz * kz;

    std::vector<PlainTf> tf(kBoneCount);
    const geom::Mat3 rg = rodrigues(th[0], kx, kx2) *
                          (rodrigues(th[1], ky, ky2) * rodrigues(th[2], kz, kz2));
    const geom::Vec3 cw = bones_[0].center;
    tf[0].rot = rg;
    tf[0].trans = cw - rg * cw + geom::Vec3(th[3], th[4], th[5]);

    for (int b = 1; b < kBoneCount; ++b) {
        const Bone& bone = bones_[b];
        const PlainTf& par = tf[bone.parent];
        const geom::Mat3 rl = rodrigues(th[bone.dof], bone.flex_k, bone.flex_k2) *
                              (rodrigues(th[bone.dof + 1], bone.abd_k, bone.abd_k2) *
                               rodrigues(th[bone.dof + 2], bone.twist_k, bone.twist_k2));
        tf[b].rot = par.rot * rl;
        tf[b].trans = par.rot * (bone.center - rl * bone.center) + par.trans;
    }

    verts.resize(kVertexCount);
    for (int v = 0; v < kVertexCount; ++v) {
        geom::Vec3 acc = geom::Vec3::Zero();
        for (const auto& [b, w] : vert_bones_[v])
            acc += w * (tf[b].rot * template_verts_[v] + tf[b].trans);
        verts[v] = acc;
    }

    if (joints) {
        joints->resize(kJointCount);
        for (int j = 0; j < kJointCount; ++j) {
            const auto& [bone, pos] = joint_frames_[j];
            (*joints)[j] = tf[bone].rot * pos + tf[bone].trans;
        }
    }
}

geom::TriMesh HandModel::posed_mesh(const Tensor& theta) const {
    geom::PointSet verts;
    pose_mesh(theta, verts);
    return geom::TriMesh::create(verts, *faces_);
}

std::vector<geom::Vec3> HandModel::joint_positions(const Tensor& theta) const {
    geom::PointSet verts;
    std::vector<geom::Vec3> joints;
    pose_mesh(theta, verts, &joints);
    return joints;
}

TapeHand HandModel::build(ad::Tape& t, ad::NodeId theta) const {
    using ad::NodeId;
    const Tensor& tv = t.value(theta);
    if (tv.rank() != 1 || tv.dim(0) != kPoseDof)
        throw DimensionError("hand pose: theta must be [" + std::to_string(kPoseDof) + "], got " +
                             tv.shape_string());

    const auto rot_about = [&](NodeId angle, const geom::Mat3& k, const geom::Mat3& k2) {
        const NodeId s = t.sin(angle);
        const NodeId omc = t.affine(t.cos(angle), -1.0, 1.0);
        return t.add(t.add(t.constant(mat3_tensor(geom::Mat3::Identity())),
                           t.scalar_times(s, mat3_tensor(k))),
                     t.scalar_times(omc, mat3_tensor(k2)));
    };

    static const geom::Mat3 kx = skew(geom::Vec3::UnitX()), kx2 = kx * kx;
    static const geom::Mat3 ky = skew(geom::Vec3::UnitY()), ky2 = ky * ky;
    static const geom::Mat3 kz = skew(geom::Vec3::UnitZ()), kz2 = kz * kz;

    struct TapeTf {
        NodeId rot, trans_row;
    };
    std::vector<TapeTf> tf(kBoneCount);

    const NodeId rg =
        t.matmul(rot_about(t.slice(theta, 0, 1), kx, kx2),
                 t.matmul(rot_about(t.slice(theta, 1, 1), ky, ky2),
                          rot_about(t.slice(theta, 2, 1), kz, kz2)));
    const NodeId cw_row = t.constant(row_tensor(bones_[0].center));
    const NodeId trans = t.reshape(t.slice(theta, 3, 3), {1, 3});
    tf[0] = {rg, t.add(t.subtract(cw_row, t.matmul(cw_row, t.transpose(rg))), trans)};

    for (int b = 1; b < kBoneCount; ++b) {
        const Bone& bone = bones_[b];
        const TapeTf& par = tf[bone.parent];
        const NodeId rl =
            t.matmul(rot_about(t.slice(theta, bone.dof, 1), bone.flex_k, bone.flex_k2),
                     t.matmul(rot_about(t.slice(theta, bone.dof + 1, 1), bone.abd_k, bone.abd_k2),
                              rot_about(t.slice(theta, bone.dof + 2, 1), bone.twist_k,
                                        bone.twist_k2)));
        const NodeId cj = t.constant(row_tensor(bone.center));
        const NodeId tl = t.subtract(cj, t.matmul(cj, t.transpose(rl)));
        tf[b] = {t.matmul(par.rot, rl),
                 t.add(t.matmul(tl, t.transpose(par.rot)), par.trans_row)};
    }

    const NodeId vc = t.constant(verts_tensor_);
    NodeId verts = -1;
    for (int b = 0; b < kBoneCount; ++b) {
        const NodeId moved =
            t.linear(vc, t.transpose(tf[b].rot), t.reshape(tf[b].trans_row, {3}));
        const NodeId part = t.const_scale(moved, bone_weights_[b]);
        verts = b == 0 ? part : t.add(verts, part);
    }

    std::vector<NodeId> rows(kJointCount);
    for (int j = 0; j < kJointCount; ++j) {
        const auto& [bone, pos] = joint_frames_[j];
        rows[j] = t.add(t.matmul(t.constant(row_tensor(pos)), t.transpose(tf[bone].rot)),
                        tf[bone].trans_row);
    }
    return {verts, t.stack_rows(rows)};
}

}  // namespace hc::hand
