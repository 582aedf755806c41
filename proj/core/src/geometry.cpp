#include "handcontact/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace hc::geom {

namespace {

constexpr double kDegenerateArea = 1e-16;  // m^2

}  // namespace

TriMesh TriMesh::create(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
    if (vertices.empty() || faces.empty())
        throw InvalidInputError("mesh needs at least one vertex and one face");
    const int nv = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int idx = faces[f][c];
            if (idx < 0 || idx >= nv)
                throw InvalidInputError("face " + std::to_string(f) + " references vertex " +
                                        std::to_string(idx) + " outside [0," +
                                        std::to_string(nv) + ")");
        }
        const Vec3& a = vertices[faces[f][0]];
        const Vec3& b = vertices[faces[f][1]];
        const Vec3& c = vertices[faces[f][2]];
        if (0.5 * (b - a).cross(c - a).norm() < kDegenerateArea)
            throw InvalidInputError("face " + std::to_string(f) + " is degenerate (zero area)");
    }
    TriMesh m;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    return m;
}

Vec3 TriMesh::face_normal(int f) const {
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    return (b - a).cross(c - a).normalized();
}

double TriMesh::face_area(int f) const {
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    return 0.5 * (b - a).cross(c - a).norm();
}

double TriMesh::surface_area() const {
    double s = 0.0;
    for (int f = 0; f < face_count(); ++f) s += face_area(f);
    return s;
}

double TriMesh::signed_volume() const {
    double v = 0.0;
    for (const auto& f : faces)
        v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]])) / 6.0;
    return v;
}

std::vector<Vec3> TriMesh::vertex_normals() const {
    std::vector<Vec3> n(vertices.size(), Vec3::Zero());
    for (int f = 0; f < face_count(); ++f) {
        const Vec3& a = vertices[faces[f][0]];
        const Vec3& b = vertices[faces[f][1]];
        const Vec3& c = vertices[faces[f][2]];
        const Vec3 w = 0.5 * (b - a).cross(c - a);  // area-weighted normal
        for (int k = 0; k < 3; ++k) n[faces[f][k]] += w;
    }
    for (auto& v : n) {
        const double len = v.norm();
        v = len > 1e-20 ? Vec3(v / len) : Vec3(0, 0, 1);
    }
    return n;
}

bool TriMesh::is_closed() const {
    // Key directed edge (a,b); a closed orientable mesh uses each directed
    // edge exactly once and contains its reverse.
    std::unordered_map<std::int64_t, int> count;
    const std::int64_t nv = vertex_count();
    count.reserve(faces.size() * 3);
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            const std::int64_t a = f[k];
            const std::int64_t b = f[(k + 1) % 3];
            if (++count[a * nv + b] > 1) return false;
        }
    }
    for (const auto& [key, c] : count) {
        const std::int64_t a = key / nv;
        const std::int64_t b = key % nv;
        auto rev = count.find(b * nv + a);
        if (rev == count.end()) return false;
    }
    return true;
}

void TriMesh::bounds(Vec3& lo, Vec3& hi) const {
    lo = hi = vertices[0];
    for (const auto& v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
}

double TriMesh::diameter() const {
    double best = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
        for (std::size_t j = i + 1; j < vertices.size(); ++j)
            best = std::max(best, (vertices[i] - vertices[j]).squaredNorm());
    return std::sqrt(best);
}

TriMesh TriMesh::transformed(const Mat3& R, const Vec3& t, double scale) const {
    TriMesh out = *this;
    for (auto& v : out.vertices) v = scale * (R * v) + t;
    return out;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary) {
    // Ericson, Real-Time Collision Detection 5.1.5.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    auto emit = [&](double u, double v, double w, const Vec3& q) {
        if (bary) *bary = Vec3(u, v, w);
        return q;
    };
    if (d1 <= 0.0 && d2 <= 0.0) return emit(1, 0, 0, a);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return emit(0, 1, 0, b);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return emit(1 - v, v, 0, a + v * ab);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return emit(0, 0, 1, c);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return emit(1 - w, 0, w, a + w * ac);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return emit(0, 1 - w, w, b + w * (c - b));
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return emit(1 - v - w, v, w, a + ab * v + ac * w);
}

MeshDistanceIndex::MeshDistanceIndex(const TriMesh& mesh)
    : MeshDistanceIndex(mesh.vertices, mesh.faces) {}

MeshDistanceIndex::MeshDistanceIndex(const std::vector<Vec3>& vertices,
                                     const std::vector<std::array<int, 3>>& faces)
    : verts_(vertices), faces_(faces) {
    if (verts_.empty() || faces_.empty())
        throw InvalidInputError("distance index needs a non-empty mesh");
    build();
}

void MeshDistanceIndex::build() {
    {
        TriMesh probe;
        probe.vertices = verts_;
        probe.faces = faces_;
        closed_ = probe.is_closed();
    }
    order_.resize(faces_.size());
    std::iota(order_.begin(), order_.end(), 0);
    use_bvh_ = static_cast<int>(faces_.size()) > kBruteForceFaceLimit;
    if (!use_bvh_) return;
    nodes_.clear();
    nodes_.reserve(2 * faces_.size() / 2);
    build_node(0, static_cast<int>(faces_.size()), 0);
}

int MeshDistanceIndex::build_node(int begin, int end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Vec3 lo(1e30, 1e30, 1e30), hi(-1e30, -1e30, -1e30);
    Vec3 clo = lo, chi = hi;
    for (int i = begin; i < end; ++i) {
        Vec3 centroid = Vec3::Zero();
        for (int k = 0; k < 3; ++k) {
            const Vec3& v = verts_[faces_[order_[i]][k]];
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
            centroid += v / 3.0;
        }
        clo = clo.cwiseMin(centroid);
        chi = chi.cwiseMax(centroid);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= 4 || depth > 48) {
        nodes_[id].left = -1;
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis = 0;
    const Vec3 ext = chi - clo;
    if (ext[1] > ext[axis]) axis = 1;
    if (ext[2] > ext[axis]) axis = 2;
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int fa, int fb) {
                         auto cen = [&](int f) {
                             return (verts_[faces_[f][0]][axis] + verts_[faces_[f][1]][axis] +
                                     verts_[faces_[f][2]][axis]);
                         };
                         const double ca = cen(fa), cb = cen(fb);
                         return ca < cb || (ca == cb && fa < fb);
                     });
    const int l = build_node(begin, mid, depth + 1);
    const int r = build_node(mid, end, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
}

namespace {

double point_box_dist2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double v = p[k] < lo[k] ? lo[k] - p[k] : (p[k] > hi[k] ? p[k] - hi[k] : 0.0);
        d2 += v * v;
    }
    return d2;
}

bool ray_hits_box(const Vec3& o, const Vec3& inv_dir, const Vec3& lo, const Vec3& hi) {
    double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        double t0 = (lo[k] - o[k]) * inv_dir[k];
        double t1 = (hi[k] - o[k]) * inv_dir[k];
        if (inv_dir[k] < 0.0) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmax < tmin) return false;
    }
    return true;
}

// Moller-Trumbore; returns true for a crossing with t > eps. Near-parallel
// rays report no hit and rely on the other parity votes.
bool ray_hits_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                       const Vec3& c) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-18) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = o - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = tv.cross(e1);
    const double v = d.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    return e2.dot(qv) * inv > 1e-12;
}

const std::array<Vec3, 3> kParityDirs = {
    Vec3(0.287514, 0.845311, 0.450172).normalized(),
    Vec3(-0.734271, 0.218859, 0.642530).normalized(),
    Vec3(0.391945, -0.560491, 0.729605).normalized(),
};

}  // namespace

SurfaceHit MeshDistanceIndex::closest_brute(const Vec3& p) const {
    // Comparison mirrors the tree path bit for bit (squared distance, then
    // face id) so both strategies return the same hit.
    SurfaceHit best;
    double best2 = std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(faces_.size()); ++f) {
        Vec3 bary;
        const Vec3 q = closest_point_on_triangle(p, verts_[faces_[f][0]], verts_[faces_[f][1]],
                                                 verts_[faces_[f][2]], &bary);
        const double d2 = (p - q).squaredNorm();
        if (d2 < best2 || (d2 == best2 && f < best.face)) {
            best2 = d2;
            best.dist = std::sqrt(d2);
            best.face = f;
            best.point = q;
            best.bary = bary;
        }
    }
    return best;
}

SurfaceHit MeshDistanceIndex::closest(const Vec3& p) const {
    if (!use_bvh_) return closest_brute(p);
    SurfaceHit best;
    best.dist = std::numeric_limits<double>::infinity();
    double best2 = std::numeric_limits<double>::infinity();

    // Manual stack, nearer child first.
    std::array<int, 96> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const int id = stack[--top];
        const BvhNode& node = nodes_[id];
        // Descend on equality too: a tied face in a sibling box must be seen
        // so tie-breaking matches the brute-force scan.
        if (point_box_dist2(p, node.lo, node.hi) > best2) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                Vec3 bary;
                const Vec3 q = closest_point_on_triangle(
                    p, verts_[faces_[f][0]], verts_[faces_[f][1]], verts_[faces_[f][2]], &bary);
                const double d2 = (p - q).squaredNorm();
                // Tie-break on face id so BVH and brute scans agree exactly.
                if (d2 < best2 || (d2 == best2 && f < best.face)) {
                    best2 = d2;
                    best.dist = std::sqrt(d2);
                    best.face = f;
                    best.point = q;
                    best.bary = bary;
                }
            }
        } else {
            const double dl = point_box_dist2(p, nodes_[node.left].lo, nodes_[node.left].hi);
            const double dr = point_box_dist2(p, nodes_[node.right].lo, nodes_[node.right].hi);
            if (dl < dr) {
                if (dr <= best2) stack[top++] = node.right;
                if (dl <= best2) stack[top++] = node.left;
            } else {
                if (dl <= best2) stack[top++] = node.left;
                if (dr <= best2) stack[top++] = node.right;
            }
        }
    }
    return best;
}

int MeshDistanceIndex::ray_crossings(const Vec3& origin, const Vec3& dir) const {
    int hits = 0;
    if (!use_bvh_) {
        for (const auto& f : faces_)
            if (ray_hits_triangle(origin, dir, verts_[f[0]], verts_[f[1]], verts_[f[2]])) ++hits;
        return hits;
    }
    const Vec3 inv(1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]);
    std::array<int, 96> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const BvhNode& node = nodes_[stack[--top]];
        if (!ray_hits_box(origin, inv, node.lo, node.hi)) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const auto& f = faces_[order_[i]];
                if (ray_hits_triangle(origin, dir, verts_[f[0]], verts_[f[1]], verts_[f[2]]))
                    ++hits;
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return hits;
}

bool MeshDistanceIndex::contains(const Vec3& p) const {
    if (!closed_)
        throw CapabilityError("inside test requires a closed mesh");
    int votes = 0;
    for (const auto& d : kParityDirs)
        if (ray_crossings(p, d) % 2 == 1) ++votes;
    return votes >= 2;
}

double MeshDistanceIndex::signed_distance(const Vec3& p) const {
    const double d = closest(p).dist;
    return contains(p) ? -d : d;
}

double signed_distance(const TriMesh& mesh, const Vec3& p) {
    MeshDistanceIndex index(mesh);
    return index.signed_distance(p);
}

SampledSurface sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInputError("sample count must be positive");
    std::vector<double> cum(mesh.face_count());
    double total = 0.0;
    for (int f = 0; f < mesh.face_count(); ++f) {
        total += mesh.face_area(f);
        cum[f] = total;
    }
    Rng rng(seed);
    SampledSurface out;
    out.points.reserve(n);
    out.normals.reserve(n);
    out.face_ids.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const int f = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        const int fc = std::min(f, mesh.face_count() - 1);
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;
        const auto& face = mesh.faces[fc];
        out.points.push_back(b0 * mesh.vertices[face[0]] + b1 * mesh.vertices[face[1]] +
                             b2 * mesh.vertices[face[2]]);
        out.normals.push_back(mesh.face_normal(fc));
        out.face_ids.push_back(fc);
    }
    return out;
}

double chamfer(const PointSet& a, const PointSet& b) {
    if (a.empty() || b.empty()) throw InvalidInputError("chamfer needs non-empty point sets");
    auto one_way = [](const PointSet& from, const PointSet& to) {
        double sum = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return one_way(a, b) + one_way(b, a);
}

double penetration_sum_mm(const MeshDistanceIndex& hand, const PointSet& obj_points) {
    double sum = 0.0;
    for (const auto& p : obj_points) {
        const double s = hand.signed_distance(p);
        if (s < 0.0) sum -= s;
    }
    return sum * 1000.0;
}

double penetration_sum_mm(const TriMesh& hand, const PointSet& obj_points) {
    MeshDistanceIndex index(hand);
    return penetration_sum_mm(index, obj_points);
}

ProcrustesResult procrustes_align(const PointSet& pred, const PointSet& gt) {
    if (pred.size() != gt.size())
        throw DimensionError("alignment needs equal point counts, got " +
                             std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
    const int n = static_cast<int>(pred.size());
    if (n < 3) throw InvalidInputError("alignment needs at least 3 points");

    Vec3 mu_p = Vec3::Zero(), mu_g = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
        mu_p += pred[i];
        mu_g += gt[i];
    }
    mu_p /= n;
    mu_g /= n;

    Mat3 sigma = Mat3::Zero();
    double var_p = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 x = pred[i] - mu_p;
        const Vec3 y = gt[i] - mu_g;
        sigma += y * x.transpose();
        var_p += x.squaredNorm();
    }
    sigma /= n;
    var_p /= n;
    if (var_p < 1e-24) throw InvalidInputError("alignment source points are coincident");

    Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (sv[1] <= 1e-12 * std::max(sv[0], 1e-300))
        throw InvalidInputError("alignment is degenerate (collinear points)");

    Vec3 s_fix(1, 1, 1);
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_fix[2] = -1.0;

    ProcrustesResult out;
    out.transform.rotation = svd.matrixU() * s_fix.asDiagonal() * svd.matrixV().transpose();
    out.transform.scale = sv.dot(s_fix) / var_p;
    out.transform.translation = mu_g - out.transform.scale * (out.transform.rotation * mu_p);

    out.aligned.resize(pred.size());
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        out.aligned[i] = out.transform.apply(pred[i]);
        sq += (out.aligned[i] - gt[i]).squaredNorm();
    }
    out.residual_rms = std::sqrt(sq / n);
    return out;
}

PoseSampleMetrics pose_metrics(const PointSet& pred_joints, const PointSet& gt_joints,
                               const PointSet& pred_hand_verts, const PointSet& gt_hand_verts,
                               const PointSet& pred_obj_verts, const PointSet& gt_obj_verts,
                               double obj_diameter) {
    if (pred_hand_verts.size() != gt_hand_verts.size() ||
        pred_obj_verts.size() != gt_obj_verts.size())
        throw DimensionError("metric point sets must pair up");
    const auto aligned = procrustes_align(pred_joints, gt_joints);

    PoseSampleMetrics m;
    for (std::size_t i = 0; i < gt_joints.size(); ++i)
        m.mpjpe_mm += (aligned.aligned[i] - gt_joints[i]).norm();
    m.mpjpe_mm *= 1000.0 / static_cast<double>(gt_joints.size());

    for (std::size_t i = 0; i < pred_hand_verts.size(); ++i)
        m.hand_mesh_err_mm += (aligned.transform.apply(pred_hand_verts[i]) - gt_hand_verts[i]).norm();
    m.hand_mesh_err_mm *= 1000.0 / static_cast<double>(pred_hand_verts.size());

    for (std::size_t i = 0; i < pred_obj_verts.size(); ++i)
        m.obj_vert_err_mm += (pred_obj_verts[i] - gt_obj_verts[i]).norm();
    m.obj_vert_err_mm *= 1000.0 / static_cast<double>(pred_obj_verts.size());
    m.add_within_01d = m.obj_vert_err_mm < 0.1 * obj_diameter * 1000.0;
    return m;
}

ContactMetrics contact_metrics(const TriMesh& hand, const TriMesh& obj) {
    MeshDistanceIndex hand_idx(hand), obj_idx(obj);
    ContactMetrics out;

    int near = 0;
    for (const auto& v : hand.vertices)
        if (obj_idx.closest(v).dist <= 0.002) ++near;
    out.coverage_pct = 100.0 * near / static_cast<double>(hand.vertices.size());

    // Voxel centers laid out from the combined bounding box min; only the
    // overlap region can contribute.
    constexpr double kVoxel = 0.005;
    Vec3 hlo, hhi, olo, ohi;
    hand.bounds(hlo, hhi);
    obj.bounds(olo, ohi);
    const Vec3 anchor = hlo.cwiseMin(olo);
    const Vec3 lo = hlo.cwiseMax(olo);
    const Vec3 hi = hhi.cwiseMin(ohi);
    if ((hi - lo).minCoeff() <= 0.0) return out;

    Eigen::Vector3i i0, i1;
    for (int k = 0; k < 3; ++k) {
        i0[k] = std::max(0, static_cast<int>(std::floor((lo[k] - anchor[k]) / kVoxel)));
        i1[k] = static_cast<int>(std::floor((hi[k] - anchor[k]) / kVoxel));
    }
    int count = 0;
    for (int ix = i0[0]; ix <= i1[0]; ++ix)
        for (int iy = i0[1]; iy <= i1[1]; ++iy)
            for (int iz = i0[2]; iz <= i1[2]; ++iz) {
                const Vec3 c = anchor + kVoxel * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
                if (hand_idx.contains(c) && obj_idx.contains(c)) ++count;
            }
    out.intersection_cm3 = count * 0.125;  // (0.5 cm)^3 each
    return out;
}

void write_obj(const TriMesh& mesh, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw InvalidInputError("cannot open for writing: " + path);
    for (const auto& v : mesh.vertices)
        std::fprintf(f, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
    for (const auto& fc : mesh.faces)
        std::fprintf(f, "f %d %d %d\n", fc[0] + 1, fc[1] + 1, fc[2] + 1);
    std::fclose(f);
}

TriMesh read_obj(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw ParseError("cannot open: " + path);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    char line[512];
    int lineno = 0;
    while (std::fgets(line, sizeof(line), f)) {
        ++lineno;
        const char* s = line;
        while (*s == ' ' || *s == '\t') ++s;
        if (*s == '\0' || *s == '\n' || *s == '#' || *s == 'o' || *s == 'g' || *s == 's')
            continue;
        if (s[0] == 'v' && (s[1] == ' ' || s[1] == '\t')) {
            Vec3 v;
            if (std::sscanf(s + 1, "%lf %lf %lf", &v[0], &v[1], &v[2]) != 3) {
                std::fclose(f);
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex");
            }
            verts.push_back(v);
        } else if (s[0] == 'f' && (s[1] == ' ' || s[1] == '\t')) {
            int a, b, c;
            char extra[8];
            const int got = std::sscanf(s + 1, "%d %d %d %7s", &a, &b, &c, extra);
            if (got != 3) {
                std::fclose(f);
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": faces must be plain triangles");
            }
            faces.push_back({a - 1, b - 1, c - 1});
        } else {
            std::fclose(f);
            throw ParseError(path + ":" + std::to_string(lineno) + ": unsupported directive");
        }
    }
    std::fclose(f);
    try {
        return TriMesh::create(std::move(verts), std::move(faces));
    } catch (const InvalidInputError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace hc::geom
