#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "handcontact/error.hpp"
#include "handcontact/rng.hpp"

namespace hc::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointSet = std::vector<Vec3>;

// Triangle mesh, positions in meters. Zero-area faces and out-of-range
// indices are rejected at construction; use the factory.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    static TriMesh create(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }

    Vec3 face_normal(int f) const;  // unit, outward for CCW winding
    double face_area(int f) const;
    double surface_area() const;
    double signed_volume() const;  // positive for outward-oriented closed meshes
    std::vector<Vec3> vertex_normals() const;  // area-weighted, unit

    // Every undirected edge used exactly twice, in opposite directions.
    bool is_closed() const;

    void bounds(Vec3& lo, Vec3& hi) const;
    double diameter() const;  // max pairwise vertex distance

    TriMesh transformed(const Mat3& R, const Vec3& t, double scale = 1.0) const;
};

// Closest point on triangle (a,b,c) to p, plus barycentric coordinates.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary = nullptr);

struct SurfaceHit {
    double dist = 0.0;  // unsigned, meters
    int face = -1;
    Vec3 point = Vec3::Zero();
    Vec3 bary = Vec3::Zero();
};

// Exact nearest-triangle queries. Small meshes are scanned directly,
// larger ones through a median-split AABB tree; both paths return the
// identical hit. Sign for closed meshes via parity of three fixed
// generic-direction rays, majority vote.
class MeshDistanceIndex {
public:
    static constexpr int kBruteForceFaceLimit = 256;

    explicit MeshDistanceIndex(const TriMesh& mesh);
    MeshDistanceIndex(const std::vector<Vec3>& vertices,
                      const std::vector<std::array<int, 3>>& faces);

    SurfaceHit closest(const Vec3& p) const;
    SurfaceHit closest_brute(const Vec3& p) const;

    bool contains(const Vec3& p) const;              // requires closed mesh
    double signed_distance(const Vec3& p) const;      // negative inside
    double unsigned_distance(const Vec3& p) const { return closest(p).dist; }

    bool closed() const { return closed_; }
    const std::vector<Vec3>& vertices() const { return verts_; }
    const std::vector<std::array<int, 3>>& faces() const { return faces_; }

private:
    struct BvhNode {
        Vec3 lo, hi;
        int left = -1, right = -1;  // children; leaf when left < 0
        int begin = 0, end = 0;     // face range for leaves
    };

    void build();
    int build_node(int begin, int end, int depth);
    void grow_leaf_bounds(int node);
    int ray_crossings(const Vec3& origin, const Vec3& dir) const;

    std::vector<Vec3> verts_;
    std::vector<std::array<int, 3>> faces_;
    std::vector<int> order_;  // face permutation grouped by leaves
    std::vector<BvhNode> nodes_;
    bool use_bvh_ = false;
    bool closed_ = false;
};

// Signed distance from a closed mesh; throws CapabilityError on open meshes.
double signed_distance(const TriMesh& mesh, const Vec3& p);

struct SampledSurface {
    PointSet points;
    std::vector<Vec3> normals;  // face normal of the sampled face
    std::vector<int> face_ids;
};

// Area-uniform surface sampling, deterministic per seed.
SampledSurface sample_surface(const TriMesh& mesh, int n, std::uint64_t seed);

// Symmetric mean of squared nearest-neighbor distances, meters^2.
double chamfer(const PointSet& a, const PointSet& b);

// Sum of penetration depths of obj_points into a closed hand mesh, millimeters.
double penetration_sum_mm(const MeshDistanceIndex& hand, const PointSet& obj_points);
double penetration_sum_mm(const TriMesh& hand, const PointSet& obj_points);

struct Similarity {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct ProcrustesResult {
    Similarity transform;
    PointSet aligned;
    double residual_rms = 0.0;  // meters
};

// Least-squares similarity alignment of pred onto gt (correspondence by
// index). Degenerate (collinear) input raises InvalidInputError.
ProcrustesResult procrustes_align(const PointSet& pred, const PointSet& gt);

struct PoseSampleMetrics {
    double mpjpe_mm = 0.0;       // Procrustes-aligned mean joint error
    double hand_mesh_err_mm = 0.0;
    double obj_vert_err_mm = 0.0;
    bool add_within_01d = false;  // mean object vertex error < 0.1 * diameter
};

// Per-sample pose metrics. The joint alignment is reused for the hand mesh
// error; object vertices are compared unaligned (ADD convention).
PoseSampleMetrics pose_metrics(const PointSet& pred_joints, const PointSet& gt_joints,
                               const PointSet& pred_hand_verts, const PointSet& gt_hand_verts,
                               const PointSet& pred_obj_verts, const PointSet& gt_obj_verts,
                               double obj_diameter);

struct ContactMetrics {
    double coverage_pct = 0.0;      // hand vertices within +-2 mm of object surface
    double intersection_cm3 = 0.0;  // shared occupancy on a 0.5 cm voxel grid
};

ContactMetrics contact_metrics(const TriMesh& hand, const TriMesh& obj);

// Wavefront OBJ, positions and faces only. Doubles are printed with
// round-trip precision so write/read is bit-exact.
void write_obj(const TriMesh& mesh, const std::string& path);
TriMesh read_obj(const std::string& path);

}  // namespace hc::geom
