#include "handcontact/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "handcontact/rng.hpp"
#include "json.hpp"

namespace hc::data {

using geom::TriMesh;
using geom::Vec3;

namespace {

TriMesh icosphere(double radius, int subdiv) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},  {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},  {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},  {9, 8, 1},
    };
    for (auto& p : v) p.normalize();

    for (int s = 0; s < subdiv; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back(((v[a] + v[b]) * 0.5).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const int ab = mid(tri[0], tri[1]);
            const int bc = mid(tri[1], tri[2]);
            const int ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    for (auto& p : v) p *= radius;
    return TriMesh::create(std::move(v), std::move(f));
}

TriMesh box(double sx, double sy, double sz) {
    const double hx = sx / 2, hy = sy / 2, hz = sz / 2;
    std::vector<Vec3> v = {
        {-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz}, {-hx, hy, -hz},
        {-hx, -hy, hz},  {hx, -hy, hz},  {hx, hy, hz},  {-hx, hy, hz},
    };
    std::vector<std::array<int, 3>> f = {
        {0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
        {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5},
    };
    return TriMesh::create(std::move(v), std::move(f));
}

TriMesh cylinder(double radius, double height, int nseg) {
    std::vector<Vec3> v;
    for (int ring = 0; ring < 2; ++ring) {
        const double z = ring == 0 ? -height / 2 : height / 2;
        for (int i = 0; i < nseg; ++i) {
            const double a = 2.0 * M_PI * i / nseg;
            v.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
        }
    }
    const int cb = static_cast<int>(v.size());
    v.emplace_back(0, 0, -height / 2);
    const int ct = cb + 1;
    v.emplace_back(0, 0, height / 2);

    std::vector<std::array<int, 3>> f;
    for (int i = 0; i < nseg; ++i) {
        const int j = (i + 1) % nseg;
        f.push_back({i, j, nseg + j});
        f.push_back({i, nseg + j, nseg + i});
        f.push_back({j, i, cb});              // bottom cap faces down
        f.push_back({nseg + i, nseg + j, ct});  // top cap faces up
    }
    return TriMesh::create(std::move(v), std::move(f));
}

TriMesh capsule(double radius, double total_len, int nseg, int cap_rings) {
    const double half_cyl = std::max(total_len / 2 - radius, 1e-4);
    std::vector<Vec3> v;
    // rings run bottom pole cap -> cylinder bottom -> cylinder top -> top pole cap
    std::vector<int> ring_start;
    auto push_ring = [&](double ring_r, double z) {
        ring_start.push_back(static_cast<int>(v.size()));
        for (int i = 0; i < nseg; ++i) {
            const double a = 2.0 * M_PI * i / nseg;
            v.emplace_back(ring_r * std::cos(a), ring_r * std::sin(a), z);
        }
    };
    // bottom hemisphere from just above the pole to the equator
    for (int r = cap_rings - 1; r >= 1; --r) {
        const double lat = (M_PI / 2) * r / cap_rings;  // angle below equator
        push_ring(radius * std::cos(lat), -half_cyl - radius * std::sin(lat));
    }
    push_ring(radius, -half_cyl);
    push_ring(radius, half_cyl);
    for (int r = 1; r <= cap_rings - 1; ++r) {
        const double lat = (M_PI / 2) * r / cap_rings;
        push_ring(radius * std::cos(lat), half_cyl + radius * std::sin(lat));
    }
    const int pole_b = static_cast<int>(v.size());
    v.emplace_back(0, 0, -half_cyl - radius);
    const int pole_t = pole_b + 1;
    v.emplace_back(0, 0, half_cyl + radius);

    std::vector<std::array<int, 3>> f;
    for (std::size_t band = 0; band + 1 < ring_start.size(); ++band) {
        const int lo = ring_start[band], hi = ring_start[band + 1];
        for (int i = 0; i < nseg; ++i) {
            const int j = (i + 1) % nseg;
            f.push_back({lo + i, lo + j, hi + j});
            f.push_back({lo + i, hi + j, hi + i});
        }
    }
    const int first = ring_start.front(), last = ring_start.back();
    for (int i = 0; i < nseg; ++i) {
        const int j = (i + 1) % nseg;
        f.push_back({first + j, first + i, pole_b});
        f.push_back({last + i, last + j, pole_t});
    }
    return TriMesh::create(std::move(v), std::move(f));
}

}  // namespace

geom::TriMesh make_object(const std::string& kind, double size, std::uint64_t seed) {
    if (!(size > 0.0)) throw InvalidInputError("object size must be positive");
    Rng rng(seed ^ 0x6f6273686170ULL);
    const double jx = rng.uniform(0.9, 1.1);
    const double jy = rng.uniform(0.9, 1.1);
    const double jz = rng.uniform(0.9, 1.1);

    TriMesh m;
    if (kind == "icosphere") {
        m = icosphere(size / 2 * jx, 3);
    } else if (kind == "box") {
        m = box(size * jx, size * jy, size * jz);
    } else if (kind == "cylinder") {
        m = cylinder(size / 4 * jx, size * jz, 24);
    } else if (kind == "capsule") {
        m = capsule(size / 4 * jx, size * jz, 24, 6);
    } else {
        throw InvalidInputError("unknown object kind: " + kind);
    }
    if (m.signed_volume() < 0.0)
        for (auto& face : m.faces) std::swap(face[1], face[2]);
    return m;
}

namespace {

using geom::Mat3;

// angles (a,b,c) with R = Rx(a) Ry(b) Rz(c); at |b| = pi/2 the x and z
// rotations merge, so c is pinned to zero there
Vec3 euler_xyz(const Mat3& r) {
    const double sb = std::clamp(r(0, 2), -1.0, 1.0);
    const double b = std::asin(sb);
    if (std::abs(sb) > 1.0 - 1e-9) {
        const double sign = sb > 0 ? 1.0 : -1.0;
        return {std::atan2(sign * r(1, 0), r(1, 1)) * sign, b, 0.0};
    }
    return {std::atan2(-r(1, 2), r(2, 2)), b, std::atan2(-r(0, 1), r(0, 0))};
}

// grasp layout in the hand frame: the pinch target sits between the finger
// bases and the thumb, digit undersides hover `standoff` above the object
constexpr double kReachY = 0.090;
constexpr double kReachX = 0.004;
constexpr double kUndersideZ = -0.011;  // palm underside plane; standoff measures from here
constexpr double kPitch = -0.35;       // fingers dip, palm heel lifts away
constexpr double kContactBand = 0.001; // digit stops inside [0, band] of the surface
// arched curl, knuckles high and tips steep, so only the tip cap gets close
constexpr double kCurl[3] = {0.45, 0.95, 1.10};
constexpr double kFingerSpan = 1.77;  // bisection range; stays inside the distal limit
// the thumb opposes by swinging at its base toward the pinch point; flexion
// stays mild so the tip meets the flank instead of diving past it
constexpr double kThumbCurl[3] = {0.25, 0.50, 0.65};
constexpr double kThumbAbd = 0.85;
constexpr double kThumbSpan = 2.0;
// abduction per unit curl, converging each finger on the pinch point
constexpr double kSteer[hand::kDigits] = {0.0, 0.30, 0.08, -0.18, -0.35};

Mat3 rot_x(double a) {
    Mat3 r;
    r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return r;
}

}  // namespace

Tensor synth_grasp(const hand::HandModel& model, const geom::TriMesh& obj,
                   const geom::Vec3& approach, std::uint64_t seed) {
    if (approach.norm() < 1e-12) throw InvalidInputError("approach must be a direction");
    const Vec3 a = approach.normalized();
    Rng rng(seed ^ 0x6772617370ULL);
    const double roll_jitter = rng.uniform(-0.25, 0.25);
    const double y_ref = kReachY + rng.uniform(-0.008, 0.008);
    const double standoff0 = 0.017 + rng.uniform(0.0, 0.004);

    const geom::MeshDistanceIndex obj_index(obj);
    if (!obj_index.closed()) throw CapabilityError("object mesh must be closed");

    Vec3 c0 = Vec3::Zero();
    for (const auto& v : obj.vertices) c0 += v;
    c0 /= static_cast<double>(obj.vertices.size());
    double r_sup = 0.0;
    for (const auto& v : obj.vertices) r_sup = std::max(r_sup, (v - c0).dot(a));

    const Vec3 h = std::abs(a.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    const Vec3 x0 = h.cross(a).normalized();
    const Vec3 y0 = a.cross(x0);

    // grip crosswise: the knuckle row tracks the object's widest extent in
    // the plane facing the palm
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& v : obj.vertices) {
        const Vec3 r = v - c0;
        const Eigen::Vector2d p(r.dot(x0), r.dot(y0));
        cov += p * p.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Eigen::Vector2d e1 = es.eigenvectors().col(1);  // largest
    const double roll = std::atan2(e1.y(), e1.x()) + roll_jitter;

    // palm normal faces the object, fingers along the aligned tangent
    const Vec3 xw = std::cos(roll) * x0 + std::sin(roll) * y0;
    const Vec3 yw = a.cross(xw);
    Mat3 r_hand;
    r_hand.col(0) = xw;
    r_hand.col(1) = yw;
    r_hand.col(2) = a;
    r_hand = r_hand * rot_x(kPitch);
    const Vec3 euler = euler_xyz(r_hand);

    const Vec3 cw = model.template_joints()[0];
    const Vec3 p_ref(kReachX, y_ref, kUndersideZ);
    const auto& vdigit = model.vertex_digit();

    // probe standoffs near then away from the draw: an open hand that clips
    // needs more room, a digit that whiffs needs less
    constexpr double kLadder[8] = {0.0, -0.002, 0.002, -0.004, 0.004, -0.006, -0.008, -0.010};
    int whiffed = -1;
    for (const double rung : kLadder) {
        const double standoff = standoff0 + rung;
        const Vec3 target = c0 + (r_sup + standoff) * a;
        const Vec3 trans = target - cw - r_hand * (p_ref - cw);
        Tensor pose = hand::HandModel::neutral_pose();
        for (int i = 0; i < 3; ++i) pose[i] = euler[i];
        for (int i = 0; i < 3; ++i) pose[3 + i] = trans[i];

        geom::PointSet verts;
        model.pose_mesh(pose, verts);
        double open_min = std::numeric_limits<double>::infinity();
        for (const auto& v : verts) open_min = std::min(open_min, obj_index.signed_distance(v));
        if (open_min < 5e-4) continue;  // open hand already clips; back off

        const auto digit_min = [&](const Tensor& p, int d) {
            geom::PointSet vs;
            model.pose_mesh(p, vs);
            double m = std::numeric_limits<double>::infinity();
            for (int v = 0; v < hand::kVertexCount; ++v)
                if (vdigit[v].first == d) m = std::min(m, obj_index.signed_distance(vs[v]));
            return m;
        };

        bool ok = true;
        for (int d = 0; d < hand::kDigits && ok; ++d) {
            const auto posed = [&](double s) {
                Tensor p = pose;
                const double* curl = d == 0 ? kThumbCurl : kCurl;
                for (int j = 0; j < 3; ++j)
                    p[hand::HandModel::flexion_dof(d, j)] = s * curl[j];
                p[hand::HandModel::abduction_dof(d, 0)] = s * (d == 0 ? kThumbAbd : kSteer[d]);
                return model.clamp_pose(p);
            };
            const double s_max = d == 0 ? kThumbSpan : kFingerSpan;
            if (digit_min(posed(0.0), d) <= kContactBand) {
                pose = posed(0.0);
                continue;
            }
            // closing distance is U-shaped in s (digits overshoot past the
            // object), so bracket the first band entry by coarse scan
            constexpr int kScan = 32;
            double lo = 0.0, hi = -1.0;
            for (int k = 1; k <= kScan; ++k) {
                const double s = s_max * k / kScan;
                if (digit_min(posed(s), d) <= kContactBand) {
                    hi = s;
                    break;
                }
                lo = s;
            }
            if (hi < 0.0) {
                whiffed = d;
                ok = false;
                break;
            }
            double s_hit = -1.0;
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double v = digit_min(posed(mid), d);
                if (v > kContactBand) {
                    lo = mid;
                } else {
                    hi = mid;
                    if (v >= 0.0) s_hit = mid;
                }
            }
            if (s_hit < 0.0) {
                // crossing skipped the band; tolerate a shallow dip
                if (digit_min(posed(hi), d) >= -5e-4) s_hit = hi;
                else { ok = false; break; }
            }
            pose = posed(s_hit);
        }
        if (!ok) continue;

        const auto samples = geom::sample_surface(obj, 512, rng.derive(0x70656eULL));
        if (geom::penetration_sum_mm(model.posed_mesh(pose), samples.points) > 2.5) continue;
        return pose;
    }
    if (whiffed >= 0)
        throw GenerationFailure("digit " + std::to_string(whiffed) +
                                " cannot reach the object");
    throw GenerationFailure("no penetration-free grasp placement found");
}

Tensor perturb(const hand::HandModel& model, const Tensor& pose, double trans_sigma,
               double rot_sigma, double joint_sigma, std::uint64_t seed) {
    if (pose.rank() != 1 || pose.dim(0) != hand::kPoseDof)
        throw DimensionError("pose must be [" + std::to_string(hand::kPoseDof) + "]");
    if (trans_sigma < 0.0 || rot_sigma < 0.0 || joint_sigma < 0.0)
        throw InvalidInputError("sigmas must be non-negative");
    Rng rng(seed ^ 0x70657274757262ULL);
    Tensor out = pose;
    for (int i = 0; i < 3; ++i) out[i] += rng.gaussian(0.0, rot_sigma);
    for (int i = 3; i < 6; ++i) out[i] += rng.gaussian(0.0, trans_sigma);
    for (int i = 6; i < hand::kPoseDof; ++i) out[i] += rng.gaussian(0.0, joint_sigma);
    return model.clamp_pose(out);
}

fit::ContactTarget gt_contact(const geom::TriMesh& hand_mesh, const geom::TriMesh& obj,
                              const geom::PointSet& obj_points) {
    fit::ContactTarget t;
    t.hand = fit::achieved_contact(obj, hand_mesh.vertices);
    t.object = fit::achieved_contact(hand_mesh, obj_points);
    return t;
}

namespace {

// Draw envelope per kind. Spheres and boxes are approached from above;
// elongated shapes from the flank, so the knuckle row can cross the axis.
struct KindDraw {
    const char* kind;
    double size_lo, size_hi;
    bool side;
};
constexpr KindDraw kKinds[4] = {
    {"icosphere", 0.055, 0.080, false},
    {"box", 0.050, 0.065, false},
    {"cylinder", 0.060, 0.080, true},
    {"capsule", 0.060, 0.080, true},
};

}  // namespace

SceneSample make_scene(const hand::HandModel& model, std::int64_t id, std::uint64_t seed) {
    Rng base(seed ^ 0x7363656e65ULL);
    Rng rng(base.derive(static_cast<std::uint64_t>(id)));

    const KindDraw& kd = kKinds[rng.below(4)];
    const double size = rng.uniform(kd.size_lo, kd.size_hi);
    const double psi = rng.uniform(0.0, 2.0 * M_PI);
    Vec3 approach;
    if (kd.side) {
        const double elev = rng.uniform(0.20, 0.35);
        approach = Vec3(std::cos(elev) * std::cos(psi), std::cos(elev) * std::sin(psi),
                        std::sin(elev));
    } else {
        const double tilt = rng.uniform(0.0, 0.6);
        approach = Vec3(std::sin(tilt) * std::cos(psi), std::sin(tilt) * std::sin(psi),
                        std::cos(tilt));
    }

    SceneSample s;
    s.id = id;
    s.object_mesh = make_object(kd.kind, size, rng.derive(0x6f626aULL));
    s.pose = synth_grasp(model, s.object_mesh, approach, rng.derive(0x67726970ULL));
    s.hand_mesh = model.posed_mesh(s.pose);
    s.object_points =
        geom::sample_surface(s.object_mesh, kObjectPoints, rng.derive(0x707473ULL)).points;
    s.object_diameter = s.object_mesh.diameter();
    s.contact = gt_contact(s.hand_mesh, s.object_mesh, s.object_points);

    Vec3 hand_lo, hand_hi, obj_lo, obj_hi;
    s.hand_mesh.bounds(hand_lo, hand_hi);
    s.object_mesh.bounds(obj_lo, obj_hi);
    s.camera = render::Camera::framing(hand_lo.cwiseMin(obj_lo), hand_hi.cwiseMax(obj_hi), 128, 128);
    const render::RenderResult r = render::rasterize({&s.hand_mesh, &s.object_mesh}, s.camera);
    s.image = render::quantize16(r.shade);
    s.mask = r.mask;
    return s;
}

std::vector<SceneSample> generate_dataset(const hand::HandModel& model, int scene_count,
                                          double labeled_fraction, std::uint64_t seed) {
    if (scene_count < 0) throw InvalidInputError("scene count must be non-negative");
    if (labeled_fraction < 0.0 || labeled_fraction > 1.0)
        throw InvalidInputError("labeled fraction must lie in [0, 1]");
    const int n_labeled =
        static_cast<int>(std::lround(labeled_fraction * train_count(scene_count)));
    std::vector<SceneSample> scenes;
    scenes.reserve(static_cast<std::size_t>(scene_count));
    for (int i = 0; i < scene_count; ++i) {
        // unreachable draws are skipped by advancing a per-id attempt
        // counter, so ids stay independent of each other
        constexpr int kAttempts = 64;
        bool made = false;
        for (int a = 0; a < kAttempts && !made; ++a) {
            try {
                const std::int64_t draw = static_cast<std::int64_t>(i) |
                                          (static_cast<std::int64_t>(a) << 32);
                scenes.push_back(make_scene(model, draw, seed));
                made = true;
            } catch (const GenerationFailure&) {
            }
        }
        if (!made)
            throw GenerationFailure("no grasp draw succeeded for scene " + std::to_string(i));
        scenes.back().id = i;
        scenes.back().labeled = i < n_labeled;
    }
    return scenes;
}

namespace {

namespace fs = std::filesystem;

constexpr char kManifestVersion = 1;
constexpr char kBlockMagic[8] = {'H', 'C', 'S', 'C', 'N', '0', '0', '1'};

std::string scene_dir_name(std::int64_t id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(id));
    return std::string("scenes/") + buf;
}

void put_bytes(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u32(std::ofstream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
void put_f64(std::ofstream& os, double v) { put_bytes(os, &v, 8); }
void put_f64s(std::ofstream& os, const std::vector<double>& v) {
    put_u32(os, static_cast<std::uint32_t>(v.size()));
    put_bytes(os, v.data(), v.size() * sizeof(double));
}

void write_scene_block(const SceneSample& s, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInputError("cannot write " + path);
    put_bytes(os, kBlockMagic, sizeof kBlockMagic);
    const std::int64_t id = s.id;
    put_bytes(os, &id, 8);
    const std::uint8_t labeled = s.labeled ? 1 : 0;
    put_bytes(os, &labeled, 1);
    put_f64s(os, s.pose.vec());
    put_f64s(os, s.contact.hand);
    put_f64s(os, s.contact.object);
    put_u32(os, static_cast<std::uint32_t>(s.object_points.size()));
    for (const Vec3& p : s.object_points)
        for (int k = 0; k < 3; ++k) put_f64(os, p[k]);
    put_f64(os, s.object_diameter);
    for (int k = 0; k < 3; ++k) put_f64(os, s.camera.eye[k]);
    for (int k = 0; k < 3; ++k) put_f64(os, s.camera.target[k]);
    for (int k = 0; k < 3; ++k) put_f64(os, s.camera.up[k]);
    put_f64(os, s.camera.fov_y);
    const std::int32_t wh[2] = {s.camera.width, s.camera.height};
    put_bytes(os, wh, 8);
    put_bytes(os, "SCNE", 4);
    if (!os) throw InvalidInputError("write failed on " + path);
}

// Tracks the byte offset so corruption reports say where.
struct BlockReader {
    std::ifstream in;
    std::string scene;
    std::size_t off = 0;

    BlockReader(const std::string& path, std::string scene_name)
        : in(path, std::ios::binary), scene(std::move(scene_name)) {
        if (!in) throw ParseError("scene " + scene + ": cannot open " + path);
    }

    void take(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw ParseError("scene " + scene + ": truncated block at offset " +
                             std::to_string(off));
        off += n;
    }

    std::uint32_t take_u32() {
        std::uint32_t v;
        take(&v, 4);
        return v;
    }

    double take_f64() {
        double v;
        take(&v, 8);
        return v;
    }

    std::vector<double> take_f64s(std::size_t expected) {
        const std::size_t head = off;
        const std::uint32_t n = take_u32();
        if (n != expected)
            throw ParseError("scene " + scene + ": array length " + std::to_string(n) +
                             " at offset " + std::to_string(head) + ", expected " +
                             std::to_string(expected));
        std::vector<double> v(n);
        take(v.data(), n * sizeof(double));
        return v;
    }
};

void read_scene_block(SceneSample& s, const std::string& path, const std::string& scene_name) {
    BlockReader r(path, scene_name);
    char magic[8];
    r.take(magic, 8);
    if (std::memcmp(magic, kBlockMagic, 5) != 0)
        throw ParseError("scene " + scene_name + ": bad block magic at offset 0");
    if (std::memcmp(magic, kBlockMagic, 8) != 0)
        throw ParseError("scene " + scene_name + ": unsupported block version " +
                         std::string(magic + 5, 3));
    std::int64_t id;
    r.take(&id, 8);
    if (id != s.id)
        throw ParseError("scene " + scene_name + ": block id " + std::to_string(id) +
                         " does not match the manifest");
    std::uint8_t labeled;
    r.take(&labeled, 1);
    if (labeled > 1)
        throw ParseError("scene " + scene_name + ": corrupt labeled flag at offset 16");
    s.labeled = labeled != 0;
    s.pose = Tensor({hand::kPoseDof},
                    r.take_f64s(static_cast<std::size_t>(hand::kPoseDof)));
    s.contact.hand = r.take_f64s(static_cast<std::size_t>(s.hand_mesh.vertex_count()));
    s.contact.object = r.take_f64s(static_cast<std::size_t>(kObjectPoints));
    const std::size_t npts_at = r.off;
    const std::uint32_t npts = r.take_u32();
    if (npts != static_cast<std::uint32_t>(kObjectPoints))
        throw ParseError("scene " + scene_name + ": point count " + std::to_string(npts) +
                         " at offset " + std::to_string(npts_at));
    s.object_points.resize(npts);
    for (Vec3& p : s.object_points)
        for (int k = 0; k < 3; ++k) p[k] = r.take_f64();
    s.object_diameter = r.take_f64();
    for (int k = 0; k < 3; ++k) s.camera.eye[k] = r.take_f64();
    for (int k = 0; k < 3; ++k) s.camera.target[k] = r.take_f64();
    for (int k = 0; k < 3; ++k) s.camera.up[k] = r.take_f64();
    s.camera.fov_y = r.take_f64();
    std::int32_t wh[2];
    r.take(wh, 8);
    s.camera.width = wh[0];
    s.camera.height = wh[1];
    char tail[4];
    r.take(tail, 4);
    if (std::memcmp(tail, "SCNE", 4) != 0)
        throw ParseError("scene " + scene_name + ": bad end tag at offset " +
                         std::to_string(r.off - 4));
}

}  // namespace

void write_dataset(const std::vector<SceneSample>& scenes, const std::string& path) {
    const fs::path root(path);
    fs::create_directories(root / "scenes");

    nlohmann::json manifest;
    manifest["format_version"] = kManifestVersion;
    manifest["scene_count"] = scenes.size();
    manifest["train_count"] = train_count(static_cast<int>(scenes.size()));
    int labeled_count = 0;
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const SceneSample& s = scenes[i];
        const std::string dir = scene_dir_name(s.id);
        fs::create_directories(root / dir);
        geom::write_obj(s.object_mesh, (root / dir / "object.obj").string());
        geom::write_obj(s.hand_mesh, (root / dir / "hand.obj").string());
        render::write_pgm16((root / dir / "image.pgm").string(), s.image);
        render::write_mask_pgm((root / dir / "mask.pgm").string(), s.mask);
        write_scene_block(s, (root / dir / "scene.bin").string());
        labeled_count += s.labeled ? 1 : 0;
        entries.push_back({{"id", s.id},
                           {"dir", dir},
                           {"labeled", s.labeled},
                           {"split", i < static_cast<std::size_t>(train_count(
                                             static_cast<int>(scenes.size())))
                                         ? "train"
                                         : "test"}});
    }
    manifest["labeled_count"] = labeled_count;
    manifest["scenes"] = entries;

    std::ofstream os(root / "manifest.json");
    if (!os) throw InvalidInputError("cannot write manifest under " + path);
    os << manifest.dump(2) << "\n";
}

std::vector<SceneSample> read_dataset(const std::string& path) {
    const fs::path root(path);
    std::ifstream is(root / "manifest.json");
    if (!is) throw ParseError("no manifest under " + path);
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest: " + std::string(e.what()));
    }
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kManifestVersion)
            throw ParseError("unsupported dataset format version " + std::to_string(version));

        std::vector<SceneSample> scenes;
        int labeled_count = 0;
        for (const nlohmann::json& entry : manifest.at("scenes")) {
            SceneSample s;
            s.id = entry.at("id").get<std::int64_t>();
            const std::string dir = entry.at("dir").get<std::string>();
            const std::string scene_name = std::to_string(s.id);
            s.object_mesh = geom::read_obj((root / dir / "object.obj").string());
            s.hand_mesh = geom::read_obj((root / dir / "hand.obj").string());
            s.image = render::read_pgm16((root / dir / "image.pgm").string());
            s.mask = render::read_mask_pgm((root / dir / "mask.pgm").string());
            read_scene_block(s, (root / dir / "scene.bin").string(), scene_name);
            if (s.labeled != entry.at("labeled").get<bool>())
                throw ParseError("scene " + scene_name +
                                 ": labeled flag disagrees with the manifest");
            labeled_count += s.labeled ? 1 : 0;
            scenes.push_back(std::move(s));
        }
        if (scenes.size() != manifest.at("scene_count").get<std::size_t>())
            throw ParseError("manifest scene_count does not match its scene list");
        if (labeled_count != manifest.at("labeled_count").get<int>())
            throw ParseError("manifest labeled_count does not match the scenes");
        return scenes;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest: " + std::string(e.what()));
    }
}

}  // namespace hc::data
