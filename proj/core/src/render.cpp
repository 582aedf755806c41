#include "handcontact/render.hpp"

#include <algorithm>
#include <cmath>

#include "handcontact/error.hpp"

namespace hc::render {

Image::Image(int w, int h, double fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw InvalidInputError("image: non-positive size");
    pix.assign(static_cast<std::size_t>(w) * h, fill);
}

Camera Camera::framing(const geom::Vec3& lo, const geom::Vec3& hi, int w, int h) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    const geom::Vec3 center = 0.5 * (lo + hi);
    const double radius = std::max(0.5 * (hi - lo).norm(), 1e-3);
    const geom::Vec3 dir = geom::Vec3(0.0, -0.8, 0.55).normalized();
    const double dist = radius / std::tan(0.5 * cam.fov_y) * 1.35 + radius;
    cam.target = center;
    cam.eye = center + dir * dist;
    cam.up = geom::Vec3(0.0, 0.0, 1.0);
    return cam;
}

namespace {

struct Basis {
    geom::Vec3 right, up, fwd;  // fwd points from eye toward target
};

Basis camera_basis(const Camera& cam) {
    Basis b;
    b.fwd = (cam.target - cam.eye).normalized();
    b.right = b.fwd.cross(cam.up);
    if (b.right.norm() < 1e-12)
        throw InvalidInputError("camera: up parallel to view direction");
    b.right.normalize();
    b.up = b.right.cross(b.fwd);
    return b;
}

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

RenderResult rasterize(const std::vector<const geom::TriMesh*>& meshes, const Camera& cam) {
    const Basis basis = camera_basis(cam);
    const double tf = std::tan(0.5 * cam.fov_y);
    const double aspect = static_cast<double>(cam.width) / cam.height;
    constexpr double kNear = 1e-3;

    RenderResult out;
    out.shade = Image(cam.width, cam.height, 0.0);
    out.mask = Image(cam.width, cam.height, 0.0);
    std::vector<double> zbuf(out.shade.pix.size(), 0.0);  // stores 1/depth, larger = closer

    // eye-relative camera coords; depth measured along fwd
    const auto to_cam = [&](const geom::Vec3& p) -> geom::Vec3 {
        const geom::Vec3 d = p - cam.eye;
        return {d.dot(basis.right), d.dot(basis.up), d.dot(basis.fwd)};
    };

    for (const geom::TriMesh* mesh : meshes) {
        for (std::size_t f = 0; f < mesh->faces.size(); ++f) {
            const auto& tri = mesh->faces[f];
            const geom::Vec3 wa = mesh->vertices[tri[0]];
            const geom::Vec3 wb = mesh->vertices[tri[1]];
            const geom::Vec3 wc = mesh->vertices[tri[2]];
            const geom::Vec3 ca = to_cam(wa), cb = to_cam(wb), cc = to_cam(wc);
            // no near-plane clipping: scenes are framed so this cannot cut geometry
            if (ca.z() <= kNear || cb.z() <= kNear || cc.z() <= kNear) continue;

            double sx[3], sy[3], winv[3];
            const geom::Vec3* cs[3] = {&ca, &cb, &cc};
            for (int i = 0; i < 3; ++i) {
                const geom::Vec3& p = *cs[i];
                const double xn = p.x() / (p.z() * tf * aspect);
                const double yn = p.y() / (p.z() * tf);
                sx[i] = (xn * 0.5 + 0.5) * cam.width;
                sy[i] = (0.5 - yn * 0.5) * cam.height;
                winv[i] = 1.0 / p.z();
            }

            const double area = edge_fn(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2]);
            if (std::abs(area) < 1e-12) continue;

            const int x0 = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}) - 0.5)));
            const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}) - 0.5)));
            const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));
            if (x0 > x1 || y0 > y1) continue;

            const geom::Vec3 n = mesh->face_normal(f);
            const geom::Vec3 centroid = (wa + wb + wc) / 3.0;
            const geom::Vec3 light = (cam.eye - centroid).normalized();
            const double shade =
                std::clamp(0.15 + 0.85 * std::abs(n.dot(light)), 0.0, 1.0);

            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    const double e0 = edge_fn(sx[1], sy[1], sx[2], sy[2], px, py);
                    const double e1 = edge_fn(sx[2], sy[2], sx[0], sy[0], px, py);
                    const double e2 = edge_fn(sx[0], sy[0], sx[1], sy[1], px, py);
                    const bool inside = area > 0.0 ? (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0)
                                                   : (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
                    if (!inside) continue;
                    const double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
                    const double w = l0 * winv[0] + l1 * winv[1] + l2 * winv[2];
                    std::size_t at = static_cast<std::size_t>(y) * cam.width + x;
                    if (w > zbuf[at]) {
                        zbuf[at] = w;
                        out.shade.pix[at] = shade;
                        out.mask.pix[at] = 1.0;
                    }
                }
            }
        }
    }
    return out;
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_size(b)) throw DimensionError("ssim: image sizes differ");
    constexpr int kWin = 8, kStride = 4;
    if (a.width < kWin || a.height < kWin)
        throw InvalidInputError("ssim: image smaller than one window");
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;

    double total = 0.0;
    long windows = 0;
    for (int wy = 0; wy + kWin <= a.height; wy += kStride) {
        for (int wx = 0; wx + kWin <= a.width; wx += kStride) {
            double sa = 0.0, sb = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    sa += a.at(wx + x, wy + y);
                    sb += b.at(wx + x, wy + y);
                }
            const double n = kWin * kWin;
            const double mu_a = sa / n, mu_b = sb / n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    const double da = a.at(wx + x, wy + y) - mu_a;
                    const double db = b.at(wx + x, wy + y) - mu_b;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            // factored so that identical windows give numerator == denominator bitwise
            const double num = (2.0 * (mu_a * mu_b) + kC1) * (2.0 * cov + kC2);
            const double den = ((mu_a * mu_a + mu_b * mu_b) + kC1) * ((va + vb) + kC2);
            total += num / den;
            ++windows;
        }
    }
    return total / windows;
}

double visual_loss(const Image& rendered, const Image& observed, const Image& mask) {
    if (!rendered.same_size(observed) || !rendered.same_size(mask))
        throw DimensionError("visual_loss: image sizes differ");
    Image masked = observed;
    for (std::size_t i = 0; i < masked.pix.size(); ++i) masked.pix[i] *= mask.pix[i];
    return 1.0 - ssim(masked, quantize16(rendered));
}

}  // namespace hc::render
