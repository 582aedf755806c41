#pragma once

#include <string>
#include <vector>

#include "handcontact/geometry.hpp"

namespace hc::render {

// Grayscale image, row-major, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int w, int h, double fill = 0.0);
    double at(int x, int y) const { return pix[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return pix[static_cast<std::size_t>(y) * width + x]; }
    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

// Pinhole look-at camera. Looks from eye toward target; vertical fov in radians.
struct Camera {
    geom::Vec3 eye{0.0, -0.35, 0.25};
    geom::Vec3 target{0.0, 0.0, 0.0};
    geom::Vec3 up{0.0, 0.0, 1.0};
    double fov_y = 0.9;
    int width = 128;
    int height = 128;

    // Frames the given bounds with some margin; keeps the default view direction.
    static Camera framing(const geom::Vec3& lo, const geom::Vec3& hi, int w, int h);
};

struct RenderResult {
    Image shade;  // lambertian grayscale, background exactly 0
    Image mask;   // coverage, exactly 0 or 1
};

// Z-buffered rasterizer with a headlight at the eye. Flat shading per face,
// double-sided. Triangles with any vertex closer than the near plane are skipped.
RenderResult rasterize(const std::vector<const geom::TriMesh*>& meshes, const Camera& cam);

// Snaps every pixel to the 16-bit storage grid; the canonical form for
// comparisons against images that went through disk.
Image quantize16(const Image& im);

// Mean SSIM over 8x8 windows with stride 4. Identical images score exactly 1.
double ssim(const Image& a, const Image& b);

// 1 - ssim(observed * mask, quantize16(rendered)). Rendering the exact pose an
// observation was stored from scores exactly 0.
double visual_loss(const Image& rendered, const Image& observed, const Image& mask);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::string& path, const Image& im);
Image read_pgm16(const std::string& path);

// 8-bit binary PGM for masks; nonzero reads back as 1.
void write_mask_pgm(const std::string& path, const Image& mask);
Image read_mask_pgm(const std::string& path);

}  // namespace hc::render
