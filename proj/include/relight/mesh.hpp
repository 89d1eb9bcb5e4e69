#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "relight/image.hpp"
#include "relight/vec.hpp"

namespace relight {

/// Pinhole camera. Pixel coordinates are continuous with integer values at
/// pixel centers; +Z points into the scene, +X right, +Y down.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    /// Center of projection; the origin for camera-space meshes, moved by normalize_scene.
    Vec3d origin{0.0, 0.0, 0.0};
    /// Uniform scale applied to the camera-space frame (1 for raw camera space).
    double scale = 1.0;

    void validate() const;

    /// Unit direction of the ray through continuous pixel coordinate (u, v).
    Vec3d ray_direction(double u, double v) const;
    /// Perspective projection of a camera-space point (raw frame) to pixel coordinates.
    std::pair<double, double> project(const Vec3d& p) const;
    /// Intrinsics rescaled for a raster of a different resolution.
    CameraModel resized(int new_width, int new_height) const;
};

/// Per-pixel camera-space positions (meters, Z > 0) with an invalid flag.
struct PointMap {
    int width = 0;
    int height = 0;
    std::vector<Vec3f> points;
    std::vector<std::uint8_t> valid;

    bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
    const Vec3f& at(int x, int y) const { return points[static_cast<std::size_t>(y) * width + x]; }

    /// From a 3-channel (x, y, z) raster; z <= 0 or non-finite marks invalid.
    static PointMap from_image(const ImageBuffer& xyz);
    ImageBuffer to_image() const;
};

/// Triangulated pixel-aligned 2.5D surface with per-vertex albedo.
struct TexturedMesh {
    std::vector<Vec3f> vertices;
    std::vector<Vec3f> vertex_colors;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<std::pair<int, int>> pixel_of_vertex;
    ValidMask valid_mask;

    bool empty() const { return triangles.empty(); }
    bool operator==(const TexturedMesh&) const = default;
};

/// x_normalized = (x - center) * scale.
struct SceneTransform {
    Vec3d center{0.0, 0.0, 0.0};
    double scale = 1.0;

    Vec3d translation() const { return -center; }
    Vec3d to_normalized(const Vec3d& p) const { return (p - center) * scale; }
    Vec3d from_normalized(const Vec3d& p) const { return p / scale + center; }
    CameraModel apply(const CameraModel& camera) const;
};

inline constexpr double kDefaultDiscontinuityRatio = 1.2;

/// point(u, v) = depth * ((u - cx) / fx, (v - cy) / fy, 1); depth 0 is invalid.
PointMap unproject(const ImageBuffer& depth, const CameraModel& camera);

/// Two triangles per fully valid 2x2 quad, split along the shorter 3D
/// diagonal (ties use top-left to bottom-right). Triangles whose
/// max(z) / min(z) exceeds `discontinuity_ratio` are dropped, as are
/// zero-area ones. The valid mask holds exactly the pixels referenced by at
/// least one emitted triangle; only those pixels become vertices.
TexturedMesh build_mesh(const PointMap& points, const ImageBuffer& albedo,
                        double discontinuity_ratio = kDefaultDiscontinuityRatio);

/// Centers the vertex bounding box at the origin and scales its longest side to 2.
std::pair<TexturedMesh, SceneTransform> normalize_scene(const TexturedMesh& mesh);

struct Bounds3 {
    Vec3d lo{0.0};
    Vec3d hi{0.0};
    Vec3d extent() const { return hi - lo; }
    Vec3d center() const { return (lo + hi) * 0.5; }
};
Bounds3 mesh_bounds(const TexturedMesh& mesh);
Vec3d vertex_centroid(const TexturedMesh& mesh);

/// Binary little-endian PLY with float xyz, uchar rgb and int vertex indices.
std::string encode_ply(const TexturedMesh& mesh);
void write_ply(const std::filesystem::path& path, const TexturedMesh& mesh);

}  // namespace relight
