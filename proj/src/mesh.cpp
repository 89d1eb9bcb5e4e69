#include "relight/mesh.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "relight/error.hpp"
#include "relight/image_io.hpp"

namespace relight {

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValueError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ValueError("camera raster size must be positive");
    if (cx < -0.5 || cx > width - 0.5 || cy < -0.5 || cy > height - 0.5) {
        throw ValueError("camera principal point lies outside the raster");
    }
}

Vec3d CameraModel::ray_direction(double u, double v) const {
    return normalize(Vec3d((u - cx) / fx, (v - cy) / fy, 1.0));
}

std::pair<double, double> CameraModel::project(const Vec3d& p) const {
    return {fx * p.x / p.z + cx, fy * p.y / p.z + cy};
}

CameraModel CameraModel::resized(int new_width, int new_height) const {
    if (new_width == width && new_height == height) return *this;
    CameraModel c = *this;
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    // Pixel centers sit at integer coordinates, so the half-pixel shift matters.
    c.fx = fx * sx;
    c.fy = fy * sy;
    c.cx = (cx + 0.5) * sx - 0.5;
    c.cy = (cy + 0.5) * sy - 0.5;
    c.width = new_width;
    c.height = new_height;
    return c;
}

CameraModel SceneTransform::apply(const CameraModel& camera) const {
    CameraModel c = camera;
    c.origin = to_normalized(camera.origin);
    c.scale = camera.scale * scale;
    return c;
}

PointMap PointMap::from_image(const ImageBuffer& xyz) {
    if (xyz.channels() != 3) throw DimensionError("point map must have 3 channels");
    PointMap pm;
    pm.width = xyz.width();
    pm.height = xyz.height();
    pm.points.resize(xyz.pixel_count());
    pm.valid.resize(xyz.pixel_count());
    for (int y = 0; y < pm.height; ++y) {
        for (int x = 0; x < pm.width; ++x) {
            const Vec3f p = xyz.rgb(x, y);
            const std::size_t i = static_cast<std::size_t>(y) * pm.width + x;
            const bool ok = std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && p.z > 0.0f;
            pm.points[i] = ok ? p : Vec3f(0.0f);
            pm.valid[i] = ok ? 1 : 0;
        }
    }
    return pm;
}

ImageBuffer PointMap::to_image() const {
    std::vector<float> data(points.size() * 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3f p = valid[i] ? points[i] : Vec3f(0.0f);
        data[3 * i] = p.x;
        data[3 * i + 1] = p.y;
        data[3 * i + 2] = p.z;
    }
    return ImageBuffer(width, height, 3, ImageRole::generic, std::move(data));
}

PointMap unproject(const ImageBuffer& depth, const CameraModel& camera) {
    if (!(camera.fx > 0.0) || !(camera.fy > 0.0)) throw ValueError("camera focal lengths must be positive");
    if (depth.channels() != 1) throw DimensionError("depth map must have a single channel");
    PointMap pm;
    pm.width = depth.width();
    pm.height = depth.height();
    pm.points.resize(depth.pixel_count());
    pm.valid.resize(depth.pixel_count());
    for (int v = 0; v < pm.height; ++v) {
        for (int u = 0; u < pm.width; ++u) {
            const double d = depth.at(u, v);
            if (d < 0.0) throw ValueError("depth must be nonnegative");
            const std::size_t i = static_cast<std::size_t>(v) * pm.width + u;
            if (d == 0.0) continue;
            pm.points[i] = Vec3f(Vec3d(d * (u - camera.cx) / camera.fx, d * (v - camera.cy) / camera.fy, d));
            pm.valid[i] = 1;
        }
    }
    return pm;
}

namespace {

bool passes_depth_ratio(const Vec3f& a, const Vec3f& b, const Vec3f& c, double ratio) {
    const double zmax = std::max({a.z, b.z, c.z});
    const double zmin = std::min({a.z, b.z, c.z});
    return zmax <= ratio * zmin;
}

bool has_area(const Vec3f& a, const Vec3f& b, const Vec3f& c) {
    const Vec3d n = cross(Vec3d(b - a), Vec3d(c - a));
    return dot(n, n) > 0.0;
}

}  // namespace

TexturedMesh build_mesh(const PointMap& points, const ImageBuffer& albedo, double discontinuity_ratio) {
    if (points.width != albedo.width() || points.height != albedo.height()) {
        throw DimensionError("point map and albedo dimensions differ");
    }
    if (!(discontinuity_ratio > 1.0)) throw ValueError("discontinuity ratio must exceed 1");

    const int w = points.width;
    const int h = points.height;
    // Pass 1: emit triangles in pixel indices; pass 2: compact to vertices.
    std::vector<std::array<std::uint32_t, 3>> pixel_tris;
    auto idx = [w](int x, int y) { return static_cast<std::uint32_t>(y * w + x); };
    auto emit = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
        const Vec3f& pa = points.points[a];
        const Vec3f& pb = points.points[b];
        const Vec3f& pc = points.points[c];
        if (passes_depth_ratio(pa, pb, pc, discontinuity_ratio) && has_area(pa, pb, pc)) {
            pixel_tris.push_back({a, b, c});
        }
    };

    for (int y = 0; y + 1 < h; ++y) {
        for (int x = 0; x + 1 < w; ++x) {
            const auto tl = idx(x, y), tr = idx(x + 1, y), bl = idx(x, y + 1), br = idx(x + 1, y + 1);
            if (!points.valid[tl] || !points.valid[tr] || !points.valid[bl] || !points.valid[br]) continue;
            const double main_diag = length(Vec3d(points.points[tl] - points.points[br]));
            const double anti_diag = length(Vec3d(points.points[tr] - points.points[bl]));
            if (main_diag <= anti_diag) {
                emit(tl, bl, br);
                emit(tl, br, tr);
            } else {
                emit(tl, bl, tr);
                emit(tr, bl, br);
            }
        }
    }

    TexturedMesh mesh;
    mesh.valid_mask = ValidMask(w, h, false);
    std::vector<std::uint32_t> remap(static_cast<std::size_t>(w) * h, std::numeric_limits<std::uint32_t>::max());
    // Vertices are numbered in raster order so output does not depend on triangle order.
    for (const auto& t : pixel_tris) {
        for (auto p : t) mesh.valid_mask.set(p, true);
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto p = idx(x, y);
            if (!mesh.valid_mask.valid(p)) continue;
            remap[p] = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(points.points[p]);
            const Vec3f c = albedo.rgb(x, y);
            mesh.vertex_colors.push_back({std::clamp(c.x, 0.0f, 1.0f), std::clamp(c.y, 0.0f, 1.0f),
                                          std::clamp(c.z, 0.0f, 1.0f)});
            mesh.pixel_of_vertex.emplace_back(x, y);
        }
    }
    mesh.triangles.reserve(pixel_tris.size());
    for (const auto& t : pixel_tris) mesh.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    return mesh;
}

Bounds3 mesh_bounds(const TexturedMesh& mesh) {
    if (mesh.vertices.empty()) throw ValueError("mesh has no vertices");
    Bounds3 b{Vec3d(mesh.vertices.front()), Vec3d(mesh.vertices.front())};
    for (const auto& v : mesh.vertices) {
        b.lo = vmin(b.lo, Vec3d(v));
        b.hi = vmax(b.hi, Vec3d(v));
    }
    return b;
}

Vec3d vertex_centroid(const TexturedMesh& mesh) {
    if (mesh.vertices.empty()) throw ValueError("mesh has no vertices");
    Vec3d sum(0.0);
    for (const auto& v : mesh.vertices) sum += Vec3d(v);
    return sum / static_cast<double>(mesh.vertices.size());
}

std::pair<TexturedMesh, SceneTransform> normalize_scene(const TexturedMesh& mesh) {
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw ValueError("cannot normalize an empty mesh");
    const Bounds3 b = mesh_bounds(mesh);
    const double longest = max_component(b.extent());
    if (!(longest > 0.0)) throw ValueError("mesh bounding box is degenerate");

    SceneTransform xf;
    xf.center = b.center();
    xf.scale = 2.0 / longest;
    TexturedMesh out = mesh;
    for (auto& v : out.vertices) v = Vec3f(xf.to_normalized(Vec3d(v)));
    return {std::move(out), xf};
}

std::string encode_ply(const TexturedMesh& mesh) {
    static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");
    std::string out;
    out += "ply\nformat binary_little_endian 1.0\n";
    out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
    out += "property list uchar int vertex_indices\nend_header\n";
    auto put = [&out](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        put(mesh.vertices[i].x);
        put(mesh.vertices[i].y);
        put(mesh.vertices[i].z);
        const Vec3f c = mesh.vertex_colors[i];
        for (float ch : {c.x, c.y, c.z}) {
            put(static_cast<std::uint8_t>(std::lround(linear_to_srgb(std::clamp(ch, 0.0f, 1.0f)) * 255.0)));
        }
    }
    for (const auto& t : mesh.triangles) {
        put(static_cast<std::uint8_t>(3));
        for (auto v : t) put(static_cast<std::int32_t>(v));
    }
    return out;
}

void write_ply(const std::filesystem::path& path, const TexturedMesh& mesh) {
    io::write_file(path, encode_ply(mesh));
}

}  // namespace relight
