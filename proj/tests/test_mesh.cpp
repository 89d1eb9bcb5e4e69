#include <gtest/gtest.h>

#include <random>
#include <set>

#include "relight/error.hpp"
#include "relight/mesh.hpp"

using namespace relight;

namespace {

CameraModel test_camera(int w, int h) {
    CameraModel cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = 0.8 * w;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    return cam;
}

PointMap plane_points(int w, int h, double z) {
    return unproject(ImageBuffer::filled(w, h, 1, ImageRole::generic, static_cast<float>(z)), test_camera(w, h));
}

ImageBuffer gray_albedo(int w, int h) { return ImageBuffer::filled(w, h, 3, ImageRole::albedo, 0.5f); }

}  // namespace

TEST(Unproject, PrincipalRayAndSimilarTriangles) {
    CameraModel cam;
    cam.width = 5;
    cam.height = 5;
    cam.fx = cam.fy = 2.0;
    cam.cx = cam.cy = 1.0;
    std::vector<float> depth(25, 0.0f);
    depth[1 * 5 + 1] = 1.0f;  // (cx, cy)
    depth[1 * 5 + 3] = 2.0f;  // (cx + fx, cy)
    const auto pm = unproject(ImageBuffer(5, 5, 1, ImageRole::generic, depth), cam);
    ASSERT_TRUE(pm.is_valid(1, 1));
    EXPECT_EQ(pm.at(1, 1), Vec3f(0.0f, 0.0f, 1.0f));
    ASSERT_TRUE(pm.is_valid(3, 1));
    EXPECT_EQ(pm.at(3, 1), Vec3f(2.0f, 0.0f, 2.0f));
    EXPECT_FALSE(pm.is_valid(0, 0));
}

TEST(Unproject, RejectsBadInputs) {
    CameraModel cam = test_camera(2, 2);
    cam.fx = 0.0;
    EXPECT_THROW(unproject(ImageBuffer::filled(2, 2, 1, ImageRole::generic, 1.0f), cam), ValueError);
    EXPECT_THROW(unproject(ImageBuffer::filled(2, 2, 1, ImageRole::generic, -1.0f), test_camera(2, 2)), ValueError);
}

TEST(Unproject, ProjectRoundTrip) {
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> dist(0.1f, 50.0f);
    const int w = 31, h = 17;
    std::vector<float> depth(w * h);
    for (auto& d : depth) d = dist(rng);
    CameraModel cam = test_camera(w, h);
    cam.fx = 23.5;
    cam.fy = 19.25;
    cam.cx = 14.2;
    cam.cy = 7.9;
    const auto pm = unproject(ImageBuffer(w, h, 1, ImageRole::generic, depth), cam);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const auto [pu, pv] = cam.project(Vec3d(pm.at(u, v)));
            EXPECT_LT(std::abs(pu - u) / std::max(1.0, double(u)), 1e-6);
            EXPECT_LT(std::abs(pv - v) / std::max(1.0, double(v)), 1e-6);
            EXPECT_NEAR(pm.at(u, v).z, depth[v * w + u], 1e-6 * depth[v * w + u]);
        }
    }
}

TEST(BuildMesh, MinimalQuad) {
    const auto mesh = build_mesh(plane_points(2, 2, 1.0), gray_albedo(2, 2));
    EXPECT_EQ(mesh.triangles.size(), 2u);
    EXPECT_EQ(mesh.vertices.size(), 4u);
    EXPECT_EQ(mesh.valid_mask.count_valid(), 4u);
}

TEST(BuildMesh, FullGridTriangleCount) {
    for (auto [w, h] : {std::pair{3, 3}, {7, 4}, {16, 9}, {1, 5}}) {
        const auto mesh = build_mesh(plane_points(w, h, 2.0), gray_albedo(w, h));
        EXPECT_EQ(mesh.triangles.size(), static_cast<std::size_t>(2 * (w - 1) * (h - 1))) << w << "x" << h;
    }
}

TEST(BuildMesh, DepthSeamProducesNoStraddlingTriangles) {
    const int w = 4, h = 4;
    std::vector<float> depth(w * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) depth[y * w + x] = x < 2 ? 1.0f : 2.0f;
    const auto pm = unproject(ImageBuffer(w, h, 1, ImageRole::generic, depth), test_camera(w, h));
    const auto mesh = build_mesh(pm, gray_albedo(w, h), 1.2);
    // Quads in columns (0,1) and (2,3) survive; every quad on columns (1,2) is rejected.
    EXPECT_EQ(mesh.triangles.size(), 12u);
    for (const auto& t : mesh.triangles) {
        std::set<int> cols;
        for (auto v : t) cols.insert(mesh.pixel_of_vertex[v].first);
        EXPECT_FALSE(cols.count(1) && cols.count(2));
    }
}

TEST(BuildMesh, IsolatedSeamPixelsLeaveTheValidSet) {
    // A single far column between two near regions: nothing can reference it.
    const int w = 5, h = 3;
    std::vector<float> depth(w * h, 1.0f);
    for (int y = 0; y < h; ++y) depth[y * w + 2] = 3.0f;
    const auto pm = unproject(ImageBuffer(w, h, 1, ImageRole::generic, depth), test_camera(w, h));
    const auto mesh = build_mesh(pm, gray_albedo(w, h), 1.2);
    for (int y = 0; y < h; ++y) EXPECT_FALSE(mesh.valid_mask.valid(2, y));
    EXPECT_EQ(mesh.valid_mask.count_valid(), 12u);
}

TEST(BuildMesh, ShorterDiagonalSplit) {
    // Push the top-right corner far back along its ray so the TR-BL diagonal is longer.
    std::vector<float> depth{1.0f, 1.1f, 1.0f, 1.0f};
    auto pm = unproject(ImageBuffer(2, 2, 1, ImageRole::generic, depth), test_camera(2, 2));
    auto mesh = build_mesh(pm, gray_albedo(2, 2));
    ASSERT_EQ(mesh.triangles.size(), 2u);
    auto uses = [&](std::uint32_t a, std::uint32_t b) {
        for (const auto& t : mesh.triangles) {
            const std::set<std::uint32_t> s(t.begin(), t.end());
            if (s.count(a) && s.count(b)) return true;
        }
        return false;
    };
    EXPECT_TRUE(uses(0, 3));  // TL-BR shared edge
    depth = {1.1f, 1.0f, 1.0f, 1.1f};
    pm = unproject(ImageBuffer(2, 2, 1, ImageRole::generic, depth), test_camera(2, 2));
    mesh = build_mesh(pm, gray_albedo(2, 2));
    EXPECT_TRUE(uses(1, 2));
}

TEST(BuildMesh, Errors) {
    EXPECT_THROW(build_mesh(plane_points(3, 3, 1.0), gray_albedo(2, 3)), DimensionError);
    EXPECT_THROW(build_mesh(plane_points(3, 3, 1.0), gray_albedo(3, 3), 1.0), ValueError);
}

TEST(BuildMeshProperty, RandomDepthMapsHoldInvariants) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = 2 + static_cast<int>(rng() % 14);
        const int h = 2 + static_cast<int>(rng() % 14);
        std::uniform_real_distribution<float> depth_dist(0.5f, 3.0f);
        std::bernoulli_distribution hole(0.1);
        std::vector<float> depth(w * h);
        for (auto& d : depth) d = hole(rng) ? 0.0f : depth_dist(rng);
        std::uniform_real_distribution<float> unit(0.0f, 1.0f);
        std::vector<float> alb(w * h * 3);
        for (auto& a : alb) a = unit(rng);
        const ImageBuffer albedo(w, h, 3, ImageRole::albedo, alb);
        const double ratio = 1.05 + 0.5 * unit(rng);
        const auto pm = unproject(ImageBuffer(w, h, 1, ImageRole::generic, depth), test_camera(w, h));
        const auto mesh = build_mesh(pm, albedo, ratio);

        ASSERT_LE(mesh.vertices.size(), static_cast<std::size_t>(w * h));
        std::set<std::pair<int, int>> referenced;
        for (const auto& t : mesh.triangles) {
            float zmin = 1e30f, zmax = 0.0f;
            for (auto v : t) {
                ASSERT_LT(v, mesh.vertices.size());
                zmin = std::min(zmin, mesh.vertices[v].z);
                zmax = std::max(zmax, mesh.vertices[v].z);
                referenced.insert(mesh.pixel_of_vertex[v]);
            }
            EXPECT_LE(zmax, ratio * zmin);
            const Vec3d n = cross(Vec3d(mesh.vertices[t[1]] - mesh.vertices[t[0]]),
                                  Vec3d(mesh.vertices[t[2]] - mesh.vertices[t[0]]));
            EXPECT_GT(length(n), 0.0);
        }
        std::set<std::pair<int, int>> pixels(mesh.pixel_of_vertex.begin(), mesh.pixel_of_vertex.end());
        EXPECT_EQ(pixels.size(), mesh.pixel_of_vertex.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) EXPECT_EQ(mesh.valid_mask.valid(x, y), referenced.count({x, y}) == 1);

        const auto again = build_mesh(pm, albedo, ratio);
        EXPECT_TRUE(again == mesh);
        EXPECT_EQ(encode_ply(again), encode_ply(mesh));
    }
}

TEST(NormalizeScene, Examples) {
    TexturedMesh tri;
    tri.vertices = {{0, 0, 1}, {4, 0, 1}, {0, 1, 2}};
    tri.vertex_colors.assign(3, Vec3f(0.5f));
    tri.triangles = {{0, 1, 2}};
    tri.pixel_of_vertex = {{0, 0}, {1, 0}, {0, 1}};
    auto [ntri, tf] = normalize_scene(tri);
    EXPECT_DOUBLE_EQ(tf.scale, 0.5);
    const auto nb = mesh_bounds(ntri);
    EXPECT_NEAR(max_component(nb.extent()), 2.0, 1e-6);
    EXPECT_NEAR(length(nb.center()), 0.0, 1e-6);

    TexturedMesh cube = tri;
    cube.vertices.clear();
    for (int i = 0; i < 8; ++i)
        cube.vertices.push_back({9.5f + (i & 1), -0.5f + ((i >> 1) & 1), -0.5f + ((i >> 2) & 1)});
    cube.triangles = {{0, 1, 3}, {4, 5, 7}};
    cube.vertex_colors.assign(8, Vec3f(0.5f));
    cube.pixel_of_vertex.assign(8, {0, 0});
    auto [ncube, ctf] = normalize_scene(cube);
    EXPECT_DOUBLE_EQ(ctf.scale, 2.0);
    EXPECT_EQ(ctf.translation(), Vec3d(-10.0, 0.0, 0.0));
    EXPECT_NEAR(ctf.from_normalized(ctf.to_normalized({10.2, 0.1, -0.3})).x, 10.2, 1e-12);

    auto [twice, identity] = normalize_scene(ncube);
    EXPECT_NEAR(identity.scale, 1.0, 1e-6);
    EXPECT_NEAR(length(identity.center), 0.0, 1e-6);

    EXPECT_THROW(normalize_scene(TexturedMesh{}), ValueError);
}

TEST(Ply, HeaderAndSize) {
    const auto mesh = build_mesh(plane_points(3, 2, 1.0), gray_albedo(3, 2));
    const std::string ply = encode_ply(mesh);
    EXPECT_EQ(ply.rfind("ply\nformat binary_little_endian 1.0\n", 0), 0u);
    const std::size_t body = ply.find("end_header\n") + 11;
    EXPECT_EQ(ply.size() - body, mesh.vertices.size() * 15 + mesh.triangles.size() * 13);
}
