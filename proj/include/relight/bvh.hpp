#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "relight/mesh.hpp"
#include "relight/vec.hpp"

namespace relight {

struct Ray {
    Vec3f origin;
    Vec3f direction;
    float tmin = 0.0f;
    float tmax = std::numeric_limits<float>::infinity();
};

struct Hit {
    float t = std::numeric_limits<float>::infinity();
    std::uint32_t triangle = 0;
    float b1 = 0.0f;  // barycentric weight of vertex 1
    float b2 = 0.0f;  // barycentric weight of vertex 2
};

/// Precomputed triangle for Moller-Trumbore intersection.
struct TriangleRecord {
    Vec3f v0;
    Vec3f e1;
    Vec3f e2;
};

TriangleRecord make_triangle_record(const Vec3f& a, const Vec3f& b, const Vec3f& c);

/// Ray-triangle test. Edges are inclusive up to a tiny tolerance so rays
/// through shared edges of a pixel grid never slip between triangles.
bool intersect_triangle(const TriangleRecord& tri, const Ray& ray, float& t, float& b1, float& b2);

/// Binned-SAH bounding volume hierarchy over a triangle mesh. Immutable after
/// construction and safe to query from many threads.
class Bvh {
public:
    Bvh() = default;
    explicit Bvh(const TexturedMesh& mesh);

    std::optional<Hit> intersect(const Ray& ray) const;
    /// Any-hit query for shadow rays.
    bool occluded(const Ray& ray) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t leaf_count() const;
    std::size_t triangle_count() const { return records_.size(); }

private:
    struct Node {
        Vec3f lo;
        std::uint32_t first = 0;  // first record (leaf) or right child (interior)
        Vec3f hi;
        std::uint32_t count = 0;  // 0 for interior nodes
        std::uint32_t axis = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3f>& centroids,
                        std::vector<Vec3f>& lo, std::vector<Vec3f>& hi, int depth);

    std::vector<Node> nodes_;
    std::vector<TriangleRecord> records_;
    std::vector<std::uint32_t> order_;  // record index -> mesh triangle index
};

/// Nearest hit by testing every triangle; the reference the BVH must agree with.
std::optional<Hit> intersect_brute_force(const std::vector<TriangleRecord>& triangles, const Ray& ray);

}  // namespace relight
