#include "relight/bvh.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "relight/error.hpp"

namespace relight {

namespace {

constexpr int kBins = 16;
constexpr std::uint32_t kMaxLeafSize = 4;
constexpr float kEdgeTolerance = 1e-6f;

float surface_area(const Vec3f& lo, const Vec3f& hi) {
    const Vec3f d = vmax(hi - lo, Vec3f(0.0f));
    return 2.0f * (d.x * d.y + d.y * d.z + d.z * d.x);
}

// Slab test; returns entry distance or +inf when the box is missed.
inline float hit_box(const Vec3f& lo, const Vec3f& hi, const Vec3f& org, const Vec3f& inv_dir, float tmin,
                     float tmax) {
    const float tx1 = (lo.x - org.x) * inv_dir.x, tx2 = (hi.x - org.x) * inv_dir.x;
    float t0 = std::min(tx1, tx2), t1 = std::max(tx1, tx2);
    const float ty1 = (lo.y - org.y) * inv_dir.y, ty2 = (hi.y - org.y) * inv_dir.y;
    t0 = std::max(t0, std::min(ty1, ty2));
    t1 = std::min(t1, std::max(ty1, ty2));
    const float tz1 = (lo.z - org.z) * inv_dir.z, tz2 = (hi.z - org.z) * inv_dir.z;
    t0 = std::max(t0, std::min(tz1, tz2));
    t1 = std::min(t1, std::max(tz1, tz2));
    t0 = std::max(t0, tmin);
    t1 = std::min(t1, tmax);
    return t0 <= t1 ? t0 : std::numeric_limits<float>::infinity();
}

inline Vec3f safe_inverse(const Vec3f& d) {
    auto inv = [](float v) {
        constexpr float tiny = 1e-30f;
        return 1.0f / (std::abs(v) > tiny ? v : std::copysign(tiny, v));
    };
    return {inv(d.x), inv(d.y), inv(d.z)};
}

inline bool closer(float t, std::uint32_t tri, const Hit& best) {
    return t < best.t || (t == best.t && tri < best.triangle);
}

}  // namespace

TriangleRecord make_triangle_record(const Vec3f& a, const Vec3f& b, const Vec3f& c) {
    return {a, b - a, c - a};
}

bool intersect_triangle(const TriangleRecord& tri, const Ray& ray, float& t, float& b1, float& b2) {
    const Vec3f p = cross(ray.direction, tri.e2);
    const float det = dot(tri.e1, p);
    if (std::abs(det) < 1e-20f) return false;
    const float inv_det = 1.0f / det;
    const Vec3f s = ray.origin - tri.v0;
    const float u = dot(s, p) * inv_det;
    if (u < -kEdgeTolerance || u > 1.0f + kEdgeTolerance) return false;
    const Vec3f q = cross(s, tri.e1);
    const float v = dot(ray.direction, q) * inv_det;
    if (v < -kEdgeTolerance || u + v > 1.0f + kEdgeTolerance) return false;
    const float dist = dot(tri.e2, q) * inv_det;
    if (!(dist > ray.tmin) || !(dist < ray.tmax)) return false;
    t = dist;
    b1 = u;
    b2 = v;
    return true;
}

Bvh::Bvh(const TexturedMesh& mesh) {
    if (mesh.triangles.empty()) throw ValueError("cannot build a BVH over an empty mesh");
    const std::size_t n = mesh.triangles.size();
    records_.resize(n);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);

    std::vector<Vec3f> centroids(n), lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = mesh.triangles[i];
        const Vec3f& a = mesh.vertices[t[0]];
        const Vec3f& b = mesh.vertices[t[1]];
        const Vec3f& c = mesh.vertices[t[2]];
        lo[i] = vmin(a, vmin(b, c));
        hi[i] = vmax(a, vmax(b, c));
        centroids[i] = (lo[i] + hi[i]) * 0.5f;
    }
    nodes_.reserve(2 * n / kMaxLeafSize + 1);
    build(0, static_cast<std::uint32_t>(n), centroids, lo, hi, 0);

    // Pad every box so rays running inside a box face (zero direction
    // component, origin on the face) are not rejected by the slab test.
    const Vec3f extent = nodes_[0].hi - nodes_[0].lo;
    const float pad = 1e-6f * std::max({extent.x, extent.y, extent.z, 1e-6f});
    for (Node& nd : nodes_) {
        nd.lo -= Vec3f(pad);
        nd.hi += Vec3f(pad);
    }

    for (std::size_t r = 0; r < n; ++r) {
        const auto& t = mesh.triangles[order_[r]];
        records_[r] = make_triangle_record(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    }
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3f>& centroids,
                         std::vector<Vec3f>& lo, std::vector<Vec3f>& hi, int depth) {
    const std::uint32_t node_index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});

    Vec3f blo(std::numeric_limits<float>::infinity()), bhi(-std::numeric_limits<float>::infinity());
    Vec3f clo = blo, chi = bhi;
    for (std::uint32_t i = begin; i < end; ++i) {
        const auto k = order_[i];
        blo = vmin(blo, lo[k]);
        bhi = vmax(bhi, hi[k]);
        clo = vmin(clo, centroids[k]);
        chi = vmax(chi, centroids[k]);
    }
    nodes_[node_index].lo = blo;
    nodes_[node_index].hi = bhi;

    const std::uint32_t count = end - begin;
    auto make_leaf = [&] {
        nodes_[node_index].first = begin;
        nodes_[node_index].count = count;
        return node_index;
    };
    if (count <= kMaxLeafSize || depth > 60) return make_leaf();

    // Binned SAH over the axis of largest centroid spread.
    const Vec3f cext = chi - clo;
    int axis = 0;
    if (cext.y > cext[axis]) axis = 1;
    if (cext.z > cext[axis]) axis = 2;
    if (!(cext[axis] > 0.0f)) return make_leaf();

    struct Bin {
        Vec3f lo{std::numeric_limits<float>::infinity()};
        Vec3f hi{-std::numeric_limits<float>::infinity()};
        std::uint32_t count = 0;
    };
    std::array<Bin, kBins> bins{};
    const float bin_scale = kBins / cext[axis];
    auto bin_of = [&](std::uint32_t k) {
        return std::min(kBins - 1, static_cast<int>((centroids[k][axis] - clo[axis]) * bin_scale));
    };
    for (std::uint32_t i = begin; i < end; ++i) {
        const auto k = order_[i];
        Bin& b = bins[bin_of(k)];
        b.lo = vmin(b.lo, lo[k]);
        b.hi = vmax(b.hi, hi[k]);
        ++b.count;
    }

    std::array<float, kBins - 1> left_cost{};
    Vec3f acc_lo(std::numeric_limits<float>::infinity()), acc_hi(-std::numeric_limits<float>::infinity());
    std::uint32_t acc_n = 0;
    for (int i = 0; i < kBins - 1; ++i) {
        acc_lo = vmin(acc_lo, bins[i].lo);
        acc_hi = vmax(acc_hi, bins[i].hi);
        acc_n += bins[i].count;
        left_cost[i] = acc_n ? acc_n * surface_area(acc_lo, acc_hi) : 0.0f;
    }
    float best_cost = std::numeric_limits<float>::infinity();
    int best_split = -1;
    acc_lo = Vec3f(std::numeric_limits<float>::infinity());
    acc_hi = Vec3f(-std::numeric_limits<float>::infinity());
    acc_n = 0;
    for (int i = kBins - 1; i > 0; --i) {
        acc_lo = vmin(acc_lo, bins[i].lo);
        acc_hi = vmax(acc_hi, bins[i].hi);
        acc_n += bins[i].count;
        const float cost = left_cost[i - 1] + (acc_n ? acc_n * surface_area(acc_lo, acc_hi) : 0.0f);
        if (cost < best_cost) {
            best_cost = cost;
            best_split = i;
        }
    }

    const float leaf_cost = count * surface_area(blo, bhi);
    if (best_split < 0 || (count <= 2 * kMaxLeafSize && best_cost >= leaf_cost)) return make_leaf();

    auto mid_it = std::partition(order_.begin() + begin, order_.begin() + end,
                                 [&](std::uint32_t k) { return bin_of(k) < best_split; });
    std::uint32_t mid = static_cast<std::uint32_t>(mid_it - order_.begin());
    if (mid == begin || mid == end) {
        mid = begin + count / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return centroids[a][axis] < centroids[b][axis]; });
    }

    build(begin, mid, centroids, lo, hi, depth + 1);
    const std::uint32_t right = build(mid, end, centroids, lo, hi, depth + 1);
    nodes_[node_index].first = right;
    nodes_[node_index].count = 0;
    nodes_[node_index].axis = static_cast<std::uint32_t>(axis);
    return node_index;
}

std::size_t Bvh::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.count > 0; }));
}

std::optional<Hit> Bvh::intersect(const Ray& ray) const {
    if (nodes_.empty()) return std::nullopt;
    const Vec3f inv = safe_inverse(ray.direction);
    Hit best;
    best.t = ray.tmax;
    bool found = false;

    std::uint32_t stack[128];
    int sp = 0;
    std::uint32_t node = 0;
    if (hit_box(nodes_[0].lo, nodes_[0].hi, ray.origin, inv, ray.tmin, ray.tmax) ==
        std::numeric_limits<float>::infinity()) {
        return std::nullopt;
    }
    while (true) {
        const Node& nd = nodes_[node];
        if (nd.count > 0) {
            for (std::uint32_t i = nd.first; i < nd.first + nd.count; ++i) {
                float t, b1, b2;
                Ray r = ray;
                r.tmax = best.t;
                // Inclusive at best.t so equal-distance ties resolve by triangle index.
                r.tmax = std::nextafter(best.t, std::numeric_limits<float>::infinity());
                if (intersect_triangle(records_[i], r, t, b1, b2) && closer(t, order_[i], best) &&
                    (found || t < ray.tmax)) {
                    best = {t, order_[i], b1, b2};
                    found = true;
                }
            }
        } else {
            std::uint32_t near_child = node + 1;
            std::uint32_t far_child = nd.first;
            if (ray.direction[nd.axis] < 0.0f) std::swap(near_child, far_child);
            const float tmax = std::nextafter(best.t, std::numeric_limits<float>::infinity());
            const float tn = hit_box(nodes_[near_child].lo, nodes_[near_child].hi, ray.origin, inv, ray.tmin, tmax);
            const float tf = hit_box(nodes_[far_child].lo, nodes_[far_child].hi, ray.origin, inv, ray.tmin, tmax);
            const bool hn = tn != std::numeric_limits<float>::infinity();
            const bool hf = tf != std::numeric_limits<float>::infinity();
            if (hn && hf) {
                if (tf < tn) std::swap(near_child, far_child);
                stack[sp++] = far_child;
                node = near_child;
                continue;
            }
            if (hn) { node = near_child; continue; }
            if (hf) { node = far_child; continue; }
        }
        if (sp == 0) break;
        node = stack[--sp];
    }
    if (!found) return std::nullopt;
    return best;
}

bool Bvh::occluded(const Ray& ray) const {
    if (nodes_.empty()) return false;
    const Vec3f inv = safe_inverse(ray.direction);
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node& nd = nodes_[stack[--sp]];
        if (hit_box(nd.lo, nd.hi, ray.origin, inv, ray.tmin, ray.tmax) == std::numeric_limits<float>::infinity()) {
            continue;
        }
        if (nd.count > 0) {
            for (std::uint32_t i = nd.first; i < nd.first + nd.count; ++i) {
                float t, b1, b2;
                if (intersect_triangle(records_[i], ray, t, b1, b2)) return true;
            }
        } else {
            const std::uint32_t self = static_cast<std::uint32_t>(&nd - nodes_.data());
            stack[sp++] = nd.first;
            stack[sp++] = self + 1;
        }
    }
    return false;
}

std::optional<Hit> intersect_brute_force(const std::vector<TriangleRecord>& triangles, const Ray& ray) {
    Hit best;
    best.t = ray.tmax;
    bool found = false;
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        float t, b1, b2;
        Ray r = ray;
        r.tmax = std::nextafter(best.t, std::numeric_limits<float>::infinity());
        if (intersect_triangle(triangles[i], r, t, b1, b2) && closer(t, static_cast<std::uint32_t>(i), best) &&
            (found || t < ray.tmax)) {
            best = {t, static_cast<std::uint32_t>(i), b1, b2};
            found = true;
        }
    }
    if (!found) return std::nullopt;
    return best;
}

}  // namespace relight
