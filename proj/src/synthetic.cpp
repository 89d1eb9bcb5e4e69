#include "relight/synthetic.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "relight/rng.hpp"

namespace relight::synth {

namespace {

CameraModel camera_for(int width, int height, double fx) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = fx;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    return cam;
}

SceneAssets empty_assets(const CameraModel& cam) {
    SceneAssets a;
    a.camera = cam;
    a.image = ImageBuffer::filled(cam.width, cam.height, 3, ImageRole::input, 0.0f);
    a.shading = ImageBuffer::filled(cam.width, cam.height, 3, ImageRole::shading, 0.0f);
    a.pointmap.width = cam.width;
    a.pointmap.height = cam.height;
    a.pointmap.points.assign(static_cast<std::size_t>(cam.width) * cam.height, Vec3f(0.0f));
    a.pointmap.valid.assign(static_cast<std::size_t>(cam.width) * cam.height, 0);
    return a;
}

struct Box {
    Vec3d lo, hi;
    Vec3d color;
};

std::optional<double> box_entry(const Box& b, const Vec3d& d) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double inv = 1.0 / d[a];
        double ta = b.lo[a] * inv, tb = b.hi[a] * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t0 <= 0.0) return std::nullopt;
    return t0;
}

double unit(std::uint64_t variant, std::uint32_t dim) { return SampleStream(mix64(variant + 17)).uniform(dim); }

}  // namespace

SceneAssets plane(int width, int height, const Vec3d& albedo, double depth, double half_width) {
    const double fx = 0.5 * (width - 1) * depth / half_width;
    SceneAssets a = empty_assets(camera_for(width, height, fx));
    std::vector<float> alb(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < alb.size(); i += 3) {
        alb[i] = static_cast<float>(albedo.x);
        alb[i + 1] = static_cast<float>(albedo.y);
        alb[i + 2] = static_cast<float>(albedo.z);
    }
    a.albedo = ImageBuffer(width, height, 3, ImageRole::albedo, std::move(alb));
    a.pointmap = unproject(ImageBuffer::filled(width, height, 1, ImageRole::generic, static_cast<float>(depth)),
                           a.camera);
    return a;
}

SceneAssets room(int width, int height, std::uint64_t variant) {
    const CameraModel cam = camera_for(width, height, 0.9 * width);
    SceneAssets a = empty_assets(cam);

    constexpr double kHalfX = 2.0, kTop = -1.5, kFloor = 1.5, kBack = 5.0;
    const Box boxes[2] = {
        {{-1.2 + 0.3 * unit(variant, 0), 0.6 + 0.2 * unit(variant, 1), 2.8 + 0.4 * unit(variant, 2)},
         {-0.3 + 0.3 * unit(variant, 0), kFloor, 3.6 + 0.4 * unit(variant, 2)},
         {0.75, 0.35 + 0.3 * unit(variant, 3), 0.2}},
        {{0.5 + 0.3 * unit(variant, 4), 0.9, 2.2 + 0.3 * unit(variant, 5)},
         {1.3 + 0.3 * unit(variant, 4), kFloor, 2.9 + 0.3 * unit(variant, 5)},
         {0.2, 0.3, 0.7 + 0.2 * unit(variant, 6)}}};
    const Vec3d back_color{0.7, 0.68 + 0.1 * unit(variant, 7), 0.6};
    const Vec3d left_color{0.65, 0.3, 0.25};
    const Vec3d right_color{0.3, 0.6, 0.35};
    const double tile = 0.4 + 0.2 * unit(variant, 8);

    std::vector<float> alb(static_cast<std::size_t>(width) * height * 3, 0.5f);
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const Vec3d d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
            double best = std::numeric_limits<double>::infinity();
            Vec3d color{0.5};
            auto consider = [&](double t, const Vec3d& c, const Vec3d& lo, const Vec3d& hi) {
                if (!(t > 0.0) || t >= best) return;
                const Vec3d p = d * t;
                constexpr double slack = 1e-9;
                for (int k = 0; k < 3; ++k) {
                    if (p[k] < lo[k] - slack || p[k] > hi[k] + slack) return;
                }
                best = t;
                color = c;
            };
            const Vec3d lo{-kHalfX, kTop, 0.0}, hi{kHalfX, kFloor, kBack};
            if (d.y > 0.0) {
                const double t = kFloor / d.y;
                const Vec3d p = d * t;
                const bool dark = (static_cast<int>(std::floor(p.x / tile)) + static_cast<int>(std::floor(p.z / tile))) & 1;
                consider(t, dark ? Vec3d(0.35, 0.3, 0.25) : Vec3d(0.8, 0.75, 0.65), lo, hi);
            }
            consider(kBack, back_color, lo, hi);
            if (d.x < 0.0) consider(-kHalfX / d.x, left_color, lo, hi);
            if (d.x > 0.0) consider(kHalfX / d.x, right_color, lo, hi);
            for (const Box& b : boxes) {
                if (auto t = box_entry(b, d)) consider(*t, b.color, b.lo, b.hi);
            }
            if (!std::isfinite(best)) continue;
            const std::size_t i = static_cast<std::size_t>(v) * width + u;
            a.pointmap.points[i] = Vec3f(d * best);
            a.pointmap.valid[i] = 1;
            alb[3 * i] = static_cast<float>(color.x);
            alb[3 * i + 1] = static_cast<float>(color.y);
            alb[3 * i + 2] = static_cast<float>(color.z);
        }
    }
    a.albedo = ImageBuffer(width, height, 3, ImageRole::albedo, std::move(alb));
    return a;
}

namespace {

Vec3d to_scene(const Scene& scene, const Vec3d& camera_space) { return scene.transform().to_normalized(camera_space); }

}  // namespace

LightingEnvironment room_lighting(const Scene& scene, double env_level) {
    LightingEnvironment l;
    l.env = EnvironmentMap::constant(1, Vec3d(env_level));
    l.lights = {Light::point(to_scene(scene, {-1.2, -0.6, 3.2}), {0.9, 0.8, 0.7}),
                Light::point(to_scene(scene, {1.1, -0.4, 3.9}), {0.5, 0.6, 0.8}),
                Light::point(to_scene(scene, {0.1, -1.0, 2.4}), {0.6, 0.6, 0.6})};
    return l;
}

LightingEnvironment dominant_light(const Scene& scene) {
    LightingEnvironment l;
    l.env = EnvironmentMap::constant(1, Vec3d(0.05));
    l.lights = {Light::point(to_scene(scene, {1.6, 0.6, 4.3}), {2.5, 2.2, 1.8})};
    return l;
}

void bake_targets(SceneAssets& assets, const Scene& scene, const LightingEnvironment& lighting,
                  const RenderConfig& cfg) {
    RenderConfig c = cfg;
    c.width = assets.camera.width;
    c.height = assets.camera.height;
    const RadianceImage r = render_radiance(scene, lighting, c);
    const ImageBuffer d = r.to_image();
    std::vector<float> s(d.data().size(), 0.0f);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const float alb = assets.albedo.data()[i];
        if (alb > 0.0f) s[i] = d.data()[i] / alb;
    }
    assets.image = d.with_role(ImageRole::input);
    assets.shading = ImageBuffer(c.width, c.height, 3, ImageRole::shading, std::move(s));
}

}  // namespace relight::synth
