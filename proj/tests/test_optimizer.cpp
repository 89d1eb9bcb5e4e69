#include <gtest/gtest.h>

#include <random>
#include <set>

#include "relight/env_sampler.hpp"
#include "relight/error.hpp"
#include "relight/optimizer.hpp"
#include "test_scenes.hpp"

using namespace relight;
using namespace relight::testing;

namespace {

RenderConfig small_config(int spp, std::uint64_t seed) {
    RenderConfig c;
    c.spp = spp;
    c.max_depth = 3;
    c.seed = seed;
    return c;
}

// Target rendered from a lighting unlike the initialization, at the scene resolution.
ImageBuffer target_for(const Scene& scene, int w, int h) {
    RenderConfig c = small_config(16, 4242);
    c.width = w;
    c.height = h;
    return render_radiance(scene, synth::room_lighting(scene), c).to_image().with_role(ImageRole::diffuse);
}

LightingEnvironment perturbed_psi(const Scene& scene, int env_rows, int k, std::uint32_t seed) {
    FitConfig fc;
    fc.K = k;
    fc.env_rows = env_rows;
    LightingEnvironment psi = init_psi(scene, fc);
    psi.env = random_env(env_rows, seed);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(0.1, 0.8);
    for (auto& l : psi.lights) l.intensity = {d(rng), d(rng), d(rng)};
    return psi;
}

}  // namespace

TEST(Objective, Examples) {
    const auto d = ImageBuffer::filled(10, 10, 3, ImageRole::diffuse, 0.5f);
    const auto r = ImageBuffer::filled(10, 10, 3, ImageRole::render, 0.25f);
    EXPECT_EQ(objective(d, d.with_role(ImageRole::render), ValidMask(10, 10, true)), 0.0);
    EXPECT_DOUBLE_EQ(objective(d, r, ValidMask(10, 10, true)), 18.75);
    EXPECT_EQ(objective(d, r, ValidMask(10, 10, false)), 0.0);
    EXPECT_THROW(objective(d, ImageBuffer::filled(9, 10, 3, ImageRole::render, 0.0f), ValidMask(10, 10)),
                 DimensionError);
}

TEST(InitPsi, GridIntensitiesAndParameterCount) {
    const Scene scene = room_scene(32, 24);
    FitConfig fc;
    const auto psi = init_psi(scene, fc);
    ASSERT_EQ(psi.lights.size(), 16u);
    EXPECT_EQ(psi.env.rows, 128);
    EXPECT_EQ(psi.env.cols, 256);
    EXPECT_TRUE(psi.env.is_uniform());
    EXPECT_EQ(psi.env.at(0), Vec3d(0.5f));
    for (const auto& l : psi.lights) {
        EXPECT_EQ(l.kind, LightKind::point);
        EXPECT_EQ(l.intensity, Vec3d(0.5));
    }
    EXPECT_EQ(parameter_count(psi), 98400u);
    EXPECT_EQ(parameter_count(psi), 128u * 256u * 3u + 16u * 6u);

    // 4 distinct coordinates along each of the two longest axes, all at one depth.
    std::set<double> xs, ys, zs;
    for (const auto& l : psi.lights) {
        xs.insert(l.position.x);
        ys.insert(l.position.y);
        zs.insert(l.position.z);
    }
    EXPECT_EQ(xs.size(), 4u);
    EXPECT_EQ(ys.size(), 4u);
    EXPECT_EQ(zs.size(), 1u);
    const Bounds3 b = mesh_bounds(scene.mesh());
    const Vec3d c = vertex_centroid(scene.mesh());
    EXPECT_NEAR(*xs.rbegin() - *xs.begin(), 0.5 * b.extent().x, 1e-9);
    EXPECT_NEAR(*zs.begin(), c.z - 0.25 * b.extent().z, 1e-9);

    fc.K = 0;
    const auto env_only = init_psi(scene, fc);
    EXPECT_TRUE(env_only.lights.empty());
    EXPECT_EQ(env_only.env.at(7), Vec3d(0.5f));

    fc.K = 5;
    EXPECT_EQ(init_psi(scene, fc).lights.size(), 5u);  // 3 x 3 grid, truncated
}

TEST(GradEmission, ZeroLightingGradientIsMinusTwoDTransport) {
    // With all emission at zero, de/dtheta_j = -2 sum_i D_i T_ij; T_j is the
    // render with theta_j = 1 and everything else 0 (same sample streams).
    const Scene scene = room_scene(24, 18);
    const ImageBuffer d = target_for(scene, 24, 18);
    LightingEnvironment zero = perturbed_psi(scene, 4, 2, 1);
    for (auto& v : zero.env.rgb) v = 0.0f;
    for (auto& l : zero.lights) l.intensity = Vec3d(0.0);
    const EnvSampler sampler(random_env(4, 1));
    const RenderOptions opts{&sampler};
    auto cfg = small_config(4, 17);
    const auto g = grad_emission(scene, zero, d, cfg, opts);

    cfg.width = 24;
    cfg.height = 18;
    auto transport_dot = [&](const LightingEnvironment& unit, int channel) {
        const auto t = render_radiance(scene, unit, cfg, opts);
        double s = 0.0;
        for (std::size_t p = 0; p < t.hits.size(); ++p) {
            if (t.mask.valid(p)) s += d.data()[3 * p + channel] * t.rgb[3 * p + channel];
        }
        return -2.0 * s;
    };
    for (std::size_t texel : {0u, 5u, 13u, 30u}) {
        LightingEnvironment unit = zero;
        unit.env.rgb[3 * texel + 1] = 1.0f;
        const double expect = transport_dot(unit, 1);
        EXPECT_NEAR(g.env[3 * texel + 1], expect, 1e-9 * std::max(1.0, std::abs(expect)));
    }
    LightingEnvironment unit = zero;
    unit.lights[1].intensity = {1.0, 0.0, 0.0};
    const double expect = transport_dot(unit, 0);
    EXPECT_NEAR(g.point_intensity[1].x, expect, 1e-9 * std::abs(expect));
    EXPECT_LT(expect, 0.0);
}

TEST(GradEmission, DoublingAnIntensityAddsItsTransportImage) {
    const Scene scene = room_scene(24, 18);
    const LightingEnvironment psi = perturbed_psi(scene, 4, 3, 2);
    const EnvSampler sampler(psi.env);
    const RenderOptions opts{&sampler};
    auto cfg = small_config(4, 3);
    cfg.width = 24;
    cfg.height = 18;
    LightingEnvironment doubled = psi;
    doubled.lights[0].intensity.x *= 2.0;
    LightingEnvironment transport_only = psi;
    for (auto& v : transport_only.env.rgb) v = 0.0f;
    for (auto& l : transport_only.lights) l.intensity = Vec3d(0.0);
    transport_only.lights[0].intensity.x = psi.lights[0].intensity.x;
    const auto a = render_radiance(scene, psi, cfg, opts);
    const auto b = render_radiance(scene, doubled, cfg, opts);
    const auto t = render_radiance(scene, transport_only, cfg, opts);
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        EXPECT_NEAR(b.rgb[i] - a.rgb[i], t.rgb[i], 1e-9 * std::max(1.0, b.rgb[i]));
    }
}

TEST(GradEmission, OccludedLightHasZeroGradient) {
    // Plane seen by the camera plus a large occluder behind the camera that
    // hides light 0 from everything; light 1 stays in front of the occluder.
    const Scene plane = plane_scene(17, 0.7);
    TexturedMesh mesh = plane.mesh();
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (Vec3f v : {Vec3f(-20, -20, -3), Vec3f(20, -20, -3), Vec3f(20, 20, -3), Vec3f(-20, 20, -3)}) {
        mesh.vertices.push_back(v);
        mesh.vertex_colors.push_back(Vec3f(0.5f));
        mesh.pixel_of_vertex.push_back({0, 0});
    }
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
    const Scene scene(mesh, plane.camera());

    LightingEnvironment psi;
    psi.lights = {Light::point({0.0, 0.0, -5.0}, Vec3d(0.5)), Light::point({0.3, 0.0, -1.0}, Vec3d(0.5))};
    const auto d = ImageBuffer::filled(17, 17, 3, ImageRole::diffuse, 0.3f);
    const auto g = grad_emission(scene, psi, d, small_config(8, 5));
    EXPECT_EQ(g.point_intensity[0], Vec3d(0.0));
    EXPECT_NE(g.point_intensity[1], Vec3d(0.0));
}

TEST(GradEmission, MatchesCommonRandomNumberFiniteDifferences) {
    const Scene scene = room_scene(24, 18);
    const ImageBuffer d = target_for(scene, 24, 18);
    const LightingEnvironment psi = perturbed_psi(scene, 8, 4, 4);
    const EnvSampler sampler(psi.env);
    const RenderOptions opts{&sampler};
    const auto cfg = small_config(4, 8);
    const auto g = grad_emission(scene, psi, d, cfg, opts);

    std::mt19937 rng(12);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t i = rng() % psi.env.rgb.size();
        if (g.env[i] == 0.0) continue;
        const double h = 1e-2;
        LightingEnvironment plus = psi, minus = psi;
        plus.env.rgb[i] += static_cast<float>(h);
        minus.env.rgb[i] -= static_cast<float>(h);
        const double step = static_cast<double>(plus.env.rgb[i]) - minus.env.rgb[i];
        const double fd = (evaluate_objective(scene, plus, d, cfg, opts) - evaluate_objective(scene, minus, d, cfg, opts)) / step;
        EXPECT_LT(std::abs(fd - g.env[i]) / std::abs(g.env[i]), 1e-3) << "texel param " << i;
        ++checked;
    }
    for (std::size_t k = 0; k < psi.lights.size(); ++k) {
        for (int c = 0; c < 3; ++c) {
            const double h = 1e-3;
            LightingEnvironment plus = psi, minus = psi;
            plus.lights[k].intensity[c] += h;
            minus.lights[k].intensity[c] -= h;
            const double fd = (evaluate_objective(scene, plus, d, cfg, opts) - evaluate_objective(scene, minus, d, cfg, opts)) / (2 * h);
            EXPECT_LT(std::abs(fd - g.point_intensity[k][c]) / std::abs(g.point_intensity[k][c]), 1e-3);
            ++checked;
        }
    }
    EXPECT_GE(checked, 40);
}

namespace {

// Objective with point-light visibility frozen at the reference configuration.
struct FrozenObjective {
    const Scene& scene;
    const ImageBuffer& d;
    RenderConfig cfg;
    RenderOptions opts;
    VisibilityTape tape;

    FrozenObjective(const Scene& s, const ImageBuffer& target, const LightingEnvironment& ref, RenderConfig c,
                    const EnvSampler* sampler)
        : scene(s), d(target), cfg(c) {
        cfg.width = d.width();
        cfg.height = d.height();
        opts.env_sampler = sampler;
        tape.mode = VisibilityTape::Mode::record;
        opts.tape = &tape;
        render_radiance(scene, ref, cfg, opts);
        tape.mode = VisibilityTape::Mode::replay;
    }

    double operator()(const LightingEnvironment& psi) { return evaluate_objective(scene, psi, d, cfg, opts); }
};

}  // namespace

TEST(GradPositions, MatchVisibilityFrozenFiniteDifferences) {
    const Scene scene = room_scene(32, 24);
    const ImageBuffer d = target_for(scene, 32, 24);
    const LightingEnvironment psi = perturbed_psi(scene, 4, 4, 5);
    const EnvSampler sampler(psi.env);
    const auto cfg = small_config(64, 21);
    const auto g = grad_positions(scene, psi, d, cfg, RenderOptions{&sampler});
    FrozenObjective f(scene, d, psi, cfg, &sampler);
    for (std::size_t k = 0; k < psi.lights.size(); ++k) {
        for (int c = 0; c < 3; ++c) {
            const double h = 1e-4;
            LightingEnvironment plus = psi, minus = psi;
            plus.lights[k].position[c] += h;
            minus.lights[k].position[c] -= h;
            const double fd = (f(plus) - f(minus)) / (2 * h);
            EXPECT_LT(std::abs(fd - g[k][c]) / std::max(std::abs(fd), 1e-3 * length(g[k])), 5e-2)
                << "light " << k << " axis " << c << " fd " << fd << " analytic " << g[k][c];
        }
    }
}

TEST(GradPositions, OverheadLightBrightnessFallsWithHeight) {
    const Scene scene = plane_scene(33, 0.8);
    LightingEnvironment psi;
    psi.lights = {Light::point({0.0, 0.0, -1.0}, Vec3d(1.0))};
    // Loss = -sum(render): its gradient is minus the gradient of image brightness.
    RenderConfig cfg = small_config(16, 2);
    cfg.width = cfg.height = 33;
    const auto fwd = render_radiance(scene, psi, cfg);
    std::vector<double> adjoint(fwd.rgb.size(), -1.0);
    const auto g = backpropagate(scene, psi, cfg, fwd, adjoint);
    // Brightness decreases as the light moves away (-z): d(brightness)/dz > 0, so the loss gradient is < 0 along z.
    EXPECT_LT(g.point_position[0].z, 0.0);
    // Symmetric about the light axis: lateral components vanish relative to the axial one.
    EXPECT_LT(std::abs(g.point_position[0].x), 1e-3 * std::abs(g.point_position[0].z));
    EXPECT_LT(std::abs(g.point_position[0].y), 1e-3 * std::abs(g.point_position[0].z));

    auto brightness = [&](double z) {
        LightingEnvironment p = psi;
        p.lights[0].position.z = z;
        const auto r = render_radiance(scene, p, cfg);
        double s = 0.0;
        for (double v : r.rgb) s += v;
        return s;
    };
    EXPECT_GT(brightness(-1.0), brightness(-1.1));

    // Gradient vanishes as the light recedes.
    psi.lights[0].position.z = -1e4;
    const auto far = backpropagate(scene, psi, cfg, render_radiance(scene, psi, cfg), adjoint);
    EXPECT_LT(length(far.point_position[0]), 1e-9 * length(g.point_position[0]));
}

TEST(Fit, ProjectionBestSoFarAndReproducibility) {
    const Scene scene = room_scene(24, 18);
    const ImageBuffer d = target_for(scene, 24, 18);
    FitConfig fc;
    fc.env_rows = 8;
    fc.K = 4;
    fc.max_iters = 25;
    fc.spp = 4;
    fc.lr = 0.05;
    fc.seed = 9;
    const auto report = fit_lighting(d, scene, fc);
    ASSERT_FALSE(report.objective_trace.empty());
    EXPECT_EQ(report.final_error, *std::min_element(report.objective_trace.begin(), report.objective_trace.end()));
    EXPECT_EQ(report.objective_trace[report.best_iteration], report.final_error);
    for (float v : report.psi_star.env.rgb) EXPECT_GE(v, 0.0f);
    for (const auto& l : report.psi_star.lights) EXPECT_GE(min_component(l.intensity), 0.0);
    EXPECT_LT(report.final_error, report.objective_trace.front());

    const auto again = fit_lighting(d, scene, fc);
    EXPECT_EQ(again.objective_trace, report.objective_trace);
    EXPECT_TRUE(again.psi_star == report.psi_star);
}

TEST(Fit, BlackTargetStopsImmediatelyAtZeroLighting) {
    const Scene scene = room_scene(16, 12);
    FitConfig fc;
    fc.env_rows = 4;
    fc.K = 1;
    fc.max_iters = 300;
    fc.spp = 2;
    fc.lr = 0.1;
    const auto black = ImageBuffer::filled(16, 12, 3, ImageRole::diffuse, 0.0f);
    const auto report = fit_lighting(black, scene, fc);
    EXPECT_LT(report.final_error, 1e-2 * report.objective_trace.front());
    EXPECT_LT(report.psi_star.env.mean().x, 0.05);
}

TEST(Fit, EmptyValidSetIsAnError) {
    const Scene scene = room_scene(16, 12);
    FitConfig fc;
    fc.env_rows = 4;
    fc.K = 0;
    fc.max_iters = 2;
    RenderConfig unused;
    // A camera looking away from the scene sees nothing.
    Scene away(scene.mesh(), [&] {
        CameraModel c = scene.camera();
        c.origin.z += 10.0;
        return c;
    }());
    EXPECT_THROW(fit_lighting(ImageBuffer::filled(16, 12, 3, ImageRole::diffuse, 0.2f), away, fc), ValueError);
}

TEST(Fit, EnvironmentOnlyFitIsScaleEquivariant) {
    const Scene scene = room_scene(16, 12);
    // Realizable target: constant environment, no point lights.
    LightingEnvironment truth;
    truth.env = EnvironmentMap::constant(1, Vec3d(1.0));
    RenderConfig tc = small_config(64, 31);
    tc.width = 16;
    tc.height = 12;
    const ImageBuffer d = render_radiance(scene, truth, tc).to_image().with_role(ImageRole::diffuse);
    std::vector<float> doubled(d.data().begin(), d.data().end());
    for (auto& v : doubled) v *= 2.0f;
    const ImageBuffer d2(16, 12, 3, ImageRole::diffuse, std::move(doubled));

    FitConfig fc;
    fc.K = 0;
    fc.env_rows = 1;
    fc.spp = 8;
    fc.max_iters = 300;
    fc.stop_rel_improve = 0.0;
    fc.seed_policy = FitConfig::SeedPolicy::fixed;
    const auto a = fit_lighting(d, scene, fc);
    const auto b = fit_lighting(d2, scene, fc);
    ASSERT_EQ(a.psi_star.env.rgb.size(), b.psi_star.env.rgb.size());
    for (std::size_t i = 0; i < a.psi_star.env.rgb.size(); ++i) {
        ASSERT_GT(a.psi_star.env.rgb[i], 0.0f);
        EXPECT_NEAR(b.psi_star.env.rgb[i] / a.psi_star.env.rgb[i], 2.0, 0.1) << "texel param " << i;
        EXPECT_NEAR(a.psi_star.env.rgb[i], 1.0, 0.05) << "texel param " << i;
    }
}
