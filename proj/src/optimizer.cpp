#include "relight/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include "relight/env_sampler.hpp"
#include "relight/error.hpp"
#include "relight/rng.hpp"

namespace relight {

void FitConfig::validate() const {
    if (K < 0) throw ValueError("K must be nonnegative");
    if (env_rows < 1) throw ValueError("env_rows must be at least 1");
    if (!(lr > 0.0)) throw ValueError("learning rate must be positive");
    if (max_iters < 1) throw ValueError("max_iters must be at least 1");
    if (spp < 1) throw ValueError("spp must be at least 1");
    if (max_depth < 1) throw ValueError("max_depth must be at least 1");
    if (stop_window < 1) throw ValueError("stop_window must be at least 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ValueError("Adam betas must lie in [0, 1)");
    }
}

std::uint64_t FitConfig::iteration_seed(int iteration) const {
    if (seed_policy == SeedPolicy::fixed) return seed;
    return hash_combine(seed, static_cast<std::uint64_t>(iteration));
}

double objective(const ImageBuffer& diffuse, const ImageBuffer& rendered, const ValidMask& mask) {
    if (!diffuse.same_shape(rendered)) throw DimensionError("objective: image shapes differ");
    if (mask.width() != diffuse.width() || mask.height() != diffuse.height()) {
        throw DimensionError("objective: mask size differs from the images");
    }
    const int c = diffuse.channels();
    double e = 0.0;
    for (std::size_t p = 0; p < diffuse.pixel_count(); ++p) {
        if (!mask.valid(p)) continue;
        for (int k = 0; k < c; ++k) {
            const double d = static_cast<double>(diffuse.data()[p * c + k]) - rendered.data()[p * c + k];
            e += d * d;
        }
    }
    return e;
}

LightingEnvironment init_psi(const Scene& scene, const FitConfig& cfg) {
    cfg.validate();
    LightingEnvironment psi;
    psi.env = EnvironmentMap::constant(cfg.env_rows, Vec3d(0.5));
    if (cfg.K == 0) return psi;

    const Bounds3 b = mesh_bounds(scene.mesh());
    const Vec3d extent = b.extent();
    const Vec3d centroid = vertex_centroid(scene.mesh());
    // Two longest axes, ties in x, y, z order.
    int axes[3] = {0, 1, 2};
    std::stable_sort(axes, axes + 3, [&](int l, int r) { return extent[l] > extent[r]; });
    const int a0 = std::min(axes[0], axes[1]);
    const int a1 = std::max(axes[0], axes[1]);

    const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.K))));
    Vec3d base = centroid;
    const double toward_camera = scene.camera().origin.z < centroid.z ? -1.0 : 1.0;
    base.z += toward_camera * 0.25 * extent.z;
    for (int k = 0; k < cfg.K; ++k) {
        const int row = k / grid;
        const int col = k % grid;
        Vec3d p = base;
        if (grid > 1) {
            p[a0] += (static_cast<double>(col) / (grid - 1) - 0.5) * 0.5 * extent[a0];
            p[a1] += (static_cast<double>(row) / (grid - 1) - 0.5) * 0.5 * extent[a1];
        }
        psi.lights.push_back(Light::point(p, Vec3d(0.5)));
    }
    return psi;
}

std::size_t parameter_count(const LightingEnvironment& psi) {
    return psi.env.texel_count() * 3 + psi.point_light_count() * 6;
}

namespace {

RenderConfig sized(const RenderConfig& cfg, const ImageBuffer& diffuse) {
    if (diffuse.channels() != 3) throw DimensionError("diffuse target must have 3 channels");
    RenderConfig c = cfg;
    c.width = diffuse.width();
    c.height = diffuse.height();
    return c;
}

double masked_error(const RadianceImage& r, const ImageBuffer& diffuse, std::vector<double>* adjoint) {
    double e = 0.0;
    if (adjoint) adjoint->assign(r.rgb.size(), 0.0);
    for (std::size_t p = 0; p < diffuse.pixel_count(); ++p) {
        if (!r.mask.valid(p)) continue;
        for (int k = 0; k < 3; ++k) {
            const double d = r.rgb[3 * p + k] - diffuse.data()[3 * p + k];
            e += d * d;
            if (adjoint) (*adjoint)[3 * p + k] = 2.0 * d;
        }
    }
    return e;
}

}  // namespace

Evaluation evaluate(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                    const RenderConfig& cfg, const RenderOptions& options) {
    if (options.tape) throw ValueError("evaluate manages its own visibility tape");
    const RenderConfig c = sized(cfg, diffuse);
    VisibilityTape tape;
    tape.mode = VisibilityTape::Mode::record;
    RenderOptions opts = options;
    opts.tape = &tape;

    Evaluation ev;
    ev.render = render_radiance(scene, psi, c, opts);
    std::vector<double> adjoint;
    ev.error = masked_error(ev.render, diffuse, &adjoint);
    ev.grad = backpropagate(scene, psi, c, ev.render, adjoint, opts);
    return ev;
}

double evaluate_objective(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                          const RenderConfig& cfg, const RenderOptions& options) {
    const RadianceImage r = render_radiance(scene, psi, sized(cfg, diffuse), options);
    return masked_error(r, diffuse, nullptr);
}

EmissionGradient grad_emission(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                               const RenderConfig& cfg, const RenderOptions& options) {
    Evaluation ev = evaluate(scene, psi, diffuse, cfg, options);
    return {std::move(ev.grad.env), std::move(ev.grad.point_intensity)};
}

std::vector<Vec3d> grad_positions(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                                  const RenderConfig& cfg, const RenderOptions& options) {
    return evaluate(scene, psi, diffuse, cfg, options).grad.point_position;
}

namespace {

struct Adam {
    const FitConfig& cfg;
    std::vector<double> m, v;
    int t = 0;

    Adam(const FitConfig& c, std::size_t n) : cfg(c), m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& g) {
        ++t;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            theta[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
        }
    }
};

// Flat parameter layout: env (3 per texel), then per point light intensity and position.
std::vector<double> pack(const LightingEnvironment& psi) {
    std::vector<double> theta(psi.env.rgb.begin(), psi.env.rgb.end());
    for (const Light& l : psi.lights) {
        if (l.kind != LightKind::point) continue;
        for (int k = 0; k < 3; ++k) theta.push_back(l.intensity[k]);
        for (int k = 0; k < 3; ++k) theta.push_back(l.position[k]);
    }
    return theta;
}

void unpack(const std::vector<double>& theta, LightingEnvironment& psi) {
    std::size_t i = 0;
    for (auto& v : psi.env.rgb) v = static_cast<float>(theta[i++]);
    for (Light& l : psi.lights) {
        for (int k = 0; k < 3; ++k) l.intensity[k] = theta[i++];
        for (int k = 0; k < 3; ++k) l.position[k] = theta[i++];
    }
}

std::vector<double> pack_gradient(const LightingGradients& g) {
    std::vector<double> out = g.env;
    for (std::size_t k = 0; k < g.point_intensity.size(); ++k) {
        for (int c = 0; c < 3; ++c) out.push_back(g.point_intensity[k][c]);
        for (int c = 0; c < 3; ++c) out.push_back(g.point_position[k][c]);
    }
    return out;
}

// Clamps emission to be nonnegative; positions are left alone.
void project(std::vector<double>& theta, std::size_t env_size, std::size_t lights) {
    for (std::size_t i = 0; i < env_size; ++i) theta[i] = std::max(0.0, theta[i]);
    for (std::size_t k = 0; k < lights; ++k) {
        for (int c = 0; c < 3; ++c) {
            double& v = theta[env_size + 6 * k + c];
            v = std::max(0.0, v);
        }
    }
}

}  // namespace

FitReport fit_lighting(const ImageBuffer& diffuse, const Scene& scene, const FitConfig& cfg,
                       const FitProgress& progress) {
    return fit_lighting_from(diffuse, scene, cfg, init_psi(scene, cfg), progress);
}

FitReport fit_lighting_from(const ImageBuffer& diffuse, const Scene& scene, const FitConfig& cfg,
                            LightingEnvironment psi, const FitProgress& progress) {
    cfg.validate();
    psi.validate();
    for (const Light& l : psi.lights) {
        if (l.kind != LightKind::point) throw ValueError("only point lights can be optimized");
    }
    const auto t0 = std::chrono::steady_clock::now();

    RenderConfig rc;
    rc.spp = cfg.spp;
    rc.max_depth = cfg.max_depth;
    rc.threads = cfg.threads;

    std::vector<double> theta = pack(psi);
    const std::size_t env_size = psi.env.rgb.size();
    const std::size_t lights = psi.lights.size();
    Adam adam(cfg, theta.size());

    FitReport report;
    report.final_error = std::numeric_limits<double>::infinity();
    std::vector<double> best_history;
    for (int it = 0; it < cfg.max_iters; ++it) {
        rc.seed = cfg.iteration_seed(it);
        std::unique_ptr<EnvSampler> sampler;
        if (!psi.env.is_zero()) sampler = std::make_unique<EnvSampler>(psi.env);
        RenderOptions opts;
        opts.env_sampler = sampler.get();
        Evaluation ev = evaluate(scene, psi, diffuse, rc, opts);
        if (it == 0 && ev.render.mask.count_valid() == 0) {
            throw ValueError("fit has no valid pixels: the mesh is not visible from the camera");
        }

        report.objective_trace.push_back(ev.error);
        if (ev.error < report.final_error) {
            report.final_error = ev.error;
            report.psi_star = psi;
            report.best_iteration = it;
        }
        best_history.push_back(report.final_error);
        report.iterations_run = it + 1;
        if (progress) progress(it, ev.error, report.final_error);

        if (report.final_error == 0.0) break;
        if (static_cast<int>(best_history.size()) > cfg.stop_window) {
            const double before = best_history[best_history.size() - 1 - cfg.stop_window];
            if ((before - report.final_error) / before < cfg.stop_rel_improve) break;
        }
        if (it + 1 == cfg.max_iters) break;

        adam.step(theta, pack_gradient(ev.grad));
        project(theta, env_size, lights);
        unpack(theta, psi);
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

nlohmann::json report_to_json(const FitReport& report, const EnvEncoding& encoding) {
    return {{"final_error", report.final_error},
            {"iterations", report.iterations_run},
            {"best_iteration", report.best_iteration},
            {"wall_time_s", report.wall_time_s},
            {"psi", lighting_to_json(report.psi_star, encoding)},
            {"trace", report.objective_trace}};
}

}  // namespace relight
