#include "relight/render.hpp"

#include <cmath>
#include <memory>

#include "relight/error.hpp"
#include "relight/parallel.hpp"
#include "relight/rng.hpp"

namespace relight {

Scene::Scene(TexturedMesh mesh, CameraModel camera, SceneTransform transform)
    : mesh_(std::move(mesh)), camera_(std::move(camera)), transform_(transform) {
    if (mesh_.empty()) throw ValueError("cannot render an empty mesh");
    bvh_ = Bvh(mesh_);
    const Bounds3 b = mesh_bounds(mesh_);
    epsilon_ = static_cast<float>(1e-4 * std::max(max_component(b.extent()), 1e-6));
}

Scene make_scene(const TexturedMesh& camera_space_mesh, const CameraModel& camera) {
    auto [mesh, xf] = normalize_scene(camera_space_mesh);
    return Scene(std::move(mesh), xf.apply(camera), xf);
}

void RenderConfig::validate() const {
    if (width <= 0 || height <= 0) throw ValueError("render size must be positive");
    if (spp < 1) throw ValueError("spp must be at least 1");
    if (max_depth < 1) throw ValueError("max_depth must be at least 1");
}

ImageBuffer RadianceImage::to_image() const {
    std::vector<float> data(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) data[i] = static_cast<float>(std::max(0.0, rgb[i]));
    return ImageBuffer(width, height, 3, ImageRole::render, std::move(data));
}

namespace {

// Random dimensions inside a vertex's stream.
constexpr std::uint32_t kDimEnv = 0;
constexpr std::uint32_t kDimBsdf = 2;
constexpr std::uint32_t kDimAreaBase = 4;

struct TraceContext {
    TraceContext(const Scene& s, const LightingEnvironment& l, const RenderConfig& c)
        : scene(s), lighting(l), cfg(c) {}

    const Scene& scene;
    const LightingEnvironment& lighting;
    const RenderConfig& cfg;
    const EnvSampler* sampler = nullptr;
    CameraModel camera;
    std::vector<int> point_ordinal;  // light index -> ordinal among point lights, -1 otherwise
    std::vector<Vec3d> point_intensity;
    std::size_t point_count = 0;
    VisibilityTape* tape = nullptr;
    float eps = 1e-4f;

    std::size_t tape_slot(std::size_t pixel, int sample, int vertex, int ordinal) const {
        return ((pixel * cfg.spp + sample) * cfg.max_depth + vertex) * point_count + ordinal;
    }
};

struct ForwardSink {
    const TraceContext* ctx;
    Vec3d acc{0.0};

    void env(std::size_t texel, const Vec3d& coeff) { acc += coeff * ctx->lighting.env.at(texel); }
    void point(int ordinal, const Vec3d& coeff, const Vec3d&, const Vec3d&) {
        acc += coeff * ctx->point_intensity[ordinal];
    }
    void other(const Light& light, const Vec3d& coeff) { acc += coeff * light.intensity; }
};

struct AdjointSink {
    const TraceContext* ctx;
    Vec3d weight{0.0};  // adjoint of this pixel divided by its hit count
    double* env_grad = nullptr;
    Vec3d* intensity_grad = nullptr;
    Vec3d* position_grad = nullptr;

    void env(std::size_t texel, const Vec3d& coeff) {
        env_grad[3 * texel] += weight.x * coeff.x;
        env_grad[3 * texel + 1] += weight.y * coeff.y;
        env_grad[3 * texel + 2] += weight.z * coeff.z;
    }
    void point(int ordinal, const Vec3d& coeff, const Vec3d& beta_f, const Vec3d& grad_g) {
        intensity_grad[ordinal] += weight * coeff;
        const Vec3d scaled = weight * beta_f * ctx->point_intensity[ordinal];
        position_grad[ordinal] += grad_g * (scaled.x + scaled.y + scaled.z);
    }
    void other(const Light&, const Vec3d&) {}
};

struct SurfacePoint {
    Vec3d position;
    Vec3d normal;  // geometric, facing the incoming ray
    Vec3d albedo;
    Vec3f offset_origin;
};

SurfacePoint shade_point(const Scene& scene, const Ray& ray, const Hit& hit, float eps) {
    const TexturedMesh& mesh = scene.mesh();
    const auto& tri = mesh.triangles[hit.triangle];
    const Vec3f& a = mesh.vertices[tri[0]];
    const Vec3f& b = mesh.vertices[tri[1]];
    const Vec3f& c = mesh.vertices[tri[2]];
    const float b0 = 1.0f - hit.b1 - hit.b2;
    SurfacePoint sp;
    const Vec3f p = a * b0 + b * hit.b1 + c * hit.b2;
    sp.position = Vec3d(p);
    Vec3d n = normalize(cross(Vec3d(b - a), Vec3d(c - a)));
    if (dot(n, Vec3d(ray.direction)) > 0.0) n = -n;
    sp.normal = n;
    const Vec3f col = mesh.vertex_colors[tri[0]] * b0 + mesh.vertex_colors[tri[1]] * hit.b1 +
                      mesh.vertex_colors[tri[2]] * hit.b2;
    sp.albedo = {std::clamp<double>(col.x, 0.0, 1.0), std::clamp<double>(col.y, 0.0, 1.0),
                 std::clamp<double>(col.z, 0.0, 1.0)};
    sp.offset_origin = p + Vec3f(n) * eps;
    return sp;
}

Vec3d cosine_hemisphere(const Vec3d& n, double u0, double u1) {
    const double r = std::sqrt(u0);
    const double phi = 2.0 * kPi * u1;
    const double lx = r * std::cos(phi);
    const double ly = r * std::sin(phi);
    const double lz = std::sqrt(std::max(0.0, 1.0 - u0));
    Vec3d t, b;
    orthonormal_basis(n, t, b);
    return normalize(t * lx + b * ly + n * lz);
}

double smoothstep(double e0, double e1, double x) {
    if (e1 <= e0) return x >= e0 ? 1.0 : 0.0;
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

bool shadow_clear(const Scene& scene, const Vec3f& origin, const Vec3d& dir, double dist, float eps) {
    Ray r;
    r.origin = origin;
    r.direction = Vec3f(dir);
    r.tmin = 0.0f;
    r.tmax = std::isfinite(dist) ? static_cast<float>(dist) - eps : std::numeric_limits<float>::infinity();
    if (!(r.tmax > 0.0f)) return true;
    return !scene.bvh().occluded(r);
}

// Traces one camera sample and reports every emission coefficient to the sink.
// Returns false when the primary ray misses the mesh.
template <typename Sink>
bool trace_sample(const TraceContext& ctx, std::size_t pixel, int px, int py, int sample, Sink& sink) {
    const RenderConfig& cfg = ctx.cfg;
    const SampleStream stream = SampleStream::for_sample(cfg.seed, pixel, static_cast<std::uint64_t>(sample));
    const double u = px + stream.uniform(0) - 0.5;
    const double v = py + stream.uniform(1) - 0.5;

    Ray ray;
    ray.origin = Vec3f(ctx.camera.origin);
    ray.direction = Vec3f(ctx.camera.ray_direction(u, v));
    auto hit = ctx.scene.bvh().intersect(ray);
    if (!hit) return false;

    const auto& lights = ctx.lighting.lights;
    Vec3d beta(1.0);
    for (int vertex = 1;; ++vertex) {
        if (vertex + 1 > cfg.max_depth) break;
        const SurfacePoint sp = shade_point(ctx.scene, ray, *hit, ctx.eps);
        const SampleStream vs = stream.child(static_cast<std::uint64_t>(vertex));
        const Vec3d beta_f = beta * sp.albedo * kInvPi;

        for (std::size_t li = 0; li < lights.size(); ++li) {
            const Light& light = lights[li];
            switch (light.kind) {
                case LightKind::point: {
                    const int ord = ctx.point_ordinal[li];
                    const Vec3d d = light.position - sp.position;
                    const double r2 = dot(d, d);
                    const double r = std::sqrt(r2);
                    const double nd = dot(sp.normal, d);
                    bool visible = false;
                    if (nd > 0.0 && r2 > 0.0) {
                        const std::size_t slot = ctx.tape ? ctx.tape_slot(pixel, sample, vertex - 1, ord) : 0;
                        if (ctx.tape && ctx.tape->mode == VisibilityTape::Mode::replay) {
                            visible = ctx.tape->bits[slot] != 0;
                        } else {
                            visible = shadow_clear(ctx.scene, sp.offset_origin, d / r, r, ctx.eps);
                            if (ctx.tape && ctx.tape->mode == VisibilityTape::Mode::record) {
                                ctx.tape->bits[slot] = visible ? 1 : 0;
                            }
                        }
                    }
                    if (!visible) break;
                    // G = n.d / |d|^3 (cos / r^2) and its gradient w.r.t. the light position.
                    const double inv_r3 = 1.0 / (r2 * r);
                    const double g = nd * inv_r3;
                    const Vec3d grad_g = sp.normal * inv_r3 - d * (3.0 * nd * inv_r3 / r2);
                    sink.point(ord, beta_f * g, beta_f, grad_g);
                    break;
                }
                case LightKind::spot: {
                    const Vec3d d = light.position - sp.position;
                    const double r2 = dot(d, d);
                    const double r = std::sqrt(r2);
                    if (!(r2 > 0.0)) break;
                    const Vec3d wi = d / r;
                    const double cos_s = dot(sp.normal, wi);
                    if (cos_s <= 0.0) break;
                    const double cos_axis = dot(light.direction, -wi);
                    const double falloff = smoothstep(std::cos(light.cone_outer_deg * kPi / 180.0),
                                                      std::cos(light.cone_inner_deg * kPi / 180.0), cos_axis);
                    if (falloff <= 0.0) break;
                    if (!shadow_clear(ctx.scene, sp.offset_origin, wi, r, ctx.eps)) break;
                    sink.other(light, beta_f * (cos_s * falloff / r2));
                    break;
                }
                case LightKind::directional: {
                    const Vec3d wi = -light.direction;
                    const double cos_s = dot(sp.normal, wi);
                    if (cos_s <= 0.0) break;
                    if (!shadow_clear(ctx.scene, sp.offset_origin, wi, std::numeric_limits<double>::infinity(), ctx.eps)) break;
                    sink.other(light, beta_f * cos_s);
                    break;
                }
                case LightKind::area: {
                    const std::uint32_t dim = kDimAreaBase + 2 * static_cast<std::uint32_t>(li);
                    const Vec3d y = light.position + light.edge_u * vs.uniform(dim) + light.edge_v * vs.uniform(dim + 1);
                    const Vec3d cr = cross(light.edge_u, light.edge_v);
                    const double area = length(cr);
                    const Vec3d nl = cr / area;
                    const Vec3d d = y - sp.position;
                    const double r2 = dot(d, d);
                    if (!(r2 > 0.0)) break;
                    const double r = std::sqrt(r2);
                    const Vec3d wi = d / r;
                    const double cos_s = dot(sp.normal, wi);
                    const double cos_l = -dot(nl, wi);
                    if (cos_s <= 0.0 || cos_l <= 0.0) break;
                    if (!shadow_clear(ctx.scene, sp.offset_origin, wi, r, ctx.eps)) break;
                    sink.other(light, beta_f * (cos_s * cos_l * area / r2));
                    break;
                }
            }
        }

        // Environment: light sample with MIS against the cosine lobe.
        if (ctx.sampler) {
            const auto es = ctx.sampler->sample(vs.uniform(kDimEnv), vs.uniform(kDimEnv + 1));
            const double cos_s = dot(sp.normal, es.direction);
            if (cos_s > 0.0 && es.pdf > 0.0 &&
                shadow_clear(ctx.scene, sp.offset_origin, es.direction, std::numeric_limits<double>::infinity(), ctx.eps)) {
                const double pdf_b = cos_s * kInvPi;
                const double w = es.pdf * es.pdf / (es.pdf * es.pdf + pdf_b * pdf_b);
                sink.env(es.texel, beta_f * (cos_s * w / es.pdf));
            }
        }

        // Continue along a cosine-distributed direction; albedo / pi * cos / pdf = albedo.
        const Vec3d wo = cosine_hemisphere(sp.normal, vs.uniform(kDimBsdf), vs.uniform(kDimBsdf + 1));
        beta *= sp.albedo;
        ray.origin = sp.offset_origin;
        ray.direction = Vec3f(wo);
        ray.tmin = 0.0f;
        ray.tmax = std::numeric_limits<float>::infinity();
        hit = ctx.scene.bvh().intersect(ray);
        if (!hit) {
            double w = 1.0;
            if (ctx.sampler) {
                const double pdf_b = std::max(0.0, dot(sp.normal, wo)) * kInvPi;
                const double pdf_e = ctx.sampler->pdf(wo);
                w = pdf_b * pdf_b / (pdf_b * pdf_b + pdf_e * pdf_e);
            }
            sink.env(ctx.lighting.env.texel_of(wo), beta * w);
            break;
        }
    }
    return true;
}

struct PreparedContext {
    std::unique_ptr<EnvSampler> owned_sampler;
    std::unique_ptr<TraceContext> ctx;
};

PreparedContext prepare(const Scene& scene, const LightingEnvironment& lighting, const RenderConfig& cfg,
                        const RenderOptions& options) {
    cfg.validate();
    lighting.validate();
    PreparedContext out;
    out.ctx = std::make_unique<TraceContext>(scene, lighting, cfg);
    TraceContext& ctx = *out.ctx;
    ctx.camera = (cfg.camera ? *cfg.camera : scene.camera()).resized(cfg.width, cfg.height);
    ctx.eps = scene.ray_epsilon();
    ctx.point_ordinal.assign(lighting.lights.size(), -1);
    for (std::size_t i = 0; i < lighting.lights.size(); ++i) {
        if (lighting.lights[i].kind == LightKind::point) {
            ctx.point_ordinal[i] = static_cast<int>(ctx.point_count++);
            ctx.point_intensity.push_back(lighting.lights[i].intensity);
        }
    }
    if (options.env_sampler) {
        if (!options.env_sampler->matches(lighting.env)) {
            throw DimensionError("environment sampler resolution does not match the lighting");
        }
        ctx.sampler = options.env_sampler;
    } else if (!lighting.env.is_zero()) {
        out.owned_sampler = std::make_unique<EnvSampler>(lighting.env);
        ctx.sampler = out.owned_sampler.get();
    }
    if (options.tape && options.tape->mode != VisibilityTape::Mode::off) {
        const std::size_t slots = static_cast<std::size_t>(cfg.width) * cfg.height * cfg.spp * cfg.max_depth * ctx.point_count;
        if (options.tape->mode == VisibilityTape::Mode::record) {
            options.tape->bits.assign(slots, 0);
        } else if (options.tape->bits.size() != slots) {
            throw DimensionError("visibility tape does not match the render configuration");
        }
        ctx.tape = options.tape;
    }
    return out;
}

bool center_hits(const TraceContext& ctx, int px, int py) {
    Ray ray;
    ray.origin = Vec3f(ctx.camera.origin);
    ray.direction = Vec3f(ctx.camera.ray_direction(px, py));
    return ctx.scene.bvh().intersect(ray).has_value();
}

}  // namespace

RadianceImage render_radiance(const Scene& scene, const LightingEnvironment& lighting, const RenderConfig& cfg,
                              const RenderOptions& options) {
    PreparedContext prep = prepare(scene, lighting, cfg, options);
    const TraceContext& ctx = *prep.ctx;

    RadianceImage out;
    out.width = cfg.width;
    out.height = cfg.height;
    out.rgb.assign(static_cast<std::size_t>(cfg.width) * cfg.height * 3, 0.0);
    out.hits.assign(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(cfg.width) * cfg.height, 0);

    parallel_for(static_cast<std::size_t>(cfg.height), cfg.threads, [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < cfg.width; ++px) {
            const std::size_t pixel = static_cast<std::size_t>(py) * cfg.width + px;
            if (!center_hits(ctx, px, py)) continue;
            mask[pixel] = 1;
            ForwardSink sink{&ctx};
            std::uint32_t hits = 0;
            for (int s = 0; s < cfg.spp; ++s) hits += trace_sample(ctx, pixel, px, py, s, sink) ? 1 : 0;
            out.hits[pixel] = hits;
            if (hits == 0) continue;
            const Vec3d value = sink.acc / static_cast<double>(hits);
            out.rgb[3 * pixel] = std::max(0.0, value.x);
            out.rgb[3 * pixel + 1] = std::max(0.0, value.y);
            out.rgb[3 * pixel + 2] = std::max(0.0, value.z);
        }
    });
    out.mask = ValidMask(cfg.width, cfg.height, std::move(mask));
    return out;
}

std::pair<ImageBuffer, ValidMask> render(const Scene& scene, const LightingEnvironment& lighting,
                                         const RenderConfig& cfg) {
    RadianceImage r = render_radiance(scene, lighting, cfg);
    return {r.to_image(), r.mask};
}

LightingGradients backpropagate(const Scene& scene, const LightingEnvironment& lighting, const RenderConfig& cfg,
                                const RadianceImage& forward, std::span<const double> adjoint,
                                const RenderOptions& options) {
    if (forward.width != cfg.width || forward.height != cfg.height) {
        throw DimensionError("forward render does not match the render configuration");
    }
    if (adjoint.size() != static_cast<std::size_t>(cfg.width) * cfg.height * 3) {
        throw DimensionError("adjoint image must hold 3 values per pixel");
    }
    RenderOptions replay = options;
    VisibilityTape replay_tape;
    if (options.tape && options.tape->mode == VisibilityTape::Mode::record) {
        // The forward pass already recorded the tape; read it back instead of overwriting.
        replay_tape.mode = VisibilityTape::Mode::replay;
        replay_tape.bits = options.tape->bits;
        replay.tape = &replay_tape;
    }
    PreparedContext prep = prepare(scene, lighting, cfg, replay);
    const TraceContext& ctx = *prep.ctx;

    const std::size_t env_size = lighting.env.texel_count() * 3;
    const std::size_t np = ctx.point_count;
    // Fixed row chunks, each with private accumulators summed in chunk order,
    // keep the result independent of the thread schedule.
    const std::size_t chunks = std::min<std::size_t>(16, static_cast<std::size_t>(cfg.height));
    std::vector<std::vector<double>> env_acc(chunks);
    std::vector<std::vector<Vec3d>> int_acc(chunks), pos_acc(chunks);

    parallel_for(chunks, cfg.threads, [&](std::size_t chunk) {
        env_acc[chunk].assign(env_size, 0.0);
        int_acc[chunk].assign(np, Vec3d(0.0));
        pos_acc[chunk].assign(np, Vec3d(0.0));
        const int row0 = static_cast<int>(chunk * cfg.height / chunks);
        const int row1 = static_cast<int>((chunk + 1) * cfg.height / chunks);
        AdjointSink sink{&ctx};
        sink.env_grad = env_acc[chunk].data();
        sink.intensity_grad = int_acc[chunk].data();
        sink.position_grad = pos_acc[chunk].data();
        for (int py = row0; py < row1; ++py) {
            for (int px = 0; px < cfg.width; ++px) {
                const std::size_t pixel = static_cast<std::size_t>(py) * cfg.width + px;
                if (!forward.mask.valid(pixel) || forward.hits[pixel] == 0) continue;
                const Vec3d a(adjoint[3 * pixel], adjoint[3 * pixel + 1], adjoint[3 * pixel + 2]);
                if (a == Vec3d(0.0)) continue;
                sink.weight = a / static_cast<double>(forward.hits[pixel]);
                for (int s = 0; s < cfg.spp; ++s) trace_sample(ctx, pixel, px, py, s, sink);
            }
        }
    });

    LightingGradients g;
    g.env.assign(env_size, 0.0);
    g.point_intensity.assign(np, Vec3d(0.0));
    g.point_position.assign(np, Vec3d(0.0));
    for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t i = 0; i < env_size; ++i) g.env[i] += env_acc[c][i];
        for (std::size_t k = 0; k < np; ++k) {
            g.point_intensity[k] += int_acc[c][k];
            g.point_position[k] += pos_acc[c][k];
        }
    }
    return g;
}

}  // namespace relight
