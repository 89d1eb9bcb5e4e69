#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "relight/image.hpp"
#include "relight/lighting.hpp"
#include "relight/render.hpp"

namespace relight {

struct FitConfig {
    int K = 16;
    int env_rows = 128;
    double lr = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int max_iters = 400;
    int spp = 16;
    int max_depth = 3;
    std::uint64_t seed = 0;
    enum class SeedPolicy { fixed, per_iteration } seed_policy = SeedPolicy::per_iteration;
    /// Stop when the best objective improved by less than this fraction over the last `stop_window` iterations.
    double stop_rel_improve = 1e-4;
    int stop_window = 10;
    int threads = 0;

    void validate() const;
    /// Seed of the sample streams used at a given iteration.
    std::uint64_t iteration_seed(int iteration) const;
};

struct FitReport {
    LightingEnvironment psi_star;
    std::vector<double> objective_trace;
    double final_error = 0.0;
    int iterations_run = 0;
    double wall_time_s = 0.0;
    /// Iteration whose evaluation produced psi_star.
    int best_iteration = 0;
};

/// e = sum over valid pixels and RGB channels of (D - rendered)^2.
double objective(const ImageBuffer& diffuse, const ImageBuffer& rendered, const ValidMask& mask);

/// Constant 0.5 environment and K point lights of intensity 0.5 on a
/// ceil(sqrt K) x ceil(sqrt K) grid (row-major, truncated) around the vertex
/// centroid. The grid spans half the bounding box along its two longest axes
/// and sits a quarter of the box depth closer to the camera.
LightingEnvironment init_psi(const Scene& scene, const FitConfig& cfg);

/// Number of optimized scalars: 3 per env texel plus 6 per point light.
std::size_t parameter_count(const LightingEnvironment& psi);

/// Objective value and its gradient for one set of sample streams.
struct Evaluation {
    double error = 0.0;
    RadianceImage render;
    LightingGradients grad;
};

/// Renders psi at the resolution of `diffuse`, evaluates e over the render's
/// valid pixels and back-propagates. Point-light visibility is recorded in
/// the forward pass and replayed, so position gradients are those of the
/// visibility-frozen objective. `options.tape` must be null.
Evaluation evaluate(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                    const RenderConfig& cfg, const RenderOptions& options = {});

/// Only the objective, with the given render options (for finite-difference checks).
double evaluate_objective(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                          const RenderConfig& cfg, const RenderOptions& options = {});

struct EmissionGradient {
    std::vector<double> env;              // 3 per texel
    std::vector<Vec3d> point_intensity;
};

EmissionGradient grad_emission(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                               const RenderConfig& cfg, const RenderOptions& options = {});
std::vector<Vec3d> grad_positions(const Scene& scene, const LightingEnvironment& psi, const ImageBuffer& diffuse,
                                  const RenderConfig& cfg, const RenderOptions& options = {});

/// Called after every iteration with (iteration, objective, best objective).
using FitProgress = std::function<void(int, double, double)>;

/// Projected Adam on {E, point intensities, point positions} from init_psi.
/// Env texels and intensities are clamped at 0 after each step; positions
/// are free. The best evaluated lighting is returned. The render resolution
/// is that of `diffuse`; callers choose it (the default pipeline uses a
/// longer side of 512).
FitReport fit_lighting(const ImageBuffer& diffuse, const Scene& scene, const FitConfig& cfg,
                       const FitProgress& progress = {});

/// Same, starting from a caller-supplied lighting (must hold only point lights and the env).
FitReport fit_lighting_from(const ImageBuffer& diffuse, const Scene& scene, const FitConfig& cfg,
                            LightingEnvironment initial, const FitProgress& progress = {});

/// {final_error, iterations, best_iteration, wall_time_s, psi, trace}.
nlohmann::json report_to_json(const FitReport& report, const EnvEncoding& encoding = {});

}  // namespace relight
