#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "relight/bvh.hpp"
#include "relight/env_sampler.hpp"
#include "relight/image.hpp"
#include "relight/lighting.hpp"
#include "relight/mesh.hpp"

namespace relight {

/// Immutable render-ready scene: normalized mesh, its BVH and the camera
/// expressed in the same frame.
class Scene {
public:
    Scene(TexturedMesh mesh, CameraModel camera, SceneTransform transform = {});

    const TexturedMesh& mesh() const { return mesh_; }
    const Bvh& bvh() const { return bvh_; }
    const CameraModel& camera() const { return camera_; }
    const SceneTransform& transform() const { return transform_; }
    /// Surface offset for secondary rays, 1e-4 of the scene's longest extent.
    float ray_epsilon() const { return epsilon_; }

private:
    TexturedMesh mesh_;
    CameraModel camera_;
    SceneTransform transform_;
    Bvh bvh_;
    float epsilon_ = 1e-4f;
};

/// Normalizes a camera-space mesh and moves the camera into the same frame.
Scene make_scene(const TexturedMesh& camera_space_mesh, const CameraModel& camera);

/// Path-tracer settings. max_depth counts path segments, camera ray
/// included: 1 shows only directly visible emitters, 2 is direct lighting,
/// 3 adds the first indirect bounce.
struct RenderConfig {
    int width = 0;
    int height = 0;
    int spp = 16;
    int max_depth = 3;
    std::uint64_t seed = 0;
    /// Overrides the scene camera (after resizing to width x height).
    std::optional<CameraModel> camera;
    int threads = 0;

    void validate() const;
};

/// Per-sample record of point-light shadow-ray outcomes, used to evaluate
/// the render with visibility frozen at a reference configuration.
struct VisibilityTape {
    enum class Mode { off, record, replay };
    Mode mode = Mode::off;
    std::vector<std::uint8_t> bits;
};

struct RenderOptions {
    /// Fixed environment importance sampler. When null one is built from the
    /// lighting (or env sampling is skipped for an all-zero map).
    const EnvSampler* env_sampler = nullptr;
    VisibilityTape* tape = nullptr;
};

/// Double-precision render output used by the optimizer.
struct RadianceImage {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;            // 3 per pixel, 0 on invalid pixels
    ValidMask mask;                      // primary ray through the pixel center hits geometry
    std::vector<std::uint32_t> hits;     // samples whose primary ray hit

    ImageBuffer to_image() const;
};

RadianceImage render_radiance(const Scene& scene, const LightingEnvironment& lighting, const RenderConfig& cfg,
                              const RenderOptions& options = {});

/// Lambertian path tracer: next-event estimation for analytic lights, MIS
/// between cosine-hemisphere and environment sampling. Deterministic for a
/// given seed regardless of thread count.
std::pair<ImageBuffer, ValidMask> render(const Scene& scene, const LightingEnvironment& lighting,
                                         const RenderConfig& cfg);

/// Gradients of a scalar loss with respect to the optimizable emission
/// parameters and point-light positions. Point-light entries are ordered by
/// their appearance among the point lights of the lighting list.
struct LightingGradients {
    std::vector<double> env;             // 3 per texel
    std::vector<Vec3d> point_intensity;
    std::vector<Vec3d> point_position;   // visibility held fixed
};

/// Replays the sample paths of `forward` and accumulates
/// sum_i adjoint_i * d(pixel_i)/d(theta). `adjoint` holds 3 values per pixel.
/// Must use the same lighting, config and options as the forward pass.
LightingGradients backpropagate(const Scene& scene, const LightingEnvironment& lighting, const RenderConfig& cfg,
                                const RadianceImage& forward, std::span<const double> adjoint,
                                const RenderOptions& options = {});

}  // namespace relight
