#pragma once

#include <cstdint>

#include "relight/assets.hpp"
#include "relight/lighting.hpp"
#include "relight/render.hpp"

namespace relight::synth {

/// Fronto-parallel plane at camera-space depth `depth`, spanning `half_width`
/// meters either side of the principal ray horizontally. Odd sizes put a
/// pixel center on the principal ray. I and S are left black.
SceneAssets plane(int width, int height, const Vec3d& albedo, double depth = 1.0, double half_width = 1.0);

/// Open-topped room (floor, back and side walls) with two boxes on the floor
/// and checkered, tinted albedo. `variant` perturbs the boxes and colors.
/// Rays leaving over the walls see no geometry, so the top rows are holes.
SceneAssets room(int width, int height, std::uint64_t variant = 0);

/// Constant environment plus three point lights inside the room, in the
/// normalized frame of `scene`.
LightingEnvironment room_lighting(const Scene& scene, double env_level = 0.3);

/// Dim environment and one strong point light near a side wall, the kind of
/// localized illumination an environment map alone cannot explain.
LightingEnvironment dominant_light(const Scene& scene);

/// Renders the diffuse image D under `lighting` and stores I = D and
/// S = D / A. Pixels without geometry get zero shading.
void bake_targets(SceneAssets& assets, const Scene& scene, const LightingEnvironment& lighting,
                  const RenderConfig& cfg);

}  // namespace relight::synth
