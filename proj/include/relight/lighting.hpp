#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "relight/image.hpp"
#include "relight/vec.hpp"

namespace relight {

enum class LightKind { point, spot, directional, area };

/// Analytic emitter. Intensity semantics depend on the kind: radiant intensity
/// for point and spot lights, irradiance for directional lights, radiance for
/// area lights.
struct Light {
    LightKind kind = LightKind::point;
    Vec3d position{0.0};
    Vec3d intensity{0.0};
    /// Spot axis / travel direction of a directional light. Area lights use the
    /// normal of edge_u x edge_v instead. Always unit length after validate().
    Vec3d direction{0.0, 0.0, 1.0};
    double cone_inner_deg = 30.0;
    double cone_outer_deg = 45.0;
    Vec3d edge_u{0.0};
    Vec3d edge_v{0.0};

    static Light point(const Vec3d& position, const Vec3d& intensity);

    /// Throws ValueError when an invariant is violated.
    void validate() const;
    bool operator==(const Light&) const = default;
};

/// Lat-long RGB environment map with rows x (2 * rows) texels.
///
/// Row 0 looks straight up (-Y, image "up"); theta grows downward to +Y.
/// Column phi is measured from +Z toward +X. Texel (r, c) covers
/// theta in [r, r + 1) * pi / rows and phi in [c, c + 1) * 2 pi / cols.
struct EnvironmentMap {
    int rows = 1;
    int cols = 2;
    std::vector<float> rgb = std::vector<float>(6, 0.0f);

    static EnvironmentMap constant(int rows, const Vec3d& value);

    std::size_t texel_count() const { return static_cast<std::size_t>(rows) * cols; }
    Vec3d at(std::size_t texel) const {
        return {rgb[3 * texel], rgb[3 * texel + 1], rgb[3 * texel + 2]};
    }
    bool is_zero() const;
    /// True when every texel holds the same value.
    bool is_uniform() const;
    Vec3d mean() const;

    /// Texel containing direction d (unit vector).
    std::size_t texel_of(const Vec3d& d) const;
    /// Solid angle of a texel of row r.
    double texel_solid_angle(int row) const;
    static Vec3d direction_of(double theta, double phi);

    void validate() const;
    bool operator==(const EnvironmentMap&) const = default;
};

/// Complete illumination: environment plus analytic lights.
struct LightingEnvironment {
    EnvironmentMap env;
    std::vector<Light> lights;

    void validate() const;
    std::size_t point_light_count() const;
    /// Env texels and every light's intensity scaled by alpha; geometry untouched.
    LightingEnvironment scaled(double alpha) const;
    bool operator==(const LightingEnvironment&) const = default;
};

/// How the environment is written in lighting JSON when it is not uniform.
struct EnvEncoding {
    enum class Mode { inline_data, file } mode = Mode::inline_data;
    /// For Mode::file: where to write the PFM, and the path to record in JSON.
    std::filesystem::path write_path;
    std::string json_path;
};

/// Parses lighting JSON. HDRI paths are resolved relative to base_dir.
/// Throws ValueError / FormatError with a diagnostic on schema violations.
/// A constant environment becomes a 1 x 2 map (same distribution as any uniform map).
LightingEnvironment lighting_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json lighting_to_json(const LightingEnvironment& lighting, const EnvEncoding& encoding = {});

nlohmann::json light_to_json(const Light& light);
Light light_from_json(const nlohmann::json& j);

ImageBuffer env_to_image(const EnvironmentMap& env);
EnvironmentMap env_from_image(const ImageBuffer& image);

}  // namespace relight
