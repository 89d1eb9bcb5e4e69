#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "relight/image.hpp"
#include "relight/mesh.hpp"
#include "relight/render.hpp"

namespace relight {

/// Source rasters for one photograph: I, A, optional S, the point map and
/// camera intrinsics. All rasters share the camera's resolution.
struct SceneAssets {
    ImageBuffer image;
    ImageBuffer albedo;
    std::optional<ImageBuffer> shading;
    PointMap pointmap;
    CameraModel camera;

    bool has_shading() const { return shading.has_value(); }
    /// D = A * S; throws MissingInputError without a shading raster.
    ImageBuffer diffuse() const;
    void validate() const;
};

/// Parses a manifest {"image", "albedo", "shading"?, "pointmap", "camera": {fx, fy, cx, cy}}.
/// Relative paths resolve against base_dir. A missing required key raises
/// MissingInputError("missing asset: <key>").
SceneAssets assets_from_json(const nlohmann::json& manifest, const std::filesystem::path& base_dir);
SceneAssets load_assets(const std::filesystem::path& manifest_path);

/// Writes the rasters as PFM next to a manifest.json in `dir` and returns the manifest path.
std::filesystem::path save_assets(const std::filesystem::path& dir, const SceneAssets& assets);

/// Expands a 1-channel raster to gray RGB and drops alpha from 4 channels.
ImageBuffer as_rgb(const ImageBuffer& image, ImageRole role);

nlohmann::json camera_to_json(const CameraModel& camera);
CameraModel camera_from_json(const nlohmann::json& j, int width, int height);

/// Meshes the point map with the albedo and normalizes the result.
Scene build_scene(const SceneAssets& assets, double discontinuity_ratio = kDefaultDiscontinuityRatio);

}  // namespace relight
