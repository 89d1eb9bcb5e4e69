#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "relight/assets.hpp"
#include "relight/image.hpp"
#include "relight/optimizer.hpp"

namespace relight {

struct PairConfig {
    FitConfig fit;
    /// Longer side of the raster the lighting is fitted at.
    int fit_resolution = 512;
    double discontinuity_ratio = kDefaultDiscontinuityRatio;
};

struct PairResult {
    ImageBuffer dtilde;  // pbr(M, psi*) at the source resolution
    ValidMask mask;
    double error = 0.0;  // e(D, M, psi*) from the fit
    FitReport report;
};

/// Builds the scene, fits lighting to D = A * S and re-renders the scene
/// under the fitted lighting at the resolution of the source image.
PairResult make_pair(const SceneAssets& assets, const PairConfig& cfg);

/// Fills invalid pixels by peeling inward: each pass sets every unfilled
/// pixel that touches a known pixel (3 x 3) to the mean of its known
/// neighbours, until nothing is left. Valid pixels are copied untouched.
ImageBuffer fill_holes(const ImageBuffer& image, const ValidMask& mask);

/// 7 channels: filled D~ (0..2), albedo (3..5), 1 on invalid pixels (6).
ImageBuffer assemble_nr_input(const ImageBuffer& dtilde_filled, const ImageBuffer& albedo, const ValidMask& mask);

/// MSE(I, J) + sum over scales m < `scales` of MSE(grad I^m, grad J^m), where
/// grad stacks the horizontal and vertical forward differences of every
/// channel and each scale halves the raster by 2 x 2 area averaging.
/// Scales smaller than 2 x 2 pixels contribute nothing.
double multiscale_loss(const ImageBuffer& a, const ImageBuffer& b, int scales = 4);

struct PairEntry {
    std::string scene_id;
    std::filesystem::path assets;  // asset manifest
    std::optional<double> error;   // absent when the scene failed
    std::string failure;
    std::filesystem::path dtilde, mask, nr_input, fit;
    bool kept = false;
};

struct PairManifest {
    std::vector<PairEntry> entries;
    double drop_fraction = 0.15;
};

/// Marks the floor(drop_fraction * N) successful entries with the highest
/// error as dropped (ties: smaller scene_id is dropped first) and keeps the
/// rest. Failed entries are never kept.
PairManifest filter_pairs(const PairManifest& manifest, double drop_fraction = 0.15);

nlohmann::json manifest_to_json(const PairManifest& manifest);
PairManifest manifest_from_json(const nlohmann::json& j);

struct SceneInput {
    std::string id;
    std::filesystem::path manifest;
};

/// Reads {"scenes": [{"id", "manifest"}, ...]} (or a bare array of asset
/// manifest paths). Paths are relative to the list file.
std::vector<SceneInput> read_scene_list(const std::filesystem::path& path);

/// Runs make_pair for every scene, writes {id}/dtilde.pfm, mask.png,
/// nr_input.pfm and fit.json under `out_dir`, filters, and writes
/// out_dir/manifest.json. Failed scenes become error entries.
PairManifest make_pairs(const std::vector<SceneInput>& scenes, const std::filesystem::path& out_dir,
                        const PairConfig& cfg, double drop_fraction = 0.15);

}  // namespace relight
