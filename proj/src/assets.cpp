#include "relight/assets.hpp"

#include "relight/error.hpp"
#include "relight/image_io.hpp"

namespace relight {

namespace fs = std::filesystem;
using nlohmann::json;

ImageBuffer SceneAssets::diffuse() const {
    if (!shading) throw MissingInputError("missing asset: shading");
    return diffuse_image(albedo, *shading);
}

void SceneAssets::validate() const {
    camera.validate();
    const int w = camera.width, h = camera.height;
    auto check = [&](const ImageBuffer& img, const char* name) {
        if (img.width() != w || img.height() != h) {
            throw DimensionError(std::string(name) + " resolution differs from the camera raster");
        }
        if (img.channels() != 3) throw DimensionError(std::string(name) + " must have 3 channels");
    };
    check(image, "image");
    check(albedo, "albedo");
    if (shading) check(*shading, "shading");
    if (pointmap.width != w || pointmap.height != h) {
        throw DimensionError("pointmap resolution differs from the camera raster");
    }
}

json camera_to_json(const CameraModel& c) {
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

CameraModel camera_from_json(const json& j, int width, int height) {
    if (!j.is_object()) throw FormatError("camera must be an object");
    CameraModel c;
    try {
        c.fx = j.at("fx").get<double>();
        c.fy = j.at("fy").get<double>();
        c.cx = j.at("cx").get<double>();
        c.cy = j.at("cy").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("camera: ") + e.what());
    }
    c.width = j.value("width", width);
    c.height = j.value("height", height);
    if (c.width != width || c.height != height) throw DimensionError("camera size differs from the image");
    c.validate();
    return c;
}

namespace {

fs::path asset_path(const json& manifest, const char* key, const fs::path& base) {
    if (!manifest.contains(key) || manifest[key].is_null()) {
        throw MissingInputError(std::string("missing asset: ") + key);
    }
    if (!manifest[key].is_string()) throw FormatError(std::string(key) + " must be a path string");
    fs::path p = manifest[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
}

}  // namespace

ImageBuffer as_rgb(const ImageBuffer& img, ImageRole role) {
    if (img.channels() == 3) return img.with_role(role);
    if (img.channels() != 1 && img.channels() != 4) throw DimensionError("expected a 1, 3 or 4 channel raster");
    std::vector<float> out(img.pixel_count() * 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            out[3 * i + c] = img.data()[i * img.channels() + (img.channels() == 1 ? 0 : c)];
        }
    }
    return ImageBuffer(img.width(), img.height(), 3, role, std::move(out));
}

SceneAssets assets_from_json(const json& manifest, const fs::path& base_dir) {
    if (!manifest.is_object()) throw FormatError("asset manifest must be a JSON object");
    // Resolve every required key before reading anything so the diagnostic names the first gap.
    const fs::path image_path = asset_path(manifest, "image", base_dir);
    const fs::path albedo_path = asset_path(manifest, "albedo", base_dir);
    const fs::path pointmap_path = asset_path(manifest, "pointmap", base_dir);
    if (!manifest.contains("camera")) throw MissingInputError("missing asset: camera");

    SceneAssets a;
    a.image = as_rgb(io::read_image(image_path, ImageRole::generic), ImageRole::input);
    a.albedo = as_rgb(io::read_image(albedo_path, ImageRole::generic), ImageRole::albedo);
    if (manifest.contains("shading") && !manifest["shading"].is_null()) {
        a.shading = as_rgb(io::read_image(asset_path(manifest, "shading", base_dir), ImageRole::generic),
                           ImageRole::shading);
    }
    ImageBuffer pm = io::read_pfm(pointmap_path, ImageRole::generic);
    if (pm.channels() != 3) throw DimensionError("pointmap must be a 3-channel PFM");
    a.pointmap = PointMap::from_image(pm);
    a.camera = camera_from_json(manifest["camera"], a.image.width(), a.image.height());
    a.validate();
    return a;
}

SceneAssets load_assets(const fs::path& manifest_path) {
    json j;
    try {
        j = json::parse(io::read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw FormatError("asset manifest is not valid JSON: " + std::string(e.what()));
    }
    return assets_from_json(j, manifest_path.parent_path());
}

fs::path save_assets(const fs::path& dir, const SceneAssets& assets) {
    fs::create_directories(dir);
    io::write_pfm(dir / "image.pfm", assets.image);
    io::write_pfm(dir / "albedo.pfm", assets.albedo);
    io::write_pfm(dir / "pointmap.pfm", assets.pointmap.to_image());
    json m = {{"image", "image.pfm"},
              {"albedo", "albedo.pfm"},
              {"pointmap", "pointmap.pfm"},
              {"camera", camera_to_json(assets.camera)}};
    if (assets.shading) {
        io::write_pfm(dir / "shading.pfm", *assets.shading);
        m["shading"] = "shading.pfm";
    }
    const fs::path path = dir / "manifest.json";
    io::write_file(path, m.dump(2) + "\n");
    return path;
}

Scene build_scene(const SceneAssets& assets, double discontinuity_ratio) {
    const TexturedMesh mesh = build_mesh(assets.pointmap, assets.albedo, discontinuity_ratio);
    if (mesh.empty()) throw ValueError("point map produced no valid geometry");
    return make_scene(mesh, assets.camera);
}

}  // namespace relight
