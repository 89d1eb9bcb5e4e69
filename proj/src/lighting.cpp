#include "relight/lighting.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "relight/error.hpp"
#include "relight/image_io.hpp"

namespace relight {

using nlohmann::json;

Light Light::point(const Vec3d& position, const Vec3d& intensity) {
    Light l;
    l.kind = LightKind::point;
    l.position = position;
    l.intensity = intensity;
    return l;
}

namespace {

bool finite3(const Vec3d& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

const char* kind_name(LightKind k) {
    switch (k) {
        case LightKind::point: return "point";
        case LightKind::spot: return "spot";
        case LightKind::directional: return "directional";
        case LightKind::area: return "area";
    }
    return "?";
}

}  // namespace

void Light::validate() const {
    if (!finite3(position) || !finite3(intensity) || !finite3(direction) || !finite3(edge_u) || !finite3(edge_v)) {
        throw ValueError(std::string(kind_name(kind)) + " light has non-finite parameters");
    }
    if (min_component(intensity) < 0.0) throw ValueError(std::string(kind_name(kind)) + " light intensity must be nonnegative");
    if (kind == LightKind::spot || kind == LightKind::directional) {
        if (std::abs(length(direction) - 1.0) > 1e-6) throw ValueError("light direction must be unit length");
    }
    if (kind == LightKind::spot) {
        if (!(cone_inner_deg > 0.0) || !(cone_inner_deg <= cone_outer_deg) || !(cone_outer_deg <= 90.0)) {
            throw ValueError("spot cone must satisfy 0 < inner <= outer <= 90 degrees");
        }
    }
    if (kind == LightKind::area && !(length(cross(edge_u, edge_v)) > 0.0)) {
        throw ValueError("area light edges must span a nonzero area");
    }
}

EnvironmentMap EnvironmentMap::constant(int rows, const Vec3d& value) {
    EnvironmentMap e;
    e.rows = rows;
    e.cols = 2 * rows;
    e.rgb.resize(e.texel_count() * 3);
    for (std::size_t t = 0; t < e.texel_count(); ++t) {
        e.rgb[3 * t] = static_cast<float>(value.x);
        e.rgb[3 * t + 1] = static_cast<float>(value.y);
        e.rgb[3 * t + 2] = static_cast<float>(value.z);
    }
    return e;
}

bool EnvironmentMap::is_zero() const {
    return std::all_of(rgb.begin(), rgb.end(), [](float v) { return v == 0.0f; });
}

bool EnvironmentMap::is_uniform() const {
    for (std::size_t i = 3; i < rgb.size(); ++i) {
        if (rgb[i] != rgb[i % 3]) return false;
    }
    return true;
}

Vec3d EnvironmentMap::mean() const {
    Vec3d s(0.0);
    for (std::size_t t = 0; t < texel_count(); ++t) s += at(t);
    return s / static_cast<double>(texel_count());
}

std::size_t EnvironmentMap::texel_of(const Vec3d& d) const {
    const double theta = std::acos(std::clamp(-d.y, -1.0, 1.0));
    double phi = std::atan2(d.x, d.z);
    if (phi < 0.0) phi += 2.0 * kPi;
    const int r = std::min(rows - 1, static_cast<int>(theta * kInvPi * rows));
    int c = static_cast<int>(phi * (0.5 * kInvPi) * cols);
    if (c >= cols) c -= cols;
    return static_cast<std::size_t>(r) * cols + c;
}

double EnvironmentMap::texel_solid_angle(int row) const {
    const double t0 = kPi * row / rows;
    const double t1 = kPi * (row + 1) / rows;
    return (std::cos(t0) - std::cos(t1)) * (2.0 * kPi / cols);
}

Vec3d EnvironmentMap::direction_of(double theta, double phi) {
    const double s = std::sin(theta);
    return {s * std::sin(phi), -std::cos(theta), s * std::cos(phi)};
}

void EnvironmentMap::validate() const {
    if (rows < 1 || cols != 2 * rows) throw ValueError("environment map must be rows x (2 * rows)");
    if (rgb.size() != texel_count() * 3) throw DimensionError("environment map data length mismatch");
    for (float v : rgb) {
        if (!std::isfinite(v) || v < 0.0f) throw ValueError("environment texels must be finite and nonnegative");
    }
}

void LightingEnvironment::validate() const {
    env.validate();
    for (const auto& l : lights) l.validate();
}

std::size_t LightingEnvironment::point_light_count() const {
    return static_cast<std::size_t>(
        std::count_if(lights.begin(), lights.end(), [](const Light& l) { return l.kind == LightKind::point; }));
}

LightingEnvironment LightingEnvironment::scaled(double alpha) const {
    LightingEnvironment out = *this;
    for (auto& v : out.env.rgb) v = static_cast<float>(v * alpha);
    for (auto& l : out.lights) l.intensity *= alpha;
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

Vec3d vec3_from(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key)) throw ValueError(std::string(ctx) + ": missing field '" + key + "'");
    const json& a = j.at(key);
    if (!a.is_array() || a.size() != 3) throw ValueError(std::string(ctx) + ": '" + key + "' must be an array of 3 numbers");
    Vec3d v;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!a[i].is_number()) throw ValueError(std::string(ctx) + ": '" + key + "' must be an array of 3 numbers");
        v[i] = a[i].get<double>();
    }
    return v;
}

double number_from(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw ValueError(std::string(ctx) + ": missing numeric field '" + key + "'");
    }
    return j.at(key).get<double>();
}

json to_array(const Vec3d& v) { return json::array({v.x, v.y, v.z}); }

// Shortest decimal that round-trips the float, so 0.3f is written as 0.3.
double float_for_json(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::strtod(std::string(buf, res.ptr).c_str(), nullptr);
}

Vec3d unit_from(const json& j, const char* key, const char* ctx) {
    const Vec3d d = vec3_from(j, key, ctx);
    const double len = length(d);
    if (!(len > 0.0) || !std::isfinite(len)) throw ValueError(std::string(ctx) + ": '" + key + "' must be a nonzero vector");
    return d / len;
}

}  // namespace

Light light_from_json(const json& j) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw ValueError("light: expected an object with a string 'type'");
    }
    const std::string type = j.at("type").get<std::string>();
    Light l;
    if (type == "point") {
        l.kind = LightKind::point;
        l.position = vec3_from(j, "position", "point light");
        l.intensity = vec3_from(j, "intensity", "point light");
    } else if (type == "spot") {
        l.kind = LightKind::spot;
        l.position = vec3_from(j, "position", "spot light");
        l.direction = unit_from(j, "direction", "spot light");
        l.intensity = vec3_from(j, "intensity", "spot light");
        l.cone_inner_deg = number_from(j, "cone_inner_deg", "spot light");
        l.cone_outer_deg = number_from(j, "cone_outer_deg", "spot light");
    } else if (type == "directional") {
        l.kind = LightKind::directional;
        l.direction = unit_from(j, "direction", "directional light");
        l.intensity = vec3_from(j, "irradiance", "directional light");
    } else if (type == "area") {
        l.kind = LightKind::area;
        l.position = vec3_from(j, "position", "area light");
        l.edge_u = vec3_from(j, "edge_u", "area light");
        l.edge_v = vec3_from(j, "edge_v", "area light");
        l.intensity = vec3_from(j, "radiance", "area light");
        l.direction = normalize(cross(l.edge_u, l.edge_v));
    } else {
        throw ValueError("light: unknown type '" + type + "'");
    }
    l.validate();
    return l;
}

json light_to_json(const Light& l) {
    switch (l.kind) {
        case LightKind::point:
            return {{"type", "point"}, {"position", to_array(l.position)}, {"intensity", to_array(l.intensity)}};
        case LightKind::spot:
            return {{"type", "spot"},
                    {"position", to_array(l.position)},
                    {"direction", to_array(l.direction)},
                    {"intensity", to_array(l.intensity)},
                    {"cone_inner_deg", l.cone_inner_deg},
                    {"cone_outer_deg", l.cone_outer_deg}};
        case LightKind::directional:
            return {{"type", "directional"}, {"direction", to_array(l.direction)}, {"irradiance", to_array(l.intensity)}};
        case LightKind::area:
            return {{"type", "area"},
                    {"position", to_array(l.position)},
                    {"edge_u", to_array(l.edge_u)},
                    {"edge_v", to_array(l.edge_v)},
                    {"radiance", to_array(l.intensity)}};
    }
    return {};
}

ImageBuffer env_to_image(const EnvironmentMap& env) {
    return ImageBuffer(env.cols, env.rows, 3, ImageRole::generic, env.rgb);
}

EnvironmentMap env_from_image(const ImageBuffer& image) {
    if (image.channels() != 3) throw FormatError("HDRI must have 3 channels");
    EnvironmentMap e;
    e.rows = image.height();
    e.cols = image.width();
    e.rgb.assign(image.data().begin(), image.data().end());
    e.validate();
    return e;
}

LightingEnvironment lighting_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValueError("lighting: expected a JSON object");
    LightingEnvironment out;
    out.env = EnvironmentMap::constant(1, Vec3d(0.0));
    if (j.contains("environment") && !j.at("environment").is_null()) {
        const json& e = j.at("environment");
        if (!e.is_object() || !e.contains("type") || !e.at("type").is_string()) {
            throw ValueError("environment: expected an object with a string 'type'");
        }
        const std::string type = e.at("type").get<std::string>();
        if (type == "constant") {
            const Vec3d rgb = vec3_from(e, "rgb", "constant environment");
            if (min_component(rgb) < 0.0 || !finite3(rgb)) throw ValueError("constant environment must be finite and nonnegative");
            out.env = EnvironmentMap::constant(1, rgb);
        } else if (type == "hdri") {
            if (e.contains("data")) {
                EnvironmentMap env;
                env.rows = static_cast<int>(number_from(e, "rows", "inline hdri"));
                env.cols = static_cast<int>(number_from(e, "cols", "inline hdri"));
                if (!e.at("data").is_array()) throw ValueError("inline hdri: 'data' must be an array");
                env.rgb = e.at("data").get<std::vector<float>>();
                env.validate();
                out.env = std::move(env);
            } else if (e.contains("path") && e.at("path").is_string()) {
                std::filesystem::path p = e.at("path").get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                out.env = env_from_image(io::read_pfm(p, ImageRole::generic));
            } else {
                throw ValueError("hdri environment needs 'path' or inline 'data'");
            }
        } else {
            throw ValueError("environment: unknown type '" + type + "'");
        }
    }
    if (j.contains("lights")) {
        if (!j.at("lights").is_array()) throw ValueError("lighting: 'lights' must be an array");
        for (const auto& lj : j.at("lights")) out.lights.push_back(light_from_json(lj));
    }
    out.validate();
    return out;
}

json lighting_to_json(const LightingEnvironment& lighting, const EnvEncoding& encoding) {
    json j;
    const EnvironmentMap& env = lighting.env;
    if (env.is_uniform()) {
        j["environment"] = {{"type", "constant"}, {"rgb", json::array({float_for_json(env.rgb[0]), float_for_json(env.rgb[1]),
                                                        float_for_json(env.rgb[2])})}};
    } else if (encoding.mode == EnvEncoding::Mode::file) {
        io::write_pfm(encoding.write_path, env_to_image(env));
        j["environment"] = {{"type", "hdri"}, {"path", encoding.json_path}};
    } else {
        j["environment"] = {{"type", "hdri"}, {"rows", env.rows}, {"cols", env.cols}, {"data", env.rgb}};
    }
    j["lights"] = json::array();
    for (const auto& l : lighting.lights) j["lights"].push_back(light_to_json(l));
    return j;
}

}  // namespace relight
