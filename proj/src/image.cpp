#include "relight/image.hpp"

#include <cmath>
#include <string>

#include "relight/error.hpp"

namespace relight {

std::string_view to_string(ImageRole role) {
    switch (role) {
        case ImageRole::input: return "input";
        case ImageRole::albedo: return "albedo";
        case ImageRole::shading: return "shading";
        case ImageRole::residual: return "residual";
        case ImageRole::diffuse: return "diffuse";
        case ImageRole::render: return "render";
        case ImageRole::output: return "output";
        case ImageRole::mask: return "mask";
        case ImageRole::generic: return "generic";
    }
    return "unknown";
}

namespace {

void validate_values(std::span<const float> data, ImageRole role) {
    const bool unit_range = role == ImageRole::albedo || role == ImageRole::mask;
    const bool nonnegative =
        role == ImageRole::shading || role == ImageRole::diffuse || role == ImageRole::render;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const float v = data[i];
        if (!std::isfinite(v)) {
            throw ValueError("non-finite value at index " + std::to_string(i) + " in " +
                             std::string(to_string(role)) + " image");
        }
        if (unit_range && (v < 0.0f || v > 1.0f)) {
            throw ValueError(std::string(to_string(role)) + " value " + std::to_string(v) +
                             " outside [0, 1]");
        }
        if (nonnegative && v < 0.0f) {
            throw ValueError(std::string(to_string(role)) + " value " + std::to_string(v) +
                             " is negative");
        }
    }
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) +
                             "x" + std::to_string(a.height()) + "x" + std::to_string(a.channels()) +
                             " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()) +
                             "x" + std::to_string(b.channels()) + ")");
    }
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, ImageRole role, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), role_(role), data_(std::move(data)) {
    if (width <= 0 || height <= 0 || channels <= 0) {
        throw DimensionError("image dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw DimensionError("image data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(width) + "x" +
                             std::to_string(height) + "x" + std::to_string(channels));
    }
    validate_values(data_, role_);
}

ImageBuffer ImageBuffer::filled(int width, int height, int channels, ImageRole role, float value) {
    return ImageBuffer(width, height, channels, role,
                       std::vector<float>(static_cast<std::size_t>(width) * height * channels, value));
}

Vec3f ImageBuffer::rgb(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * channels_;
    if (channels_ >= 3) return {data_[i], data_[i + 1], data_[i + 2]};
    return Vec3f(data_[i]);
}

ImageBuffer ImageBuffer::with_role(ImageRole role) const {
    return ImageBuffer(width_, height_, channels_, role, data_);
}

ValidMask::ValidMask(int width, int height, bool value)
    : width_(width), height_(height),
      bits_(static_cast<std::size_t>(width) * height, value ? 1 : 0) {}

ValidMask::ValidMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (bits_.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionError("mask length does not match its dimensions");
    }
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t ValidMask::count_valid() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
}

ValidMask ValidMask::complement() const {
    std::vector<std::uint8_t> inv(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i) inv[i] = bits_[i] ? 0 : 1;
    return ValidMask(width_, height_, std::move(inv));
}

ImageBuffer diffuse_image(const ImageBuffer& albedo, const ImageBuffer& shading) {
    require_same_shape(albedo, shading, "diffuse_image");
    validate_values(albedo.data(), ImageRole::albedo);
    validate_values(shading.data(), ImageRole::shading);
    const auto a = albedo.data();
    const auto s = shading.data();
    std::vector<float> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] * s[i];
    return ImageBuffer(albedo.width(), albedo.height(), albedo.channels(), ImageRole::diffuse,
                       std::move(d));
}

ImageBuffer residual(const ImageBuffer& input, const ImageBuffer& albedo, const ImageBuffer& shading) {
    require_same_shape(input, albedo, "residual");
    require_same_shape(input, shading, "residual");
    const auto im = input.data();
    const auto a = albedo.data();
    const auto s = shading.data();
    std::vector<float> r(im.size());
    for (std::size_t i = 0; i < im.size(); ++i) r[i] = im[i] - a[i] * s[i];
    return ImageBuffer(input.width(), input.height(), input.channels(), ImageRole::residual,
                       std::move(r));
}

double srgb_to_linear(double encoded) {
    if (encoded <= 0.04045) return encoded / 12.92;
    return std::pow((encoded + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double linear) {
    if (linear <= 0.0031308) return 12.92 * linear;
    return 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

ImageBuffer srgb_decode(std::span<const std::uint16_t> samples, int width, int height, int channels,
                        int bit_depth, ImageRole role) {
    if (bit_depth != 8 && bit_depth != 16) throw FormatError("sRGB raster must be 8 or 16 bit");
    if (samples.size() != static_cast<std::size_t>(width) * height * channels) {
        throw FormatError("sRGB raster sample count does not match its dimensions");
    }
    const double max_code = bit_depth == 8 ? 255.0 : 65535.0;
    std::vector<float> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i] > max_code) throw FormatError("sRGB sample exceeds bit depth");
        out[i] = static_cast<float>(srgb_to_linear(samples[i] / max_code));
    }
    return ImageBuffer(width, height, channels, role, std::move(out));
}

std::vector<std::uint16_t> srgb_encode(const ImageBuffer& image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw ValueError("sRGB encode bit depth must be 8 or 16");
    const double max_code = bit_depth == 8 ? 255.0 : 65535.0;
    const auto d = image.data();
    std::vector<std::uint16_t> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = std::clamp(static_cast<double>(d[i]), 0.0, 1.0);
        out[i] = static_cast<std::uint16_t>(std::lround(linear_to_srgb(v) * max_code));
    }
    return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height) {
    if (width <= 0 || height <= 0) throw DimensionError("resize target must be positive");
    if (width == image.width() && height == image.height()) return image;
    const int c = image.channels();
    std::vector<float> out(static_cast<std::size_t>(width) * height * c);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width() - 1);
            const double tx = fx - x0;
            for (int k = 0; k < c; ++k) {
                const double top = (1 - tx) * image.at(x0, y0, k) + tx * image.at(x1, y0, k);
                const double bot = (1 - tx) * image.at(x0, y1, k) + tx * image.at(x1, y1, k);
                out[(static_cast<std::size_t>(y) * width + x) * c + k] =
                    static_cast<float>((1 - ty) * top + ty * bot);
            }
        }
    }
    return ImageBuffer(width, height, c, image.role(), std::move(out));
}

std::pair<int, int> fit_longer_side(int width, int height, int max_dim) {
    if (max_dim <= 0) return {width, height};
    if (width >= height) {
        return {max_dim, std::max(1, static_cast<int>(std::lround(double(height) * max_dim / width)))};
    }
    return {std::max(1, static_cast<int>(std::lround(double(width) * max_dim / height))), max_dim};
}

ValidMask resize_nearest(const ValidMask& mask, int width, int height) {
    if (width == mask.width() && height == mask.height()) return mask;
    ValidMask out(width, height, false);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(mask.height() - 1, static_cast<int>((y + 0.5) * mask.height() / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / width));
            out.set(x, y, mask.valid(sx, sy));
        }
    }
    return out;
}

}  // namespace relight
