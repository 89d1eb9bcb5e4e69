#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "relight/vec.hpp"

namespace relight {

/// What a raster represents in the intrinsic image model I = A * S + R.
enum class ImageRole {
    input,     // I
    albedo,    // A, values in [0, 1]
    shading,   // S, values >= 0
    residual,  // R, any finite value
    diffuse,   // D = A * S, values >= 0
    render,    // path-traced reconstruction, values >= 0
    output,    // relit result
    mask,
    generic
};

std::string_view to_string(ImageRole role);

/// Immutable row-major linear float raster with 1..N interleaved channels.
///
/// Construction validates the invariants implied by the role (shape, finite
/// values, albedo in [0, 1], nonnegative shading/diffuse/render) and throws
/// DimensionError or ValueError when they do not hold.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, ImageRole role, std::vector<float> data);

    /// Constant-valued raster.
    static ImageBuffer filled(int width, int height, int channels, ImageRole role, float value);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    ImageRole role() const { return role_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    float at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    Vec3f rgb(int x, int y) const;
    std::span<const float> data() const { return data_; }

    bool same_shape(const ImageBuffer& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    /// Same pixels re-tagged with another role (re-validated).
    ImageBuffer with_role(ImageRole role) const;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    ImageRole role_ = ImageRole::generic;
    std::vector<float> data_;
};

/// One boolean per pixel; true marks a valid pixel. The complement is derived.
class ValidMask {
public:
    ValidMask() = default;
    ValidMask(int width, int height, bool value = true);
    ValidMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const { return width_; }
    int height() const { return height_; }
    bool valid(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    bool valid(std::size_t index) const { return bits_[index] != 0; }
    void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    void set(std::size_t index, bool v) { bits_[index] = v ? 1 : 0; }
    std::size_t count_valid() const;
    std::span<const std::uint8_t> bits() const { return bits_; }

    ValidMask complement() const;
    bool operator==(const ValidMask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// D = A * S, per pixel and channel.
ImageBuffer diffuse_image(const ImageBuffer& albedo, const ImageBuffer& shading);

/// R = I - A * S. Negative values are kept.
ImageBuffer residual(const ImageBuffer& input, const ImageBuffer& albedo, const ImageBuffer& shading);

/// sRGB electro-optical transfer for a normalized value in [0, 1].
double srgb_to_linear(double encoded);
/// Inverse of srgb_to_linear.
double linear_to_srgb(double linear);

/// Decodes an 8- or 16-bit gamma raster (bit_depth 8 or 16) to linear floats.
ImageBuffer srgb_decode(std::span<const std::uint16_t> samples, int width, int height, int channels,
                        int bit_depth, ImageRole role);
/// Clamps to [0, 1] and encodes to integer sRGB at the given bit depth.
std::vector<std::uint16_t> srgb_encode(const ImageBuffer& image, int bit_depth);

/// Bilinear resample to a new resolution (pixel-center aligned).
ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height);

/// Resolution whose longer side equals max_dim, keeping the aspect ratio.
std::pair<int, int> fit_longer_side(int width, int height, int max_dim);

/// Nearest-neighbour resample of a mask.
ValidMask resize_nearest(const ValidMask& mask, int width, int height);

}  // namespace relight
