#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "relight/image.hpp"

namespace relight::io {

// PFM: "PF" (3 channels) or "Pf" (1 channel) header, "width height", then a
// scale line whose sign encodes endianness (negative = little endian). Rows are
// stored bottom-to-top. Several pages may be concatenated in one file.

std::string encode_pfm(const ImageBuffer& image);
void append_pfm(std::string& out, const ImageBuffer& image);
/// Decodes every page of a (possibly multi-page) PFM byte string.
std::vector<ImageBuffer> decode_pfm_pages(const std::string& bytes, ImageRole role);
ImageBuffer decode_pfm(const std::string& bytes, ImageRole role);

void write_pfm(const std::filesystem::path& path, const ImageBuffer& image);
ImageBuffer read_pfm(const std::filesystem::path& path, ImageRole role);

/// Encodes as an sRGB PNG (clamped to [0, 1]); optional mask becomes alpha.
std::string encode_png(const ImageBuffer& image, int bit_depth = 8, const ValidMask* alpha = nullptr);
/// Decodes an 8/16-bit PNG. Gray, RGB and RGBA are accepted; alpha is dropped.
/// When `linearize` is set the sRGB transfer is removed.
ImageBuffer decode_png(const std::string& bytes, ImageRole role, bool linearize = true);

void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth = 8);

/// Masks are 8-bit grayscale PNGs, 255 = valid, 0 = invalid.
std::string encode_mask_png(const ValidMask& mask);
ValidMask decode_mask_png(const std::string& bytes);
void write_mask_png(const std::filesystem::path& path, const ValidMask& mask);
ValidMask read_mask_png(const std::filesystem::path& path);

/// Loads PFM (assumed linear) or PNG (sRGB-decoded) by sniffing the magic bytes.
ImageBuffer decode_image(const std::string& bytes, ImageRole role);
ImageBuffer read_image(const std::filesystem::path& path, ImageRole role);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace relight::io
