#include "relight/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "relight/error.hpp"

namespace relight::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

void append_pfm(std::string& out, const ImageBuffer& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw FormatError("PFM supports 1 or 3 channels, got " + std::to_string(image.channels()));
    }
    const bool little = std::endian::native == std::endian::little;
    out += image.channels() == 3 ? "PF\n" : "Pf\n";
    out += std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n";
    out += little ? "-1.0\n" : "1.0\n";
    const auto data = image.data();
    const std::size_t row = static_cast<std::size_t>(image.width()) * image.channels();
    for (int y = image.height() - 1; y >= 0; --y) {
        const char* src = reinterpret_cast<const char*>(data.data() + y * row);
        out.append(src, row * sizeof(float));
    }
}

std::string encode_pfm(const ImageBuffer& image) {
    std::string out;
    append_pfm(out, image);
    return out;
}

namespace {

std::string next_token(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
}

}  // namespace

std::vector<ImageBuffer> decode_pfm_pages(const std::string& bytes, ImageRole role) {
    std::vector<ImageBuffer> pages;
    std::size_t pos = 0;
    while (true) {
        std::size_t probe = pos;
        while (probe < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[probe]))) ++probe;
        if (probe >= bytes.size()) break;

        const std::string magic = next_token(bytes, pos);
        int channels = 0;
        if (magic == "PF") channels = 3;
        else if (magic == "Pf") channels = 1;
        else throw FormatError("not a PFM page (magic '" + magic + "')");

        int width = 0, height = 0;
        double scale = 0;
        try {
            width = std::stoi(next_token(bytes, pos));
            height = std::stoi(next_token(bytes, pos));
            scale = std::stod(next_token(bytes, pos));
        } catch (const std::exception&) {
            throw FormatError("malformed PFM header");
        }
        if (width <= 0 || height <= 0 || scale == 0.0) throw FormatError("invalid PFM header values");
        ++pos;  // single whitespace byte after the scale

        const std::size_t row = static_cast<std::size_t>(width) * channels;
        const std::size_t nbytes = row * height * sizeof(float);
        if (pos + nbytes > bytes.size()) throw FormatError("truncated PFM payload");

        const bool file_little = scale < 0;
        const bool swap = file_little != (std::endian::native == std::endian::little);
        std::vector<float> data(row * height);
        for (int y = 0; y < height; ++y) {
            const char* src = bytes.data() + pos + (static_cast<std::size_t>(height - 1 - y) * row) * sizeof(float);
            std::memcpy(data.data() + y * row, src, row * sizeof(float));
        }
        if (swap) {
            for (auto& v : data) {
                auto u = std::bit_cast<std::uint32_t>(v);
                u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
                v = std::bit_cast<float>(u);
            }
        }
        const float mag = static_cast<float>(std::abs(scale));
        if (mag != 1.0f) {
            for (auto& v : data) v *= mag;
        }
        pos += nbytes;
        pages.emplace_back(width, height, channels, role, std::move(data));
    }
    if (pages.empty()) throw FormatError("empty PFM");
    return pages;
}

ImageBuffer decode_pfm(const std::string& bytes, ImageRole role) {
    auto pages = decode_pfm_pages(bytes, role);
    return std::move(pages.front());
}

void write_pfm(const std::filesystem::path& path, const ImageBuffer& image) {
    write_file(path, encode_pfm(image));
}

ImageBuffer read_pfm(const std::filesystem::path& path, ImageRole role) {
    return decode_pfm(read_file(path), role);
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

struct PngReadState {
    const std::string* bytes;
    std::size_t pos;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t count) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + count > st->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(out, st->bytes->data() + st->pos, count);
    st->pos += count;
}

void png_write_callback(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), count);
}

void png_flush_callback(png_structp) {}

void png_error_callback(png_structp, png_const_charp msg) { throw FormatError(std::string("PNG: ") + msg); }
void png_warning_callback(png_structp, png_const_charp) {}

struct DecodedPng {
    int width = 0, height = 0, channels = 0, bit_depth = 0;
    std::vector<std::uint16_t> samples;
};

DecodedPng decode_png_raw(const std::string& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw FormatError("not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback,
                                             png_warning_callback);
    if (!png) throw FormatError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    DecodedPng out;
    try {
        if (!info) throw FormatError("png_create_info_struct failed");
        PngReadState st{&bytes, 0};
        png_set_read_fn(png, &st, png_read_callback);
        png_read_info(png, info);

        const auto color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
        png_read_update_info(png, info);

        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        out.channels = png_get_channels(png, info);
        out.bit_depth = png_get_bit_depth(png, info);
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        std::vector<unsigned char> raw(rowbytes * out.height);
        std::vector<png_bytep> rows(out.height);
        for (int y = 0; y < out.height; ++y) rows[y] = raw.data() + y * rowbytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
        out.samples.resize(n);
        if (out.bit_depth == 16) {
            for (int y = 0; y < out.height; ++y) {
                std::memcpy(out.samples.data() + static_cast<std::size_t>(y) * out.width * out.channels,
                            rows[y], static_cast<std::size_t>(out.width) * out.channels * 2);
            }
        } else {
            for (int y = 0; y < out.height; ++y) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(out.width) * out.channels; ++i) {
                    out.samples[y * static_cast<std::size_t>(out.width) * out.channels + i] = rows[y][i];
                }
            }
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

std::string encode_png_raw(int width, int height, int channels, int bit_depth,
                           const std::vector<std::uint16_t>& samples) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback,
                                              png_warning_callback);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    try {
        if (!info) throw Error("png_create_info_struct failed");
        png_set_write_fn(png, &out, png_write_callback, png_flush_callback);
        const int color = channels == 1   ? PNG_COLOR_TYPE_GRAY
                          : channels == 2 ? PNG_COLOR_TYPE_GRAY_ALPHA
                          : channels == 3 ? PNG_COLOR_TYPE_RGB
                                          : PNG_COLOR_TYPE_RGBA;
        png_set_IHDR(png, info, width, height, bit_depth, color, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
        std::vector<unsigned char> row(row_samples * (bit_depth == 16 ? 2 : 1));
        for (int y = 0; y < height; ++y) {
            for (std::size_t i = 0; i < row_samples; ++i) {
                const std::uint16_t v = samples[y * row_samples + i];
                if (bit_depth == 16) {
                    row[2 * i] = static_cast<unsigned char>(v >> 8);
                    row[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
                } else {
                    row[i] = static_cast<unsigned char>(v);
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

std::string encode_png(const ImageBuffer& image, int bit_depth, const ValidMask* alpha) {
    if (image.channels() != 1 && image.channels() != 3) throw FormatError("PNG export needs 1 or 3 channels");
    auto samples = srgb_encode(image, bit_depth);
    if (!alpha) return encode_png_raw(image.width(), image.height(), image.channels(), bit_depth, samples);

    if (alpha->width() != image.width() || alpha->height() != image.height()) {
        throw DimensionError("alpha mask does not match image");
    }
    const int c = image.channels();
    const std::uint16_t opaque = bit_depth == 16 ? 65535 : 255;
    std::vector<std::uint16_t> with_alpha;
    with_alpha.reserve(image.pixel_count() * (c + 1));
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        for (int k = 0; k < c; ++k) with_alpha.push_back(samples[p * c + k]);
        with_alpha.push_back(alpha->valid(p) ? opaque : 0);
    }
    return encode_png_raw(image.width(), image.height(), c + 1, bit_depth, with_alpha);
}

ImageBuffer decode_png(const std::string& bytes, ImageRole role, bool linearize) {
    DecodedPng raw = decode_png_raw(bytes);
    const int keep = raw.channels >= 3 ? 3 : 1;
    std::vector<std::uint16_t> samples;
    samples.reserve(static_cast<std::size_t>(raw.width) * raw.height * keep);
    for (std::size_t p = 0; p < static_cast<std::size_t>(raw.width) * raw.height; ++p) {
        for (int k = 0; k < keep; ++k) samples.push_back(raw.samples[p * raw.channels + k]);
    }
    if (linearize) return srgb_decode(samples, raw.width, raw.height, keep, raw.bit_depth, role);

    const double max_code = raw.bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<float> data(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) data[i] = static_cast<float>(samples[i] / max_code);
    return ImageBuffer(raw.width, raw.height, keep, role, std::move(data));
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth) {
    write_file(path, encode_png(image, bit_depth));
}

std::string encode_mask_png(const ValidMask& mask) {
    std::vector<std::uint16_t> samples(mask.bits().size());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask.valid(i) ? 255 : 0;
    return encode_png_raw(mask.width(), mask.height(), 1, 8, samples);
}

ValidMask decode_mask_png(const std::string& bytes) {
    DecodedPng raw = decode_png_raw(bytes);
    const std::uint16_t half = raw.bit_depth == 16 ? 32768 : 128;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(raw.width) * raw.height);
    for (std::size_t p = 0; p < bits.size(); ++p) bits[p] = raw.samples[p * raw.channels] >= half ? 1 : 0;
    return ValidMask(raw.width, raw.height, std::move(bits));
}

void write_mask_png(const std::filesystem::path& path, const ValidMask& mask) {
    write_file(path, encode_mask_png(mask));
}

ValidMask read_mask_png(const std::filesystem::path& path) { return decode_mask_png(read_file(path)); }

ImageBuffer decode_image(const std::string& bytes, ImageRole role) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) {
        return decode_pfm(bytes, role);
    }
    if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0) {
        return decode_png(bytes, role);
    }
    throw FormatError("unrecognized image format (expected PFM or PNG)");
}

ImageBuffer read_image(const std::filesystem::path& path, ImageRole role) {
    return decode_image(read_file(path), role);
}

}  // namespace relight::io
