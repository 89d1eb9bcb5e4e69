#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <random>

#include "relight/error.hpp"
#include "relight/image.hpp"
#include "relight/image_io.hpp"

using namespace relight;

namespace {

ImageBuffer random_image(std::mt19937& rng, int w, int h, ImageRole role, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> data(static_cast<std::size_t>(w) * h * 3);
    for (auto& v : data) v = dist(rng);
    return ImageBuffer(w, h, 3, role, std::move(data));
}

}  // namespace

TEST(ImageBuffer, RejectsWrongLengthAndRanges) {
    EXPECT_THROW(ImageBuffer(2, 2, 3, ImageRole::generic, std::vector<float>(11)), DimensionError);
    EXPECT_THROW(ImageBuffer::filled(2, 2, 3, ImageRole::albedo, 1.5f), ValueError);
    EXPECT_THROW(ImageBuffer::filled(2, 2, 3, ImageRole::shading, -0.1f), ValueError);
    EXPECT_THROW(ImageBuffer::filled(1, 1, 1, ImageRole::residual, std::numeric_limits<float>::quiet_NaN()),
                 ValueError);
    EXPECT_NO_THROW(ImageBuffer::filled(2, 2, 3, ImageRole::residual, -0.3f));
    EXPECT_NO_THROW(ImageBuffer::filled(2, 2, 3, ImageRole::render, 40.0f));
}

TEST(DiffuseImage, ZeroAlbedoGivesBlack) {
    const auto a = ImageBuffer::filled(4, 3, 3, ImageRole::albedo, 0.0f);
    const auto s = ImageBuffer::filled(4, 3, 3, ImageRole::shading, 7.0f);
    const auto d = diffuse_image(a, s);
    EXPECT_EQ(d.role(), ImageRole::diffuse);
    for (float v : d.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DiffuseImage, UnitAlbedoIsIdentity) {
    std::mt19937 rng(3);
    const auto a = ImageBuffer::filled(5, 5, 3, ImageRole::albedo, 1.0f);
    const auto s = random_image(rng, 5, 5, ImageRole::shading, 0.0f, 20.0f);
    const auto d = diffuse_image(a, s);
    for (std::size_t i = 0; i < d.data().size(); ++i) EXPECT_EQ(d.data()[i], s.data()[i]);
}

TEST(DiffuseImage, PointwiseProduct) {
    const ImageBuffer a(1, 1, 3, ImageRole::albedo, {0.5f, 0.5f, 0.5f});
    const ImageBuffer s(1, 1, 3, ImageRole::shading, {0.8f, 0.4f, 0.2f});
    const auto d = diffuse_image(a, s);
    EXPECT_FLOAT_EQ(d.at(0, 0, 0), 0.4f);
    EXPECT_FLOAT_EQ(d.at(0, 0, 1), 0.2f);
    EXPECT_FLOAT_EQ(d.at(0, 0, 2), 0.1f);
}

TEST(DiffuseImage, DimensionMismatchThrows) {
    const auto a = ImageBuffer::filled(2, 2, 3, ImageRole::albedo, 0.5f);
    const auto s = ImageBuffer::filled(3, 2, 3, ImageRole::shading, 0.5f);
    EXPECT_THROW(diffuse_image(a, s), DimensionError);
}

TEST(DiffuseImage, RejectsOutOfRangeInputs) {
    const auto a = ImageBuffer::filled(2, 2, 3, ImageRole::generic, 1.5f);
    const auto s = ImageBuffer::filled(2, 2, 3, ImageRole::shading, 0.5f);
    EXPECT_THROW(diffuse_image(a, s), ValueError);
}

TEST(DiffuseImage, MonotoneInShading) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_image(rng, 3, 3, ImageRole::albedo, 0.0f, 1.0f);
        const auto s = random_image(rng, 3, 3, ImageRole::shading, 0.0f, 5.0f);
        std::vector<float> bumped(s.data().begin(), s.data().end());
        const std::size_t k = rng() % bumped.size();
        bumped[k] += 0.25f;
        const auto d0 = diffuse_image(a, s);
        const auto d1 = diffuse_image(a, ImageBuffer(3, 3, 3, ImageRole::shading, bumped));
        for (std::size_t i = 0; i < bumped.size(); ++i) EXPECT_GE(d1.data()[i], d0.data()[i]);
    }
}

TEST(Residual, PurelyDiffuseSceneHasZeroResidual) {
    std::mt19937 rng(5);
    const auto a = random_image(rng, 4, 4, ImageRole::albedo, 0.0f, 1.0f);
    const auto s = random_image(rng, 4, 4, ImageRole::shading, 0.0f, 3.0f);
    const auto i = diffuse_image(a, s).with_role(ImageRole::input);
    const auto r = residual(i, a, s);
    for (float v : r.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Residual, DirectEvaluation) {
    const ImageBuffer i(1, 1, 1, ImageRole::input, {1.0f});
    const ImageBuffer a(1, 1, 1, ImageRole::albedo, {0.5f});
    const ImageBuffer s(1, 1, 1, ImageRole::shading, {0.8f});
    EXPECT_NEAR(residual(i, a, s).at(0, 0), 0.6f, 1e-7);
}

TEST(Residual, ZeroAlbedoReturnsInput) {
    std::mt19937 rng(9);
    const auto i = random_image(rng, 3, 2, ImageRole::input, -1.0f, 4.0f);
    const auto a = ImageBuffer::filled(3, 2, 3, ImageRole::albedo, 0.0f);
    const auto s = random_image(rng, 3, 2, ImageRole::shading, 0.0f, 4.0f);
    const auto r = residual(i, a, s);
    for (std::size_t k = 0; k < r.data().size(); ++k) EXPECT_EQ(r.data()[k], i.data()[k]);
}

TEST(Residual, RecoversInjectedResidual) {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_image(rng, 6, 5, ImageRole::albedo, 0.0f, 1.0f);
        const auto s = random_image(rng, 6, 5, ImageRole::shading, 0.0f, 10.0f);
        const auto r0 = random_image(rng, 6, 5, ImageRole::residual, -0.5f, 0.5f);
        const auto d = diffuse_image(a, s);
        std::vector<float> sum(d.data().size());
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = d.data()[k] + r0.data()[k];
        const auto r = residual(ImageBuffer(6, 5, 3, ImageRole::input, sum), a, s);
        for (std::size_t k = 0; k < sum.size(); ++k) {
            const double scale = std::max({1.0, std::abs(double(d.data()[k])), std::abs(double(r0.data()[k]))});
            EXPECT_LT(std::abs(double(r.data()[k]) - r0.data()[k]) / scale, 1e-6);
        }
    }
}

TEST(Residual, NegativeValuesPreserved) {
    const ImageBuffer i(1, 1, 1, ImageRole::input, {0.1f});
    const ImageBuffer a(1, 1, 1, ImageRole::albedo, {0.5f});
    const ImageBuffer s(1, 1, 1, ImageRole::shading, {1.0f});
    EXPECT_NEAR(residual(i, a, s).at(0, 0), -0.4f, 1e-7);
}

TEST(Srgb, FixedPointsAndMidGray) {
    const std::vector<std::uint16_t> samples{0, 255, 188};
    const auto img = srgb_decode(samples, 3, 1, 1, 8, ImageRole::generic);
    EXPECT_EQ(img.at(0, 0), 0.0f);
    EXPECT_EQ(img.at(1, 0), 1.0f);
    EXPECT_NEAR(img.at(2, 0), 0.5029, 1e-4);
    const std::vector<std::uint16_t> wide{0, 65535};
    const auto img16 = srgb_decode(wide, 2, 1, 1, 16, ImageRole::generic);
    EXPECT_EQ(img16.at(0, 0), 0.0f);
    EXPECT_EQ(img16.at(1, 0), 1.0f);
}

TEST(Srgb, MalformedRasterRejected) {
    const std::vector<std::uint16_t> samples{0, 300};
    EXPECT_THROW(srgb_decode(samples, 2, 1, 1, 8, ImageRole::generic), FormatError);
    EXPECT_THROW(srgb_decode(samples, 3, 1, 1, 8, ImageRole::generic), FormatError);
    EXPECT_THROW(srgb_decode(samples, 2, 1, 1, 12, ImageRole::generic), FormatError);
}

TEST(Srgb, RoundTripWithinHalfQuantizationStep) {
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (int bits : {8, 16}) {
        const double max_code = bits == 8 ? 255.0 : 65535.0;
        std::vector<float> xs(4096);
        for (auto& x : xs) x = dist(rng);
        xs[0] = 0.0f;
        xs[1] = 1.0f;
        const ImageBuffer img(static_cast<int>(xs.size()), 1, 1, ImageRole::generic, xs);
        const auto codes = srgb_encode(img, bits);
        const auto back = srgb_decode(codes, img.width(), 1, 1, bits, ImageRole::generic);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double lo = srgb_to_linear(std::max(0.0, (codes[i] - 0.5) / max_code));
            const double hi = srgb_to_linear(std::min(1.0, (codes[i] + 0.5) / max_code));
            EXPECT_GE(xs[i], lo - 1e-7);
            EXPECT_LE(xs[i], hi + 1e-7);
            EXPECT_LE(std::abs(back.at(int(i), 0) - xs[i]), hi - lo + 1e-7);
        }
    }
}

TEST(Pfm, RoundTripAndBottomToTopRows) {
    std::mt19937 rng(4);
    const auto img = random_image(rng, 5, 3, ImageRole::generic, -2.0f, 9.0f);
    const std::string bytes = io::encode_pfm(img);
    ASSERT_EQ(bytes.substr(0, 3), "PF\n");
    const auto back = io::decode_pfm(bytes, ImageRole::generic);
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_EQ(back.data()[i], img.data()[i]);

    // First stored row is the bottom image row.
    const std::size_t header = bytes.find("-1.0\n") + 5;
    float first;
    std::memcpy(&first, bytes.data() + header, sizeof(float));
    EXPECT_EQ(first, img.at(0, 2, 0));
}

TEST(Pfm, BigEndianAndScaleHonoured) {
    std::string bytes = "Pf\n2 1\n2.0\n";
    for (float v : {1.5f, -3.0f}) {
        auto u = std::bit_cast<std::uint32_t>(v);
        for (int s = 24; s >= 0; s -= 8) bytes.push_back(static_cast<char>((u >> s) & 0xff));
    }
    const auto img = io::decode_pfm(bytes, ImageRole::generic);
    EXPECT_EQ(img.channels(), 1);
    EXPECT_FLOAT_EQ(img.at(0, 0), 3.0f);
    EXPECT_FLOAT_EQ(img.at(1, 0), -6.0f);
}

TEST(Pfm, MultiPageAndTruncation) {
    std::string bytes;
    io::append_pfm(bytes, ImageBuffer::filled(2, 2, 3, ImageRole::generic, 0.25f));
    io::append_pfm(bytes, ImageBuffer::filled(2, 2, 1, ImageRole::generic, 1.0f));
    const auto pages = io::decode_pfm_pages(bytes, ImageRole::generic);
    ASSERT_EQ(pages.size(), 2u);
    EXPECT_EQ(pages[1].channels(), 1);
    EXPECT_THROW(io::decode_pfm(bytes.substr(0, 20), ImageRole::generic), FormatError);
    EXPECT_THROW(io::decode_pfm("P6\n1 1\n255\n", ImageRole::generic), FormatError);
}

TEST(Png, EncodeDecodeAndMask) {
    std::mt19937 rng(8);
    const auto img = random_image(rng, 7, 4, ImageRole::albedo, 0.0f, 1.0f);
    for (int bits : {8, 16}) {
        const auto back = io::decode_png(io::encode_png(img, bits), ImageRole::albedo);
        ASSERT_TRUE(back.same_shape(img));
        const double step = bits == 8 ? 1.0 / 255 : 1.0 / 65535;
        for (std::size_t i = 0; i < img.data().size(); ++i) {
            EXPECT_NEAR(back.data()[i], img.data()[i], 2.0 * 12.92 * step + 1e-6);
        }
    }
    ValidMask mask(3, 2, true);
    mask.set(1, 1, false);
    const ValidMask mback = io::decode_mask_png(io::encode_mask_png(mask));
    EXPECT_EQ(mback, mask);
    EXPECT_THROW(io::decode_png("garbage!", ImageRole::generic), FormatError);
    const std::string png = io::encode_png(img);
    EXPECT_THROW(io::decode_png(png.substr(0, png.size() / 2), ImageRole::generic), FormatError);
}

TEST(Resize, LongerSideAndBilinear) {
    EXPECT_EQ(fit_longer_side(1024, 768, 512), std::make_pair(512, 384));
    EXPECT_EQ(fit_longer_side(300, 600, 512), std::make_pair(256, 512));
    const auto img = ImageBuffer::filled(8, 6, 3, ImageRole::diffuse, 0.7f);
    const auto small = resize_bilinear(img, 4, 3);
    for (float v : small.data()) EXPECT_FLOAT_EQ(v, 0.7f);
}
