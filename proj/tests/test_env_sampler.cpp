#include <gtest/gtest.h>

#include <random>

#include "relight/env_sampler.hpp"
#include "relight/error.hpp"
#include "relight/rng.hpp"

using namespace relight;

TEST(EnvironmentMap, TexelLookupRoundTrip) {
    const auto env = EnvironmentMap::constant(16, Vec3d(1.0));
    for (int r = 0; r < env.rows; ++r) {
        for (int c = 0; c < env.cols; ++c) {
            const double theta = (r + 0.5) * kPi / env.rows;
            const double phi = (c + 0.5) * 2.0 * kPi / env.cols;
            EXPECT_EQ(env.texel_of(EnvironmentMap::direction_of(theta, phi)),
                      static_cast<std::size_t>(r) * env.cols + c);
        }
    }
    EXPECT_EQ(env.texel_of({0, -1, 0}) / env.cols, 0u);  // row 0 is up (-Y)
    double total = 0.0;
    for (int r = 0; r < env.rows; ++r) total += env.texel_solid_angle(r) * env.cols;
    EXPECT_NEAR(total, 4.0 * kPi, 1e-9);
}

TEST(EnvSampler, AllZeroRejected) {
    EXPECT_THROW(EnvSampler(EnvironmentMap::constant(4, Vec3d(0.0))), ValueError);
}

TEST(EnvSampler, SingleTexelCapturesEverySample) {
    EnvironmentMap env = EnvironmentMap::constant(8, Vec3d(0.0));
    const std::size_t target = 3 * env.cols + 11;
    env.rgb[3 * target] = 2.0f;
    env.rgb[3 * target + 1] = 1.0f;
    const EnvSampler sampler(env);
    const SampleStream s(42);
    for (std::uint32_t i = 0; i < 20000; i += 2) {
        const auto smp = sampler.sample(s.uniform(i), s.uniform(i + 1));
        ASSERT_EQ(smp.texel, target);
        ASSERT_EQ(env.texel_of(smp.direction), target);
        EXPECT_NEAR(smp.pdf, 1.0 / env.texel_solid_angle(3), 1e-9 * smp.pdf);
    }
}

TEST(EnvSampler, ConstantMapIsUniformOverSphere) {
    // Chi-square over equal-solid-angle bins (uniform in cos(theta) and phi).
    const EnvSampler sampler(EnvironmentMap::constant(32, Vec3d(0.7)));
    constexpr int kBinsZ = 10, kBinsPhi = 20, kN = 100000;
    std::vector<int> counts(kBinsZ * kBinsPhi, 0);
    const SampleStream s(7);
    for (std::uint32_t i = 0; i < kN; ++i) {
        const auto smp = sampler.sample(s.uniform(2 * i), s.uniform(2 * i + 1));
        EXPECT_NEAR(smp.pdf, 1.0 / (4.0 * kPi), 1e-9);
        const Vec3d d = smp.direction;
        const int bz = std::min(kBinsZ - 1, static_cast<int>((-d.y + 1.0) * 0.5 * kBinsZ));
        double phi = std::atan2(d.x, d.z);
        if (phi < 0) phi += 2 * kPi;
        const int bp = std::min(kBinsPhi - 1, static_cast<int>(phi / (2 * kPi) * kBinsPhi));
        ++counts[bz * kBinsPhi + bp];
    }
    const double expected = static_cast<double>(kN) / counts.size();
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 199 degrees of freedom: mean 199, sd ~20; 3 sigma upper bound.
    EXPECT_LT(chi2, 199.0 + 3.0 * std::sqrt(2.0 * 199.0));
}

TEST(EnvSampler, PdfIntegratesToOneAndMatchesQuadrature) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> dist(0.0f, 4.0f);
    EnvironmentMap env = EnvironmentMap::constant(16, Vec3d(0.0));
    for (auto& v : env.rgb) v = 0.25f + dist(rng) * dist(rng);
    const EnvSampler sampler(env);

    double pdf_integral = 0.0;
    double quadrature = 0.0;
    for (int r = 0; r < env.rows; ++r) {
        for (int c = 0; c < env.cols; ++c) {
            const std::size_t t = static_cast<std::size_t>(r) * env.cols + c;
            pdf_integral += sampler.texel_pdf(t) * env.texel_solid_angle(r);
            quadrature += env.at(t).x * env.texel_solid_angle(r);
        }
    }
    EXPECT_NEAR(pdf_integral, 1.0, 1e-9);

    // Unbiased estimate of the integral of the red channel and of a constant.
    double mc = 0.0, mc_const = 0.0;
    const SampleStream s(99);
    constexpr int kN = 200000;
    for (std::uint32_t i = 0; i < kN; ++i) {
        const auto smp = sampler.sample(s.uniform(2 * i), s.uniform(2 * i + 1));
        ASSERT_GT(smp.pdf, 0.0);
        EXPECT_NEAR(sampler.pdf(smp.direction), smp.pdf, 1e-9 * smp.pdf);
        mc += env.at(smp.texel).x / smp.pdf;
        mc_const += 1.0 / smp.pdf;
    }
    EXPECT_NEAR(mc / kN, quadrature, 0.01 * quadrature);
    EXPECT_NEAR(mc_const / kN, 4.0 * kPi, 0.01 * 4.0 * kPi);
}
