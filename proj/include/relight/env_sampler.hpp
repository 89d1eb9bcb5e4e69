#pragma once

#include <vector>

#include "relight/lighting.hpp"
#include "relight/vec.hpp"

namespace relight {

/// Importance sampler for a lat-long environment: texels are chosen with
/// probability proportional to luminance times solid angle, then a direction
/// is drawn uniformly (in solid angle) inside the texel, so the density is
/// piecewise constant and integrates to exactly one over the sphere.
class EnvSampler {
public:
    struct Sample {
        Vec3d direction;
        double pdf = 0.0;  // per unit solid angle
        std::size_t texel = 0;
    };

    /// Throws ValueError when the map carries no energy.
    explicit EnvSampler(const EnvironmentMap& env);

    Sample sample(double u0, double u1) const;
    double pdf(const Vec3d& direction) const;
    double texel_pdf(std::size_t texel) const { return texel_pdf_[texel]; }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool matches(const EnvironmentMap& env) const { return env.rows == rows_ && env.cols == cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> row_cdf_;        // rows + 1 entries
    std::vector<double> col_cdf_;        // rows * (cols + 1) entries
    std::vector<double> texel_pdf_;      // per-solid-angle density of each texel
    std::vector<double> cos_theta_;      // rows + 1 entries, cos of row boundaries
};

}  // namespace relight
