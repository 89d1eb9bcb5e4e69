#include "relight/env_sampler.hpp"

#include <algorithm>

#include "relight/error.hpp"

namespace relight {

namespace {

// Index i with cdf[i] <= u < cdf[i + 1], skipping zero-width intervals.
std::size_t find_interval(const double* cdf, std::size_t n, double u) {
    const double* it = std::upper_bound(cdf, cdf + n + 1, u);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - cdf) - 1));
    i = std::min(i, n - 1);
    while (i > 0 && cdf[i + 1] <= cdf[i]) --i;
    while (i + 1 < n && cdf[i + 1] <= cdf[i]) ++i;
    return i;
}

}  // namespace

EnvSampler::EnvSampler(const EnvironmentMap& env) : rows_(env.rows), cols_(env.cols) {
    env.validate();
    cos_theta_.resize(rows_ + 1);
    for (int r = 0; r <= rows_; ++r) cos_theta_[r] = std::cos(kPi * r / rows_);

    std::vector<double> weight(env.texel_count());
    std::vector<double> row_weight(rows_, 0.0);
    for (int r = 0; r < rows_; ++r) {
        const double omega = env.texel_solid_angle(r);
        for (int c = 0; c < cols_; ++c) {
            const std::size_t t = static_cast<std::size_t>(r) * cols_ + c;
            weight[t] = luminance(env.at(t)) * omega;
            row_weight[r] += weight[t];
        }
    }
    double total = 0.0;
    for (double w : row_weight) total += w;
    if (!(total > 0.0)) throw ValueError("environment map has no energy to sample");

    row_cdf_.resize(rows_ + 1);
    row_cdf_[0] = 0.0;
    for (int r = 0; r < rows_; ++r) row_cdf_[r + 1] = row_cdf_[r] + row_weight[r] / total;
    row_cdf_[rows_] = 1.0;

    col_cdf_.assign(static_cast<std::size_t>(rows_) * (cols_ + 1), 0.0);
    texel_pdf_.assign(env.texel_count(), 0.0);
    for (int r = 0; r < rows_; ++r) {
        double* cdf = &col_cdf_[static_cast<std::size_t>(r) * (cols_ + 1)];
        const double omega = env.texel_solid_angle(r);
        for (int c = 0; c < cols_; ++c) {
            const std::size_t t = static_cast<std::size_t>(r) * cols_ + c;
            cdf[c + 1] = cdf[c] + (row_weight[r] > 0.0 ? weight[t] / row_weight[r] : 0.0);
            texel_pdf_[t] = weight[t] / total / omega;
        }
        if (row_weight[r] > 0.0) cdf[cols_] = 1.0;
    }
}

EnvSampler::Sample EnvSampler::sample(double u0, double u1) const {
    const std::size_t r = find_interval(row_cdf_.data(), rows_, u0);
    const double rw = row_cdf_[r + 1] - row_cdf_[r];
    const double ur = std::clamp((u0 - row_cdf_[r]) / rw, 0.0, 1.0);

    const double* cdf = &col_cdf_[r * (cols_ + 1)];
    const std::size_t c = find_interval(cdf, cols_, u1);
    const double cw = cdf[c + 1] - cdf[c];
    const double uc = std::clamp((u1 - cdf[c]) / cw, 0.0, 1.0);

    // Uniform in solid angle inside the texel: linear in cos(theta) and phi.
    const double cos_t = std::clamp(cos_theta_[r] + ur * (cos_theta_[r + 1] - cos_theta_[r]), -1.0, 1.0);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double phi = (static_cast<double>(c) + uc) * (2.0 * kPi / cols_);

    Sample s;
    s.direction = {sin_t * std::sin(phi), -cos_t, sin_t * std::cos(phi)};
    s.texel = r * cols_ + c;
    s.pdf = texel_pdf_[s.texel];
    return s;
}

double EnvSampler::pdf(const Vec3d& direction) const {
    const double theta = std::acos(std::clamp(-direction.y, -1.0, 1.0));
    double phi = std::atan2(direction.x, direction.z);
    if (phi < 0.0) phi += 2.0 * kPi;
    const int r = std::min(rows_ - 1, static_cast<int>(theta * kInvPi * rows_));
    int c = static_cast<int>(phi * (0.5 * kInvPi) * cols_);
    if (c >= cols_) c -= cols_;
    return texel_pdf_[static_cast<std::size_t>(r) * cols_ + c];
}

}  // namespace relight
