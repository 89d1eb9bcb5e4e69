#include "relight/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relight/error.hpp"
#include "relight/image_io.hpp"
#include "relight/parallel.hpp"
#include "relight/rng.hpp"

namespace relight {

namespace fs = std::filesystem;
using nlohmann::json;

PairResult make_pair(const SceneAssets& assets, const PairConfig& cfg) {
    assets.validate();
    if (!assets.has_shading()) throw MissingInputError("fit requires diffuse target");
    const Scene scene = build_scene(assets, cfg.discontinuity_ratio);
    const ImageBuffer d = assets.diffuse();
    const auto [w, h] = fit_longer_side(d.width(), d.height(), cfg.fit_resolution);
    const ImageBuffer target = resize_bilinear(d, w, h);

    PairResult out;
    out.report = fit_lighting(target, scene, cfg.fit);
    out.error = out.report.final_error;

    RenderConfig rc;
    rc.width = d.width();
    rc.height = d.height();
    rc.spp = cfg.fit.spp;
    rc.max_depth = cfg.fit.max_depth;
    rc.seed = hash_combine(cfg.fit.seed, 0x5245u);
    rc.threads = cfg.fit.threads;
    auto [img, mask] = render(scene, out.report.psi_star, rc);
    out.dtilde = std::move(img);
    out.mask = std::move(mask);
    return out;
}

ImageBuffer fill_holes(const ImageBuffer& image, const ValidMask& mask) {
    if (mask.width() != image.width() || mask.height() != image.height()) {
        throw DimensionError("fill_holes: mask size differs from the image");
    }
    if (mask.count_valid() == 0) throw ValueError("fill_holes needs at least one valid pixel");
    const int w = image.width(), h = image.height(), c = image.channels();
    std::vector<float> data(image.data().begin(), image.data().end());
    std::vector<std::uint8_t> known(mask.bits().begin(), mask.bits().end());
    std::size_t remaining = image.pixel_count() - mask.count_valid();
    std::vector<std::size_t> frontier;
    std::vector<float> values;
    while (remaining > 0) {
        frontier.clear();
        values.clear();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                if (known[p]) continue;
                std::vector<double> sum(c, 0.0);
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                        if (!known[q]) continue;
                        for (int k = 0; k < c; ++k) sum[k] += data[q * c + k];
                        ++n;
                    }
                }
                if (n == 0) continue;
                frontier.push_back(p);
                for (int k = 0; k < c; ++k) values.push_back(static_cast<float>(sum[k] / n));
            }
        }
        // Commit the whole ring at once so the result does not depend on scan order.
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            known[frontier[i]] = 1;
            for (int k = 0; k < c; ++k) data[frontier[i] * c + k] = values[i * c + k];
        }
        remaining -= frontier.size();
    }
    return ImageBuffer(w, h, c, image.role(), std::move(data));
}

ImageBuffer assemble_nr_input(const ImageBuffer& dtilde, const ImageBuffer& albedo, const ValidMask& mask) {
    if (dtilde.width() != albedo.width() || dtilde.height() != albedo.height() || mask.width() != dtilde.width() ||
        mask.height() != dtilde.height()) {
        throw DimensionError("assemble_nr_input: raster sizes differ");
    }
    if (dtilde.channels() != 3 || albedo.channels() != 3) throw DimensionError("assemble_nr_input expects RGB inputs");
    std::vector<float> out(dtilde.pixel_count() * 7);
    for (std::size_t p = 0; p < dtilde.pixel_count(); ++p) {
        for (int k = 0; k < 3; ++k) {
            out[7 * p + k] = dtilde.data()[3 * p + k];
            out[7 * p + 3 + k] = albedo.data()[3 * p + k];
        }
        out[7 * p + 6] = mask.valid(p) ? 0.0f : 1.0f;
    }
    return ImageBuffer(dtilde.width(), dtilde.height(), 7, ImageRole::generic, std::move(out));
}

namespace {

struct Plane {
    int w = 0, h = 0, c = 0;
    std::vector<double> v;
    double at(int x, int y, int k) const { return v[(static_cast<std::size_t>(y) * w + x) * c + k]; }
};

Plane to_plane(const ImageBuffer& img) {
    return {img.width(), img.height(), img.channels(), std::vector<double>(img.data().begin(), img.data().end())};
}

Plane downsample(const Plane& p) {
    Plane out{p.w / 2, p.h / 2, p.c, {}};
    out.v.resize(static_cast<std::size_t>(out.w) * out.h * out.c);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int k = 0; k < p.c; ++k) {
                out.v[(static_cast<std::size_t>(y) * out.w + x) * p.c + k] =
                    0.25 * (p.at(2 * x, 2 * y, k) + p.at(2 * x + 1, 2 * y, k) + p.at(2 * x, 2 * y + 1, k) +
                            p.at(2 * x + 1, 2 * y + 1, k));
            }
    return out;
}

double gradient_mse(const Plane& a, const Plane& b) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x)
            for (int k = 0; k < a.c; ++k) {
                if (x + 1 < a.w) {
                    const double d = (a.at(x + 1, y, k) - a.at(x, y, k)) - (b.at(x + 1, y, k) - b.at(x, y, k));
                    sum += d * d;
                    ++n;
                }
                if (y + 1 < a.h) {
                    const double d = (a.at(x, y + 1, k) - a.at(x, y, k)) - (b.at(x, y + 1, k) - b.at(x, y, k));
                    sum += d * d;
                    ++n;
                }
            }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

double multiscale_loss(const ImageBuffer& a, const ImageBuffer& b, int scales) {
    if (!a.same_shape(b)) throw DimensionError("multiscale_loss: image shapes differ");
    if (scales < 1) throw ValueError("multiscale_loss needs at least one scale");
    Plane pa = to_plane(a), pb = to_plane(b);
    double mse = 0.0;
    for (std::size_t i = 0; i < pa.v.size(); ++i) mse += (pa.v[i] - pb.v[i]) * (pa.v[i] - pb.v[i]);
    double loss = pa.v.empty() ? 0.0 : mse / static_cast<double>(pa.v.size());
    for (int m = 0; m < scales; ++m) {
        if (pa.w < 2 || pa.h < 2) break;
        loss += gradient_mse(pa, pb);
        pa = downsample(pa);
        pb = downsample(pb);
    }
    return loss;
}

PairManifest filter_pairs(const PairManifest& manifest, double drop_fraction) {
    if (manifest.entries.empty()) throw ValueError("filter_pairs: empty manifest");
    if (!(drop_fraction >= 0.0 && drop_fraction <= 1.0)) throw ValueError("drop fraction must lie in [0, 1]");
    PairManifest out = manifest;
    out.drop_fraction = drop_fraction;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        PairEntry& e = out.entries[i];
        if (e.error && *e.error < 0.0) throw ValueError("negative fit error for " + e.scene_id);
        e.kept = e.error.has_value();
        if (e.kept) ok.push_back(i);
    }
    std::sort(ok.begin(), ok.end(), [&](std::size_t l, std::size_t r) {
        const PairEntry& a = out.entries[l];
        const PairEntry& b = out.entries[r];
        if (*a.error != *b.error) return *a.error > *b.error;
        return a.scene_id < b.scene_id;
    });
    const auto drop = static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(ok.size()) + 1e-9));
    for (std::size_t i = 0; i < drop; ++i) out.entries[ok[i]].kept = false;
    return out;
}

json manifest_to_json(const PairManifest& m) {
    json entries = json::array();
    for (const PairEntry& e : m.entries) {
        json j = {{"scene_id", e.scene_id}, {"assets", e.assets.generic_string()}, {"kept", e.kept}};
        if (e.error) {
            j["error"] = *e.error;
            j["dtilde"] = e.dtilde.generic_string();
            j["mask"] = e.mask.generic_string();
            j["nr_input"] = e.nr_input.generic_string();
            j["fit"] = e.fit.generic_string();
        } else {
            j["error"] = nullptr;
            j["failure"] = e.failure;
        }
        entries.push_back(std::move(j));
    }
    return {{"drop_fraction", m.drop_fraction}, {"entries", std::move(entries)}};
}

PairManifest manifest_from_json(const json& j) {
    PairManifest m;
    try {
        m.drop_fraction = j.value("drop_fraction", 0.15);
        for (const json& e : j.at("entries")) {
            PairEntry p;
            p.scene_id = e.at("scene_id").get<std::string>();
            p.assets = e.value("assets", std::string());
            if (e.contains("error") && !e["error"].is_null()) p.error = e["error"].get<double>();
            p.failure = e.value("failure", std::string());
            p.dtilde = e.value("dtilde", std::string());
            p.mask = e.value("mask", std::string());
            p.nr_input = e.value("nr_input", std::string());
            p.fit = e.value("fit", std::string());
            p.kept = e.value("kept", false);
            m.entries.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("pair manifest: ") + e.what());
    }
    return m;
}

std::vector<SceneInput> read_scene_list(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("scene list is not valid JSON: " + std::string(e.what()));
    }
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const fs::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<SceneInput> out;
    const json& list = j.is_object() ? j.at("scenes") : j;
    if (!list.is_array()) throw FormatError("scene list must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const json& s = list[i];
        SceneInput in;
        if (s.is_string()) {
            in.manifest = resolve(s.get<std::string>());
            in.id = "scene_" + std::to_string(i);
        } else if (s.is_object() && s.contains("manifest")) {
            in.manifest = resolve(s["manifest"].get<std::string>());
            in.id = s.value("id", "scene_" + std::to_string(i));
        } else {
            throw FormatError("scene list entry " + std::to_string(i) + " needs a manifest path");
        }
        out.push_back(std::move(in));
    }
    return out;
}

PairManifest make_pairs(const std::vector<SceneInput>& scenes, const fs::path& out_dir, const PairConfig& cfg,
                        double drop_fraction) {
    if (scenes.empty()) throw ValueError("make_pairs: no scenes given");
    PairManifest manifest;
    manifest.entries.resize(scenes.size());
    const int threads = resolve_thread_count(cfg.fit.threads);
    const int outer = std::min<int>(threads, static_cast<int>(scenes.size()));
    PairConfig inner = cfg;
    inner.fit.threads = std::max(1, threads / outer);

    parallel_for(scenes.size(), outer, [&](std::size_t i) {
        PairEntry& e = manifest.entries[i];
        e.scene_id = scenes[i].id;
        e.assets = scenes[i].manifest;
        try {
            const SceneAssets assets = load_assets(scenes[i].manifest);
            const PairResult r = make_pair(assets, inner);
            const fs::path dir = out_dir / e.scene_id;
            io::write_pfm(dir / "dtilde.pfm", r.dtilde);
            io::write_mask_png(dir / "mask.png", r.mask);
            std::string pages;
            const ImageBuffer nr = assemble_nr_input(fill_holes(r.dtilde, r.mask), assets.albedo, r.mask);
            for (int k = 0; k < nr.channels(); ++k) {
                std::vector<float> plane(nr.pixel_count());
                for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = nr.data()[p * 7 + k];
                io::append_pfm(pages, ImageBuffer(nr.width(), nr.height(), 1, ImageRole::generic, std::move(plane)));
            }
            io::write_file(dir / "nr_input.pfm", pages);
            EnvEncoding enc;
            enc.mode = EnvEncoding::Mode::file;
            enc.write_path = dir / "fit_env.pfm";
            enc.json_path = "fit_env.pfm";
            io::write_file(dir / "fit.json", report_to_json(r.report, enc).dump(2) + "\n");
            e.error = r.error;
            e.dtilde = fs::path(e.scene_id) / "dtilde.pfm";
            e.mask = fs::path(e.scene_id) / "mask.png";
            e.nr_input = fs::path(e.scene_id) / "nr_input.pfm";
            e.fit = fs::path(e.scene_id) / "fit.json";
        } catch (const Error& err) {
            e.error.reset();
            e.failure = err.what();
        }
    });

    bool any_ok = false;
    for (const auto& e : manifest.entries) any_ok = any_ok || e.error.has_value();
    manifest = any_ok ? filter_pairs(manifest, drop_fraction) : manifest;
    manifest.drop_fraction = drop_fraction;
    io::write_file(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
    return manifest;
}

}  // namespace relight
