#include "relight/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "relight/assets.hpp"
#include "relight/dataset.hpp"
#include "relight/error.hpp"
#include "relight/image_io.hpp"
#include "relight/optimizer.hpp"
#include "relight/render.hpp"
#include "relight/rng.hpp"
#include "relight/service.hpp"
#include "relight/synthetic.hpp"

namespace relight::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    int threads = -1;  // -1: not given on the command line
    bool verbose = false;

    int resolved_threads() const {
        if (threads >= 0) return threads;
        if (const char* env = std::getenv("RELIGHT_THREADS")) {
            try {
                const int t = std::stoi(env);
                if (t >= 0) return t;
            } catch (const std::exception&) {
            }
            throw ValueError("RELIGHT_THREADS must be a nonnegative integer");
        }
        return 0;
    }
};

struct RenderArgs {
    std::string assets, lights, out, mask;
    int width = 0, height = 0, spp = 16, depth = 3;
    double ratio = kDefaultDiscontinuityRatio;
};

struct FitArgs {
    std::string assets, out, render_out;
    FitConfig fit;
    int resolution = 512;
    bool fixed_seed = false;
    double ratio = kDefaultDiscontinuityRatio;
};

struct PairArgs {
    std::string manifest, out;
    double drop = 0.15;
    PairConfig pair;
};

struct SceneArgs {
    std::string assets, out;
    double ratio = kDefaultDiscontinuityRatio;
};

struct LossArgs {
    std::string a, b;
    int scales = 4;
};

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    int fit_resolution = 512;
};

struct SynthArgs {
    std::string out;
    int count = 1, width = 64, height = 48, spp = 64;
    double env_level = 0.3;
};

void add_fit_options(CLI::App* cmd, FitConfig& f) {
    cmd->add_option("--K", f.K, "Point lights to fit")->capture_default_str();
    cmd->add_option("--env-rows", f.env_rows, "Environment map rows (columns = 2 x rows)")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--iters", f.max_iters, "Maximum iterations")->capture_default_str();
    cmd->add_option("--spp", f.spp, "Samples per pixel per evaluation")->capture_default_str();
    cmd->add_option("--depth", f.max_depth, "Path segments (3 = one indirect bounce)")->capture_default_str();
    cmd->add_option("--stop", f.stop_rel_improve, "Relative improvement threshold over the stop window")
        ->capture_default_str();
}

std::string path_string(const fs::path& p) { return p.lexically_normal().string(); }

json run_build_scene(const Globals& g, const SceneArgs& a, std::ostream& err) {
    const SceneAssets assets = load_assets(a.assets);
    const Scene scene = build_scene(assets, a.ratio);
    write_ply(a.out, scene.mesh());
    if (g.verbose) err << "built " << scene.mesh().triangles.size() << " triangles\n";
    const SceneTransform& t = scene.transform();
    return {{"mesh", path_string(a.out)},
            {"vertices", scene.mesh().vertices.size()},
            {"triangles", scene.mesh().triangles.size()},
            {"valid_pixels", scene.mesh().valid_mask.count_valid()},
            {"translation", {t.translation().x, t.translation().y, t.translation().z}},
            {"scale", t.scale}};
}

json run_render(const Globals& g, const RenderArgs& a, std::ostream& err) {
    const SceneAssets assets = load_assets(a.assets);
    const Scene scene = build_scene(assets, a.ratio);
    const fs::path lights_path = a.lights;
    const LightingEnvironment lighting =
        lighting_from_json(json::parse(io::read_file(lights_path)), lights_path.parent_path());
    RenderConfig rc;
    rc.width = a.width > 0 ? a.width : assets.camera.width;
    rc.height = a.height > 0 ? a.height : assets.camera.height;
    rc.spp = a.spp;
    rc.max_depth = a.depth;
    rc.seed = g.seed;
    rc.threads = g.resolved_threads();
    rc.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto [img, mask] = render(scene, lighting, rc);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (g.verbose) err << "rendered " << rc.width << "x" << rc.height << " in " << ms << " ms\n";

    const fs::path out = a.out;
    if (out.extension() == ".png") {
        io::write_png(out, img);
    } else {
        io::write_pfm(out, img);
    }
    json j = {{"image", path_string(out)}, {"width", rc.width}, {"height", rc.height}, {"millis", ms}};
    if (!a.mask.empty()) {
        io::write_mask_png(a.mask, mask);
        j["mask"] = path_string(a.mask);
    }
    return j;
}

json run_fit(const Globals& g, FitArgs a, std::ostream& err) {
    const SceneAssets assets = load_assets(a.assets);
    if (!assets.has_shading()) throw MissingInputError("fit requires diffuse target");
    const Scene scene = build_scene(assets, a.ratio);
    a.fit.seed = g.seed;
    a.fit.threads = g.resolved_threads();
    a.fit.seed_policy = a.fixed_seed ? FitConfig::SeedPolicy::fixed : FitConfig::SeedPolicy::per_iteration;
    a.fit.validate();

    const ImageBuffer d = assets.diffuse();
    const auto [w, h] = fit_longer_side(d.width(), d.height(), a.resolution);
    FitProgress progress;
    if (g.verbose) {
        progress = [&err](int it, double e, double best) {
            err << "iter " << it << " e=" << e << " best=" << best << "\n";
        };
    }
    const FitReport report = fit_lighting(resize_bilinear(d, w, h), scene, a.fit, progress);

    const fs::path out = a.out;
    const fs::path render_out = a.render_out.empty() ? fs::path(out).replace_extension(".pfm") : fs::path(a.render_out);
    if (render_out == out) throw ValueError("--render must differ from --out");

    EnvEncoding enc;
    enc.mode = EnvEncoding::Mode::file;
    enc.write_path = fs::path(out).replace_extension("").string() + "_env.pfm";
    enc.json_path = enc.write_path.filename().string();
    json j = report_to_json(report, enc);
    j["config"] = {{"K", a.fit.K},           {"env_rows", a.fit.env_rows},       {"lr", a.fit.lr},
                   {"max_iters", a.fit.max_iters}, {"spp", a.fit.spp},       {"max_depth", a.fit.max_depth},
                   {"seed", a.fit.seed},     {"stop_rel_improve", a.fit.stop_rel_improve},
                   {"seed_policy", a.fixed_seed ? "fixed" : "per_iteration"},
                   {"fit_width", w},         {"fit_height", h}};
    io::write_file(out, j.dump(2) + "\n");

    RenderConfig rc;
    rc.width = d.width();
    rc.height = d.height();
    rc.spp = a.fit.spp;
    rc.max_depth = a.fit.max_depth;
    rc.seed = hash_combine(a.fit.seed, 0x5245u);
    rc.threads = a.fit.threads;
    const auto [img, mask] = render(scene, report.psi_star, rc);
    io::write_pfm(render_out, img);
    err << "fit: " << report.iterations_run << " iterations, e=" << report.final_error << "\n";

    json summary = {{"report", path_string(out)},
                    {"render", path_string(render_out)},
                    {"final_error", report.final_error},
                    {"iterations", report.iterations_run},
                    {"config", j["config"]}};
    if (!report.psi_star.env.is_uniform()) summary["environment"] = path_string(enc.write_path);
    return summary;
}

json run_make_pairs(const Globals& g, PairArgs a, std::ostream& err) {
    if (!(a.drop >= 0.0 && a.drop < 1.0)) throw ValueError("--drop must lie in [0, 1)");
    a.pair.fit.seed = g.seed;
    a.pair.fit.threads = g.resolved_threads();
    a.pair.fit.validate();
    const auto scenes = read_scene_list(a.manifest);
    fs::create_directories(a.out);
    const PairManifest m = make_pairs(scenes, a.out, a.pair, a.drop);
    std::size_t kept = 0, failed = 0;
    for (const auto& e : m.entries) {
        kept += e.kept ? 1 : 0;
        failed += e.error ? 0 : 1;
        if (!e.error) err << "scene " << e.scene_id << " failed: " << e.failure << "\n";
    }
    err << "make-pairs: " << m.entries.size() << " scenes, " << kept << " kept\n";
    return {{"manifest", path_string(fs::path(a.out) / "manifest.json")},
            {"entries", m.entries.size()},
            {"kept", kept},
            {"failed", failed}};
}

json run_eval_loss(const LossArgs& a) {
    const ImageBuffer x = io::read_image(a.a, ImageRole::generic);
    const ImageBuffer y = io::read_image(a.b, ImageRole::generic);
    if (!x.same_shape(y)) throw DimensionError("eval-loss: images differ in shape");
    double se = 0.0;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double d = static_cast<double>(x.data()[i]) - y.data()[i];
        se += d * d;
    }
    const double mse = x.data().empty() ? 0.0 : se / static_cast<double>(x.data().size());
    return {{"loss", multiscale_loss(x, y, a.scales)}, {"mse", mse}, {"scales", a.scales}};
}

service::RelightService* g_server = nullptr;

json run_serve(const Globals& g, const ServeArgs& a, std::ostream& out, std::ostream& err) {
    using service::RelightService;
    service::ServiceConfig cfg;
    cfg.threads = g.resolved_threads();
    cfg.seed = g.seed;
    cfg.fit.seed = g.seed;
    cfg.fit_resolution = a.fit_resolution;
    RelightService svc(cfg);
    const int port = svc.bind(a.host, a.port);
    if (port < 0) throw Error("could not bind " + a.host + ":" + std::to_string(a.port));
    out << json{{"host", a.host}, {"port", port}}.dump() << std::endl;
    err << "serving on http://" << a.host << ":" << port << "\n";
    g_server = &svc;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    svc.run();
    g_server = nullptr;
    return {{"host", a.host}, {"port", port}, {"stopped", true}};
}

json run_synth(const Globals& g, const SynthArgs& a, std::ostream& err) {
    if (a.count < 1) throw ValueError("--count must be at least 1");
    fs::create_directories(a.out);
    json list = json::array();
    for (int i = 0; i < a.count; ++i) {
        SceneAssets assets = synth::room(a.width, a.height, g.seed + i);
        const Scene scene = build_scene(assets);
        RenderConfig rc;
        rc.width = a.width;
        rc.height = a.height;
        rc.spp = a.spp;
        rc.seed = hash_combine(g.seed, i);
        rc.threads = g.resolved_threads();
        synth::bake_targets(assets, scene, synth::room_lighting(scene, a.env_level), rc);
        const std::string id = "room_" + std::to_string(i);
        const fs::path manifest = save_assets(fs::path(a.out) / id, assets);
        list.push_back({{"id", id}, {"manifest", fs::relative(manifest, a.out).string()}});
        if (g.verbose) err << "wrote " << manifest.string() << "\n";
    }
    const fs::path scenes = fs::path(a.out) / "scenes.json";
    io::write_file(scenes, json{{"scenes", list}}.dump(2) + "\n");
    return {{"scenes", path_string(scenes)}, {"count", a.count}};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Physically based relighting workbench", "relight"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every Monte Carlo estimate")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads, 0 = all cores (fallback: RELIGHT_THREADS)")
        ->check(CLI::NonNegativeNumber);
    app.add_flag("-v,--verbose", g.verbose, "Log progress to stderr");

    SceneArgs scene_args;
    auto* build_cmd = app.add_subcommand("build-scene", "Mesh a scene bundle and write the normalized PLY");
    build_cmd->add_option("--assets", scene_args.assets, "Asset manifest")->required();
    build_cmd->add_option("--out", scene_args.out, "Output PLY")->required();
    build_cmd->add_option("--ratio", scene_args.ratio, "Depth discontinuity ratio")->capture_default_str();

    RenderArgs render_args;
    auto* render_cmd = app.add_subcommand("render", "Path trace a scene under a lighting file");
    render_cmd->add_option("--assets", render_args.assets, "Asset manifest")->required();
    render_cmd->add_option("--lights", render_args.lights, "Lighting JSON")->required();
    render_cmd->add_option("--out", render_args.out, "Output image (.pfm or .png)")->required();
    render_cmd->add_option("--mask", render_args.mask, "Optional valid-pixel mask PNG");
    render_cmd->add_option("--width", render_args.width, "Width (default: camera)");
    render_cmd->add_option("--height", render_args.height, "Height (default: camera)");
    render_cmd->add_option("--spp", render_args.spp, "Samples per pixel")->capture_default_str();
    render_cmd->add_option("--depth", render_args.depth, "Path segments")->capture_default_str();
    render_cmd->add_option("--ratio", render_args.ratio, "Depth discontinuity ratio")->capture_default_str();

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit environment map and point lights to D = A x S");
    fit_cmd->add_option("--assets", fit_args.assets, "Asset manifest with shading")->required();
    fit_cmd->add_option("--out", fit_args.out, "Fit report JSON")->required();
    fit_cmd->add_option("--render", fit_args.render_out, "Reconstruction PFM (default: --out with .pfm)");
    add_fit_options(fit_cmd, fit_args.fit);
    fit_cmd->add_option("--resolution", fit_args.resolution, "Longer side of the fitting raster")
        ->capture_default_str();
    fit_cmd->add_flag("--fixed-seed", fit_args.fixed_seed, "Reuse one seed for every iteration");
    fit_cmd->add_option("--ratio", fit_args.ratio, "Depth discontinuity ratio")->capture_default_str();

    PairArgs pair_args;
    auto* pairs_cmd = app.add_subcommand("make-pairs", "Fit every scene of a list and write the filtered pair set");
    pairs_cmd->add_option("--manifest", pair_args.manifest, "Scene list JSON")->required();
    pairs_cmd->add_option("--out", pair_args.out, "Output directory")->required();
    pairs_cmd->add_option("--drop", pair_args.drop, "Fraction of highest-error pairs to drop")->capture_default_str();
    add_fit_options(pairs_cmd, pair_args.pair.fit);
    pairs_cmd->add_option("--resolution", pair_args.pair.fit_resolution, "Longer side of the fitting raster")
        ->capture_default_str();

    LossArgs loss_args;
    auto* loss_cmd = app.add_subcommand("eval-loss", "Multi-scale gradient loss between two images");
    loss_cmd->add_option("a", loss_args.a, "First image")->required();
    loss_cmd->add_option("b", loss_args.b, "Second image")->required();
    loss_cmd->add_option("--scales", loss_args.scales, "Gradient scales")->capture_default_str();

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP relighting service");
    serve_cmd->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", serve_args.port, "Port, 0 = any free port")->capture_default_str();
    serve_cmd->add_option("--fit-resolution", serve_args.fit_resolution, "Longer side for fits")
        ->capture_default_str();

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Write synthetic room bundles with baked shading");
    synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
    synth_cmd->add_option("--count", synth_args.count, "Number of scenes")->capture_default_str();
    synth_cmd->add_option("--width", synth_args.width, "Width")->capture_default_str();
    synth_cmd->add_option("--height", synth_args.height, "Height")->capture_default_str();
    synth_cmd->add_option("--spp", synth_args.spp, "Samples per pixel for the baked shading")->capture_default_str();
    synth_cmd->add_option("--env-level", synth_args.env_level, "Constant environment radiance")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n";
        const auto parsed = app.get_subcommands();
        err << (parsed.empty() ? app.help() : parsed.front()->help());
        return 2;
    }

    try {
        json result;
        std::string name;
        if (*build_cmd) {
            name = "build-scene";
            result = run_build_scene(g, scene_args, err);
        } else if (*render_cmd) {
            name = "render";
            result = run_render(g, render_args, err);
        } else if (*fit_cmd) {
            name = "fit";
            result = run_fit(g, fit_args, err);
        } else if (*pairs_cmd) {
            name = "make-pairs";
            result = run_make_pairs(g, pair_args, err);
        } else if (*loss_cmd) {
            name = "eval-loss";
            result = run_eval_loss(loss_args);
        } else if (*serve_cmd) {
            name = "serve";
            result = run_serve(g, serve_args, out, err);
        } else {
            name = "synth";
            result = run_synth(g, synth_args, err);
        }
        result["command"] = name;
        result["ok"] = true;
        out << result.dump() << std::endl;
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        out << json{{"ok", false}, {"error", e.what()}}.dump() << std::endl;
        return 1;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        out << json{{"ok", false}, {"error", e.what()}}.dump() << std::endl;
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        out << json{{"ok", false}, {"error", e.what()}}.dump() << std::endl;
        return 1;
    }
}

}  // namespace relight::cli
