#include "relight/service.hpp"

#include <cstdio>
#include <random>

#include "httplib.h"

#include "relight/error.hpp"
#include "relight/image_io.hpp"
#include "relight/rng.hpp"

namespace relight::service {

using nlohmann::json;

namespace {

double millis_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}


}  // namespace

Session::Session(std::string id, SceneAssets assets, double discontinuity_ratio)
    : id_(std::move(id)), assets_(std::move(assets)) {
    const auto t0 = std::chrono::steady_clock::now();
    scene_ = std::make_unique<const Scene>(build_scene(assets_, discontinuity_ratio));
    build_ms_ = millis_since(t0);
    LightingEnvironment initial;
    initial.env = EnvironmentMap::constant(1, Vec3d(0.5));
    lighting_ = std::make_shared<const LightingEnvironment>(std::move(initial));
}

Session::Snapshot Session::lighting() const {
    std::lock_guard lock(mutex_);
    return {lighting_, revision_};
}

std::uint64_t Session::set_lighting(LightingEnvironment lighting) {
    auto next = std::make_shared<const LightingEnvironment>(std::move(lighting));
    std::lock_guard lock(mutex_);
    lighting_ = std::move(next);
    return ++revision_;
}

void Session::record_render(const RenderRecord& r) {
    std::lock_guard lock(mutex_);
    last_render_ = r;
}

std::optional<RenderRecord> Session::last_render() const {
    std::lock_guard lock(mutex_);
    return last_render_;
}

json Session::status() const {
    const Snapshot snap = lighting();
    json j = {{"id", id_},
              {"width", assets_.camera.width},
              {"height", assets_.camera.height},
              {"triangles", scene_->mesh().triangles.size()},
              {"valid_pixels", scene_->mesh().valid_mask.count_valid()},
              {"has_shading", assets_.has_shading()},
              {"build_ms", build_ms_},
              {"lighting_revision", snap.revision},
              {"lighting", lighting_to_json(*snap.lighting)}};
    if (auto r = last_render()) {
        j["last_render"] = {{"width", r->width},         {"height", r->height},
                            {"spp", r->spp},             {"max_depth", r->max_depth},
                            {"seed", r->seed},           {"format", r->format},
                            {"millis", r->millis},       {"lighting_revision", r->lighting_revision}};
    } else {
        j["last_render"] = nullptr;
    }
    return j;
}

namespace {

/// Failure mapped to an HTTP status.
struct HttpError {
    int status;
    std::string code;
    std::string message;
};

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

// Runs a handler and converts exceptions into {code, message} responses.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const HttpError& e) {
        send_error(res, e.status, e.code, e.message);
    } catch (const MissingInputError& e) {
        send_error(res, 422, "missing_input", e.what());
    } catch (const FormatError& e) {
        send_error(res, 422, "malformed_input", e.what());
    } catch (const DimensionError& e) {
        send_error(res, 422, "dimension_mismatch", e.what());
    } catch (const ValueError& e) {
        send_error(res, 422, "invalid_value", e.what());
    } catch (const Error& e) {
        send_error(res, 422, "invalid_request", e.what());
    } catch (const json::exception& e) {
        send_error(res, 422, "invalid_value", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

json parse_body(const httplib::Request& req, bool allow_empty) {
    if (req.body.empty()) {
        if (allow_empty) return json::object();
        throw HttpError{400, "bad_json", "request body is empty"};
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw HttpError{400, "bad_json", std::string("request body is not valid JSON: ") + e.what()};
    }
}

ImageBuffer decode_rgb(const std::string& bytes, ImageRole role) {
    return as_rgb(io::decode_image(bytes, ImageRole::generic), role);
}

const httplib::MultipartFormData* form_field(const httplib::Request& req, const std::string& key) {
    auto it = req.files.find(key);
    return it == req.files.end() ? nullptr : &it->second;
}

SceneAssets assets_from_multipart(const httplib::Request& req) {
    for (const char* key : {"image", "albedo", "pointmap", "camera"}) {
        if (!form_field(req, key)) throw MissingInputError(std::string("missing asset: ") + key);
    }
    SceneAssets a;
    a.image = decode_rgb(form_field(req, "image")->content, ImageRole::input);
    a.albedo = decode_rgb(form_field(req, "albedo")->content, ImageRole::albedo);
    if (const auto* s = form_field(req, "shading")) a.shading = decode_rgb(s->content, ImageRole::shading);
    const ImageBuffer pm = io::decode_pfm(form_field(req, "pointmap")->content, ImageRole::generic);
    if (pm.channels() != 3) throw DimensionError("pointmap must be a 3-channel PFM");
    a.pointmap = PointMap::from_image(pm);
    json cam;
    try {
        cam = json::parse(form_field(req, "camera")->content);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("camera is not valid JSON: ") + e.what());
    }
    a.camera = camera_from_json(cam, a.image.width(), a.image.height());
    a.validate();
    return a;
}

std::string make_token(std::uint64_t counter) {
    static const std::uint64_t salt = [] {
        std::random_device rd;
        return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_combine(salt, counter)));
    return buf;
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw HttpError{422, "invalid_value", std::string("field '") + key + "' has the wrong type"};
    }
}

}  // namespace

RelightService::RelightService(ServiceConfig cfg) : cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

RelightService::~RelightService() { stop(); }

int RelightService::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool RelightService::run() { return server_->listen_after_bind(); }

void RelightService::stop() {
    if (server_) server_->stop();
}

std::shared_ptr<Session> RelightService::find(const std::string& id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::size_t RelightService::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

void RelightService::install_routes() {
    httplib::Server& srv = *server_;

    auto session_or_404 = [this](const httplib::Request& req) {
        auto s = find(req.matches[1]);
        if (!s) throw HttpError{404, "unknown_session", "no session with id " + std::string(req.matches[1])};
        return s;
    };

    srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            SceneAssets assets;
            double ratio = kDefaultDiscontinuityRatio;
            if (req.is_multipart_form_data()) {
                assets = assets_from_multipart(req);
                if (const auto* r = form_field(req, "discontinuity_ratio")) ratio = std::stod(r->content);
            } else {
                const json body = parse_body(req, false);
                if (!body.contains("manifest")) throw MissingInputError("missing asset: manifest");
                assets = load_assets(body["manifest"].get<std::string>());
                ratio = field_or(body, "discontinuity_ratio", ratio);
            }
            const std::string id = make_token(next_id_++);
            auto session = std::make_shared<Session>(id, std::move(assets), ratio);
            {
                std::lock_guard lock(sessions_mutex_);
                sessions_[id] = session;
            }
            send_json(res, 201, session->status());
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+))", [session_or_404](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, session_or_404(req)->status()); });
    });

    srv.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::lock_guard lock(sessions_mutex_);
            if (sessions_.erase(req.matches[1]) == 0) {
                throw HttpError{404, "unknown_session", "no session with id " + std::string(req.matches[1])};
            }
            res.status = 204;
        });
    });

    srv.Put(R"(/sessions/([0-9a-f]+)/lighting)", [session_or_404](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto session = session_or_404(req);
            const json body = parse_body(req, false);
            // Parse and validate completely before touching the session.
            LightingEnvironment lighting = lighting_from_json(body);
            const json echo = lighting_to_json(lighting);
            const std::uint64_t rev = session->set_lighting(std::move(lighting));
            res.set_header("X-Lighting-Revision", std::to_string(rev));
            send_json(res, 200, echo);
        });
    });

    srv.Post(R"(/sessions/([0-9a-f]+)/render)", [this, session_or_404](const httplib::Request& req,
                                                                      httplib::Response& res) {
        guarded(res, [&] {
            auto session = session_or_404(req);
            const json body = parse_body(req, true);
            const CameraModel& cam = session->scene().camera();
            RenderConfig rc;
            rc.width = field_or(body, "width", cam.width);
            rc.height = field_or(body, "height", cam.height);
            rc.spp = field_or(body, "spp", 16);
            rc.max_depth = field_or(body, "max_depth", 3);
            rc.seed = field_or<std::uint64_t>(body, "seed", cfg_.seed);
            rc.threads = cfg_.threads;
            const std::string format = field_or<std::string>(body, "format", "pfm");
            if (format != "pfm" && format != "png" && format != "mask") {
                throw HttpError{422, "invalid_value", "format must be pfm, png or mask"};
            }
            if (rc.width > 8192 || rc.height > 8192) throw HttpError{422, "invalid_value", "render size too large"};
            rc.validate();

            const Session::Snapshot snap = session->lighting();
            const auto t0 = std::chrono::steady_clock::now();
            const auto [img, mask] = render(session->scene(), *snap.lighting, rc);
            const double ms = millis_since(t0);

            if (format == "pfm") {
                res.set_content(io::encode_pfm(img), "image/x-portable-floatmap");
            } else if (format == "png") {
                res.set_content(io::encode_png(img, 8, &mask), "image/png");
            } else {
                res.set_content(io::encode_mask_png(mask), "image/png");
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", ms);
            res.set_header("X-Render-Millis", buf);
            res.set_header("X-Valid-Pixels", std::to_string(mask.count_valid()));
            res.set_header("X-Lighting-Revision", std::to_string(snap.revision));
            session->record_render({rc.width, rc.height, rc.spp, rc.max_depth, rc.seed, format, ms, snap.revision});
        });
    });

    srv.Post(R"(/sessions/([0-9a-f]+)/fit)", [this, session_or_404](const httplib::Request& req,
                                                                   httplib::Response& res) {
        guarded(res, [&] {
            auto session = session_or_404(req);
            if (!session->assets().has_shading()) {
                throw HttpError{409, "fit_requires_shading", "fit requires diffuse target"};
            }
            const json body = parse_body(req, true);
            FitConfig fc = cfg_.fit;
            fc.K = field_or(body, "K", fc.K);
            fc.env_rows = field_or(body, "env_rows", fc.env_rows);
            fc.lr = field_or(body, "lr", fc.lr);
            fc.max_iters = field_or(body, "max_iters", fc.max_iters);
            fc.spp = field_or(body, "spp", fc.spp);
            fc.max_depth = field_or(body, "max_depth", fc.max_depth);
            fc.seed = field_or<std::uint64_t>(body, "seed", fc.seed);
            fc.stop_rel_improve = field_or(body, "stop_rel_improve", fc.stop_rel_improve);
            fc.threads = cfg_.threads;
            const int resolution = field_or(body, "resolution", cfg_.fit_resolution);
            fc.validate();

            const ImageBuffer d = session->assets().diffuse();
            const auto [w, h] = fit_longer_side(d.width(), d.height(), resolution);
            const FitReport report = fit_lighting(resize_bilinear(d, w, h), session->scene(), fc);
            const std::uint64_t rev = session->set_lighting(report.psi_star);
            json out = report_to_json(report);
            out["lighting_revision"] = rev;
            out["fit_width"] = w;
            out["fit_height"] = h;
            res.set_header("X-Lighting-Revision", std::to_string(rev));
            send_json(res, 200, out);
        });
    });

    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            res.set_content(json{{"code", "not_found"}, {"message", "no such route"}}.dump(), "application/json");
        }
    });
}

}  // namespace relight::service
