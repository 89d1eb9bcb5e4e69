#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"

#include "relight/assets.hpp"
#include "relight/lighting.hpp"
#include "relight/optimizer.hpp"
#include "relight/render.hpp"

namespace httplib {
class Server;
}

namespace relight::service {

/// Parameters of the most recent render of a session.
struct RenderRecord {
    int width = 0;
    int height = 0;
    int spp = 0;
    int max_depth = 0;
    std::uint64_t seed = 0;
    std::string format;
    double millis = 0.0;
    std::uint64_t lighting_revision = 0;
};

/// One relighting session. The scene is immutable after construction;
/// lighting is swapped as a whole under a mutex so renders always see a
/// consistent snapshot.
class Session {
public:
    Session(std::string id, SceneAssets assets, double discontinuity_ratio);

    const std::string& id() const { return id_; }
    const SceneAssets& assets() const { return assets_; }
    const Scene& scene() const { return *scene_; }
    double build_millis() const { return build_ms_; }

    struct Snapshot {
        std::shared_ptr<const LightingEnvironment> lighting;
        std::uint64_t revision = 0;
    };
    Snapshot lighting() const;
    std::uint64_t set_lighting(LightingEnvironment lighting);

    void record_render(const RenderRecord& r);
    std::optional<RenderRecord> last_render() const;

    nlohmann::json status() const;

private:
    std::string id_;
    SceneAssets assets_;
    std::unique_ptr<const Scene> scene_;
    double build_ms_ = 0.0;

    mutable std::mutex mutex_;
    std::shared_ptr<const LightingEnvironment> lighting_;
    std::uint64_t revision_ = 0;
    std::optional<RenderRecord> last_render_;
};

struct ServiceConfig {
    /// Render worker threads per request (0 = all cores).
    int threads = 0;
    std::uint64_t seed = 0;
    /// Defaults for POST /sessions/{id}/fit; the request body may override them.
    FitConfig fit;
    int fit_resolution = 512;
};

/// Session store plus the HTTP routes:
///   POST   /sessions                 multipart bundle or {"manifest": path}
///   GET    /sessions/{id}
///   PUT    /sessions/{id}/lighting
///   POST   /sessions/{id}/render     {width, height, spp, seed, max_depth, format: pfm|png|mask}
///   POST   /sessions/{id}/fit
///   DELETE /sessions/{id}
/// Errors are {"code", "message"} JSON with the matching status.
class RelightService {
public:
    explicit RelightService(ServiceConfig cfg = {});
    ~RelightService();

    RelightService(const RelightService&) = delete;
    RelightService& operator=(const RelightService&) = delete;

    /// Binds to host:port (port 0 picks a free one) and returns the port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool run();
    void stop();

    std::shared_ptr<Session> find(const std::string& id) const;
    std::size_t session_count() const;

private:
    void install_routes();

    ServiceConfig cfg_;
    std::unique_ptr<httplib::Server> server_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::atomic<std::uint64_t> next_id_{1};
};

}  // namespace relight::service
