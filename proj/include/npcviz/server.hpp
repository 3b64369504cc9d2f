#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>

#include <json.hpp>

#include "npcviz/dataset.hpp"
#include "npcviz/dialogue.hpp"
#include "npcviz/llm.hpp"
#include "npcviz/session.hpp"
#include "npcviz/tsne.hpp"

namespace httplib {
class Server;
}

namespace npcviz {

enum class JobStatus { idle, running, done, failed };

std::string_view to_string(JobStatus status);

/// Single background t-SNE job. The latest finished result is kept in
/// memory and in `<data>/projection.json`, and reloaded on construction.
class ProjectionJob {
public:
    ProjectionJob(std::shared_ptr<const DatasetStore> store, std::filesystem::path data_dir);
    ~ProjectionJob();

    /// Throws ProjectionError on an invalid config and BusyError while running.
    void start(const tsne::ProjectionConfig& config);
    /// Blocks until the running job, if any, has finished.
    void wait();

    JobStatus status() const;
    std::shared_ptr<const Layout> layout() const;
    /// Status document served at GET /api/projection.
    nlohmann::json describe() const;

private:
    void run(std::stop_token stop, tsne::ProjectionConfig config);
    void persist_locked() const;

    std::shared_ptr<const DatasetStore> store_;
    std::filesystem::path file_;

    mutable std::mutex mutex_;
    std::condition_variable done_;
    JobStatus status_ = JobStatus::idle;
    std::optional<tsne::ProjectionResult> result_;
    std::shared_ptr<const Layout> layout_;
    nlohmann::json failure_;
    tsne::ProjectionConfig running_config_;
    std::atomic<int> iteration_{0};
    std::jthread worker_;
};

struct ServerOptions {
    std::filesystem::path data_dir;
    // Static frontend; empty disables asset serving.
    std::filesystem::path assets_dir;
    std::string host = "127.0.0.1";
    llm::GatewayConfig gateway;
    dialogue::DialogueOptions dialogue;
    // Overrides the provider built from `gateway` (tests inject mocks here).
    std::shared_ptr<llm::ChatProvider> provider;
    dialogue::Clock clock;
};

/// JSON-over-HTTP API. Every non-2xx response body is an ApiError object
/// {code, message, detail}.
class ApiServer {
public:
    /// Loads `<data>/manifest.json`, personas (`<data>/personas.json` when
    /// present, built-ins otherwise), sessions, notes and any saved projection.
    explicit ApiServer(ServerOptions options);
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds the listening socket; port 0 picks a free one. Returns the port.
    int bind(int port);
    /// Serves on the calling thread until stop().
    void listen();
    /// Serves on a background thread.
    void start();
    void stop();

    int port() const noexcept { return port_; }
    ProjectionJob& projection() noexcept { return *projection_; }
    const DatasetStore& store() const noexcept { return *store_; }

private:
    void routes();

    ServerOptions options_;
    std::shared_ptr<const DatasetStore> store_;
    std::shared_ptr<const dialogue::PersonaRegistry> personas_;
    std::shared_ptr<dialogue::SessionStore> sessions_;
    std::shared_ptr<dialogue::NotesStore> notes_;
    std::unique_ptr<ProjectionJob> projection_;
    std::unique_ptr<dialogue::DialogueService> dialogue_;
    std::unique_ptr<llm::SpeechClient> speech_;
    std::unique_ptr<httplib::Server> http_;
    std::thread listener_;
    int port_ = -1;
};

/// HTTP status used for an error code.
int http_status(ErrorCode code);

nlohmann::json api_error(ErrorCode code, const std::string& message, const nlohmann::json& detail = nullptr);

nlohmann::json projection_points(const DatasetStore& store, const Layout& layout);

}  // namespace npcviz
