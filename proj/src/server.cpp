#include "npcviz/server.hpp"

#include <httplib.h>

#include <charconv>
#include <condition_variable>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "npcviz/analytics.hpp"
#include "npcviz/file_io.hpp"

namespace npcviz {
namespace {

using nlohmann::json;

std::string dump(const json& body) { return body.dump(-1, ' ', false, json::error_handler_t::replace); }

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(dump(body), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message, const json& detail = nullptr) {
    send_json(res, http_status(code), api_error(code, message, detail));
}

json parse_body(const httplib::Request& req) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw BadRequestError(fmt::format("request body is not valid JSON: {}", e.what()));
    }
    if (!body.is_object()) throw BadRequestError("request body must be a JSON object");
    return body;
}

template <typename T>
T parse_number(std::string_view text, std::string_view name) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw BadRequestError(fmt::format("parameter '{}' must be an integer, got '{}'", name, text));
    }
    return value;
}

std::string required_param(const httplib::Request& req, const std::string& name) {
    if (!req.has_param(name)) throw BadRequestError(fmt::format("missing query parameter '{}'", name));
    return req.get_param_value(name);
}

json instance_json(const DatasetStore& store, const Instance& instance, const Layout* layout, bool with_embedding) {
    json j = with_embedding ? json(instance)
                            : json{{"id", instance.id},
                                   {"true_label", instance.true_label},
                                   {"predicted_label", instance.predicted_label}};
    if (!with_embedding && instance.image_ref) j["image_ref"] = *instance.image_ref;
    j["true_class_name"] = store.class_name(instance.true_label);
    j["predicted_class_name"] = store.class_name(instance.predicted_label);
    j["correct"] = instance.correct();
    if (layout) {
        const auto row = static_cast<Eigen::Index>(store.index_of(instance.id));
        j["projected"] = {{"x", (*layout)(row, 0)}, {"y", (*layout)(row, 1)}};
    } else {
        j["projected"] = nullptr;
    }
    return j;
}

dialogue::ChatTarget target_from(const json& value) {
    if (value.is_string()) return dialogue::ChatTarget::parse_key(value.get<std::string>());
    if (value.is_object()) return value.get<dialogue::ChatTarget>();
    throw BadRequestError("target must be a key string or an object {kind, instance_ids}");
}

json result_json(const DatasetStore& store, const tsne::ProjectionResult& r) {
    return json{{"status", to_string(JobStatus::done)},
                {"points", projection_points(store, r.coordinates)},
                {"kl_trace", r.kl_trace},
                {"kl_at_exaggeration_end", r.kl_at_exaggeration_end},
                {"final_kl", r.final_kl},
                {"unconverged_rows", r.unconverged_rows},
                {"deterministic", r.deterministic},
                {"elapsed_ms", r.elapsed_ms},
                {"config", r.config}};
}

}  // namespace

std::string_view to_string(JobStatus status) {
    switch (status) {
        case JobStatus::idle: return "idle";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "idle";
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::bad_request: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::busy: return 409;
        case ErrorCode::upstream_failed: return 502;
        case ErrorCode::internal: return 500;
    }
    return 500;
}

json api_error(ErrorCode code, const std::string& message, const json& detail) {
    return json{{"code", to_string(code)}, {"message", message}, {"detail", detail}};
}

json projection_points(const DatasetStore& store, const Layout& layout) {
    json points = json::array();
    const auto instances = store.instances();
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        points.push_back({{"id", instances[i].id}, {"x", layout(row, 0)}, {"y", layout(row, 1)}});
    }
    return points;
}

// ---------------------------------------------------------------------------
// Projection job

ProjectionJob::ProjectionJob(std::shared_ptr<const DatasetStore> store, std::filesystem::path data_dir)
    : store_(std::move(store)), file_(std::move(data_dir) / "projection.json") {
    if (!std::filesystem::exists(file_)) return;
    try {
        const json saved = json::parse(read_file(file_));
        const auto& points = saved.at("points");
        if (points.size() != store_->size()) {
            spdlog::warn("ignoring {}: {} points for {} instances", file_.string(), points.size(), store_->size());
            return;
        }
        tsne::ProjectionResult r;
        r.coordinates.resize(static_cast<Eigen::Index>(points.size()), 2);
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].at("id").get<InstanceId>() != store_->instances()[i].id) {
                spdlog::warn("ignoring {}: instance order differs from the dataset", file_.string());
                return;
            }
            r.coordinates(static_cast<Eigen::Index>(i), 0) = points[i].at("x").get<double>();
            r.coordinates(static_cast<Eigen::Index>(i), 1) = points[i].at("y").get<double>();
        }
        r.kl_trace = saved.at("kl_trace").get<std::vector<double>>();
        r.kl_at_exaggeration_end = saved.at("kl_at_exaggeration_end").get<double>();
        r.final_kl = saved.at("final_kl").get<double>();
        r.unconverged_rows = saved.value("unconverged_rows", std::size_t{0});
        r.deterministic = saved.value("deterministic", true);
        r.elapsed_ms = saved.value("elapsed_ms", 0.0);
        r.config = saved.at("config").get<tsne::ProjectionConfig>();
        layout_ = std::make_shared<const Layout>(r.coordinates);
        result_ = std::move(r);
        status_ = JobStatus::done;
    } catch (const json::exception& e) {
        spdlog::warn("ignoring unreadable {}: {}", file_.string(), e.what());
    }
}

ProjectionJob::~ProjectionJob() {
    worker_.request_stop();
    if (worker_.joinable()) worker_.join();
}

void ProjectionJob::start(const tsne::ProjectionConfig& config) {
    tsne::validate(config, store_->size());
    std::lock_guard lock(mutex_);
    if (status_ == JobStatus::running) {
        throw BusyError("a projection is already running", {{"iteration", iteration_.load()}});
    }
    if (worker_.joinable()) worker_.join();
    status_ = JobStatus::running;
    running_config_ = config;
    iteration_ = 0;
    failure_ = nullptr;
    worker_ = std::jthread([this, config](std::stop_token stop) { run(stop, config); });
}

void ProjectionJob::run(std::stop_token stop, tsne::ProjectionConfig config) {
    std::optional<tsne::ProjectionResult> result;
    json failure;
    try {
        result = tsne::run_projection(store_->embedding_matrix(), config, stop,
                                      [this](int iteration, int) { iteration_ = iteration; });
    } catch (const Error& e) {
        failure = api_error(e.code(), e.what(), e.detail());
    } catch (const std::exception& e) {
        failure = api_error(ErrorCode::internal, e.what());
    }
    {
        std::lock_guard lock(mutex_);
        if (result) {
            layout_ = std::make_shared<const Layout>(result->coordinates);
            result_ = std::move(result);
            status_ = JobStatus::done;
            try {
                persist_locked();
            } catch (const std::exception& e) {
                spdlog::error("cannot save projection: {}", e.what());
            }
        } else {
            failure_ = std::move(failure);
            status_ = JobStatus::failed;
        }
    }
    done_.notify_all();
}

void ProjectionJob::wait() {
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return status_ != JobStatus::running; });
}

JobStatus ProjectionJob::status() const {
    std::lock_guard lock(mutex_);
    return status_;
}

std::shared_ptr<const Layout> ProjectionJob::layout() const {
    std::lock_guard lock(mutex_);
    return layout_;
}

json ProjectionJob::describe() const {
    std::lock_guard lock(mutex_);
    switch (status_) {
        case JobStatus::running:
            return {{"status", to_string(status_)},
                    {"iteration", iteration_.load()},
                    {"total", running_config_.num_iterations},
                    {"config", running_config_}};
        case JobStatus::done: return result_json(*store_, *result_);
        case JobStatus::failed: return {{"status", to_string(status_)}, {"error", failure_}};
        case JobStatus::idle: break;
    }
    return {{"status", to_string(status_)}, {"num_instances", store_->size()}};
}

void ProjectionJob::persist_locked() const { atomic_write(file_, dump(result_json(*store_, *result_)) + "\n"); }

// ---------------------------------------------------------------------------
// Server

ApiServer::ApiServer(ServerOptions options) : options_(std::move(options)) {
    store_ = std::make_shared<const DatasetStore>(load_dataset_dir(options_.data_dir));
    const auto persona_file = options_.data_dir / "personas.json";
    personas_ = std::make_shared<const dialogue::PersonaRegistry>(std::filesystem::exists(persona_file)
                                                                      ? dialogue::PersonaRegistry::load(persona_file)
                                                                      : dialogue::PersonaRegistry::builtin());
    sessions_ = std::make_shared<dialogue::SessionStore>(options_.data_dir, options_.clock);
    notes_ = std::make_shared<dialogue::NotesStore>(options_.data_dir, options_.clock);
    projection_ = std::make_unique<ProjectionJob>(store_, options_.data_dir);

    auto provider = options_.provider ? options_.provider : llm::make_provider(options_.gateway);
    ProjectionJob* job = projection_.get();
    dialogue_ = std::make_unique<dialogue::DialogueService>(store_, personas_, sessions_, std::move(provider),
                                                            [job] { return job->layout(); }, options_.dialogue);
    speech_ = std::make_unique<llm::SpeechClient>(options_.gateway.speech);

    http_ = std::make_unique<httplib::Server>();
    http_->set_payload_max_length(1 << 20);
    routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(int port) {
    port_ = port == 0 ? http_->bind_to_any_port(options_.host) : (http_->bind_to_port(options_.host, port) ? port : -1);
    if (port_ < 0) {
        throw Error(ErrorCode::internal, fmt::format("cannot bind {}:{}", options_.host, port));
    }
    return port_;
}

void ApiServer::listen() { http_->listen_after_bind(); }

void ApiServer::start() {
    listener_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void ApiServer::stop() {
    if (http_) http_->stop();
    if (listener_.joinable()) listener_.join();
}

void ApiServer::routes() {
    using httplib::Request;
    using httplib::Response;
    auto& srv = *http_;

    srv.set_exception_handler([](const Request& req, Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what(), e.detail());
        } catch (const json::exception& e) {
            send_error(res, ErrorCode::bad_request, fmt::format("invalid request field: {}", e.what()));
        } catch (const std::exception& e) {
            spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
            send_error(res, ErrorCode::internal, e.what());
        } catch (...) {
            send_error(res, ErrorCode::internal, "unknown failure");
        }
    });
    srv.set_error_handler([](const Request& req, Response& res) {
        if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
        const ErrorCode code = res.status == 404   ? ErrorCode::not_found
                               : res.status < 500 ? ErrorCode::bad_request
                                                  : ErrorCode::internal;
        const int status = res.status;
        send_error(res, code, fmt::format("{} {}: HTTP {}", req.method, req.path, status));
        res.status = status;
        return httplib::Server::HandlerResponse::Handled;
    });

    if (!options_.assets_dir.empty()) {
        if (!srv.set_mount_point("/", options_.assets_dir.string())) {
            spdlog::warn("assets directory {} not found; static files disabled", options_.assets_dir.string());
        }
    }

    srv.Get("/api/health", [this](const Request&, Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"tts_enabled", speech_->enabled()}});
    });

    srv.Get("/api/overview", [this](const Request&, Response& res) { send_json(res, 200, store_->manifest()); });

    srv.Get("/api/projection", [this](const Request&, Response& res) {
        const json body = projection_->describe();
        send_json(res, body.at("status") == "running" ? 202 : 200, body);
    });

    srv.Post("/api/projection", [this](const Request& req, Response& res) {
        const auto config = parse_body(req).get<tsne::ProjectionConfig>();
        projection_->start(config);
        send_json(res, 202, projection_->describe());
    });

    srv.Get("/api/instances/:id", [this](const Request& req, Response& res) {
        const auto id = parse_number<InstanceId>(req.path_params.at("id"), "id");
        const auto layout = projection_->layout();
        send_json(res, 200, instance_json(*store_, store_->get_instance(id), layout.get(), true));
    });

    srv.Post("/api/selection", [this](const Request& req, Response& res) {
        const json body = parse_body(req);
        if (!body.contains("ids")) throw BadRequestError("missing field 'ids'");
        const auto ids = body.at("ids").get<std::vector<InstanceId>>();
        const auto layout = projection_->layout();
        const auto stats = selection_stats(*store_, ids, layout.get());
        json out = stats;
        out["digest"] = fmt::format("{} of {} predicted correctly ({}/{})", stats.correct_count, stats.size,
                                    stats.correct_count, stats.size);
        json rows = json::array();
        for (InstanceId id : ids) rows.push_back(instance_json(*store_, store_->get_instance(id), layout.get(), false));
        out["instances"] = std::move(rows);
        send_json(res, 200, out);
    });

    srv.Get("/api/selection/neighbors", [this](const Request& req, Response& res) {
        const auto id = parse_number<InstanceId>(required_param(req, "id"), "id");
        const auto k = req.has_param("k") ? parse_number<std::size_t>(req.get_param_value("k"), "k") : std::size_t{10};
        const std::string space_text = req.has_param("space") ? req.get_param_value("space") : "layout_2d";
        const auto space = parse_neighbor_space(space_text);
        const auto layout = projection_->layout();
        send_json(res, 200,
                  {{"id", id}, {"k", k}, {"space", space_text}, {"neighbors", neighbors(*store_, id, k, space, layout.get())}});
    });

    srv.Get("/api/class-report", [this](const Request&, Response& res) {
        json out = class_report(*store_);
        out["class_names"] = store_->manifest().class_names;
        send_json(res, 200, out);
    });

    srv.Get("/api/personas", [this](const Request&, Response& res) {
        send_json(res, 200, {{"personas", json(std::vector<dialogue::Persona>(personas_->all().begin(), personas_->all().end()))}});
    });

    srv.Post("/api/chat/sessions", [this](const Request& req, Response& res) {
        const json body = parse_body(req);
        if (!body.contains("target")) throw BadRequestError("missing field 'target'");
        const auto target = target_from(body.at("target"));
        auto started = dialogue_->start_session(target, body.value("fresh", false));
        send_json(res, started.created ? 201 : 200, {{"session", started.session}, {"created", started.created}});
    });

    srv.Get("/api/chat/sessions", [this](const Request& req, Response& res) {
        const auto list = req.has_param("target")
                              ? sessions_->for_target(dialogue::ChatTarget::parse_key(req.get_param_value("target")))
                              : sessions_->list();
        send_json(res, 200, {{"sessions", list}});
    });

    srv.Get("/api/chat/sessions/:id", [this](const Request& req, Response& res) {
        send_json(res, 200, sessions_->get(req.path_params.at("id")));
    });

    srv.Post("/api/chat/sessions/:id/turns", [this](const Request& req, Response& res) {
        const json body = parse_body(req);
        if (!body.contains("text") || !body.at("text").is_string()) throw BadRequestError("missing string field 'text'");
        const auto turn = dialogue_->chat_turn(req.path_params.at("id"), body.at("text").get<std::string>());
        send_json(res, 200, {{"reply", turn.reply}, {"session", turn.session}, {"version", turn.session.version}});
    });

    srv.Post("/api/notes", [this](const Request& req, Response& res) {
        const json body = parse_body(req);
        if (!body.contains("text") || !body.at("text").is_string()) throw BadRequestError("missing string field 'text'");
        const auto kind = dialogue::parse_note_kind(body.value("kind", std::string("task")));
        std::optional<std::string> linked;
        if (const auto it = body.find("linked_session_id"); it != body.end() && !it->is_null()) {
            linked = it->get<std::string>();
            sessions_->get(*linked);
        }
        send_json(res, 201, notes_->add(kind, body.at("text").get<std::string>(), linked));
    });

    srv.Get("/api/notes", [this](const Request&, Response& res) { send_json(res, 200, {{"notes", notes_->list()}}); });

    srv.Get("/api/notes/:id", [this](const Request& req, Response& res) {
        send_json(res, 200, notes_->get(req.path_params.at("id")));
    });

    srv.Patch("/api/notes/:id", [this](const Request& req, Response& res) {
        const json body = parse_body(req);
        dialogue::NotePatch patch;
        if (body.contains("text")) patch.text = body.at("text").get<std::string>();
        if (body.contains("done")) patch.done = body.at("done").get<bool>();
        if (const auto it = body.find("linked_session_id"); it != body.end()) {
            if (it->is_null()) {
                patch.linked_session_id = std::optional<std::string>();
            } else {
                sessions_->get(it->get<std::string>());
                patch.linked_session_id = it->get<std::string>();
            }
        }
        send_json(res, 200, notes_->update(req.path_params.at("id"), patch));
    });

    srv.Post("/api/notes/:id/toggle", [this](const Request& req, Response& res) {
        send_json(res, 200, notes_->toggle_done(req.path_params.at("id")));
    });

    srv.Delete("/api/notes/:id", [this](const Request& req, Response& res) {
        const std::string id = req.path_params.at("id");
        notes_->remove(id);
        send_json(res, 200, {{"deleted", id}});
    });

    srv.Get("/api/tts", [this](const Request& req, Response& res) {
        const auto session = sessions_->get(required_param(req, "session"));
        const auto turn = parse_number<std::size_t>(required_param(req, "turn"), "turn");
        if (turn >= session.messages.size()) {
            throw NotFoundError(fmt::format("session '{}' has no turn {}", session.session_id, turn),
                                {{"session_id", session.session_id}, {"turn", turn}});
        }
        const auto& voice = personas_->find(session.persona_id).voice_id;
        const auto result = speech_->speak(session.messages[turn].text, voice);
        if (const auto* audio = std::get_if<llm::SpeechAudio>(&result)) {
            res.status = 200;
            res.set_content(audio->bytes, audio->mime_type);
        } else {
            send_json(res, 200, {{"status", "tts_disabled"}});
        }
    });
}

}  // namespace npcviz
