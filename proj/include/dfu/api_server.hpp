#pragma once

// HTTP/JSON front end. Each endpoint maps onto one domain, store or queue
// operation; the handlers add no workflow rules of their own.
//
//   GET  /api/v1/status
//   GET  /api/v1/version?client=<semver>
//   POST /api/v1/exams                                  {patient_id}
//   GET  /api/v1/exams/{id}
//   PUT  /api/v1/exams/{id}/feet/{side}                 {checked, visible_ulcer_count}
//   POST /api/v1/exams/{id}/feet/{side}/photo           {png_base64}
//   POST /api/v1/exams/{id}/feet/{side}/confirmation    {agrees}
//   POST /api/v1/exams/{id}/complete
//   GET  /api/v1/jobs/{job_id}
//   GET  /api/v1/photos/{photo_id}                      raw PNG bytes
//
// Errors are always {"error_code": <ErrorCode name>, "message": ...}.
// Every endpoint except /status requires `Authorization: Bearer <token>`
// when a token is configured.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "dfu/base64.hpp"
#include "dfu/clock.hpp"
#include "dfu/domain.hpp"
#include "dfu/intake.hpp"
#include "dfu/job_queue.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"
#include "dfu/semver.hpp"
#include "dfu/serialization.hpp"
#include "dfu/store.hpp"

namespace dfu {

struct ApiConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 binds an ephemeral port
    std::string token;
    VersionPolicy versions;
};

[[nodiscard]] constexpr int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NegativeCount:
        case ErrorCode::BadRequest:
        case ErrorCode::BadImage:
        case ErrorCode::TooLarge:
        case ErrorCode::MalformedVersion:
        case ErrorCode::InvalidConfig:
        case ErrorCode::ZeroSizeImage:
            return 400;
        case ErrorCode::Unauthorized:
            return 401;
        case ErrorCode::NotFound:
        case ErrorCode::UnknownPatient:
            return 404;
        case ErrorCode::ExamCompleted:
        case ErrorCode::CheckedLocked:
        case ErrorCode::CountLocked:
        case ErrorCode::NoFootDetails:
        case ErrorCode::DuplicateUpload:
        case ErrorCode::NoPhoto:
        case ErrorCode::DuplicateResult:
        case ErrorCode::NoResult:
        case ErrorCode::DuplicateConfirmation:
        case ErrorCode::NothingRecorded:
        case ErrorCode::PendingInference:
        case ErrorCode::PendingConfirmation:
        case ErrorCode::VersionConflict:
        case ErrorCode::DuplicateJob:
        case ErrorCode::DuplicatePhotoId:
        case ErrorCode::InvalidState:
        case ErrorCode::UnknownPhoto:
            return 409;
        case ErrorCode::StorageFailure:
            return 503;
        default:
            return 500;
    }
}

[[nodiscard]] inline Json error_body(const Error& e) {
    return Json{{"error_code", std::string{to_string(e.code)}}, {"message", e.message}};
}

[[nodiscard]] inline Json job_view(const Job& job) {
    Json j{{"job_id", job.job_id},
           {"state", std::string{to_string(job.state)}},
           {"exam_id", job.exam_id},
           {"side", job.side},
           {"photo_id", job.photo_id},
           {"attempts", job.attempts}};
    if (job.state == JobState::complete && job.result) {
        j["detections"] = job.result->detections;
        j["detector_id"] = job.result->detector_id;
        j["completed_at"] = to_millis(job.result->completed_at);
    }
    if (job.state == JobState::failed) j["failure_reason"] = job.failure_reason.value_or("");
    return j;
}

[[nodiscard]] inline Json queue_stats_view(const QueueStats& s) {
    return Json{{"pending", s.pending}, {"in_progress", s.in_progress}, {"complete", s.complete}, {"failed", s.failed}};
}

class ApiServer {
public:
    ApiServer(Store& store, JobQueue& queue, ApiConfig config, Clock clock = system_clock(),
              IdGenerator ids = random_ids(), LogSink access_log = {})
        : store_(store),
          queue_(queue),
          config_(std::move(config)),
          clock_(std::move(clock)),
          ids_(std::move(ids)),
          access_log_(std::move(access_log)) {
        if (!config_.versions.valid()) throw std::invalid_argument("min_supported must not exceed current");
        // large enough for base64 of an over-cap photo, which gets TooLarge
        server_.set_payload_max_length(store_.config().max_photo_bytes * 2 + (1u << 20));
        install_routes();
    }

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds the configured address; returns the bound port or -1.
    int bind() {
        if (config_.port == 0) {
            port_ = server_.bind_to_any_port(config_.host);
        } else {
            port_ = server_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
        }
        return port_;
    }

    /// Serves until stop(). Call bind() first.
    bool listen() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }
    [[nodiscard]] int port() const noexcept { return port_; }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send(Res& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }
    static void send_error(Res& res, const Error& e) { send(res, http_status_for(e.code), error_body(e)); }

    static Result<Json> parse_object(const Req& req) {
        Json body = Json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            return make_error(ErrorCode::BadRequest, "request body must be a JSON object");
        }
        return body;
    }

    static Result<bool> bool_field(const Json& body, const char* key) {
        auto it = body.find(key);
        if (it == body.end() || !it->is_boolean()) {
            return make_error(ErrorCode::BadRequest, std::string{key} + " must be a boolean");
        }
        return it->get<bool>();
    }

    static Result<FootSide> side_param(const Req& req, std::size_t index) {
        auto side = parse_foot_side(req.matches[static_cast<int>(index)].str());
        if (!side) return make_error(ErrorCode::BadRequest, "side must be 'left' or 'right'");
        return *side;
    }

    /// Load, apply, compare-and-swap save; one retry on VersionConflict.
    template <class Apply>
    Result<ExamRecord> mutate_exam(const std::string& exam_id, Apply&& apply) {
        for (int attempt = 0;; ++attempt) {
            auto loaded = store_.load_exam(exam_id);
            if (!loaded) return loaded.error();
            Result<ExamRecord> next = apply(loaded->exam);
            if (!next) return next;
            auto saved = store_.save_exam(*next, loaded->version);
            if (saved) return next;
            if (saved.code() != ErrorCode::VersionConflict || attempt >= 1) return saved.error();
        }
    }

    void install_routes() {
        server_.set_pre_routing_handler([this](const Req& req, Res& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            if (req.method == "OPTIONS") {
                res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            if (!config_.token.empty() && req.path != "/api/v1/status" &&
                req.get_header_value("Authorization") != "Bearer " + config_.token) {
                send_error(res, make_error(ErrorCode::Unauthorized, "missing or invalid bearer token"));
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        server_.set_error_handler([](const Req&, Res& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            ErrorCode code = ErrorCode::Internal;
            if (res.status == 404) code = ErrorCode::NotFound;
            if (res.status == 413) code = ErrorCode::TooLarge;
            if (res.status == 400 || res.status == 405) code = ErrorCode::BadRequest;
            res.set_content(error_body(make_error(code, httplib::status_message(res.status))).dump(),
                            "application/json");
            return httplib::Server::HandlerResponse::Handled;
        });

        server_.set_exception_handler([](const Req&, Res& res, std::exception_ptr ep) {
            std::string what = "unexpected error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            send_error(res, make_error(ErrorCode::Internal, what));
        });

        server_.set_logger([this](const Req& req, const Res& res) {
            if (access_log_) {
                access_log_("access method=" + req.method + " path=" + req.path +
                            " status=" + std::to_string(res.status) + " remote=" + req.remote_addr);
            }
        });

        server_.Get("/api/v1/status", [this](const Req&, Res& res) { handle_status(res); });
        server_.Get("/api/v1/version", [this](const Req& req, Res& res) { handle_version(req, res); });
        server_.Post("/api/v1/exams", [this](const Req& req, Res& res) { handle_create_exam(req, res); });
        server_.Get(R"(/api/v1/exams/([^/]+))", [this](const Req& req, Res& res) { handle_get_exam(req, res); });
        server_.Put(R"(/api/v1/exams/([^/]+)/feet/([^/]+))",
                    [this](const Req& req, Res& res) { handle_foot_details(req, res); });
        server_.Post(R"(/api/v1/exams/([^/]+)/feet/([^/]+)/photo)",
                     [this](const Req& req, Res& res) { handle_photo(req, res); });
        server_.Post(R"(/api/v1/exams/([^/]+)/feet/([^/]+)/confirmation)",
                     [this](const Req& req, Res& res) { handle_confirmation(req, res); });
        server_.Post(R"(/api/v1/exams/([^/]+)/complete)",
                     [this](const Req& req, Res& res) { handle_complete(req, res); });
        server_.Get(R"(/api/v1/jobs/([^/]+))", [this](const Req& req, Res& res) { handle_job(req, res); });
        server_.Get(R"(/api/v1/photos/([^/]+))", [this](const Req& req, Res& res) { handle_photo_bytes(req, res); });
    }

    void handle_status(Res& res) {
        const bool store_ok = store_.ping();
        QueueStats stats;
        if (store_ok) {
            if (auto s = queue_.stats()) stats = *s;
        }
        send(res, 200,
             Json{{"status", store_ok ? "ok" : "degraded"},
                  {"store_ok", store_ok},
                  {"queue", queue_stats_view(stats)},
                  {"server_version", config_.versions.current.to_string()}});
    }

    void handle_version(const Req& req, Res& res) {
        if (!req.has_param("client")) {
            return send_error(res, make_error(ErrorCode::MalformedVersion, "client parameter is required"));
        }
        const auto raw = req.get_param_value("client");
        auto client = SemVer::parse(raw);
        if (!client) return send_error(res, make_error(ErrorCode::MalformedVersion, "'" + raw + "' is not semver"));
        send(res, 200,
             Json{{"compatible", config_.versions.compatible(*client)},
                  {"min_supported", config_.versions.min_supported.to_string()},
                  {"current", config_.versions.current.to_string()}});
    }

    void handle_create_exam(const Req& req, Res& res) {
        auto body = parse_object(req);
        if (!body) return send_error(res, body.error());
        auto it = body->find("patient_id");
        if (it == body->end() || !it->is_string() || it->get<std::string>().empty()) {
            return send_error(res, make_error(ErrorCode::BadRequest, "patient_id must be a non-empty string"));
        }
        auto patient = store_.get_patient(it->get<std::string>());
        if (!patient) {
            if (patient.code() == ErrorCode::NotFound) {
                return send_error(res, make_error(ErrorCode::UnknownPatient, patient.error().message));
            }
            return send_error(res, patient.error());
        }
        ExamRecord exam = open_exam(ids_(), *patient, clock_());
        auto saved = store_.save_exam(exam, 0);
        if (!saved) return send_error(res, saved.error());
        send(res, 201, Json{{"exam_id", exam.exam_id}});
    }

    void handle_get_exam(const Req& req, Res& res) {
        auto loaded = store_.load_exam(req.matches[1].str());
        if (!loaded) return send_error(res, loaded.error());
        Json view = loaded->exam;
        view["version"] = loaded->version;
        send(res, 200, view);
    }

    void handle_foot_details(const Req& req, Res& res) {
        auto side = side_param(req, 2);
        if (!side) return send_error(res, side.error());
        auto body = parse_object(req);
        if (!body) return send_error(res, body.error());
        auto checked = bool_field(*body, "checked");
        if (!checked) return send_error(res, checked.error());
        auto count_it = body->find("visible_ulcer_count");
        if (count_it == body->end() || !count_it->is_number_integer()) {
            return send_error(res, make_error(ErrorCode::BadRequest, "visible_ulcer_count must be an integer"));
        }
        const auto count = count_it->get<std::int64_t>();
        if (count > std::numeric_limits<std::int32_t>::max() || count < std::numeric_limits<std::int32_t>::min()) {
            return send_error(res, make_error(ErrorCode::BadRequest, "visible_ulcer_count out of range"));
        }
        auto updated = mutate_exam(req.matches[1].str(), [&](const ExamRecord& exam) {
            return record_foot_details(exam, *side, *checked, static_cast<std::int32_t>(count));
        });
        if (!updated) return send_error(res, updated.error());
        send(res, 200, Json(*updated->foot(*side)));
    }

    void handle_photo(const Req& req, Res& res) {
        auto side = side_param(req, 2);
        if (!side) return send_error(res, side.error());
        auto body = parse_object(req);
        if (!body) return send_error(res, body.error());
        auto it = body->find("png_base64");
        if (it == body->end() || !it->is_string()) {
            return send_error(res, make_error(ErrorCode::BadRequest, "png_base64 must be a string"));
        }
        const auto& encoded = it->get_ref<const std::string&>();
        const std::size_t cap = store_.config().max_photo_bytes;
        if (encoded.size() / 4 * 3 > cap + 2) {
            return send_error(res, make_error(ErrorCode::TooLarge, "photo exceeds " + std::to_string(cap) + " bytes"));
        }
        auto bytes = base64_decode(encoded);
        if (!bytes || bytes->empty()) return send_error(res, make_error(ErrorCode::BadImage, "invalid base64 payload"));
        if (bytes->size() > cap) {
            return send_error(res, make_error(ErrorCode::TooLarge, "photo exceeds " + std::to_string(cap) + " bytes"));
        }
        auto accepted = submit_photo(store_, queue_, req.matches[1].str(), *side, *bytes, ids_(), clock_());
        if (!accepted) return send_error(res, accepted.error());
        send(res, 202, Json{{"photo_id", accepted->photo_id}, {"job_id", accepted->job.job_id}});
    }

    void handle_confirmation(const Req& req, Res& res) {
        auto side = side_param(req, 2);
        if (!side) return send_error(res, side.error());
        auto body = parse_object(req);
        if (!body) return send_error(res, body.error());
        auto agrees = bool_field(*body, "agrees");
        if (!agrees) return send_error(res, agrees.error());
        auto updated = mutate_exam(req.matches[1].str(), [&](const ExamRecord& exam) {
            return record_confirmation(exam, *side, *agrees, clock_());
        });
        if (!updated) return send_error(res, updated.error());
        send(res, 200, Json(*updated->foot(*side)));
    }

    void handle_complete(const Req& req, Res& res) {
        auto updated =
            mutate_exam(req.matches[1].str(), [&](const ExamRecord& exam) { return complete_exam(exam, clock_()); });
        if (!updated) return send_error(res, updated.error());
        send(res, 200, Json(*updated));
    }

    void handle_job(const Req& req, Res& res) {
        auto job = queue_.get(req.matches[1].str());
        if (!job) return send_error(res, job.error());
        send(res, 200, job_view(*job));
    }

    void handle_photo_bytes(const Req& req, Res& res) {
        auto ref = store_.find_photo(req.matches[1].str());
        if (!ref) return send_error(res, ref.error());
        auto bytes = store_.fetch_photo(*ref);
        if (!bytes) return send_error(res, bytes.error());
        res.status = 200;
        res.set_content(std::string(bytes->begin(), bytes->end()), "image/png");
    }

    Store& store_;
    JobQueue& queue_;
    ApiConfig config_;
    Clock clock_;
    IdGenerator ids_;
    LogSink access_log_;
    httplib::Server server_;
    int port_ = -1;
};

/// Runs an ApiServer on its own thread for the lifetime of the object.
class BackgroundServer {
public:
    BackgroundServer(Store& store, JobQueue& queue, ApiConfig config, Clock clock = system_clock(),
                     IdGenerator ids = random_ids(), LogSink access_log = {})
        : host_(config.host),
          server_(store, queue, std::move(config), std::move(clock), std::move(ids), std::move(access_log)) {
        if (server_.bind() < 0) throw std::runtime_error("cannot bind HTTP server");
        thread_ = std::thread([this] { server_.listen(); });
        server_.wait_until_ready();
    }

    BackgroundServer(const BackgroundServer&) = delete;
    BackgroundServer& operator=(const BackgroundServer&) = delete;

    ~BackgroundServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    [[nodiscard]] int port() const noexcept { return server_.port(); }
    [[nodiscard]] std::string base_url() const { return "http://" + host_ + ":" + std::to_string(port()); }

private:
    std::string host_;
    ApiServer server_;
    std::thread thread_;
};

}  // namespace dfu
