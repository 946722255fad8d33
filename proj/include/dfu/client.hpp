#pragma once

// Typed client for the HTTP API. It encodes requests and decodes responses
// and nothing else: every workflow rule is enforced by the server, and
// server error codes come back as the matching ErrorCode.

#include <httplib.h>

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dfu/base64.hpp"
#include "dfu/domain.hpp"
#include "dfu/job_queue.hpp"
#include "dfu/result.hpp"
#include "dfu/serialization.hpp"
#include "dfu/store.hpp"

namespace dfu {

inline constexpr const char* kClientVersion = "1.0.0";

struct StatusReport {
    std::string status;
    bool store_ok = false;
    QueueStats queue;
    std::string server_version;
};

struct VersionCheck {
    bool compatible = false;
    std::string min_supported;
    std::string current;
};

struct ServerCheck {
    StatusReport status;
    bool compatible = false;
};

struct PhotoReceipt {
    std::string photo_id;
    std::string job_id;
};

struct JobView {
    std::string job_id;
    JobState state = JobState::pending;
    std::string exam_id;
    std::optional<FootSide> side;
    std::int32_t attempts = 0;
    std::optional<std::vector<Detection>> detections;
    std::optional<std::string> detector_id;
    std::optional<Timestamp> completed_at;
    std::optional<std::string> failure_reason;
};

class Client {
public:
    explicit Client(const std::string& base_url, std::string token = {}) : http_(base_url) {
        if (!token.empty()) http_.set_bearer_token_auth(token);
        http_.set_connection_timeout(std::chrono::seconds(5));
        http_.set_read_timeout(std::chrono::seconds(30));
        http_.set_write_timeout(std::chrono::seconds(30));
    }

    Result<StatusReport> status() {
        auto body = call("GET", "/api/v1/status");
        if (!body) return body.error();
        try {
            const auto& j = *body;
            StatusReport r;
            r.status = j.at("status").get<std::string>();
            r.store_ok = j.at("store_ok").get<bool>();
            const auto& q = j.at("queue");
            r.queue = QueueStats{q.at("pending").get<std::int64_t>(), q.at("in_progress").get<std::int64_t>(),
                                 q.at("complete").get<std::int64_t>(), q.at("failed").get<std::int64_t>()};
            r.server_version = j.at("server_version").get<std::string>();
            return r;
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<VersionCheck> version(const std::string& client_version) {
        auto body = call("GET", "/api/v1/version?client=" + httplib::detail::encode_query_param(client_version));
        if (!body) return body.error();
        try {
            return VersionCheck{body->at("compatible").get<bool>(), body->at("min_supported").get<std::string>(),
                                body->at("current").get<std::string>()};
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    /// Status plus version gate. An outdated client is an error.
    Result<ServerCheck> check_server(const std::string& client_version) {
        auto s = status();
        if (!s) return s.error();
        auto v = version(client_version);
        if (!v) return v.error();
        if (!v->compatible) {
            return make_error(ErrorCode::IncompatibleVersion,
                              "client " + client_version + " is older than " + v->min_supported);
        }
        return ServerCheck{std::move(*s), true};
    }

    Result<std::string> create_exam(const std::string& patient_id) {
        auto body = call("POST", "/api/v1/exams", Json{{"patient_id", patient_id}});
        if (!body) return body.error();
        try {
            return body->at("exam_id").get<std::string>();
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<VersionedExam> get_exam(const std::string& exam_id) {
        auto body = call("GET", "/api/v1/exams/" + exam_id);
        if (!body) return body.error();
        try {
            return VersionedExam{body->get<ExamRecord>(), body->at("version").get<std::int64_t>()};
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<FootRecord> put_foot(const std::string& exam_id, FootSide side, bool checked,
                                std::int32_t visible_ulcer_count) {
        return decode<FootRecord>(call("PUT", foot_path(exam_id, side),
                                       Json{{"checked", checked}, {"visible_ulcer_count", visible_ulcer_count}}));
    }

    Result<PhotoReceipt> upload_photo(const std::string& exam_id, FootSide side,
                                      std::span<const std::uint8_t> png_bytes) {
        auto body = call("POST", foot_path(exam_id, side) + "/photo", Json{{"png_base64", base64_encode(png_bytes)}});
        if (!body) return body.error();
        try {
            return PhotoReceipt{body->at("photo_id").get<std::string>(), body->at("job_id").get<std::string>()};
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<FootRecord> confirm(const std::string& exam_id, FootSide side, bool agrees) {
        return decode<FootRecord>(call("POST", foot_path(exam_id, side) + "/confirmation", Json{{"agrees", agrees}}));
    }

    Result<ExamRecord> complete(const std::string& exam_id) {
        return decode<ExamRecord>(call("POST", "/api/v1/exams/" + exam_id + "/complete", Json::object()));
    }

    Result<JobView> get_job(const std::string& job_id) {
        auto body = call("GET", "/api/v1/jobs/" + job_id);
        if (!body) return body.error();
        try {
            const auto& j = *body;
            JobView v;
            v.job_id = j.at("job_id").get<std::string>();
            auto state = parse_job_state(j.at("state").get<std::string>());
            if (!state) return make_error(ErrorCode::ProtocolError, "unknown job state");
            v.state = *state;
            v.exam_id = j.value("exam_id", "");
            if (j.contains("side")) v.side = j.at("side").get<FootSide>();
            v.attempts = j.value("attempts", 0);
            if (j.contains("detections")) v.detections = j.at("detections").get<std::vector<Detection>>();
            if (j.contains("detector_id")) v.detector_id = j.at("detector_id").get<std::string>();
            if (j.contains("completed_at")) v.completed_at = from_millis(j.at("completed_at").get<std::int64_t>());
            if (j.contains("failure_reason")) v.failure_reason = j.at("failure_reason").get<std::string>();
            return v;
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<Bytes> get_photo(const std::string& photo_id) {
        auto res = http_.Get("/api/v1/photos/" + photo_id);
        if (!res) return make_error(ErrorCode::ConnectionFailed, httplib::to_string(res.error()));
        if (res->status >= 400) return error_from(*res);
        return Bytes(res->body.begin(), res->body.end());
    }

    /// Records foot details, then uploads the photo. Returns the job id.
    Result<std::string> submit_foot_exam(const std::string& exam_id, FootSide side, bool checked,
                                         std::int32_t visible_ulcer_count, std::span<const std::uint8_t> png_bytes) {
        auto foot = put_foot(exam_id, side, checked, visible_ulcer_count);
        if (!foot) return foot.error();
        auto receipt = upload_photo(exam_id, side, png_bytes);
        if (!receipt) return receipt.error();
        return receipt->job_id;
    }

    /// Polls the job until it completes or fails, or `timeout` elapses.
    Result<InferenceResult> await_result(const std::string& job_id,
                                         std::chrono::milliseconds timeout = std::chrono::seconds(30),
                                         std::chrono::milliseconds poll_every = std::chrono::milliseconds(500)) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            auto job = get_job(job_id);
            if (!job) return job.error();
            if (job->state == JobState::complete) {
                return InferenceResult{job->job_id, job->detections.value_or(std::vector<Detection>{}),
                                       job->completed_at.value_or(Timestamp{}), job->detector_id.value_or("")};
            }
            if (job->state == JobState::failed) {
                return make_error(ErrorCode::JobFailed, job->failure_reason.value_or(""));
            }
            const auto now = std::chrono::steady_clock::now();
            if (now >= deadline) return make_error(ErrorCode::Timeout, "job " + job_id + " still " +
                                                                           std::string{to_string(job->state)});
            std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(poll_every, deadline - now));
        }
    }

private:
    static std::string foot_path(const std::string& exam_id, FootSide side) {
        return "/api/v1/exams/" + exam_id + "/feet/" + std::string{to_string(side)};
    }

    static Error protocol_error(const std::exception& e) {
        return make_error(ErrorCode::ProtocolError, std::string{"unexpected response: "} + e.what());
    }

    static Error error_from(const httplib::Response& res) {
        Json body = Json::parse(res.body, nullptr, false);
        if (body.is_object() && body.contains("error_code") && body["error_code"].is_string()) {
            auto code = parse_error_code(body["error_code"].get<std::string>());
            std::string message = body.value("message", "");
            if (code) return make_error(*code, std::move(message));
            return make_error(ErrorCode::ProtocolError, body["error_code"].get<std::string>() + ": " + message);
        }
        return make_error(ErrorCode::ProtocolError, "HTTP " + std::to_string(res.status));
    }

    template <class T>
    static Result<T> decode(Result<Json> body) {
        if (!body) return body.error();
        try {
            return body->get<T>();
        } catch (const Json::exception& e) {
            return protocol_error(e);
        }
    }

    Result<Json> call(const std::string& method, const std::string& path, const std::optional<Json>& body = {}) {
        if (method != "GET" && method != "POST" && method != "PUT") {
            return make_error(ErrorCode::BadRequest, "unsupported method " + method);
        }
        const std::string payload = body ? body->dump() : std::string{};
        auto res = [&] {
            if (method == "GET") return http_.Get(path);
            if (method == "POST") return http_.Post(path, payload, "application/json");
            return http_.Put(path, payload, "application/json");
        }();
        if (!res) return make_error(ErrorCode::ConnectionFailed, httplib::to_string(res.error()));
        if (res->status >= 400) return error_from(*res);
        Json parsed = Json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) return make_error(ErrorCode::ProtocolError, "response is not JSON");
        return parsed;
    }

    httplib::Client http_;
};

}  // namespace dfu
