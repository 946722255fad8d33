#pragma once

// Inference worker: claims the oldest job, decodes the photo, runs the
// detector, writes the result into the exam and then marks the job complete.
//
// The result is written before the job is completed. If the worker dies in
// between, the job is re-claimed after its lease and the retry produces the
// identical result, which the worker then treats as already written.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <utility>

#include "dfu/detector.hpp"
#include "dfu/domain.hpp"
#include "dfu/job_queue.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"
#include "dfu/store.hpp"

namespace dfu {

struct WorkerConfig {
    std::string worker_id = "worker-1";
    std::chrono::milliseconds poll_interval{500};
    std::int32_t max_attempts = kDefaultMaxAttempts;
    int save_retries = 8;
};

struct RunOutcome {
    bool processed = false;
    std::optional<std::string> job_id;
    std::optional<JobState> job_state;
};

class Worker {
public:
    Worker(Store& store, JobQueue& queue, const Detector& detector, WorkerConfig config, LogSink log = {})
        : store_(store), queue_(queue), detector_(detector), config_(std::move(config)), log_(std::move(log)) {}

    [[nodiscard]] const WorkerConfig& config() const noexcept { return config_; }

    /// Processes at most one job. Errors only when the store is unreachable;
    /// a job claimed before that happens is left for lease expiry.
    Result<RunOutcome> run_once() {
        auto claimed = queue_.claim_next(config_.worker_id);
        if (!claimed) return claimed.error();
        if (!claimed->has_value()) return RunOutcome{};
        const Job job = std::move(**claimed);
        emit("claimed " + job.job_id);

        auto loaded = store_.load_exam(job.exam_id);
        if (!loaded) {
            if (loaded.code() == ErrorCode::StorageFailure) return loaded.error();
            return give_up(job, "record");
        }
        const auto& foot = loaded->exam.foot(job.side);
        if (!foot || !foot->photo || foot->photo->photo_id != job.photo_id) return give_up(job, "record");

        auto bytes = store_.fetch_photo(foot->photo->blob);
        if (!bytes) {
            if (bytes.code() == ErrorCode::StorageFailure) return bytes.error();
            return give_up(job, "blob");
        }

        auto image = decode_png(*bytes);
        if (!image) return give_up(job, "decode");

        Result<std::vector<Detection>> detections = make_error(ErrorCode::Internal);
        try {
            detections = detector_.detect(*image);
        } catch (const std::exception&) {
            return give_up(job, "detect");
        }
        if (!detections) return give_up(job, "detect");

        InferenceResult result{job.job_id, std::move(*detections), store_.now(), detector_.id()};
        sort_detections(result.detections);

        auto written = write_result(job, result);
        if (!written) {
            if (written.code() == ErrorCode::StorageFailure) return written.error();
            return give_up(job, "record");
        }

        auto done = queue_.complete(job.job_id, result);
        if (!done) {
            if (done.code() == ErrorCode::StorageFailure) return done.error();
            // Another worker finished it after our lease ran out.
            emit("completed " + job.job_id + " detections=" + std::to_string(result.detections.size()) +
                 " (already finalised)");
            return RunOutcome{true, job.job_id, std::nullopt};
        }
        emit("completed " + job.job_id + " detections=" + std::to_string(result.detections.size()));
        return RunOutcome{true, job.job_id, JobState::complete};
    }

    /// Calls run_once until `stop` is requested, sleeping `poll_interval`
    /// whenever the queue is empty or the store is unreachable.
    void run_loop(std::stop_token stop) {
        std::mutex m;
        std::condition_variable_any cv;
        while (!stop.stop_requested()) {
            auto outcome = run_once();
            if (!outcome) emit("store unavailable: " + outcome.error().to_string());
            if (!outcome || !outcome->processed) {
                std::unique_lock lock(m);
                cv.wait_for(lock, stop, config_.poll_interval, [] { return false; });
            }
        }
    }

private:
    void emit(const std::string& line) const {
        if (log_) log_(line);
    }

    Result<RunOutcome> give_up(const Job& job, const std::string& reason) {
        auto failed = queue_.fail(job.job_id, reason, config_.max_attempts);
        if (!failed) return failed.error().code == ErrorCode::StorageFailure
                                ? Result<RunOutcome>{failed.error()}
                                : Result<RunOutcome>{RunOutcome{true, job.job_id, std::nullopt}};
        if (failed->state == JobState::failed) {
            emit("failed " + job.job_id + " reason=" + reason);
        } else {
            emit("requeued " + job.job_id + " reason=" + reason + " attempts=" + std::to_string(failed->attempts));
        }
        return RunOutcome{true, job.job_id, failed->state};
    }

    Status write_result(const Job& job, const InferenceResult& result) {
        for (int attempt = 0; attempt < config_.save_retries; ++attempt) {
            auto loaded = store_.load_exam(job.exam_id);
            if (!loaded) return loaded.error();
            auto updated = record_result(loaded->exam, job.side, result);
            if (!updated) {
                const auto& existing = loaded->exam.foot(job.side);
                const bool same = existing && existing->result && existing->result->job_id == result.job_id &&
                                  existing->result->detections == result.detections &&
                                  existing->result->detector_id == result.detector_id;
                if (same) return {};
                return updated.error();
            }
            auto saved = store_.save_exam(*updated, loaded->version);
            if (saved) return {};
            if (saved.code() != ErrorCode::VersionConflict) return saved.error();
        }
        return make_error(ErrorCode::VersionConflict, "exam " + job.exam_id + " kept changing");
    }

    Store& store_;
    JobQueue& queue_;
    const Detector& detector_;
    WorkerConfig config_;
    LogSink log_;
};

}  // namespace dfu
