#pragma once

// Persistent FIFO inference queue on top of the store's jobs table.
//
// claim_next() hands out the pending job with the smallest seq. A claimed
// job that is not completed or failed within the lease becomes claimable
// again, still at its original seq. Jobs are never deleted.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "dfu/clock.hpp"
#include "dfu/domain.hpp"
#include "dfu/result.hpp"
#include "dfu/serialization.hpp"
#include "dfu/store.hpp"

namespace dfu {

inline constexpr std::int32_t kDefaultMaxAttempts = 3;

struct QueueConfig {
    std::chrono::milliseconds lease{60'000};
    std::int32_t max_attempts = kDefaultMaxAttempts;
};

struct QueueStats {
    std::int64_t pending = 0;
    std::int64_t in_progress = 0;
    std::int64_t complete = 0;
    std::int64_t failed = 0;

    [[nodiscard]] std::int64_t total() const noexcept { return pending + in_progress + complete + failed; }
    friend bool operator==(const QueueStats&, const QueueStats&) = default;
};

class JobQueue {
public:
    JobQueue(Store& store, QueueConfig config = {}, IdGenerator ids = random_ids())
        : store_(store), config_(config), ids_(std::move(ids)) {}

    [[nodiscard]] const QueueConfig& config() const noexcept { return config_; }

    Result<Job> enqueue(const std::string& exam_id, FootSide side, const std::string& photo_id) {
        return store_.atomically([&]() -> Result<Job> {
            auto& db = store_.database();
            auto photo = db.prepare("SELECT 1 FROM photos WHERE photo_id = ?");
            photo.bind(1, photo_id);
            if (!photo.step()) return make_error(ErrorCode::UnknownPhoto, photo_id);

            auto active = db.prepare(
                "SELECT job_id FROM jobs WHERE exam_id = ? AND side = ? AND state IN ('pending','in_progress')");
            active.bind(1, exam_id).bind(2, to_string(side));
            if (active.step()) {
                return make_error(ErrorCode::DuplicateJob, "job " + active.text(0) + " is already queued for " +
                                                               exam_id + "/" + std::string{to_string(side)});
            }

            Job job;
            job.job_id = ids_();
            job.exam_id = exam_id;
            job.side = side;
            job.photo_id = photo_id;
            job.state = JobState::pending;
            job.enqueued_at = store_.now();
            db.prepare(
                  "INSERT INTO jobs(job_id, exam_id, side, photo_id, state, attempts, enqueued_at) "
                  "VALUES(?,?,?,?,'pending',0,?)")
                .bind(1, job.job_id)
                .bind(2, job.exam_id)
                .bind(3, to_string(side))
                .bind(4, job.photo_id)
                .bind(5, to_millis(job.enqueued_at))
                .run();
            job.seq = db.last_insert_rowid();
            return job;
        });
    }

    /// Atomically claims the oldest claimable job, or returns nullopt.
    Result<std::optional<Job>> claim_next(const std::string& worker_id) {
        return store_.atomically([&]() -> Result<std::optional<Job>> {
            auto& db = store_.database();
            const Timestamp now = store_.now();
            const std::int64_t expired_before = to_millis(now) - config_.lease.count();
            for (;;) {
                // oldest pending job vs. oldest expired lease
                std::optional<std::int64_t> pending_seq;
                std::optional<std::int64_t> expired_seq;
                {
                    auto st = db.prepare("SELECT MIN(seq) FROM jobs WHERE state = 'pending'");
                    if (st.step()) pending_seq = st.opt_int64(0);
                }
                {
                    auto st = db.prepare("SELECT MIN(seq) FROM jobs WHERE state = 'in_progress' AND claimed_at <= ?");
                    st.bind(1, expired_before);
                    if (st.step()) expired_seq = st.opt_int64(0);
                }
                if (!pending_seq && !expired_seq) return std::optional<Job>{};
                const bool lease_expired = expired_seq && (!pending_seq || *expired_seq < *pending_seq);
                const std::int64_t seq = lease_expired ? *expired_seq : *pending_seq;
                auto att = db.prepare("SELECT attempts FROM jobs WHERE seq = ?");
                att.bind(1, seq);
                att.step();
                const auto attempts = static_cast<std::int32_t>(att.int64(0));
                if (lease_expired && attempts >= config_.max_attempts) {
                    db.prepare("UPDATE jobs SET state = 'failed', finished_at = ?, failure_reason = ? WHERE seq = ?")
                        .bind(1, to_millis(now))
                        .bind(2, "lease expired")
                        .bind(3, seq)
                        .run();
                    continue;
                }
                db.prepare(
                      "UPDATE jobs SET state = 'in_progress', attempts = attempts + 1, worker_id = ?, "
                      "claimed_at = ? WHERE seq = ?")
                    .bind(1, worker_id)
                    .bind(2, to_millis(now))
                    .bind(3, seq)
                    .run();
                auto job = read_by_seq(seq);
                if (!job) return job.error();
                return std::optional<Job>{std::move(*job)};
            }
        });
    }

    Result<Job> complete(const std::string& job_id, const InferenceResult& result) {
        return store_.atomically([&]() -> Result<Job> {
            auto job = get(job_id);
            if (!job) return job.error();
            if (job->state != JobState::in_progress) {
                return make_error(ErrorCode::InvalidState,
                                  "job " + job_id + " is " + std::string{to_string(job->state)});
            }
            store_.database()
                .prepare("UPDATE jobs SET state = 'complete', result = ?, finished_at = ? WHERE job_id = ?")
                .bind(1, Json(result).dump())
                .bind(2, to_millis(store_.now()))
                .bind(3, job_id)
                .run();
            return get(job_id);
        });
    }

    /// Requeues the job (same seq) while attempts < max_attempts; otherwise
    /// marks it failed with `reason`.
    Result<Job> fail(const std::string& job_id, const std::string& reason, std::int32_t max_attempts) {
        return store_.atomically([&]() -> Result<Job> {
            auto job = get(job_id);
            if (!job) return job.error();
            if (job->state != JobState::in_progress) {
                return make_error(ErrorCode::InvalidState,
                                  "job " + job_id + " is " + std::string{to_string(job->state)});
            }
            auto& db = store_.database();
            if (job->attempts < max_attempts) {
                db.prepare(
                      "UPDATE jobs SET state = 'pending', claimed_at = NULL, worker_id = NULL, "
                      "failure_reason = ? WHERE job_id = ?")
                    .bind(1, reason)
                    .bind(2, job_id)
                    .run();
            } else {
                db.prepare("UPDATE jobs SET state = 'failed', failure_reason = ?, finished_at = ? WHERE job_id = ?")
                    .bind(1, reason)
                    .bind(2, to_millis(store_.now()))
                    .bind(3, job_id)
                    .run();
            }
            return get(job_id);
        });
    }

    Result<Job> fail(const std::string& job_id, const std::string& reason) {
        return fail(job_id, reason, config_.max_attempts);
    }

    Result<Job> get(const std::string& job_id) {
        return store_.atomically([&]() -> Result<Job> {
            auto st = store_.database().prepare("SELECT seq FROM jobs WHERE job_id = ?");
            st.bind(1, job_id);
            if (!st.step()) return make_error(ErrorCode::NotFound, "unknown job " + job_id);
            return read_by_seq(st.int64(0));
        });
    }

    Result<QueueStats> stats() {
        return store_.atomically([&]() -> Result<QueueStats> {
            QueueStats s;
            auto st = store_.database().prepare("SELECT state, COUNT(*) FROM jobs GROUP BY state");
            while (st.step()) {
                const auto n = st.int64(1);
                switch (parse_job_state(st.text(0)).value_or(JobState::failed)) {
                    case JobState::pending: s.pending = n; break;
                    case JobState::in_progress: s.in_progress = n; break;
                    case JobState::complete: s.complete = n; break;
                    case JobState::failed: s.failed = n; break;
                }
            }
            return s;
        });
    }

    /// Jobs whose photo is `photo_id`, oldest first.
    Result<std::vector<Job>> jobs_for_photo(const std::string& photo_id) {
        return store_.atomically([&]() -> Result<std::vector<Job>> {
            std::vector<std::int64_t> seqs;
            auto st = store_.database().prepare("SELECT seq FROM jobs WHERE photo_id = ? ORDER BY seq");
            st.bind(1, photo_id);
            while (st.step()) seqs.push_back(st.int64(0));
            std::vector<Job> jobs;
            for (auto seq : seqs) {
                auto job = read_by_seq(seq);
                if (!job) return job.error();
                jobs.push_back(std::move(*job));
            }
            return jobs;
        });
    }

private:
    Result<Job> read_by_seq(std::int64_t seq) {
        auto st = store_.database().prepare(
            "SELECT job_id, seq, exam_id, side, photo_id, state, attempts, worker_id, enqueued_at, claimed_at, "
            "finished_at, result, failure_reason FROM jobs WHERE seq = ?");
        st.bind(1, seq);
        if (!st.step()) return make_error(ErrorCode::NotFound, "no job at seq " + std::to_string(seq));
        Job job;
        job.job_id = st.text(0);
        job.seq = st.int64(1);
        job.exam_id = st.text(2);
        job.side = parse_foot_side(st.text(3)).value_or(FootSide::left);
        job.photo_id = st.text(4);
        job.state = parse_job_state(st.text(5)).value_or(JobState::failed);
        job.attempts = static_cast<std::int32_t>(st.int64(6));
        job.worker_id = st.opt_text(7);
        job.enqueued_at = from_millis(st.int64(8));
        if (auto v = st.opt_int64(9)) job.claimed_at = from_millis(*v);
        if (auto v = st.opt_int64(10)) job.finished_at = from_millis(*v);
        if (auto v = st.opt_text(11)) {
            try {
                job.result = Json::parse(*v).get<InferenceResult>();
            } catch (const Json::exception& e) {
                return make_error(ErrorCode::StorageFailure, std::string{"corrupt job result: "} + e.what());
            }
        }
        job.failure_reason = st.opt_text(12);
        return job;
    }

    Store& store_;
    QueueConfig config_;
    IdGenerator ids_;
};

}  // namespace dfu
