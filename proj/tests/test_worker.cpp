#include <gtest/gtest.h>

#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "dfu/intake.hpp"
#include "dfu/synthetic.hpp"
#include "dfu/worker.hpp"
#include "support/fixtures.hpp"

namespace dfu {
namespace {

using namespace std::chrono_literals;

class WorkerTest : public ::testing::Test {
protected:
    ManualClock clock;
    Store store{testing::memory_store(), clock.as_clock()};
    JobQueue queue{store, QueueConfig{}, sequential_ids(0x10b)};
    RednessDetector detector;
    std::vector<std::string> log;
    std::mutex log_mutex;
    int next_exam = 0;

    LogSink sink() {
        return [this](const std::string& line) {
            std::lock_guard lock(log_mutex);
            log.push_back(line);
        };
    }

    /// New exam with the left foot recorded and `png` uploaded.
    PhotoIntake submit(const Bytes& png, FootSide side = FootSide::left) {
        const std::string exam_id = "exam" + std::to_string(++next_exam);
        EXPECT_TRUE(store.save_exam(open_exam(exam_id, PatientRef{"P001", "P001"}, clock.now()), 0));
        auto exam = store.load_exam(exam_id).value();
        EXPECT_TRUE(store.save_exam(record_foot_details(exam.exam, side, true, 1).value(), exam.version));
        auto intake = submit_photo(store, queue, exam_id, side, png, "photo" + std::to_string(next_exam), clock.now());
        EXPECT_TRUE(intake) << (intake ? "" : intake.error().to_string());
        return *intake;
    }
};

TEST_F(WorkerTest, ProcessesRedSquare) {
    const auto intake = submit(demo_png(61'440).value());
    Worker worker(store, queue, detector, WorkerConfig{}, sink());
    auto outcome = worker.run_once();
    ASSERT_TRUE(outcome);
    EXPECT_TRUE(outcome->processed);
    EXPECT_EQ(outcome->job_id, intake.job.job_id);
    EXPECT_EQ(outcome->job_state, JobState::complete);

    const auto job = queue.get(intake.job.job_id).value();
    EXPECT_EQ(job.state, JobState::complete);
    ASSERT_TRUE(job.result);
    const std::vector<Detection> expected{Detection{BoundingBox{20, 30, 20, 20}, 1.0}};
    EXPECT_EQ(job.result->detections, expected);
    EXPECT_EQ(job.result->detector_id, "redness-blob/1");

    const auto exam = store.load_exam(job.exam_id).value().exam;
    ASSERT_TRUE(exam.foot(FootSide::left)->result);
    EXPECT_EQ(*exam.foot(FootSide::left)->result, *job.result);

    ASSERT_EQ(log.size(), 2u);
    EXPECT_EQ(log[0], "claimed " + job.job_id);
    EXPECT_EQ(log[1], "completed " + job.job_id + " detections=1");
}

TEST_F(WorkerTest, EmptyQueue) {
    Worker worker(store, queue, detector, WorkerConfig{});
    auto outcome = worker.run_once();
    ASSERT_TRUE(outcome);
    EXPECT_FALSE(outcome->processed);
}

TEST_F(WorkerTest, CorruptBlobFailsAfterMaxAttempts) {
    const auto intake = submit(demo_png().value());
    // overwrite the stored bytes with something that is not a PNG
    ASSERT_TRUE(store.atomically([&]() -> Status {
        store.database().prepare("UPDATE photos SET data = x'89504e470d0a1a0a00ff' WHERE photo_id = ?")
            .bind(1, intake.photo_id)
            .run();
        return {};
    }));
    Worker worker(store, queue, detector, WorkerConfig{}, sink());
    for (int i = 1; i <= 3; ++i) {
        auto outcome = worker.run_once();
        ASSERT_TRUE(outcome);
        EXPECT_TRUE(outcome->processed);
        EXPECT_EQ(outcome->job_state, i < 3 ? JobState::pending : JobState::failed);
    }
    const auto job = queue.get(intake.job.job_id).value();
    EXPECT_EQ(job.state, JobState::failed);
    EXPECT_EQ(job.failure_reason, "decode");
    EXPECT_EQ(job.attempts, 3);
    EXPECT_EQ(log.back(), "failed " + job.job_id + " reason=decode");
    EXPECT_FALSE(worker.run_once()->processed);
}

TEST_F(WorkerTest, DetectorErrorIsReported) {
    struct Broken final : Detector {
        Result<std::vector<Detection>> detect(const RasterImage&) const override {
            return make_error(ErrorCode::Internal, "model crashed");
        }
        std::string id() const override { return "broken"; }
    } broken;
    const auto intake = submit(demo_png().value());
    WorkerConfig cfg;
    cfg.max_attempts = 1;
    Worker worker(store, queue, broken, cfg);
    ASSERT_TRUE(worker.run_once());
    const auto job = queue.get(intake.job.job_id).value();
    EXPECT_EQ(job.state, JobState::failed);
    EXPECT_EQ(job.failure_reason, "detect");
}

TEST_F(WorkerTest, AbandonedJobIsRetriedAfterLease) {
    const auto intake = submit(demo_png().value());
    // a worker claims and then disappears
    ASSERT_TRUE(queue.claim_next("crashed")->has_value());
    Worker worker(store, queue, detector, WorkerConfig{});
    EXPECT_FALSE(worker.run_once()->processed);
    clock.advance(61s);
    auto outcome = worker.run_once();
    ASSERT_TRUE(outcome);
    EXPECT_EQ(outcome->job_state, JobState::complete);
    const auto job = queue.get(intake.job.job_id).value();
    EXPECT_EQ(job.attempts, 2);
    EXPECT_EQ(job.worker_id, "worker-1");
}

TEST_F(WorkerTest, ResultWrittenBeforeCrashIsNotDuplicated) {
    const auto intake = submit(demo_png().value());
    // first worker writes the result but dies before completing the job
    auto claimed = queue.claim_next("crashed").value().value();
    auto image = decode_png(store.fetch_photo(BlobRef{BlobStrategy::inline_blob, intake.photo_id}).value()).value();
    InferenceResult r{claimed.job_id, detector.detect(image).value(), clock.now(), detector.id()};
    auto exam = store.load_exam(claimed.exam_id).value();
    ASSERT_TRUE(store.save_exam(record_result(exam.exam, FootSide::left, r).value(), exam.version));

    clock.advance(61s);
    Worker worker(store, queue, detector, WorkerConfig{});
    auto outcome = worker.run_once();
    ASSERT_TRUE(outcome);
    EXPECT_EQ(outcome->job_state, JobState::complete);
    EXPECT_EQ(store.load_exam(claimed.exam_id)->exam.foot(FootSide::left)->result, r);
}

TEST_F(WorkerTest, StoreOutageLeavesQueueIntact) {
    submit(demo_png().value());
    Worker worker(store, queue, detector, WorkerConfig{});
    store.set_fault_injection(true);
    EXPECT_EQ(worker.run_once().code(), ErrorCode::StorageFailure);
    store.set_fault_injection(false);
    EXPECT_EQ(worker.run_once()->job_state, JobState::complete);
}

TEST_F(WorkerTest, LoopProcessesInEnqueueOrder) {
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(submit(demo_png().value()).job.job_id);
    WorkerConfig cfg;
    cfg.poll_interval = 10ms;
    Worker worker(store, queue, detector, cfg, sink());
    {
        std::jthread loop([&](std::stop_token stop) { worker.run_loop(stop); });
        for (int i = 0; i < 500 && queue.stats()->complete < 5; ++i) std::this_thread::sleep_for(10ms);
    }
    EXPECT_EQ(queue.stats()->complete, 5);
    std::vector<std::string> completed;
    for (const auto& line : log) {
        if (line.rfind("completed ", 0) == 0) completed.push_back(line.substr(10, line.find(' ', 10) - 10));
    }
    EXPECT_EQ(completed, ids);
}

TEST_F(WorkerTest, LoopStopsPromptlyWhenIdle) {
    WorkerConfig cfg;
    cfg.poll_interval = 500ms;
    Worker worker(store, queue, detector, cfg);
    std::jthread loop([&](std::stop_token stop) { worker.run_loop(stop); });
    std::this_thread::sleep_for(50ms);
    const auto start = std::chrono::steady_clock::now();
    loop.request_stop();
    loop.join();
    EXPECT_LT(std::chrono::steady_clock::now() - start, 500ms);
}

TEST_F(WorkerTest, SeveralWorkersProcessEachJobOnce) {
    constexpr int kJobs = 30;
    std::set<std::string> expected;
    for (int i = 0; i < kJobs; ++i) expected.insert(submit(demo_png().value()).job.job_id);

    std::map<std::string, std::vector<std::string>> per_worker;
    std::mutex m;
    std::vector<std::jthread> threads;
    std::vector<std::unique_ptr<Worker>> workers;
    for (int w = 0; w < 3; ++w) {
        WorkerConfig cfg;
        cfg.worker_id = "w" + std::to_string(w);
        cfg.poll_interval = 5ms;
        workers.push_back(std::make_unique<Worker>(store, queue, detector, cfg, [&, id = cfg.worker_id](const std::string& line) {
            if (line.rfind("completed ", 0) != 0) return;
            std::lock_guard lock(m);
            per_worker[id].push_back(line.substr(10, line.find(' ', 10) - 10));
        }));
    }
    for (auto& w : workers) threads.emplace_back([&w](std::stop_token stop) { w->run_loop(stop); });
    for (int i = 0; i < 1000 && queue.stats()->complete < kJobs; ++i) std::this_thread::sleep_for(10ms);
    threads.clear();

    std::multiset<std::string> all;
    for (const auto& [_, jobs] : per_worker) all.insert(jobs.begin(), jobs.end());
    EXPECT_EQ(all.size(), static_cast<std::size_t>(kJobs));
    EXPECT_EQ(std::set<std::string>(all.begin(), all.end()), expected);
    for (const auto& id : expected) EXPECT_EQ(queue.get(id)->attempts, 1);
}

TEST(WorkerDeterminism, WorkerCountDoesNotChangeResults) {
    auto run = [](int n_workers) {
        Store store(testing::memory_store(), ManualClock().as_clock());
        JobQueue queue(store, QueueConfig{}, sequential_ids());
        RednessDetector detector;
        for (std::uint64_t seed = 1; seed <= 12; ++seed) {
            const auto id = "exam" + std::to_string(seed);
            auto exam = record_foot_details(open_exam(id, PatientRef{"P", "P"}, from_millis(0)), FootSide::right, true, 1);
            EXPECT_TRUE(store.save_exam(exam.value(), 0));
            EXPECT_TRUE(submit_photo(store, queue, id, FootSide::right, encode_png(skin_scene(seed).image).value(),
                                     "ph" + std::to_string(seed), from_millis(0)));
        }
        std::vector<std::unique_ptr<Worker>> workers;
        std::vector<std::jthread> threads;
        for (int w = 0; w < n_workers; ++w) {
            WorkerConfig cfg;
            cfg.worker_id = "w" + std::to_string(w);
            cfg.poll_interval = 5ms;
            workers.push_back(std::make_unique<Worker>(store, queue, detector, cfg));
        }
        for (auto& w : workers) threads.emplace_back([&w](std::stop_token stop) { w->run_loop(stop); });
        for (int i = 0; i < 1000 && queue.stats()->complete < 12; ++i) std::this_thread::sleep_for(10ms);
        threads.clear();
        std::map<std::string, std::vector<Detection>> results;
        for (const auto& id : store.list_exam_ids().value()) {
            results[id] = store.load_exam(id)->exam.foot(FootSide::right)->result.value().detections;
        }
        return results;
    };
    const auto one = run(1);
    EXPECT_EQ(one.size(), 12u);
    EXPECT_EQ(run(8), one);
}

}  // namespace
}  // namespace dfu
