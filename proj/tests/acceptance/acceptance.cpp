// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dfu/dfu.hpp"
#include "support/brute_force_detector.hpp"
#include "support/differential.hpp"
#include "support/fixtures.hpp"
#include "support/workflow_model.hpp"

namespace {

using namespace dfu;
using namespace std::chrono_literals;
using testing::TempDir;

constexpr double kConfidenceTolerance = 1e-9;
constexpr double kMatchIou = 0.9;
constexpr auto kDemoBudget = 5s;
constexpr std::size_t kAveragePhotoBytes = 61'440;

struct Verdict {
    bool pass = false;
    std::string detail;
};

Verdict verdict(bool pass, const std::string& detail) { return Verdict{pass, detail}; }

std::string seconds(std::chrono::steady_clock::duration d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3fs", std::chrono::duration<double>(d).count());
    return buf;
}

struct Shell {
    int exit_code = -1;
    std::string output;
};

Shell shell(const std::string& cmd) {
    Shell r;
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::size_t occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

Verdict end_to_end_demo() {
#ifndef DFU_ADMIN_PATH
    return verdict(false, "dfu-admin was not built");
#else
    TempDir dir;
    const std::string admin = std::string{"'"} + DFU_ADMIN_PATH + "'";
    const std::string store = " --store '" + (dir / "dfu.sqlite").string() + "'";
    const std::string png = (dir / "foot.png").string();
    if (shell(admin + " synth-png --out '" + png + "' --size " + std::to_string(kAveragePhotoBytes)).exit_code != 0) {
        return verdict(false, "cannot write the test photo");
    }
    if (fs::file_size(png) != kAveragePhotoBytes) return verdict(false, "test photo has the wrong size");

    const auto start = std::chrono::steady_clock::now();
    const auto seeded = shell(admin + store + " seed-patient --id P001");
    const auto demo = shell(admin + store + " demo-exam --patient P001 --image '" + png + "'");
    const auto elapsed = std::chrono::steady_clock::now() - start;

    const auto queue = shell(admin + store + " queue");
    const bool flow_ok = seeded.exit_code == 0 && demo.exit_code == 0 &&
                         occurrences(demo.output, "box=(20,30,20,20) confidence=1.000\n") == 2 &&
                         occurrences(demo.output, "exam completed ") == 1 &&
                         queue.output == "pending=0 in_progress=0 complete=2 failed=0\n";
    if (!flow_ok) return verdict(false, "demo-exam exit " + std::to_string(demo.exit_code) + ": " + demo.output);
    return verdict(elapsed < kDemoBudget, "2 feet x " + std::to_string(kAveragePhotoBytes) + " B, wall " +
                                              seconds(elapsed) + " (budget " + seconds(kDemoBudget) + ")");
#endif
}

Verdict state_machine_soundness() {
    std::uint64_t sequences = 0, violations = 0, mismatches = 0;
    std::vector<std::string> failures;
    auto absorb = [&](const testing::EnumerationReport& r, std::uint64_t expected_sequences) {
        sequences += r.sequences;
        violations += r.rule_violations + r.completed_mutations;
        mismatches += r.oracle_mismatches + r.impure_rejections;
        if (r.sequences != expected_sequences) ++mismatches;
        failures.insert(failures.end(), r.first_failures.begin(), r.first_failures.end());
    };
    auto all_sequences = [](std::uint64_t alphabet, int depth) {
        std::uint64_t total = 0, term = 1;
        for (int i = 0; i < depth; ++i) total += (term *= alphabet);
        return total;
    };
    for (auto side : kFootSides) {
        const auto alphabet = testing::single_foot_alphabet(side);
        absorb(testing::enumerate_sequences(alphabet, 6), all_sequences(alphabet.size(), 6));
    }
    const auto both = testing::two_feet_alphabet();
    absorb(testing::enumerate_sequences(both, 6), all_sequences(both.size(), 6));
    std::string detail = std::to_string(sequences) + " sequences, " + std::to_string(violations) +
                         " rule violations, " + std::to_string(mismatches) + " model mismatches";
    if (!failures.empty()) detail += "; first: " + failures.front();
    return verdict(violations == 0 && mismatches == 0, detail);
}

Verdict fifo_order() {
    constexpr int kJobs = 1000;
    Store store(testing::memory_store());
    JobQueue queue(store);
    RednessDetector detector;
    std::vector<std::string> completed;
    std::mutex m;
    WorkerConfig cfg;
    cfg.poll_interval = 1ms;
    Worker worker(store, queue, detector, cfg, [&](const std::string& line) {
        if (line.rfind("completed ", 0) != 0) return;
        std::lock_guard lock(m);
        completed.push_back(line.substr(10, line.find(' ', 10) - 10));
    });
    const Bytes png = encode_png(planted_squares(24, 24, {BoundingBox{4, 4, 8, 8}})).value();
    const PatientRef patient = make_patient("P001").value();

    std::vector<std::string> enqueued;
    std::mt19937_64 rng(3141);
    std::uniform_int_distribution<int> pause_us(0, 400);
    {
        std::jthread loop([&](std::stop_token stop) { worker.run_loop(stop); });
        for (int i = 0; i < kJobs; ++i) {
            const std::string exam_id = "exam" + std::to_string(i);
            const auto side = i % 2 ? FootSide::right : FootSide::left;
            auto exam = record_foot_details(open_exam(exam_id, patient, store.now()), side, true, 1);
            if (!exam || !store.save_exam(*exam, 0)) return verdict(false, "cannot create " + exam_id);
            auto intake = submit_photo(store, queue, exam_id, side, png, "photo" + std::to_string(i), store.now());
            if (!intake) return verdict(false, "enqueue failed: " + intake.error().to_string());
            enqueued.push_back(intake->job.job_id);
            std::this_thread::sleep_for(std::chrono::microseconds(pause_us(rng)));
        }
        const auto deadline = std::chrono::steady_clock::now() + 120s;
        for (;;) {
            auto s = queue.stats();
            if ((s && s->complete >= kJobs) || std::chrono::steady_clock::now() >= deadline) break;
            std::this_thread::sleep_for(5ms);
        }
    }
    std::size_t first_diff = 0;
    while (first_diff < std::min(enqueued.size(), completed.size()) && enqueued[first_diff] == completed[first_diff]) {
        ++first_diff;
    }
    const bool same = completed == enqueued;
    return verdict(same, std::to_string(completed.size()) + "/" + std::to_string(kJobs) +
                             " completed, order " + (same ? "identical" : "differs at position " +
                                                                             std::to_string(first_diff)));
}

Verdict at_most_once_claim() {
    constexpr int kIterations = 1000, kClaimers = 8, kJobs = 200;
    std::uint64_t claims = 0, duplicates = 0, checkpoints = 0, broken_checkpoints = 0;
    const InferenceResult result{"", {}, from_millis(0), "acceptance"};

    for (int it = 0; it < kIterations; ++it) {
        Store store(testing::memory_store());
        JobQueue queue(store, QueueConfig{}, sequential_ids(static_cast<std::uint64_t>(it)));
        for (int j = 0; j < kJobs; ++j) {
            const auto photo = "ph" + std::to_string(j);
            if (!store.store_photo(Bytes{1}, photo) || !queue.enqueue("e" + std::to_string(j), FootSide::left, photo)) {
                return verdict(false, "setup failed");
            }
        }
        auto conserved = [&] {
            auto s = queue.stats();
            ++checkpoints;
            if (!s || s->pending + s->in_progress + s->complete + s->failed != kJobs) ++broken_checkpoints;
        };

        std::vector<std::vector<std::string>> got(kClaimers);
        std::atomic<bool> racing{true};
        std::thread monitor([&] {
            while (racing) conserved();
        });
        std::vector<std::thread> claimers;
        for (int w = 0; w < kClaimers; ++w) {
            claimers.emplace_back([&, w] {
                const std::string id = "w" + std::to_string(w);
                for (int n = 0;; ++n) {
                    auto c = queue.claim_next(id);
                    if (!c || !c->has_value()) return;
                    const auto& job = **c;
                    got[static_cast<std::size_t>(w)].push_back(job.job_id);
                    // leave some in progress, finish the rest one way or the other
                    if (n % 3 == 1) (void)queue.complete(job.job_id, result);
                    if (n % 3 == 2) (void)queue.fail(job.job_id, "acceptance", 1);
                }
            });
        }
        for (auto& t : claimers) t.join();
        racing = false;
        monitor.join();
        conserved();

        std::multiset<std::string> all;
        for (const auto& g : got) all.insert(g.begin(), g.end());
        claims += all.size();
        duplicates += all.size() - std::set<std::string>(all.begin(), all.end()).size();
        if (all.size() != static_cast<std::size_t>(kJobs)) ++broken_checkpoints;
    }
    return verdict(duplicates == 0 && broken_checkpoints == 0,
                   std::to_string(kIterations) + " iterations, " + std::to_string(claims) + " claims, " +
                       std::to_string(duplicates) + " duplicates, " + std::to_string(broken_checkpoints) + "/" +
                       std::to_string(checkpoints) + " checkpoints violating conservation");
}

Verdict detector_oracle() {
    constexpr int kImages = 1000;
    std::mt19937_64 rng(777);
    DetectorConfig loose;
    loose.min_area_floor = 2;
    loose.report_threshold = 0.25;
    loose.nms_iou = 0.3;
    int compared = 0, mismatched = 0;
    double worst = 0.0;
    for (int i = 0; i < kImages; ++i) {
        const auto img = testing::random_image(rng);
        for (const auto& cfg : {DetectorConfig{}, loose}) {
            auto got = detect(img, cfg);
            const auto want = testing::brute_force_detect(img, cfg);
            bool same = got && got->size() == want.size();
            for (std::size_t k = 0; same && k < want.size(); ++k) {
                const auto& d = (*got)[k];
                same = d.box == BoundingBox{want[k].left, want[k].top, want[k].width, want[k].height};
                worst = std::max(worst, std::abs(d.confidence - want[k].confidence));
                same = same && std::abs(d.confidence - want[k].confidence) <= kConfidenceTolerance;
            }
            if (got) compared += static_cast<int>(got->size());
            if (!same) ++mismatched;
        }
    }
    char worst_s[32];
    std::snprintf(worst_s, sizeof worst_s, "%.1e", worst);
    return verdict(mismatched == 0, std::to_string(kImages) + " images x 2 configs, " + std::to_string(compared) +
                                        " detections, " + std::to_string(mismatched) +
                                        " mismatched outputs, max confidence error " + worst_s);
}

Verdict synthetic_quality() {
    constexpr std::uint64_t kScenes = 100;
    std::size_t detections = 0, truths = 0, matched = 0;
    for (std::uint64_t seed = 1; seed <= kScenes; ++seed) {
        const auto scene = skin_scene(seed);
        auto got = detect(scene.image, DetectorConfig{});
        if (!got) return verdict(false, "detect failed on scene " + std::to_string(seed));
        detections += got->size();
        truths += scene.lesions.size();
        std::vector<bool> used(scene.lesions.size(), false);
        for (const auto& d : *got) {
            std::optional<std::size_t> best;
            double best_iou = kMatchIou;
            for (std::size_t t = 0; t < scene.lesions.size(); ++t) {
                const double v = iou(d.box, scene.lesions[t]);
                if (!used[t] && v >= best_iou) {
                    best = t;
                    best_iou = v;
                }
            }
            if (best) {
                used[*best] = true;
                ++matched;
            }
        }
    }
    const double precision = detections ? static_cast<double>(matched) / static_cast<double>(detections) : 0.0;
    const double recall = truths ? static_cast<double>(matched) / static_cast<double>(truths) : 0.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%llu scenes, %zu lesions, %zu detections, precision=%.4f recall=%.4f at IoU>=%.1f",
                  static_cast<unsigned long long>(kScenes), truths, detections, precision, recall, kMatchIou);
    return verdict(matched == detections && matched == truths, buf);
}

Bytes blob_for(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> log_size(0, 17);  // 1 B to 256 KiB
    std::uniform_int_distribution<std::size_t> jitter(0, 1000);
    const std::size_t n = std::max<std::size_t>(1, (std::size_t{1} << log_size(rng)) + jitter(rng));
    return testing::random_bytes(rng, n);
}

Verdict persistence_round_trip() {
    constexpr int kBlobs = 200;
    int fetched = 0, differing = 0;
    std::size_t acked_total = 0, lost = 0;
    for (auto strategy : {BlobStrategy::inline_blob, BlobStrategy::object_store}) {
        TempDir dir;
        const auto cfg = testing::file_store(dir, strategy);
        {
            Store store(cfg);
            for (int i = 0; i < kBlobs; ++i) {
                const auto bytes = blob_for(static_cast<std::uint64_t>(i));
                auto ref = store.store_photo(bytes, "blob" + std::to_string(i));
                auto back = ref ? store.fetch_photo(*ref) : Result<Bytes>{ref.error()};
                ++fetched;
                if (!back || *back != bytes) ++differing;
            }
        }
        Store reopened(cfg);
        for (int i = 0; i < kBlobs; ++i) {
            auto ref = reopened.find_photo("blob" + std::to_string(i));
            auto back = ref ? reopened.fetch_photo(*ref) : Result<Bytes>{ref.error()};
            ++fetched;
            if (!back || *back != blob_for(static_cast<std::uint64_t>(i))) ++differing;
        }

        // a writer killed mid-stream must keep every commit it acknowledged
        TempDir crash_dir;
        const auto crash_cfg = testing::file_store(crash_dir, strategy);
        { Store init(crash_cfg); }
        int fds[2];
        if (::pipe(fds) != 0) return verdict(false, "pipe failed");
        std::cout.flush();
        const pid_t pid = ::fork();
        if (pid < 0) return verdict(false, "fork failed");
        if (pid == 0) {
            ::close(fds[0]);
            Store store(crash_cfg);
            JobQueue queue(store);
            const PatientRef patient{"P001", "P001"};
            for (std::uint64_t i = 0;; ++i) {
                const std::string n = std::to_string(i);
                auto ok = store.atomically([&]() -> Status {
                    if (auto v = store.save_exam(open_exam("exam" + n, patient, from_millis(0)), 0); !v) return v.error();
                    if (auto r = store.store_photo(blob_for(1000 + i), "photo" + n); !r) return r.error();
                    if (auto j = queue.enqueue("exam" + n, FootSide::left, "photo" + n); !j) return j.error();
                    return {};
                });
                if (!ok) ::_exit(3);
                const std::string line = n + "\n";
                if (::write(fds[1], line.data(), line.size()) < 0) ::_exit(4);
            }
        }
        ::close(fds[1]);
        std::string acked;
        char buf[4096];
        while (std::count(acked.begin(), acked.end(), '\n') < 60) {
            const auto n = ::read(fds[0], buf, sizeof buf);
            if (n <= 0) break;
            acked.append(buf, static_cast<std::size_t>(n));
        }
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
        for (ssize_t n; (n = ::read(fds[0], buf, sizeof buf)) > 0;) acked.append(buf, static_cast<std::size_t>(n));
        ::close(fds[0]);

        Store restarted(crash_cfg);
        JobQueue queue(restarted);
        std::istringstream lines(acked);
        std::size_t acked_here = 0;
        for (std::string n; std::getline(lines, n);) {
            ++acked_here;
            auto exam = restarted.load_exam("exam" + n);
            auto ref = restarted.find_photo("photo" + n);
            auto bytes = ref ? restarted.fetch_photo(*ref) : Result<Bytes>{ref.error()};
            auto jobs = queue.jobs_for_photo("photo" + n);
            if (!exam || !bytes || *bytes != blob_for(1000 + std::stoull(n)) || !jobs || jobs->size() != 1) ++lost;
        }
        if (acked_here < 60) ++lost;
        acked_total += acked_here;
    }
    return verdict(differing == 0 && lost == 0,
                   std::to_string(fetched) + " fetches over both strategies, " + std::to_string(differing) +
                       " differing; " + std::to_string(acked_total) + " commits acknowledged before SIGKILL, " +
                       std::to_string(lost) + " lost");
}

Verdict http_differential() {
    constexpr int kSeeds = 20, kRequests = 200;
    int requests = 0, accepted = 0, code_mismatches = 0, state_mismatches = 0;
    std::string first;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const auto r = testing::run_differential(static_cast<std::uint64_t>(seed), kRequests);
        requests += r.requests;
        accepted += r.accepted;
        code_mismatches += r.code_mismatches;
        state_mismatches += r.state_mismatches;
        if (first.empty() && !r.first_failures.empty()) first = r.first_failures.front();
    }
    std::string detail = std::to_string(requests) + " requests (" + std::to_string(accepted) + " accepted), " +
                         std::to_string(code_mismatches) + " error-code mismatches, " +
                         std::to_string(state_mismatches) + " exam-state mismatches";
    if (!first.empty()) detail += "; first: " + first;
    return verdict(code_mismatches == 0 && state_mismatches == 0, detail);
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"end-to-end demo exam", end_to_end_demo},
        {"state machine soundness", state_machine_soundness},
        {"FIFO completion order", fifo_order},
        {"at-most-once claim", at_most_once_claim},
        {"detector oracle equivalence", detector_oracle},
        {"synthetic detection quality", synthetic_quality},
        {"persistence round trip", persistence_round_trip},
        {"HTTP differential", http_differential},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = verdict(false, std::string{"exception: "} + e.what());
        }
        if (!v.pass) ++failed;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " ["
                  << seconds(std::chrono::steady_clock::now() - start) << "]" << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
