// Smallest useful pipeline: one exam, one photo, one worker step, no HTTP.

#include <cstdio>

#include "dfu/dfu.hpp"

int main() {
    using namespace dfu;

    Store store(StoreConfig{});  // in-memory, inline blobs
    JobQueue queue(store);
    RednessDetector detector;
    Worker worker(store, queue, detector, WorkerConfig{});

    const auto patient = make_patient("P001").value();
    if (!store.put_patient(patient)) return 1;

    const auto exam = record_foot_details(open_exam("exam-1", patient, store.now()), FootSide::left, true, 1).value();
    if (!store.save_exam(exam, 0)) return 1;

    auto intake = submit_photo(store, queue, "exam-1", FootSide::left, demo_png().value(), "photo-1", store.now());
    if (!intake) {
        std::fprintf(stderr, "upload failed: %s\n", intake.error().to_string().c_str());
        return 1;
    }
    if (auto step = worker.run_once(); !step || !step->processed) return 1;

    const auto job = queue.get(intake->job.job_id).value();
    std::printf("job %s %s\n", job.job_id.c_str(), std::string{to_string(job.state)}.c_str());
    for (const auto& d : job.result->detections) {
        std::printf("box=(%d,%d,%d,%d) confidence=%.3f\n", d.box.left, d.box.top, d.box.width, d.box.height,
                    d.confidence);
    }

    auto loaded = store.load_exam("exam-1").value();
    auto confirmed = record_confirmation(loaded.exam, FootSide::left, true, store.now()).value();
    auto done = complete_exam(confirmed, store.now());
    if (!done) {
        std::fprintf(stderr, "cannot complete: %s\n", done.error().to_string().c_str());
        return 1;
    }
    if (!store.save_exam(*done, loaded.version)) return 1;
    std::printf("exam %s %s\n", done->exam_id.c_str(), std::string{to_string(done->state)}.c_str());
    return 0;
}
