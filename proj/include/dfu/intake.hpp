#pragma once

// Accepting an uploaded photograph: attach it to the exam, store the bytes
// and enqueue the inference job as one transaction.

#include <string>

#include "dfu/domain.hpp"
#include "dfu/job_queue.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"
#include "dfu/store.hpp"

namespace dfu {

struct PhotoIntake {
    std::string photo_id;
    Job job;
};

/// `bytes` must already be within the store's size cap. Retries once when a
/// concurrent writer bumps the exam version between load and save.
[[nodiscard]] inline Result<PhotoIntake> submit_photo(Store& store, JobQueue& queue, const std::string& exam_id,
                                                      FootSide side, std::span<const std::uint8_t> bytes,
                                                      const std::string& photo_id, Timestamp now) {
    auto image = decode_png(bytes);
    if (!image) return image.error();
    const PhotographMeta meta{photo_id,
                              BlobRef{store.config().blob_strategy, photo_id},
                              image->width(),
                              image->height(),
                              static_cast<std::int64_t>(bytes.size()),
                              now};
    for (int attempt = 0;; ++attempt) {
        auto loaded = store.load_exam(exam_id);
        if (!loaded) return loaded.error();
        auto next = attach_photo(loaded->exam, side, meta);
        if (!next) return next.error();
        auto job = store.atomically([&]() -> Result<Job> {
            if (auto saved = store.save_exam(*next, loaded->version); !saved) return saved.error();
            if (auto blob = store.store_photo(bytes, photo_id); !blob) return blob.error();
            return queue.enqueue(exam_id, side, photo_id);
        });
        if (job) return PhotoIntake{photo_id, std::move(*job)};
        if (job.code() != ErrorCode::VersionConflict || attempt >= 1) return job.error();
    }
}

}  // namespace dfu
