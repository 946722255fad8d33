#pragma once

// Exam workflow model. Every operation is a pure function from a record to
// either a new record or a typed rejection; the input is never modified.
//
// Per foot the only legal progression is
//     details -> photo -> result -> confirmation
// and once a photo is attached the foot's `checked` flag and ulcer count are
// frozen. A completed exam accepts no further changes.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfu/clock.hpp"
#include "dfu/detection.hpp"
#include "dfu/result.hpp"

namespace dfu {

enum class FootSide { left, right };

inline constexpr std::array<FootSide, 2> kFootSides{FootSide::left, FootSide::right};

[[nodiscard]] constexpr std::string_view to_string(FootSide side) noexcept {
    return side == FootSide::left ? "left" : "right";
}

[[nodiscard]] inline std::optional<FootSide> parse_foot_side(std::string_view s) noexcept {
    if (s == "left") return FootSide::left;
    if (s == "right") return FootSide::right;
    return std::nullopt;
}

enum class BlobStrategy { inline_blob, object_store };

[[nodiscard]] constexpr std::string_view to_string(BlobStrategy s) noexcept {
    return s == BlobStrategy::inline_blob ? "inline" : "object_store";
}

[[nodiscard]] inline std::optional<BlobStrategy> parse_blob_strategy(std::string_view s) noexcept {
    if (s == "inline") return BlobStrategy::inline_blob;
    if (s == "object_store") return BlobStrategy::object_store;
    return std::nullopt;
}

/// Strategy-tagged handle to stored photo bytes. `key` is the photo's unique id.
struct BlobRef {
    BlobStrategy strategy = BlobStrategy::inline_blob;
    std::string key;

    friend bool operator==(const BlobRef&, const BlobRef&) = default;
};

struct PatientRef {
    std::string patient_id;
    std::string qr_payload;

    friend bool operator==(const PatientRef&, const PatientRef&) = default;
};

/// The QR payload is the bare patient id.
[[nodiscard]] inline std::string qr_payload_for(std::string_view patient_id) { return std::string{patient_id}; }

[[nodiscard]] inline Result<PatientRef> make_patient(std::string patient_id) {
    if (patient_id.empty()) return make_error(ErrorCode::BadRequest, "patient_id must not be empty");
    auto payload = qr_payload_for(patient_id);
    return PatientRef{std::move(patient_id), std::move(payload)};
}

struct PhotographMeta {
    std::string photo_id;
    BlobRef blob;
    std::int32_t width = 0;
    std::int32_t height = 0;
    std::int64_t byte_size = 0;
    Timestamp uploaded_at{};

    friend bool operator==(const PhotographMeta&, const PhotographMeta&) = default;
};

struct InferenceResult {
    std::string job_id;
    std::vector<Detection> detections;  // canonical detection_order
    Timestamp completed_at{};
    std::string detector_id;

    friend bool operator==(const InferenceResult&, const InferenceResult&) = default;
};

struct ConfirmationRecord {
    bool agrees = false;
    Timestamp recorded_at{};

    friend bool operator==(const ConfirmationRecord&, const ConfirmationRecord&) = default;
};

struct FootRecord {
    FootSide side = FootSide::left;
    bool checked = false;
    std::int32_t visible_ulcer_count = 0;
    std::optional<PhotographMeta> photo;
    std::optional<InferenceResult> result;
    std::optional<ConfirmationRecord> confirmation;

    friend bool operator==(const FootRecord&, const FootRecord&) = default;
};

enum class ExamState { open, completed };

[[nodiscard]] constexpr std::string_view to_string(ExamState s) noexcept {
    return s == ExamState::open ? "open" : "completed";
}

struct ExamRecord {
    std::string exam_id;
    PatientRef patient;
    std::array<std::optional<FootRecord>, 2> feet;
    ExamState state = ExamState::open;
    Timestamp created_at{};
    std::optional<Timestamp> completed_at;

    [[nodiscard]] const std::optional<FootRecord>& foot(FootSide side) const {
        return feet[static_cast<std::size_t>(side)];
    }
    [[nodiscard]] std::optional<FootRecord>& foot(FootSide side) { return feet[static_cast<std::size_t>(side)]; }

    friend bool operator==(const ExamRecord&, const ExamRecord&) = default;
};

[[nodiscard]] inline ExamRecord open_exam(std::string exam_id, PatientRef patient, Timestamp now) {
    ExamRecord exam;
    exam.exam_id = std::move(exam_id);
    exam.patient = std::move(patient);
    exam.created_at = now;
    return exam;
}

[[nodiscard]] inline Result<ExamRecord> record_foot_details(const ExamRecord& exam, FootSide side, bool checked,
                                                            std::int32_t visible_ulcer_count) {
    if (exam.state == ExamState::completed) return make_error(ErrorCode::ExamCompleted);
    if (visible_ulcer_count < 0) return make_error(ErrorCode::NegativeCount, "visible_ulcer_count must be >= 0");
    const auto& existing = exam.foot(side);
    if (existing && existing->photo) {
        if (existing->checked != checked) {
            return make_error(ErrorCode::CheckedLocked,
                              std::string{to_string(side)} + " foot photo already uploaded; checked is locked");
        }
        if (existing->visible_ulcer_count != visible_ulcer_count) {
            return make_error(ErrorCode::CountLocked,
                              std::string{to_string(side)} + " foot photo already uploaded; ulcer count is locked");
        }
        return exam;
    }
    ExamRecord next = exam;
    auto& foot = next.foot(side);
    if (!foot) {
        foot.emplace();
        foot->side = side;
    }
    foot->checked = checked;
    foot->visible_ulcer_count = visible_ulcer_count;
    return next;
}

[[nodiscard]] inline Result<ExamRecord> attach_photo(const ExamRecord& exam, FootSide side, PhotographMeta meta) {
    if (exam.state == ExamState::completed) return make_error(ErrorCode::ExamCompleted);
    const auto& existing = exam.foot(side);
    if (!existing) return make_error(ErrorCode::NoFootDetails, "record foot details before uploading a photo");
    if (existing->photo) {
        return make_error(ErrorCode::DuplicateUpload,
                          std::string{to_string(side)} + " foot photo already uploaded");
    }
    if (meta.photo_id.empty() || meta.width < 1 || meta.height < 1 || meta.byte_size < 1) {
        return make_error(ErrorCode::BadImage, "photo metadata is incomplete");
    }
    ExamRecord next = exam;
    next.foot(side)->photo = std::move(meta);
    return next;
}

[[nodiscard]] inline Result<ExamRecord> record_result(const ExamRecord& exam, FootSide side, InferenceResult result) {
    if (exam.state == ExamState::completed) return make_error(ErrorCode::ExamCompleted);
    const auto& existing = exam.foot(side);
    if (!existing || !existing->photo) return make_error(ErrorCode::NoPhoto);
    if (existing->result) return make_error(ErrorCode::DuplicateResult);
    sort_detections(result.detections);
    ExamRecord next = exam;
    next.foot(side)->result = std::move(result);
    return next;
}

[[nodiscard]] inline Result<ExamRecord> record_confirmation(const ExamRecord& exam, FootSide side, bool agrees,
                                                            Timestamp now) {
    if (exam.state == ExamState::completed) return make_error(ErrorCode::ExamCompleted);
    const auto& existing = exam.foot(side);
    if (!existing || !existing->result) return make_error(ErrorCode::NoResult);
    if (existing->confirmation) return make_error(ErrorCode::DuplicateConfirmation);
    ExamRecord next = exam;
    next.foot(side)->confirmation = ConfirmationRecord{agrees, now};
    return next;
}

[[nodiscard]] inline Result<ExamRecord> complete_exam(const ExamRecord& exam, Timestamp now) {
    if (exam.state == ExamState::completed) return make_error(ErrorCode::ExamCompleted);
    bool any = false;
    for (const auto& foot : exam.feet) {
        if (!foot) continue;
        any = true;
        if (foot->photo && !foot->result) {
            return make_error(ErrorCode::PendingInference,
                              std::string{to_string(foot->side)} + " foot is awaiting its inference result");
        }
    }
    if (!any) return make_error(ErrorCode::NothingRecorded);
    for (const auto& foot : exam.feet) {
        if (foot && foot->result && !foot->confirmation) {
            return make_error(ErrorCode::PendingConfirmation,
                              std::string{to_string(foot->side)} + " foot result has not been confirmed");
        }
    }
    ExamRecord next = exam;
    next.state = ExamState::completed;
    next.completed_at = now;
    return next;
}

}  // namespace dfu
