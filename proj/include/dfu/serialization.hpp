#pragma once

// JSON mapping for domain records. The same representation is used for
// storage and on the wire, so a record that leaves the server is byte-for-byte
// the record that sits in the store.

#include <json.hpp>

#include <optional>
#include <string>

#include "dfu/domain.hpp"

namespace dfu {

using Json = nlohmann::json;

namespace detail {
template <class T>
Json optional_to_json(const std::optional<T>& value) {
    if (!value) return nullptr;
    return Json(*value);
}

template <class T>
std::optional<T> optional_from_json(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->template get<T>();
}

inline Json ts(Timestamp t) { return to_millis(t); }
inline Timestamp ts(const Json& j) { return from_millis(j.get<std::int64_t>()); }
}  // namespace detail

inline void to_json(Json& j, FootSide side) { j = std::string{to_string(side)}; }
inline void from_json(const Json& j, FootSide& side) {
    auto parsed = parse_foot_side(j.get<std::string>());
    if (!parsed) throw Json::type_error::create(302, "invalid foot side", &j);
    side = *parsed;
}

inline void to_json(Json& j, const BoundingBox& b) {
    j = Json{{"left", b.left}, {"top", b.top}, {"width", b.width}, {"height", b.height}};
}
inline void from_json(const Json& j, BoundingBox& b) {
    j.at("left").get_to(b.left);
    j.at("top").get_to(b.top);
    j.at("width").get_to(b.width);
    j.at("height").get_to(b.height);
}

/// Detections are flattened: {left, top, width, height, confidence}.
inline void to_json(Json& j, const Detection& d) {
    to_json(j, d.box);
    j["confidence"] = d.confidence;
}
inline void from_json(const Json& j, Detection& d) {
    from_json(j, d.box);
    j.at("confidence").get_to(d.confidence);
}

inline void to_json(Json& j, const BlobRef& b) {
    j = Json{{"strategy", std::string{to_string(b.strategy)}}, {"key", b.key}};
}
inline void from_json(const Json& j, BlobRef& b) {
    auto s = parse_blob_strategy(j.at("strategy").get<std::string>());
    if (!s) throw Json::type_error::create(302, "invalid blob strategy", &j);
    b.strategy = *s;
    j.at("key").get_to(b.key);
}

inline void to_json(Json& j, const PatientRef& p) {
    j = Json{{"patient_id", p.patient_id}, {"qr_payload", p.qr_payload}};
}
inline void from_json(const Json& j, PatientRef& p) {
    j.at("patient_id").get_to(p.patient_id);
    j.at("qr_payload").get_to(p.qr_payload);
}

inline void to_json(Json& j, const PhotographMeta& m) {
    j = Json{{"photo_id", m.photo_id},   {"blob", m.blob},           {"width", m.width},
             {"height", m.height},       {"byte_size", m.byte_size}, {"uploaded_at", detail::ts(m.uploaded_at)}};
}
inline void from_json(const Json& j, PhotographMeta& m) {
    j.at("photo_id").get_to(m.photo_id);
    j.at("blob").get_to(m.blob);
    j.at("width").get_to(m.width);
    j.at("height").get_to(m.height);
    j.at("byte_size").get_to(m.byte_size);
    m.uploaded_at = detail::ts(j.at("uploaded_at"));
}

inline void to_json(Json& j, const InferenceResult& r) {
    j = Json{{"job_id", r.job_id},
             {"detections", r.detections},
             {"completed_at", detail::ts(r.completed_at)},
             {"detector_id", r.detector_id}};
}
inline void from_json(const Json& j, InferenceResult& r) {
    j.at("job_id").get_to(r.job_id);
    j.at("detections").get_to(r.detections);
    r.completed_at = detail::ts(j.at("completed_at"));
    j.at("detector_id").get_to(r.detector_id);
}

inline void to_json(Json& j, const ConfirmationRecord& c) {
    j = Json{{"agrees", c.agrees}, {"recorded_at", detail::ts(c.recorded_at)}};
}
inline void from_json(const Json& j, ConfirmationRecord& c) {
    j.at("agrees").get_to(c.agrees);
    c.recorded_at = detail::ts(j.at("recorded_at"));
}

inline void to_json(Json& j, const FootRecord& f) {
    j = Json{{"side", f.side},
             {"checked", f.checked},
             {"visible_ulcer_count", f.visible_ulcer_count},
             {"photo", detail::optional_to_json(f.photo)},
             {"result", detail::optional_to_json(f.result)},
             {"confirmation", detail::optional_to_json(f.confirmation)}};
}
inline void from_json(const Json& j, FootRecord& f) {
    j.at("side").get_to(f.side);
    j.at("checked").get_to(f.checked);
    j.at("visible_ulcer_count").get_to(f.visible_ulcer_count);
    f.photo = detail::optional_from_json<PhotographMeta>(j, "photo");
    f.result = detail::optional_from_json<InferenceResult>(j, "result");
    f.confirmation = detail::optional_from_json<ConfirmationRecord>(j, "confirmation");
}

inline void to_json(Json& j, const ExamRecord& e) {
    Json feet = Json::object();
    for (auto side : kFootSides) feet[std::string{to_string(side)}] = detail::optional_to_json(e.foot(side));
    j = Json{{"exam_id", e.exam_id},
             {"patient", e.patient},
             {"state", std::string{to_string(e.state)}},
             {"feet", std::move(feet)},
             {"created_at", detail::ts(e.created_at)},
             {"completed_at", e.completed_at ? detail::ts(*e.completed_at) : Json(nullptr)}};
}
inline void from_json(const Json& j, ExamRecord& e) {
    j.at("exam_id").get_to(e.exam_id);
    j.at("patient").get_to(e.patient);
    const auto state = j.at("state").get<std::string>();
    if (state == "open") {
        e.state = ExamState::open;
    } else if (state == "completed") {
        e.state = ExamState::completed;
    } else {
        throw Json::type_error::create(302, "invalid exam state", &j);
    }
    const auto& feet = j.at("feet");
    for (auto side : kFootSides) e.foot(side) = detail::optional_from_json<FootRecord>(feet, to_string(side).data());
    e.created_at = detail::ts(j.at("created_at"));
    const auto& completed = j.at("completed_at");
    e.completed_at = completed.is_null() ? std::nullopt : std::optional<Timestamp>{detail::ts(completed)};
}

}  // namespace dfu
