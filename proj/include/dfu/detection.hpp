#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace dfu {

/// Axis-aligned box in pixel coordinates. `left`/`top` are inclusive.
struct BoundingBox {
    std::int32_t left = 0;
    std::int32_t top = 0;
    std::int32_t width = 0;
    std::int32_t height = 0;

    [[nodiscard]] constexpr std::int64_t area() const noexcept {
        return static_cast<std::int64_t>(width) * height;
    }
    [[nodiscard]] constexpr std::int32_t right() const noexcept { return left + width; }
    [[nodiscard]] constexpr std::int32_t bottom() const noexcept { return top + height; }

    [[nodiscard]] constexpr bool fits_within(std::int32_t image_width, std::int32_t image_height) const noexcept {
        return width >= 1 && height >= 1 && left >= 0 && top >= 0 && right() <= image_width &&
               bottom() <= image_height;
    }

    friend constexpr bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
    BoundingBox box;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Intersection over union; 0 when the boxes do not overlap.
[[nodiscard]] inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const std::int64_t ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.left, b.left));
    const std::int64_t iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top));
    const std::int64_t inter = ix * iy;
    const std::int64_t uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Canonical result order: confidence descending, then (top, left) ascending.
/// Width and height settle the remaining ties so the order is total.
[[nodiscard]] inline bool detection_order(const Detection& a, const Detection& b) noexcept {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.top != b.box.top) return a.box.top < b.box.top;
    if (a.box.left != b.box.left) return a.box.left < b.box.left;
    if (a.box.width != b.box.width) return a.box.width < b.box.width;
    return a.box.height < b.box.height;
}

inline void sort_detections(std::vector<Detection>& detections) {
    std::sort(detections.begin(), detections.end(), detection_order);
}

/// Greedy non-maximum suppression: keep the best remaining detection, drop
/// everything overlapping it by more than `iou_threshold`, repeat.
[[nodiscard]] inline std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
    sort_detections(detections);
    std::vector<Detection> kept;
    std::vector<bool> suppressed(detections.size(), false);
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(detections[i]);
        for (std::size_t j = i + 1; j < detections.size(); ++j) {
            if (!suppressed[j] && iou(detections[i].box, detections[j].box) > iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

}  // namespace dfu
