#pragma once

// Detector interface plus the deterministic redness-blob reference detector.
//
// The reference algorithm:
//   1. redness = R/255 - max(G,B)/255; a pixel is a candidate when
//      redness >= redness_threshold and R >= min_red_channel
//   2. 4-connected components over candidate pixels
//   3. components smaller than max(min_area_floor, min_area_fraction * W * H)
//      are discarded
//   4. box = tight rectangle, confidence = min(1, 2 * mean redness)
//   5. greedy NMS at IoU > nms_iou
//   6. detections below report_threshold are dropped; canonical ordering

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfu/detection.hpp"
#include "dfu/result.hpp"

namespace dfu {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

/// Decoded photograph, row-major.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(std::int32_t width, std::int32_t height, Rgb fill = {})
        : width_(std::max(0, width)), height_(std::max(0, height)),
          pixels_(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_), fill) {}
    RasterImage(std::int32_t width, std::int32_t height, std::vector<Rgb> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels)) {
        if (width < 0 || height < 0 ||
            pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
            throw std::invalid_argument("pixel count must equal width * height");
        }
    }

    [[nodiscard]] std::int32_t width() const noexcept { return width_; }
    [[nodiscard]] std::int32_t height() const noexcept { return height_; }
    [[nodiscard]] bool empty() const noexcept { return pixels_.empty(); }
    [[nodiscard]] const std::vector<Rgb>& pixels() const noexcept { return pixels_; }

    [[nodiscard]] Rgb& at(std::int32_t x, std::int32_t y) { return pixels_[index(x, y)]; }
    [[nodiscard]] const Rgb& at(std::int32_t x, std::int32_t y) const { return pixels_[index(x, y)]; }

    void fill_rect(const BoundingBox& box, Rgb colour) {
        for (std::int32_t y = std::max(0, box.top); y < std::min(height_, box.bottom()); ++y) {
            for (std::int32_t x = std::max(0, box.left); x < std::min(width_, box.right()); ++x) at(x, y) = colour;
        }
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    [[nodiscard]] std::size_t index(std::int32_t x, std::int32_t y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    std::int32_t width_ = 0;
    std::int32_t height_ = 0;
    std::vector<Rgb> pixels_;
};

struct DetectorConfig {
    double redness_threshold = 0.15;
    std::int32_t min_red_channel = 80;
    double min_area_fraction = 0.0005;
    std::int32_t min_area_floor = 25;
    double report_threshold = 0.5;
    double nms_iou = 0.5;

    [[nodiscard]] Status validate() const {
        if (!(redness_threshold > 0.0 && redness_threshold < 1.0))
            return make_error(ErrorCode::InvalidConfig, "redness_threshold must be in (0,1)");
        if (min_red_channel < 0 || min_red_channel > 255)
            return make_error(ErrorCode::InvalidConfig, "min_red_channel must be in [0,255]");
        if (!(min_area_fraction >= 0.0 && min_area_fraction <= 1.0))
            return make_error(ErrorCode::InvalidConfig, "min_area_fraction must be in [0,1]");
        if (min_area_floor < 1) return make_error(ErrorCode::InvalidConfig, "min_area_floor must be >= 1");
        if (!(report_threshold >= 0.0 && report_threshold <= 1.0))
            return make_error(ErrorCode::InvalidConfig, "report_threshold must be in [0,1]");
        if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) return make_error(ErrorCode::InvalidConfig, "nms_iou must be in [0,1]");
        return {};
    }

    friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

[[nodiscard]] inline double redness(Rgb p) noexcept {
    return static_cast<double>(p.r) / 255.0 - static_cast<double>(std::max(p.g, p.b)) / 255.0;
}

namespace detail {

class DisjointSet {
public:
    std::int32_t make() {
        parent_.push_back(static_cast<std::int32_t>(parent_.size()));
        return parent_.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent_[static_cast<std::size_t>(x)] != x) {
            auto& p = parent_[static_cast<std::size_t>(x)];
            p = parent_[static_cast<std::size_t>(p)];
            x = p;
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent_[static_cast<std::size_t>(a)] = b;
    }
    [[nodiscard]] std::size_t size() const noexcept { return parent_.size(); }

private:
    std::vector<std::int32_t> parent_;
};

struct ComponentStats {
    std::int64_t area = 0;
    std::int64_t redness_units = 0;  // sum of R - max(G,B), exact in any visiting order
    std::int32_t min_x = 0, min_y = 0, max_x = -1, max_y = -1;
};

}  // namespace detail

/// Reference detector as a free function. Pure: equal inputs give equal output.
[[nodiscard]] inline Result<std::vector<Detection>> detect(const RasterImage& image, const DetectorConfig& config) {
    if (image.width() < 1 || image.height() < 1) return make_error(ErrorCode::ZeroSizeImage);
    if (auto ok = config.validate(); !ok) return ok.error();

    const auto w = image.width();
    const auto h = image.height();
    std::vector<std::int32_t> labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1);
    std::vector<std::int32_t> red(labels.size(), 0);
    detail::DisjointSet sets;

    // First pass: provisional labels from the west and north neighbours.
    for (std::int32_t y = 0; y < h; ++y) {
        for (std::int32_t x = 0; x < w; ++x) {
            const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            const Rgb p = image.at(x, y);
            const double r = redness(p);
            if (!(r >= config.redness_threshold && p.r >= config.min_red_channel)) continue;
            red[idx] = p.r - std::max(p.g, p.b);
            const std::int32_t west = x > 0 ? labels[idx - 1] : -1;
            const std::int32_t north = y > 0 ? labels[idx - static_cast<std::size_t>(w)] : -1;
            if (west < 0 && north < 0) {
                labels[idx] = sets.make();
            } else if (west >= 0 && north >= 0) {
                labels[idx] = std::min(west, north);
                sets.unite(west, north);
            } else {
                labels[idx] = std::max(west, north);
            }
        }
    }

    // Second pass: accumulate per-root statistics.
    std::vector<detail::ComponentStats> stats(sets.size());
    for (std::int32_t y = 0; y < h; ++y) {
        for (std::int32_t x = 0; x < w; ++x) {
            const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            if (labels[idx] < 0) continue;
            auto& s = stats[static_cast<std::size_t>(sets.find(labels[idx]))];
            if (s.area == 0) {
                s.min_x = s.max_x = x;
                s.min_y = s.max_y = y;
            } else {
                s.min_x = std::min(s.min_x, x);
                s.max_x = std::max(s.max_x, x);
                s.min_y = std::min(s.min_y, y);
                s.max_y = std::max(s.max_y, y);
            }
            ++s.area;
            s.redness_units += red[idx];
        }
    }

    const double min_area = std::max(static_cast<double>(config.min_area_floor),
                                     config.min_area_fraction * static_cast<double>(w) * static_cast<double>(h));
    std::vector<Detection> candidates;
    for (const auto& s : stats) {
        if (s.area == 0 || static_cast<double>(s.area) < min_area) continue;
        Detection d;
        d.box = BoundingBox{s.min_x, s.min_y, s.max_x - s.min_x + 1, s.max_y - s.min_y + 1};
        d.confidence = std::min(1.0, static_cast<double>(2 * s.redness_units) / (255.0 * static_cast<double>(s.area)));
        candidates.push_back(d);
    }

    auto kept = nms(std::move(candidates), config.nms_iou);
    std::erase_if(kept, [&](const Detection& d) { return d.confidence < config.report_threshold; });
    sort_detections(kept);
    return kept;
}

/// Anything that can turn a decoded photograph into detections.
class Detector {
public:
    virtual ~Detector() = default;
    [[nodiscard]] virtual Result<std::vector<Detection>> detect(const RasterImage& image) const = 0;
    /// Recorded with every result so stored outcomes name their producer.
    [[nodiscard]] virtual std::string id() const = 0;
};

class RednessDetector final : public Detector {
public:
    explicit RednessDetector(DetectorConfig config = {}) : config_(config) {}

    [[nodiscard]] Result<std::vector<Detection>> detect(const RasterImage& image) const override {
        return dfu::detect(image, config_);
    }
    [[nodiscard]] std::string id() const override { return "redness-blob/1"; }
    [[nodiscard]] const DetectorConfig& config() const noexcept { return config_; }

private:
    DetectorConfig config_;
};

}  // namespace dfu
