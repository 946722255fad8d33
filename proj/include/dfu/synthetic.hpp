#pragma once

// Synthetic photographs with known ground truth, for smoke tests, demos and
// the detection-quality suite.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "dfu/detector.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"

namespace dfu {

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kPureRed{255, 0, 0};

/// Solid background with solid rectangles painted on it.
[[nodiscard]] inline RasterImage planted_squares(std::int32_t width, std::int32_t height,
                                                 const std::vector<BoundingBox>& boxes, Rgb background = kWhite,
                                                 Rgb lesion = kPureRed) {
    RasterImage image(width, height, background);
    for (const auto& b : boxes) image.fill_rect(b, lesion);
    return image;
}

/// 100x100 white image with a pure-red 20x20 square at (20,30), optionally
/// padded to an exact file size.
[[nodiscard]] inline Result<Bytes> demo_png(std::size_t target_size = 0) {
    auto png = encode_png(planted_squares(100, 100, {BoundingBox{20, 30, 20, 20}}));
    if (!png || target_size == 0) return png;
    return pad_png(*png, target_size);
}

struct SyntheticScene {
    RasterImage image;
    std::vector<BoundingBox> lesions;
};

/// Skin-toned background with mild noise and brownish blemishes that stay
/// below the redness threshold, plus 1-3 separated elliptical red lesions.
[[nodiscard]] inline SyntheticScene skin_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uni = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto clamp8 = [](int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); };

    const int width = uni(128, 256);
    const int height = uni(128, 256);
    const int skin_r = uni(185, 250);
    const int skin_g = skin_r - uni(12, 28);
    const int skin_b = skin_g - uni(5, 35);

    SyntheticScene scene;
    scene.image = RasterImage(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            scene.image.at(x, y) = Rgb{clamp8(skin_r + uni(-3, 3)), clamp8(skin_g + uni(-3, 3)),
                                       clamp8(skin_b + uni(-3, 3))};
        }
    }

    const int blemishes = uni(0, 3);
    for (int i = 0; i < blemishes; ++i) {
        const int cx = uni(0, width - 1), cy = uni(0, height - 1), r = uni(3, 10);
        const int br = uni(110, 160);
        const Rgb colour{clamp8(br), clamp8(br - uni(12, 25)), clamp8(br - uni(30, 50))};
        for (int y = std::max(0, cy - r); y <= std::min(height - 1, cy + r); ++y) {
            for (int x = std::max(0, cx - r); x <= std::min(width - 1, cx + r); ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) scene.image.at(x, y) = colour;
            }
        }
    }

    const int wanted = uni(1, 3);
    for (int tries = 0; tries < 200 && static_cast<int>(scene.lesions.size()) < wanted; ++tries) {
        const int rx = uni(5, 14), ry = uni(5, 14);
        const int cx = uni(rx + 2, width - rx - 3), cy = uni(ry + 2, height - ry - 3);
        const BoundingBox outer{cx - rx, cy - ry, 2 * rx + 1, 2 * ry + 1};
        const bool clear = std::none_of(scene.lesions.begin(), scene.lesions.end(), [&](const BoundingBox& b) {
            const BoundingBox grown{b.left - 3, b.top - 3, b.width + 6, b.height + 6};
            return iou(grown, outer) > 0.0;
        });
        if (!clear) continue;

        const int lr = uni(160, 225), lg = uni(20, 60), lb = uni(20, 60);
        int min_x = width, min_y = height, max_x = -1, max_y = -1;
        for (int y = cy - ry; y <= cy + ry; ++y) {
            for (int x = cx - rx; x <= cx + rx; ++x) {
                const double dx = static_cast<double>(x - cx) / rx;
                const double dy = static_cast<double>(y - cy) / ry;
                if (dx * dx + dy * dy > 1.0) continue;
                scene.image.at(x, y) = Rgb{clamp8(lr + uni(-8, 8)), clamp8(lg + uni(-8, 8)), clamp8(lb + uni(-8, 8))};
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
        }
        scene.lesions.push_back(BoundingBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1});
    }
    return scene;
}

}  // namespace dfu
