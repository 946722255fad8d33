#pragma once

// PNG boundary: uploads arrive as PNG bytes, the detector consumes RasterImage.

#include <png.h>
#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dfu/detector.hpp"
#include "dfu/result.hpp"

namespace dfu {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

[[nodiscard]] inline bool looks_like_png(std::span<const std::uint8_t> bytes) noexcept {
    return bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0;
}

/// Decodes any PNG colour type to 8-bit RGB. Failures are BadImage.
[[nodiscard]] inline Result<RasterImage> decode_png(std::span<const std::uint8_t> bytes) {
    if (!looks_like_png(bytes)) return make_error(ErrorCode::BadImage, "not a PNG stream");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        std::string msg = image.message;
        png_image_free(&image);
        return make_error(ErrorCode::BadImage, msg);
    }
    if (image.width == 0 || image.height == 0 || image.width > 20000 || image.height > 20000) {
        png_image_free(&image);
        return make_error(ErrorCode::BadImage, "unsupported image dimensions");
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<Rgb> pixels(static_cast<std::size_t>(image.width) * image.height);
    static_assert(sizeof(Rgb) == 3);
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        return make_error(ErrorCode::BadImage, msg);
    }
    const auto w = static_cast<std::int32_t>(image.width);
    const auto h = static_cast<std::int32_t>(image.height);
    png_image_free(&image);
    return RasterImage{w, h, std::move(pixels)};
}

[[nodiscard]] inline Result<Bytes> encode_png(const RasterImage& raster) {
    if (raster.empty()) return make_error(ErrorCode::ZeroSizeImage);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width());
    image.height = static_cast<png_uint_32>(raster.height());
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, raster.pixels().data(), 0, nullptr)) {
        return make_error(ErrorCode::Internal, image.message);
    }
    Bytes out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.pixels().data(), 0, nullptr)) {
        return make_error(ErrorCode::Internal, image.message);
    }
    out.resize(size);
    return out;
}

namespace detail {
inline void put_be32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}
}  // namespace detail

/// Grows a PNG to exactly `target_size` bytes by inserting a tEXt comment
/// chunk before IEND. The pixels are unchanged.
[[nodiscard]] inline Result<Bytes> pad_png(std::span<const std::uint8_t> png, std::size_t target_size) {
    constexpr std::size_t kIendSize = 12;
    constexpr std::string_view kKeyword{"Comment\0", 8};
    constexpr std::size_t kOverhead = 12 + kKeyword.size();
    if (!looks_like_png(png) || png.size() < 8 + kIendSize ||
        std::memcmp(png.data() + png.size() - 8, "IEND", 4) != 0) {
        return make_error(ErrorCode::BadImage, "PNG must end with IEND");
    }
    if (target_size < png.size() + kOverhead) {
        return make_error(ErrorCode::TooLarge, "PNG already exceeds the requested size");
    }
    const std::size_t filler = target_size - png.size() - kOverhead;

    Bytes chunk;
    chunk.insert(chunk.end(), {'t', 'E', 'X', 't'});
    chunk.insert(chunk.end(), kKeyword.begin(), kKeyword.end());
    chunk.insert(chunk.end(), filler, static_cast<std::uint8_t>('.'));
    const auto crc = static_cast<std::uint32_t>(crc32(0L, chunk.data(), static_cast<uInt>(chunk.size())));

    Bytes out(png.begin(), png.end() - static_cast<std::ptrdiff_t>(kIendSize));
    detail::put_be32(out, static_cast<std::uint32_t>(chunk.size() - 4));
    out.insert(out.end(), chunk.begin(), chunk.end());
    detail::put_be32(out, crc);
    out.insert(out.end(), png.end() - static_cast<std::ptrdiff_t>(kIendSize), png.end());
    return out;
}

}  // namespace dfu
