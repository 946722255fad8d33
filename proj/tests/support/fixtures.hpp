#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include "dfu/detector.hpp"
#include "dfu/store.hpp"

namespace dfu::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "dfu-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline StoreConfig memory_store(BlobStrategy strategy = BlobStrategy::inline_blob, std::filesystem::path root = {}) {
    StoreConfig cfg;
    cfg.blob_strategy = strategy;
    cfg.object_store_root = std::move(root);
    return cfg;
}

inline StoreConfig file_store(const TempDir& dir, BlobStrategy strategy = BlobStrategy::inline_blob) {
    StoreConfig cfg;
    cfg.blob_strategy = strategy;
    cfg.data_path = (dir / "dfu.sqlite").string();
    cfg.object_store_root = dir / "objects";
    return cfg;
}

/// Up to 32x32, roughly half the pixels strongly red.
inline RasterImage random_image(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dim(1, 32);
    std::uniform_int_distribution<int> byte(0, 255);
    std::bernoulli_distribution reddish(0.45);
    const int w = dim(rng), h = dim(rng);
    RasterImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (reddish(rng)) {
                img.at(x, y) = Rgb{static_cast<std::uint8_t>(byte(rng) / 2 + 128), static_cast<std::uint8_t>(byte(rng) / 3),
                                   static_cast<std::uint8_t>(byte(rng) / 3)};
            } else {
                img.at(x, y) = Rgb{static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                                   static_cast<std::uint8_t>(byte(rng))};
            }
        }
    }
    return img;
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

inline Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace dfu::testing
