#pragma once

#include <sodium.h>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfu {

namespace detail {
inline void ensure_sodium() {
    static const int rc = sodium_init();
    (void)rc;
}
}  // namespace detail

/// Standard alphabet with padding.
[[nodiscard]] inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    detail::ensure_sodium();
    const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    std::string out(len, '\0');
    sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(len - 1);  // drop the terminating NUL
    return out;
}

/// Strict decoding; nullopt on any malformed input.
[[nodiscard]] inline std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text) {
    detail::ensure_sodium();
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t written = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &written, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        return std::nullopt;
    }
    out.resize(written);
    return out;
}

}  // namespace dfu
