#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dfu {

/// MAJOR.MINOR.PATCH, numeric only. Pre-release and build suffixes are not
/// accepted.
struct SemVer {
    std::uint32_t major = 0;
    std::uint32_t minor = 0;
    std::uint32_t patch = 0;

    [[nodiscard]] static std::optional<SemVer> parse(std::string_view text) noexcept {
        SemVer v;
        std::uint32_t* parts[] = {&v.major, &v.minor, &v.patch};
        const char* p = text.data();
        const char* end = text.data() + text.size();
        for (int i = 0; i < 3; ++i) {
            if (p == end || *p < '0' || *p > '9') return std::nullopt;
            // no leading zeros, as in semver
            if (*p == '0' && p + 1 != end && p[1] >= '0' && p[1] <= '9') return std::nullopt;
            auto [next, ec] = std::from_chars(p, end, *parts[i]);
            if (ec != std::errc{}) return std::nullopt;
            p = next;
            if (i < 2) {
                if (p == end || *p != '.') return std::nullopt;
                ++p;
            }
        }
        if (p != end) return std::nullopt;
        return v;
    }

    [[nodiscard]] std::string to_string() const {
        return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
    }

    friend constexpr auto operator<=>(const SemVer&, const SemVer&) = default;
};

struct VersionPolicy {
    SemVer min_supported{1, 0, 0};
    SemVer current{1, 0, 0};

    [[nodiscard]] bool valid() const noexcept { return min_supported <= current; }
    [[nodiscard]] bool compatible(const SemVer& client) const noexcept { return client >= min_supported; }
};

}  // namespace dfu
