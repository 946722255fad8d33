#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>

namespace dfu {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Clock = std::function<Timestamp()>;
using IdGenerator = std::function<std::string()>;
/// Receives one formatted log line per event.
using LogSink = std::function<void(const std::string&)>;

[[nodiscard]] inline Timestamp system_now() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

[[nodiscard]] inline Clock system_clock() { return &system_now; }

[[nodiscard]] inline std::int64_t to_millis(Timestamp t) noexcept { return t.time_since_epoch().count(); }

[[nodiscard]] inline Timestamp from_millis(std::int64_t ms) noexcept {
    return Timestamp{std::chrono::milliseconds{ms}};
}

/// Clock whose value only moves when told to. Shared by copies.
class ManualClock {
public:
    explicit ManualClock(Timestamp start = from_millis(1'700'000'000'000))
        : now_(std::make_shared<std::atomic<std::int64_t>>(to_millis(start))) {}

    [[nodiscard]] Timestamp now() const { return from_millis(now_->load()); }
    void advance(std::chrono::milliseconds d) { now_->fetch_add(d.count()); }
    void set(Timestamp t) { now_->store(to_millis(t)); }

    [[nodiscard]] Clock as_clock() const {
        return [state = now_] { return from_millis(state->load()); };
    }

private:
    std::shared_ptr<std::atomic<std::int64_t>> now_;
};

namespace detail {
inline std::string to_hex128(std::uint64_t hi, std::uint64_t lo) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(32, '0');
    for (int i = 15; i >= 0; --i, hi >>= 4) out[static_cast<std::size_t>(i)] = kDigits[hi & 0xF];
    for (int i = 31; i >= 16; --i, lo >>= 4) out[static_cast<std::size_t>(i)] = kDigits[lo & 0xF];
    return out;
}
}  // namespace detail

/// 128 random bits as 32 lowercase hex characters.
[[nodiscard]] inline std::string random_id() {
    thread_local std::mt19937_64 rng{[] {
        std::random_device rd;
        std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd()};
        return std::mt19937_64{seq};
    }()};
    return detail::to_hex128(rng(), rng());
}

[[nodiscard]] inline IdGenerator random_ids() { return &random_id; }

/// Deterministic ids: a fixed hex prefix followed by a counter. Thread-safe.
[[nodiscard]] inline IdGenerator sequential_ids(std::uint64_t prefix = 0xd0f0) {
    auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
    return [counter, prefix] { return detail::to_hex128(prefix, ++*counter); };
}

}  // namespace dfu
