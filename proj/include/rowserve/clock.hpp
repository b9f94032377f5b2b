#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace rowserve {

/// Millisecond clock. Liveness tracking, batch deadlines and request expiry all
/// go through this so tests can drive them with a manual clock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual int64_t now_ms() const = 0;
};

class SystemClock final : public Clock {
public:
    int64_t now_ms() const override {
        using namespace std::chrono;
        return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    }

    static SystemClock& instance() {
        static SystemClock clock;
        return clock;
    }
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(int64_t start_ms = 0) : now_(start_ms) {}

    int64_t now_ms() const override { return now_.load(); }
    void advance(int64_t delta_ms) { now_ += delta_ms; }
    void set(int64_t ms) { now_ = ms; }

private:
    std::atomic<int64_t> now_;
};

/// Monotonic microseconds for latency measurement.
inline int64_t steady_micros() {
    using namespace std::chrono;
    return duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace rowserve
