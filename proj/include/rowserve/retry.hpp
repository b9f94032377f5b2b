#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <thread>

#include "rowserve/value.hpp"

namespace rowserve {

/// Exponential backoff with multiplicative jitter. Transport errors are always
/// retryable; statuses are retryable iff listed.
struct RetryPolicy {
    double base_delay_ms = 100.0;  // > 0
    double multiplier = 2.0;       // >= 1
    int max_retries = 3;           // >= 0
    std::set<int> retryable_statuses = {429, 500, 502, 503, 504};
    double jitter_fraction = 0.1;  // [0, 1)
    uint64_t jitter_seed = 0;      // 0 = seed from entropy

    void validate() const {
        if (base_delay_ms <= 0) throw ConfigError("retry baseDelayMs must be positive");
        if (multiplier < 1.0) throw ConfigError("retry multiplier must be >= 1");
        if (max_retries < 0) throw ConfigError("retry maxRetries must be non-negative");
        if (jitter_fraction < 0 || jitter_fraction >= 1.0) {
            throw ConfigError("retry jitterFraction must be in [0, 1)");
        }
    }

    bool retryable(int status) const { return retryable_statuses.count(status) > 0; }
};

/// Delay before retry `attempt` (1-based): base * multiplier^(attempt-1), scaled
/// by the supplied jitter factor. Pure given the draw.
inline double backoff_delay_ms(const RetryPolicy& policy, int attempt, double jitter_factor) {
    if (attempt < 1 || attempt > policy.max_retries) {
        throw ConfigError("backoff attempt " + std::to_string(attempt) + " outside [1, " +
                          std::to_string(policy.max_retries) + "]");
    }
    double delay = policy.base_delay_ms;
    for (int i = 1; i < attempt; ++i) delay *= policy.multiplier;
    return delay * jitter_factor;
}

/// Uniform draw in [1 - jitter, 1 + jitter].
class JitterSource {
public:
    explicit JitterSource(const RetryPolicy& policy)
        : jitter_(policy.jitter_fraction),
          rng_(policy.jitter_seed ? policy.jitter_seed : std::random_device{}()) {}

    double draw() {
        if (jitter_ == 0.0) return 1.0;
        std::lock_guard lock(mu_);
        double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;  // [0, 1)
        return 1.0 - jitter_ + 2.0 * jitter_ * u;
    }

private:
    double jitter_;
    std::mt19937_64 rng_;
    std::mutex mu_;
};

/// Token bucket throttle: capacity = rate (one second of tokens), starts empty,
/// refills continuously. acquire() blocks until a token is available.
class TokenBucket {
public:
    /// rate_per_sec <= 0 means unlimited.
    explicit TokenBucket(double rate_per_sec) : rate_(rate_per_sec) {
        last_refill_ = std::chrono::steady_clock::now();
    }

    void acquire() {
        if (rate_ <= 0) return;
        while (true) {
            std::chrono::duration<double> wait{0};
            {
                std::lock_guard lock(mu_);
                refill_locked();
                if (tokens_ >= 1.0) {
                    tokens_ -= 1.0;
                    return;
                }
                wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
            }
            std::this_thread::sleep_for(wait);
        }
    }

private:
    void refill_locked() {
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - last_refill_).count();
        last_refill_ = now;
        tokens_ = std::min(rate_, tokens_ + elapsed * rate_);
    }

    double rate_;
    double tokens_ = 0.0;
    std::chrono::steady_clock::time_point last_refill_;
    std::mutex mu_;
};

}  // namespace rowserve
