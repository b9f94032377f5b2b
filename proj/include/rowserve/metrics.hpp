#pragma once

#include <atomic>
#include <cstdint>
#include <string>

namespace rowserve {

/// Per-worker serving counters, exposed at GET /v1/metrics. accepted ==
/// replied + timeouts + aborted after quiescence (exactly-one-response).
struct Metrics {
    std::atomic<uint64_t> accepted{0};
    std::atomic<uint64_t> replied{0};           // pipeline replies, incl. filtered status
    std::atomic<uint64_t> filtered{0};          // subset of replied answered with filteredStatus
    std::atomic<uint64_t> timeouts{0};          // 504 sweeps
    std::atomic<uint64_t> aborted{0};           // 5xx batch aborts and shutdown completions
    std::atomic<uint64_t> dropped_replies{0};   // unknown/expired/duplicate reply targets
    std::atomic<uint64_t> fanout_anomalies{0};
    std::atomic<uint64_t> response_frames_sent{0};
    std::atomic<uint64_t> response_frames_received{0};
    std::atomic<uint64_t> response_frames_faulted{0};  // dropped by the injection shim
    std::atomic<uint64_t> shuffle_frames_sent{0};
    std::atomic<uint64_t> shuffle_frames_received{0};

    std::string to_json() const;
};

}  // namespace rowserve
