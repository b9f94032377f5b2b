#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rowserve/clock.hpp"
#include "rowserve/schema.hpp"

namespace rowserve {

struct ServingConfig {
    enum class Mode { Continuous, Minibatch };

    Mode mode = Mode::Continuous;
    int max_batch_size = 64;           // > 0
    int64_t max_batch_delay_ms = 100;  // >= 0, minibatch only
    int64_t request_timeout_ms = 30000;
    std::string reply_column = "response";
    int filtered_status = 204;

    void validate() const;

    std::string to_json() const;
    static ServingConfig from_json(const std::string& text);
};

/// Queue between ingress and the pipeline dispatcher. Continuous mode hands
/// rows over as they arrive (coalescing whatever is already queued up to
/// maxBatchSize); minibatch closes a batch at maxBatchSize rows or
/// maxBatchDelayMs after the first enqueued row, whichever comes first.
class BatchQueue {
public:
    explicit BatchQueue(const Clock& clock) : clock_(clock) {}

    void push(Row row);

    /// Non-blocking close check against the stated rules at `now_ms`; the unit
    /// for mock-clock tests and the core of the blocking drain.
    std::optional<std::vector<Row>> try_close(const ServingConfig& config, int64_t now_ms);

    /// Blocks until a batch closes or stop(); nullopt only after stop drained
    /// everything.
    std::optional<std::vector<Row>> drain(const ServingConfig& config);

    void stop();
    size_t size() const;

private:
    struct Pending {
        Row row;
        int64_t enqueued_ms;
    };

    std::optional<std::vector<Row>> try_close_locked(const ServingConfig& config, int64_t now_ms);

    const Clock& clock_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Pending> queue_;
    bool stopped_ = false;
};

}  // namespace rowserve
