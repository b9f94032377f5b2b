#include "rowserve/scheduler.hpp"

#include <json.hpp>

#include "rowserve/metrics.hpp"

namespace rowserve {

using nlohmann::json;

std::string Metrics::to_json() const {
    json out{{"accepted", accepted.load()},
             {"replied", replied.load()},
             {"filtered", filtered.load()},
             {"timeouts", timeouts.load()},
             {"aborted", aborted.load()},
             {"dropped_replies", dropped_replies.load()},
             {"fanout_anomalies", fanout_anomalies.load()},
             {"response_frames_sent", response_frames_sent.load()},
             {"response_frames_received", response_frames_received.load()},
             {"response_frames_faulted", response_frames_faulted.load()},
             {"shuffle_frames_sent", shuffle_frames_sent.load()},
             {"shuffle_frames_received", shuffle_frames_received.load()}};
    return out.dump();
}

void ServingConfig::validate() const {
    if (max_batch_size < 1) throw ConfigError("maxBatchSize must be positive");
    if (max_batch_delay_ms < 0) throw ConfigError("maxBatchDelayMs must be non-negative");
    if (request_timeout_ms < 1) throw ConfigError("requestTimeoutMs must be positive");
    if (reply_column.empty()) throw ConfigError("replyColumn must not be empty");
    if (filtered_status < 100 || filtered_status > 599) {
        throw ConfigError("filteredStatus outside [100, 599]");
    }
}

std::string ServingConfig::to_json() const {
    json out{{"mode", mode == Mode::Continuous ? "continuous" : "minibatch"},
             {"maxBatchSize", max_batch_size},
             {"maxBatchDelayMs", max_batch_delay_ms},
             {"requestTimeoutMs", request_timeout_ms},
             {"replyColumn", reply_column},
             {"filteredStatus", filtered_status}};
    return out.dump();
}

ServingConfig ServingConfig::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed serving config: ") + e.what());
    }
    ServingConfig config;
    std::string mode = doc.value("mode", "continuous");
    if (mode == "continuous") {
        config.mode = Mode::Continuous;
    } else if (mode == "minibatch") {
        config.mode = Mode::Minibatch;
    } else {
        throw ParseError("unknown serving mode '" + mode + "'");
    }
    config.max_batch_size = doc.value("maxBatchSize", config.max_batch_size);
    config.max_batch_delay_ms = doc.value("maxBatchDelayMs", config.max_batch_delay_ms);
    config.request_timeout_ms = doc.value("requestTimeoutMs", config.request_timeout_ms);
    config.reply_column = doc.value("replyColumn", config.reply_column);
    config.filtered_status = doc.value("filteredStatus", config.filtered_status);
    config.validate();
    return config;
}

void BatchQueue::push(Row row) {
    {
        std::lock_guard lock(mu_);
        queue_.push_back({std::move(row), clock_.now_ms()});
    }
    cv_.notify_one();
}

std::optional<std::vector<Row>> BatchQueue::try_close_locked(const ServingConfig& config,
                                                             int64_t now_ms) {
    if (queue_.empty()) return std::nullopt;
    bool close = false;
    if (config.mode == ServingConfig::Mode::Continuous) {
        close = true;  // dispatch as rows arrive
    } else if (static_cast<int>(queue_.size()) >= config.max_batch_size) {
        close = true;
    } else if (now_ms - queue_.front().enqueued_ms >= config.max_batch_delay_ms) {
        close = true;
    }
    if (!close && stopped_) close = true;  // flush the tail on shutdown
    if (!close) return std::nullopt;

    size_t take = std::min(queue_.size(), static_cast<size_t>(config.max_batch_size));
    std::vector<Row> batch;
    batch.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        batch.push_back(std::move(queue_.front().row));
        queue_.pop_front();
    }
    return batch;
}

std::optional<std::vector<Row>> BatchQueue::try_close(const ServingConfig& config,
                                                      int64_t now_ms) {
    std::lock_guard lock(mu_);
    return try_close_locked(config, now_ms);
}

std::optional<std::vector<Row>> BatchQueue::drain(const ServingConfig& config) {
    std::unique_lock lock(mu_);
    while (true) {
        if (auto batch = try_close_locked(config, clock_.now_ms())) return batch;
        if (stopped_ && queue_.empty()) return std::nullopt;
        if (queue_.empty() || config.mode == ServingConfig::Mode::Continuous) {
            cv_.wait_for(lock, std::chrono::milliseconds(50));
        } else {
            // minibatch with an open batch: sleep until its delay deadline
            int64_t deadline = queue_.front().enqueued_ms + config.max_batch_delay_ms;
            int64_t wait = std::max<int64_t>(1, deadline - clock_.now_ms());
            cv_.wait_for(lock, std::chrono::milliseconds(std::min<int64_t>(wait, 50)));
        }
    }
}

void BatchQueue::stop() {
    {
        std::lock_guard lock(mu_);
        stopped_ = true;
    }
    cv_.notify_all();
}

size_t BatchQueue::size() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

}  // namespace rowserve
