#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "rowserve/clock.hpp"
#include "rowserve/value.hpp"

namespace rowserve {

/// (workerId, seq): correlates a reply to the open connection that spawned the
/// row, across any number of shuffles. Unique per driver lifetime.
struct RoutingId {
    uint32_t worker_id = 0;
    uint64_t seq = 0;

    bool operator==(const RoutingId& other) const {
        return worker_id == other.worker_id && seq == other.seq;
    }

    /// 12-byte wire form: u32le workerId + u64le seq. This is also the value of
    /// the `id` column rows carry through serving pipelines.
    Bytes encode() const;
    static std::optional<RoutingId> decode(const Bytes& bytes);

    std::string to_string() const {
        return std::to_string(worker_id) + ":" + std::to_string(seq);
    }
};

/// Single-use completion handle for an open HTTP exchange. complete() returns
/// true for exactly one caller; the ingress thread blocks in wait().
class Responder {
public:
    bool complete(HttpResponseData response);

    /// Blocks until completed or the cap elapses; nullopt on cap.
    std::optional<HttpResponseData> wait(int64_t cap_ms);

    bool completed() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool completed_ = false;
    std::optional<HttpResponseData> response_;
};

using ResponderPtr = std::shared_ptr<Responder>;

/// Open-request table: seq-striped shards, each a hash map plus a
/// deadline-ordered queue (deadlines are arrival + fixed timeout, so the queue
/// stays sorted by construction and the sweep is O(expired)).
class RequestRegistry {
public:
    RequestRegistry(uint32_t worker_id, const Clock& clock, int64_t request_timeout_ms,
                    size_t shard_count = 16);

    /// Issues the next RoutingId and registers the open exchange.
    std::pair<RoutingId, ResponderPtr> insert();

    /// Completes and removes the entry; false when it is gone (expired,
    /// duplicate completion, or foreign).
    bool complete(const RoutingId& id, HttpResponseData response);

    /// Completes every entry with deadline <= now with a 504 and returns the
    /// expired ids.
    std::vector<RoutingId> expire_timeouts(int64_t now_ms);

    /// Shutdown path: completes everything still open with the given response.
    size_t complete_all(const HttpResponseData& response);

    size_t size() const;
    uint32_t worker_id() const { return worker_id_; }
    int64_t timeout_ms() const { return timeout_ms_.load(); }

    /// Applies to entries inserted from now on.
    void set_timeout_ms(int64_t ms) { timeout_ms_.store(ms); }

    // conservation counters: inserts == completions + expirations + shutdown
    uint64_t inserts() const { return inserts_.load(); }
    uint64_t completions() const { return completions_.load(); }
    uint64_t expirations() const { return expirations_.load(); }
    uint64_t shutdown_completions() const { return shutdown_completions_.load(); }

private:
    struct Entry {
        ResponderPtr responder;
        int64_t arrival_ms = 0;
        int64_t deadline_ms = 0;
    };

    struct Shard {
        mutable std::mutex mu;
        std::unordered_map<uint64_t, Entry> open;
        std::deque<std::pair<int64_t, uint64_t>> deadlines;  // (deadlineMs, seq)
    };

    Shard& shard_for(uint64_t seq) { return shards_[seq % shards_.size()]; }

    uint32_t worker_id_;
    const Clock& clock_;
    std::atomic<int64_t> timeout_ms_;
    std::vector<std::unique_ptr<Shard>> shards_;
    std::atomic<uint64_t> next_seq_{0};
    std::atomic<uint64_t> inserts_{0};
    std::atomic<uint64_t> completions_{0};
    std::atomic<uint64_t> expirations_{0};
    std::atomic<uint64_t> shutdown_completions_{0};
};

}  // namespace rowserve
