#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rowserve/clock.hpp"
#include "rowserve/value.hpp"

namespace rowserve {

enum class WorkerState { Registering, Serving, Draining, Dead };

std::string_view worker_state_name(WorkerState s);

struct WorkerStatus {
    uint32_t worker_id = 0;
    std::string public_address;
    std::string internal_address;
    WorkerState state = WorkerState::Registering;
    int64_t queue_depth = 0;
    int64_t last_heartbeat_ms = 0;
};

/// Duplicate registration from an internal address already known.
class ConflictError : public Error {
public:
    using Error::Error;
};

/// Worker registry on the driver. Ids increase monotonically and are never
/// reused; a worker is marked dead exactly when it misses 3 heartbeat
/// intervals, checked against the injected clock.
class Monitor {
public:
    Monitor(const Clock& clock, int64_t heartbeat_interval_ms)
        : clock_(clock), heartbeat_interval_ms_(heartbeat_interval_ms) {}

    WorkerStatus register_worker(const std::string& public_address,
                                 const std::string& internal_address);

    /// Unknown id throws Error; refreshes liveness and promotes
    /// registering -> serving.
    void heartbeat(uint32_t worker_id, int64_t queue_depth);

    /// Snapshot sorted by workerId, dead workers included; the endpoint an
    /// external load balancer polls.
    std::vector<WorkerStatus> list_workers() const;

    std::vector<WorkerStatus> live_workers() const;  // serving only

    void set_state(uint32_t worker_id, WorkerState state);
    std::optional<WorkerStatus> find(uint32_t worker_id) const;

    int64_t heartbeat_interval_ms() const { return heartbeat_interval_ms_; }

    /// JSON document of list_workers(); the documented GET /v1/workers shape.
    std::string to_json() const;

private:
    WorkerState effective_state(const WorkerStatus& w, int64_t now) const;

    const Clock& clock_;
    int64_t heartbeat_interval_ms_;
    mutable std::mutex mu_;
    std::vector<WorkerStatus> workers_;
};

}  // namespace rowserve
