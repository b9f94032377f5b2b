#include "rowserve/monitor.hpp"

#include <algorithm>

#include <json.hpp>

namespace rowserve {

std::string_view worker_state_name(WorkerState s) {
    switch (s) {
        case WorkerState::Registering: return "registering";
        case WorkerState::Serving: return "serving";
        case WorkerState::Draining: return "draining";
        case WorkerState::Dead: return "dead";
    }
    return "?";
}

WorkerStatus Monitor::register_worker(const std::string& public_address,
                                      const std::string& internal_address) {
    if (public_address == internal_address) {
        throw ConfigError("public and internal addresses must differ: " + public_address);
    }
    std::lock_guard lock(mu_);
    for (const auto& w : workers_) {
        if (w.internal_address == internal_address) {
            throw ConflictError("internal address " + internal_address +
                                " already registered as worker " + std::to_string(w.worker_id));
        }
    }
    WorkerStatus status;
    status.worker_id = static_cast<uint32_t>(workers_.size());
    status.public_address = public_address;
    status.internal_address = internal_address;
    status.state = WorkerState::Registering;
    status.last_heartbeat_ms = clock_.now_ms();
    workers_.push_back(status);
    return status;
}

void Monitor::heartbeat(uint32_t worker_id, int64_t queue_depth) {
    std::lock_guard lock(mu_);
    if (worker_id >= workers_.size()) {
        throw Error("heartbeat from unknown worker " + std::to_string(worker_id));
    }
    WorkerStatus& w = workers_[worker_id];
    int64_t now = clock_.now_ms();
    if (effective_state(w, now) == WorkerState::Dead) {
        w.state = WorkerState::Dead;  // death is sticky; late heartbeats do not revive
        throw Error("worker " + std::to_string(worker_id) + " is dead");
    }
    w.last_heartbeat_ms = now;
    w.queue_depth = queue_depth;
    if (w.state == WorkerState::Registering) w.state = WorkerState::Serving;
}

WorkerState Monitor::effective_state(const WorkerStatus& w, int64_t now) const {
    if (w.state == WorkerState::Dead) return WorkerState::Dead;
    if (now - w.last_heartbeat_ms >= 3 * heartbeat_interval_ms_) return WorkerState::Dead;
    return w.state;
}

std::vector<WorkerStatus> Monitor::list_workers() const {
    std::lock_guard lock(mu_);
    int64_t now = clock_.now_ms();
    std::vector<WorkerStatus> out = workers_;
    for (auto& w : out) w.state = effective_state(w, now);
    return out;  // workers_ is already sorted by id (ids are indices)
}

std::vector<WorkerStatus> Monitor::live_workers() const {
    std::vector<WorkerStatus> out;
    for (auto& w : list_workers()) {
        if (w.state == WorkerState::Serving) out.push_back(std::move(w));
    }
    return out;
}

void Monitor::set_state(uint32_t worker_id, WorkerState state) {
    std::lock_guard lock(mu_);
    if (worker_id >= workers_.size()) {
        throw Error("unknown worker " + std::to_string(worker_id));
    }
    workers_[worker_id].state = state;
}

std::optional<WorkerStatus> Monitor::find(uint32_t worker_id) const {
    std::lock_guard lock(mu_);
    if (worker_id >= workers_.size()) return std::nullopt;
    WorkerStatus w = workers_[worker_id];
    w.state = effective_state(w, clock_.now_ms());
    return w;
}

std::string Monitor::to_json() const {
    nlohmann::json workers = nlohmann::json::array();
    for (const auto& w : list_workers()) {
        workers.push_back({{"workerId", w.worker_id},
                           {"publicAddress", w.public_address},
                           {"internalAddress", w.internal_address},
                           {"state", std::string(worker_state_name(w.state))},
                           {"queueDepth", w.queue_depth},
                           {"lastHeartbeatMs", w.last_heartbeat_ms}});
    }
    return nlohmann::json{{"workers", workers}}.dump();
}

}  // namespace rowserve
