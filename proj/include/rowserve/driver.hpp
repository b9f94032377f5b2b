#pragma once

#include <atomic>
#include <memory>
#include <set>
#include <thread>

#include "rowserve/batch.hpp"
#include "rowserve/frame_net.hpp"
#include "rowserve/monitor.hpp"
#include "rowserve/scheduler.hpp"

namespace httplib {
class Server;
}

namespace rowserve {

struct DriverOptions {
    std::string host = "127.0.0.1";
    int port = 0;
    int64_t heartbeat_ms = 2000;  // RS_HEARTBEAT_MS
    int64_t control_deadline_ms = 10000;
};

/// Driver process: worker monitor plus the control plane that installs
/// pipelines, distributes broadcast tables, and starts serving. Carries no
/// per-request data-plane traffic; /v1/metrics proves it.
class DriverService {
public:
    explicit DriverService(DriverOptions options,
                           const Clock& clock = SystemClock::instance());
    ~DriverService();

    void start();
    void stop();

    std::string address() const;
    Monitor& monitor() { return monitor_; }
    PipelineRegistry& pipelines() { return pipelines_; }

    /// Installs the pipeline locally and pushes it to every live worker.
    std::vector<uint32_t> install_pipeline(const std::string& pipeline_json);

    /// Fans the table out to every serving worker and verifies the checksum
    /// acks. Throws NetError naming the first worker that failed.
    std::vector<uint32_t> distribute_broadcast(const BroadcastTable& table);

    /// Validates and starts serving on every live worker, sending the topology
    /// snapshot. Returns the worker ids now serving.
    std::vector<uint32_t> start_serving(const std::string& pipeline_id,
                                        const ServingConfig& config);

    void stop_serving(const std::string& pipeline_id);

    uint64_t http_requests_total() const { return http_requests_.load(); }

private:
    std::vector<WorkerAddress> topology_snapshot() const;

    DriverOptions options_;
    const Clock& clock_;
    Monitor monitor_;
    PipelineRegistry pipelines_;
    TableCatalog tables_;
    std::mutex tables_mu_;
    PeerPool peers_;

    std::mutex serving_mu_;
    std::string serving_pipeline_;
    std::string serving_mode_;
    std::set<std::string> installed_;

    std::unique_ptr<httplib::Server> server_;
    std::thread server_thread_;
    std::atomic<bool> running_{false};
    std::atomic<uint64_t> http_requests_{0};
};

}  // namespace rowserve
