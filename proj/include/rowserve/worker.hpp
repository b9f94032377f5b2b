#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "rowserve/batch.hpp"
#include "rowserve/frame_net.hpp"
#include "rowserve/metrics.hpp"
#include "rowserve/registry.hpp"
#include "rowserve/scheduler.hpp"

namespace httplib {
class Server;
}

namespace rowserve {

struct WorkerOptions {
    std::string public_host = "127.0.0.1";
    int public_port = 0;  // 0 = ephemeral
    std::string internal_host = "127.0.0.1";
    int internal_port = 0;
    std::string driver_address;  // empty = driverless (fixed worker_id, no heartbeats)
    uint32_t worker_id = 0;      // used when driverless
    int64_t heartbeat_ms = 2000;
    int64_t request_timeout_ms = 30000;
    int64_t drain_grace_ms = 10000;
    int64_t shuffle_deadline_ms = 5000;
    std::string route_prefix = "/";
    int executor_threads = 0;  // 0 = hardware
    // fault injection shim: silently drop this fraction of outbound response
    // frames (simulated network loss on the reply path)
    double fault_drop_response_fraction = 0.0;
    uint64_t fault_seed = 1;
};

/// Validates a pipeline + config pair for serving: continuous needs all-narrow,
/// the id column must survive every stage, and the reply column must come out
/// as httpResponse. Throws ConfigError/SchemaError.
void validate_serving(const PipelineSpec& spec, const ServingConfig& config);

/// One worker process: public HTTP ingress, internal frame service, batch
/// scheduler, partition executor, and the reply path.
class WorkerRuntime {
public:
    explicit WorkerRuntime(WorkerOptions options,
                           const Clock& clock = SystemClock::instance());
    ~WorkerRuntime();

    WorkerRuntime(const WorkerRuntime&) = delete;
    WorkerRuntime& operator=(const WorkerRuntime&) = delete;

    /// Binds both servers, registers with the driver when configured, starts
    /// heartbeats and the expiry sweeper.
    void start();
    void stop();

    void install_pipeline(const std::string& pipeline_json);
    void install_table(BroadcastTable table);
    void serve_start(const std::string& pipeline_id, ServingConfig config,
                     std::vector<WorkerAddress> topology);
    void serve_stop();
    void set_draining(bool draining) { draining_ = draining; }

    /// Distributed batch job: runs the pipeline over `rows` with the shuffle
    /// exchanged across `topology`, gathering final rows back here. Supports
    /// pipelines with at most one wide stage.
    std::vector<Row> execute_collect(const std::string& pipeline_id, std::vector<Row> rows,
                                     const std::vector<WorkerAddress>& topology,
                                     int64_t deadline_ms = 15000);

    /// Raw collective shuffle_exchange: every participant contributes its local
    /// rows under the same exchange_id; returns the rows received for locally
    /// owned partitions once one frame arrived from every participant per owned
    /// partition. Keys are hashed over `key_col` of the stage input schema.
    std::vector<Row> exchange_rows(const std::string& pipeline_id, uint32_t stage_index,
                                   uint64_t exchange_id, const std::vector<Row>& rows,
                                   const std::string& key_col, uint32_t partition_count,
                                   const std::vector<WorkerAddress>& topology,
                                   int64_t deadline_ms = 10000);

    uint32_t worker_id() const { return worker_id_; }
    std::string public_address() const;
    std::string internal_address() const;
    size_t queue_depth() const { return queue_.size(); }
    const Metrics& metrics() const { return metrics_; }
    RequestRegistry& registry() { return *registry_; }
    PipelineRegistry& pipelines() { return pipelines_; }
    bool serving() const { return current_serving() != nullptr; }

private:
    struct ServingState {
        std::shared_ptr<const PipelineSpec> spec;
        ServingConfig config;
        std::vector<WorkerAddress> topology;
        std::vector<Schema> schema_at;  // serving-mode input schema before stage i
        std::vector<size_t> wide;
        size_t reply_idx = 0;
    };
    using ServingPtr = std::shared_ptr<const ServingState>;

    struct CollectState {
        std::mutex mu;
        std::condition_variable cv;
        uint32_t expected = 0;
        uint32_t received = 0;
        std::vector<Bytes> rows;
    };

    struct ExchangeState {
        std::mutex mu;
        std::condition_variable cv;
        uint32_t received = 0;
        std::vector<Bytes> rows;
        std::vector<std::pair<uint32_t, uint32_t>> seen;  // (origin, partition)
    };

    ServingPtr current_serving() const {
        std::lock_guard lock(serving_mu_);
        return serving_;
    }

    Frame handle_frame(Frame&& frame);
    void handle_ingress(const HttpRequestData& request, HttpResponseData& response);
    void dispatcher_loop();
    void sweeper_loop();
    void heartbeat_loop();

    void execute_serving_batch(const ServingPtr& s, std::vector<Row> rows, size_t from_stage);
    void handle_serving_continuation(const ServingPtr& s, ShuffleFrame frame);
    void handle_collect_job(ShuffleFrame frame);

    void reply(const ServingPtr& s, const RoutingId& id, HttpResponseData response,
               bool filtered);
    void complete_local(const RoutingId& id, HttpResponseData response, bool filtered);
    void abort_rows(const ServingPtr& s, const std::vector<RoutingId>& ids, int status,
                    const std::string& why);

    RunContext run_context();
    std::shared_ptr<CollectState> collect_state(uint64_t job_id);
    std::shared_ptr<ExchangeState> exchange_state(uint64_t exchange_id);

    static const WorkerAddress* address_of(const std::vector<WorkerAddress>& topology,
                                           uint32_t worker_id);

    WorkerOptions options_;
    const Clock& clock_;
    uint32_t worker_id_ = 0;
    Metrics metrics_;
    PipelineRegistry pipelines_;
    TableCatalog tables_;
    mutable std::mutex tables_mu_;

    std::unique_ptr<RequestRegistry> registry_;
    BatchQueue queue_;
    std::unique_ptr<FrameServer> frame_server_;
    std::unique_ptr<httplib::Server> public_server_;
    PeerPool peers_;

    mutable std::mutex serving_mu_;
    ServingPtr serving_;

    std::mutex collect_mu_;
    std::map<uint64_t, std::shared_ptr<CollectState>> collects_;
    std::mutex exchange_mu_;
    std::map<uint64_t, std::shared_ptr<ExchangeState>> exchanges_;

    std::atomic<bool> running_{false};
    std::atomic<bool> draining_{false};
    std::atomic<uint64_t> next_batch_id_{1};
    std::thread public_thread_;
    std::thread dispatcher_thread_;
    std::thread sweeper_thread_;
    std::thread heartbeat_thread_;

    // executor pool
    void pool_submit(std::function<void()> task);
    void pool_loop();
    std::mutex pool_mu_;
    std::condition_variable pool_cv_;
    std::deque<std::function<void()>> pool_tasks_;
    std::vector<std::thread> pool_threads_;
    std::atomic<int> pool_active_{0};

    std::mutex fault_mu_;
    std::mt19937_64 fault_rng_;
};

}  // namespace rowserve
