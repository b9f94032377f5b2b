#include "rowserve/worker.hpp"

#include <httplib.h>
#include <json.hpp>

#include <unordered_map>
#include <unordered_set>

#include "rowserve/hash.hpp"

namespace rowserve {

namespace {

HttpResponseData make_text_response(int status, const std::string& reason,
                                    const std::string& body) {
    HttpResponseData resp;
    resp.status = status;
    resp.reason = reason;
    resp.set_header("Content-Type", "text/plain");
    resp.body.assign(body.begin(), body.end());
    return resp;
}

bool pseudo_header(const std::string& name) {
    return name.starts_with("REMOTE_") || name.starts_with("LOCAL_");
}

struct Partitioning {
    std::vector<size_t> key_indices;
    uint32_t partition_count = 1;
};

Partitioning wide_stage_partitioning(const StageSpec& stage, const Schema& input,
                                     uint32_t worker_count) {
    Partitioning p;
    if (const auto* rep = std::get_if<RepartitionStage>(&stage)) {
        p.key_indices.push_back(input.require(rep->key_col));
        p.partition_count = rep->partitions;
    } else if (const auto* agg = std::get_if<AggregateStage>(&stage)) {
        for (const auto& k : agg->key_cols) p.key_indices.push_back(input.require(k));
        p.partition_count = std::max<uint32_t>(worker_count, 1);
    } else {
        throw StageRuntimeError(std::string(stage_kind_name(stage)) + " is not a wide stage");
    }
    return p;
}

}  // namespace

void validate_serving(const PipelineSpec& spec, const ServingConfig& config) {
    config.validate();
    Schema expected({{"id", DataType::binary()}, {"request", DataType::http_request()}});
    if (spec.input_schema != expected) {
        throw ConfigError("serving pipelines take the input schema "
                          "[id: binary, request: httpRequest]; pipeline '" +
                          spec.id + "' declares " + spec.input_schema.to_string());
    }
    if (config.mode == ServingConfig::Mode::Continuous && !spec.all_narrow()) {
        size_t w = spec.wide_stage_indices().front();
        throw ConfigError("continuous mode requires an all-narrow pipeline; stage " +
                          std::to_string(w) + " (" +
                          std::string(stage_kind_name(spec.stages[w])) +
                          ") is wide - run this pipeline in minibatch mode");
    }
    Schema schema = spec.input_schema;
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        schema = stage_output_schema(spec.stages[i], schema, ExecMode::Serving,
                                     static_cast<int>(i));
        auto id_idx = schema.index_of("id");
        if (!id_idx || schema.at(*id_idx).type != DataType::binary()) {
            throw SchemaError("the routing id column must survive every serving stage; "
                              "it is gone after this stage",
                              static_cast<int>(i));
        }
    }
    auto reply_idx = schema.index_of(config.reply_column);
    if (!reply_idx || schema.at(*reply_idx).type != DataType::http_response()) {
        throw SchemaError("reply column '" + config.reply_column +
                          "' must exist with type httpResponse in the output schema " +
                          schema.to_string());
    }
}

WorkerRuntime::WorkerRuntime(WorkerOptions options, const Clock& clock)
    : options_(std::move(options)),
      clock_(clock),
      worker_id_(options_.worker_id),
      queue_(clock),
      peers_(static_cast<int>(options_.shuffle_deadline_ms)),
      fault_rng_(options_.fault_seed) {
    registry_ = std::make_unique<RequestRegistry>(worker_id_, clock_,
                                                  options_.request_timeout_ms);
}

WorkerRuntime::~WorkerRuntime() {
    stop();
}

std::string WorkerRuntime::public_address() const {
    return options_.public_host + ":" + std::to_string(options_.public_port);
}

std::string WorkerRuntime::internal_address() const {
    return options_.internal_host + ":" + std::to_string(options_.internal_port);
}

void WorkerRuntime::start() {
    if (running_.exchange(true)) return;

    frame_server_ = std::make_unique<FrameServer>(
        options_.internal_host, options_.internal_port,
        [this](Frame&& f) { return handle_frame(std::move(f)); });
    frame_server_->start();
    options_.internal_port = frame_server_->port();

    public_server_ = std::make_unique<httplib::Server>();
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        if (req.path == "/v1/metrics") {
            res.status = 200;
            res.set_content(metrics_.to_json(), "application/json");
            return;
        }
        HttpRequestData request;
        request.method = req.method;
        request.uri = req.target.empty() ? req.path : req.target;
        for (const auto& [name, value] : req.headers) {
            if (!pseudo_header(name)) request.headers.emplace_back(name, value);
        }
        request.body.assign(req.body.begin(), req.body.end());

        HttpResponseData out;
        handle_ingress(request, out);

        res.status = out.status;
        std::string content_type = "application/octet-stream";
        for (const auto& [name, value] : out.headers) {
            if (header_name_equal(name, "Content-Length")) continue;
            if (header_name_equal(name, "Content-Type")) {
                content_type = value;
                continue;
            }
            res.set_header(name, value);
        }
        res.set_header("Server", "rowserve/0.1");
        res.set_content(std::string(out.body.begin(), out.body.end()), content_type);
    };
    for (auto method : {"GET", "POST", "PUT", "PATCH", "DELETE", "OPTIONS"}) {
        (void)method;
    }
    public_server_->Get(".*", handler);
    public_server_->Post(".*", handler);
    public_server_->Put(".*", handler);
    public_server_->Patch(".*", handler);
    public_server_->Delete(".*", handler);
    public_server_->Options(".*", handler);

    int port = options_.public_port;
    if (port == 0) {
        port = public_server_->bind_to_any_port(options_.public_host);
        if (port <= 0) throw NetError("cannot bind public ingress on " + options_.public_host);
    } else if (!public_server_->bind_to_port(options_.public_host, port)) {
        throw NetError("cannot bind public ingress " + public_address());
    }
    options_.public_port = port;
    public_thread_ = std::thread([this] { public_server_->listen_after_bind(); });
    public_server_->wait_until_ready();

    if (!options_.driver_address.empty()) {
        httplib::Client driver("http://" + options_.driver_address);
        driver.set_connection_timeout(5, 0);
        nlohmann::json body{{"publicAddress", public_address()},
                            {"internalAddress", internal_address()}};
        auto res = driver.Post("/v1/register", body.dump(), "application/json");
        if (!res || res->status != 200) {
            stop();
            throw NetError("registration with driver " + options_.driver_address + " failed" +
                           (res ? " with status " + std::to_string(res->status) : ""));
        }
        auto reply = nlohmann::json::parse(res->body);
        worker_id_ = reply.at("workerId").get<uint32_t>();
        options_.heartbeat_ms = reply.value("heartbeatMs", options_.heartbeat_ms);
        registry_ = std::make_unique<RequestRegistry>(worker_id_, clock_,
                                                      options_.request_timeout_ms);
        heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
    }

    int threads = options_.executor_threads;
    if (threads <= 0) {
        threads = std::max(4u, std::thread::hardware_concurrency());
    }
    for (int i = 0; i < threads; ++i) {
        pool_threads_.emplace_back([this] { pool_loop(); });
    }
    dispatcher_thread_ = std::thread([this] { dispatcher_loop(); });
    sweeper_thread_ = std::thread([this] { sweeper_loop(); });
}

void WorkerRuntime::stop() {
    if (!running_.exchange(false)) return;
    draining_ = true;

    // in-flight entries get the drain grace period, then 503
    int64_t waited = 0;
    while (registry_ && registry_->size() > 0 && waited < options_.drain_grace_ms) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        waited += 20;
    }
    if (registry_) {
        registry_->complete_all(
            make_text_response(503, "Service Unavailable", "worker shutting down"));
    }

    queue_.stop();
    pool_cv_.notify_all();
    if (dispatcher_thread_.joinable()) dispatcher_thread_.join();
    {
        std::lock_guard lock(pool_mu_);
        pool_tasks_.clear();
    }
    pool_cv_.notify_all();
    for (auto& t : pool_threads_) {
        if (t.joinable()) t.join();
    }
    pool_threads_.clear();
    if (sweeper_thread_.joinable()) sweeper_thread_.join();
    if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
    if (public_server_) public_server_->stop();
    if (public_thread_.joinable()) public_thread_.join();
    if (frame_server_) frame_server_->stop();
}

void WorkerRuntime::install_pipeline(const std::string& pipeline_json) {
    pipelines_.install(parse_pipeline(pipeline_json));
}

void WorkerRuntime::install_table(BroadcastTable table) {
    auto shared = std::make_shared<const BroadcastTable>(std::move(table));
    std::lock_guard lock(tables_mu_);
    tables_[shared->table_id] = shared;
}

RunContext WorkerRuntime::run_context() {
    RunContext ctx;
    {
        std::lock_guard lock(tables_mu_);
        ctx.tables = tables_;
    }
    ctx.pipelines = &pipelines_;
    return ctx;
}

void WorkerRuntime::serve_start(const std::string& pipeline_id, ServingConfig config,
                                std::vector<WorkerAddress> topology) {
    auto spec = pipelines_.find(pipeline_id);
    if (!spec) throw ConfigError("unknown pipeline '" + pipeline_id + "'");
    validate_serving(*spec, config);
    for (const auto& stage : spec->stages) {
        if (const auto* join = std::get_if<BroadcastJoinStage>(&stage)) {
            std::lock_guard lock(tables_mu_);
            if (!tables_.count(join->table_id)) {
                throw ConfigError("broadcast table '" + join->table_id +
                                  "' must be distributed before serving starts");
            }
        }
    }
    auto state = std::make_shared<ServingState>();
    state->spec = spec;
    state->config = config;
    state->topology = std::move(topology);
    std::sort(state->topology.begin(), state->topology.end(),
              [](const WorkerAddress& a, const WorkerAddress& b) {
                  return a.worker_id < b.worker_id;
              });
    if (state->topology.empty()) {
        state->topology.push_back({worker_id_, public_address(), internal_address()});
    }
    state->schema_at.reserve(spec->stages.size() + 1);
    Schema schema = spec->input_schema;
    state->schema_at.push_back(schema);
    for (size_t i = 0; i < spec->stages.size(); ++i) {
        schema = stage_output_schema(spec->stages[i], schema, ExecMode::Serving,
                                     static_cast<int>(i));
        state->schema_at.push_back(schema);
    }
    state->wide = spec->wide_stage_indices();
    state->reply_idx = *schema.index_of(config.reply_column);

    registry_->set_timeout_ms(config.request_timeout_ms);
    std::lock_guard lock(serving_mu_);
    serving_ = std::move(state);
}

void WorkerRuntime::serve_stop() {
    std::lock_guard lock(serving_mu_);
    serving_ = nullptr;
}

void WorkerRuntime::handle_ingress(const HttpRequestData& request, HttpResponseData& response) {
    ServingPtr s = current_serving();
    if (draining_ || !s || !running_) {
        response = make_text_response(503, "Service Unavailable",
                                      draining_ ? "worker draining" : "no pipeline serving");
        return;
    }
    if (!request.uri.starts_with(options_.route_prefix)) {
        response = make_text_response(404, "Not Found", "outside route prefix");
        return;
    }
    auto [id, responder] = registry_->insert();
    metrics_.accepted.fetch_add(1);
    Row row;
    row.values.push_back(Value::of(id.encode()));
    row.values.push_back(Value::of(request));
    queue_.push(std::move(row));

    auto out = responder->wait(s->config.request_timeout_ms + 5000);
    if (!out) {
        // backstop: the sweeper normally fires first
        auto fallback = make_text_response(504, "Gateway Timeout", "request timed out");
        if (registry_->complete(id, fallback)) metrics_.timeouts.fetch_add(1);
        out = responder->wait(1000);
        if (!out) out = fallback;
    }
    response = std::move(*out);
}

void WorkerRuntime::dispatcher_loop() {
    while (running_) {
        ServingPtr s = current_serving();
        if (!s) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
            continue;
        }
        auto batch = queue_.drain(s->config);
        if (!batch) continue;  // stopped; outer loop exits on running_
        auto rows = std::make_shared<std::vector<Row>>(std::move(*batch));
        pool_submit([this, s, rows] { execute_serving_batch(s, std::move(*rows), 0); });
    }
}

void WorkerRuntime::sweeper_loop() {
    while (running_) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        auto expired = registry_->expire_timeouts(clock_.now_ms());
        if (!expired.empty()) metrics_.timeouts.fetch_add(expired.size());
    }
}

void WorkerRuntime::heartbeat_loop() {
    httplib::Client driver("http://" + options_.driver_address);
    driver.set_connection_timeout(2, 0);
    while (running_) {
        nlohmann::json body{{"workerId", worker_id_},
                            {"queueDepth", static_cast<int64_t>(queue_.size())}};
        driver.Post("/v1/heartbeat", body.dump(), "application/json");
        for (int64_t slept = 0; slept < options_.heartbeat_ms && running_; slept += 50) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    }
}

void WorkerRuntime::pool_submit(std::function<void()> task) {
    {
        std::lock_guard lock(pool_mu_);
        pool_tasks_.push_back(std::move(task));
    }
    pool_cv_.notify_one();
}

void WorkerRuntime::pool_loop() {
    while (true) {
        std::function<void()> task;
        {
            std::unique_lock lock(pool_mu_);
            pool_cv_.wait(lock, [&] { return !pool_tasks_.empty() || !running_; });
            if (pool_tasks_.empty()) {
                if (!running_) return;
                continue;
            }
            task = std::move(pool_tasks_.front());
            pool_tasks_.pop_front();
        }
        pool_active_.fetch_add(1);
        try {
            task();
        } catch (const std::exception& e) {
            fprintf(stderr, "worker %u executor: %s\n", worker_id_, e.what());
        }
        pool_active_.fetch_sub(1);
    }
}

const WorkerAddress* WorkerRuntime::address_of(const std::vector<WorkerAddress>& topology,
                                               uint32_t worker_id) {
    for (const auto& w : topology) {
        if (w.worker_id == worker_id) return &w;
    }
    return nullptr;
}

void WorkerRuntime::complete_local(const RoutingId& id, HttpResponseData response,
                                   bool filtered) {
    if (registry_->complete(id, std::move(response))) {
        metrics_.replied.fetch_add(1);
        if (filtered) metrics_.filtered.fetch_add(1);
    } else {
        metrics_.dropped_replies.fetch_add(1);
    }
}

void WorkerRuntime::reply(const ServingPtr& s, const RoutingId& id, HttpResponseData response,
                          bool filtered) {
    if (id.worker_id == worker_id_) {
        // same machine: direct dispatch, no network hop
        complete_local(id, std::move(response), filtered);
        return;
    }
    if (options_.fault_drop_response_fraction > 0) {
        std::lock_guard lock(fault_mu_);
        double u = static_cast<double>(fault_rng_() >> 11) * 0x1.0p-53;
        if (u < options_.fault_drop_response_fraction) {
            metrics_.response_frames_faulted.fetch_add(1);
            return;  // simulated loss of the internal response frame
        }
    }
    const WorkerAddress* peer = address_of(s->topology, id.worker_id);
    if (!peer) {
        metrics_.dropped_replies.fetch_add(1);
        return;
    }
    ResponseFrame frame;
    frame.id = id;
    encode_value(frame.response, Value::of(std::move(response)));
    try {
        Frame ack = peers_.call_with_retry(peer->internal_address, frame,
                                           options_.shuffle_deadline_ms);
        metrics_.response_frames_sent.fetch_add(1);
        (void)ack;
    } catch (const NetError&) {
        metrics_.dropped_replies.fetch_add(1);
    }
}

void WorkerRuntime::abort_rows(const ServingPtr& s, const std::vector<RoutingId>& ids,
                               int status, const std::string& why) {
    metrics_.aborted.fetch_add(ids.size());
    for (const auto& id : ids) {
        reply(s, id, make_text_response(status, status == 503 ? "Service Unavailable"
                                                              : "Internal Server Error", why),
              false);
    }
}

void WorkerRuntime::execute_serving_batch(const ServingPtr& s, std::vector<Row> rows,
                                          size_t from_stage) {
    if (rows.empty()) return;
    const PipelineSpec& spec = *s->spec;
    size_t seg_end = spec.stages.size();
    for (size_t w : s->wide) {
        if (w >= from_stage) {
            seg_end = w;
            break;
        }
    }

    const Schema& in_schema = s->schema_at[from_stage];
    size_t id_in = *in_schema.index_of("id");
    std::vector<RoutingId> entered;
    entered.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.values[id_in].is<Bytes>()) {
            if (auto id = RoutingId::decode(r.values[id_in].as_binary())) {
                entered.push_back(*id);
            }
        }
    }

    std::vector<Row> out;
    try {
        out = run_narrow_segment(spec, from_stage, seg_end, std::move(rows), run_context(),
                                 ExecMode::Serving);
    } catch (const std::exception& e) {
        abort_rows(s, entered, 500, e.what());
        return;
    }

    const Schema& out_schema = s->schema_at[seg_end];
    size_t id_out = *out_schema.index_of("id");
    std::unordered_set<std::string> survivors;
    for (const auto& r : out) {
        const Value& v = r.values[id_out];
        if (v.is<Bytes>()) {
            survivors.insert(std::string(v.as_binary().begin(), v.as_binary().end()));
        }
    }
    // rows eliminated in this segment answer with the configured filtered status
    for (const auto& id : entered) {
        Bytes key = id.encode();
        if (!survivors.count(std::string(key.begin(), key.end()))) {
            reply(s, id,
                  make_text_response(s->config.filtered_status, "No Content",
                                     "row filtered by pipeline"),
                  true);
        }
    }
    if (out.empty()) return;

    if (seg_end == spec.stages.size()) {
        // reply sink: first row per id wins, extras are counted anomalies
        std::unordered_set<std::string> seen;
        for (auto& r : out) {
            const Value& idv = r.values[id_out];
            if (!idv.is<Bytes>()) {
                metrics_.dropped_replies.fetch_add(1);
                continue;
            }
            std::string key(idv.as_binary().begin(), idv.as_binary().end());
            if (!seen.insert(key).second) {
                metrics_.fanout_anomalies.fetch_add(1);
                continue;
            }
            auto id = RoutingId::decode(idv.as_binary());
            if (!id) {
                metrics_.dropped_replies.fetch_add(1);
                continue;
            }
            Value& reply_value = r.values[s->reply_idx];
            if (reply_value.is_null()) {
                reply(s, *id,
                      make_text_response(502, "Bad Gateway",
                                         "pipeline produced a null reply column"),
                      false);
            } else {
                reply(s, *id, std::move(std::get<HttpResponseData>(reply_value.v)), false);
            }
        }
        return;
    }

    // wide boundary: scatter rows to partition owners, continuations run there
    const StageSpec& wide_stage = spec.stages[seg_end];
    Partitioning part;
    try {
        part = wide_stage_partitioning(wide_stage, out_schema,
                                       static_cast<uint32_t>(s->topology.size()));
    } catch (const std::exception& e) {
        std::vector<RoutingId> ids;
        for (const auto& r : out) {
            if (auto id = RoutingId::decode(r.values[id_out].as_binary())) ids.push_back(*id);
        }
        abort_rows(s, ids, 500, e.what());
        return;
    }

    std::unordered_map<uint32_t, std::vector<Bytes>> by_partition;
    std::unordered_map<uint32_t, std::vector<RoutingId>> ids_by_partition;
    for (const auto& r : out) {
        Bytes kb = key_bytes(r, part.key_indices);
        uint32_t p = hash_partition(kb, part.partition_count);
        by_partition[p].push_back(encode_row(r));
        if (auto id = RoutingId::decode(r.values[id_out].as_binary())) {
            ids_by_partition[p].push_back(*id);
        }
    }

    uint64_t batch_id = next_batch_id_.fetch_add(1);
    for (auto& [p, encoded_rows] : by_partition) {
        ShuffleFrame frame;
        frame.pipeline_id = spec.id;
        frame.stage_index = static_cast<uint32_t>(seg_end);
        frame.origin_worker = worker_id_;
        frame.batch_id = batch_id;
        frame.target_partition = p;
        frame.partition_count = part.partition_count;
        frame.mode = ShuffleMode::Serving;
        frame.rows = std::move(encoded_rows);

        const WorkerAddress& owner = s->topology[p % s->topology.size()];
        if (owner.worker_id == worker_id_) {
            auto frame_ptr = std::make_shared<ShuffleFrame>(std::move(frame));
            pool_submit([this, s, frame_ptr] {
                handle_serving_continuation(s, std::move(*frame_ptr));
            });
            continue;
        }
        try {
            peers_.call_with_retry(owner.internal_address, frame, options_.shuffle_deadline_ms);
            metrics_.shuffle_frames_sent.fetch_add(1);
        } catch (const NetError& e) {
            abort_rows(s, ids_by_partition[p], 503, e.what());
        }
    }
}

void WorkerRuntime::handle_serving_continuation(const ServingPtr& s, ShuffleFrame frame) {
    const PipelineSpec& spec = *s->spec;
    size_t w = frame.stage_index;
    if (w >= spec.stages.size()) return;
    const Schema& schema = s->schema_at[w];
    std::vector<Row> rows;
    rows.reserve(frame.rows.size());
    try {
        for (const auto& bytes : frame.rows) rows.push_back(decode_row(bytes, schema));
    } catch (const CodecError& e) {
        fprintf(stderr, "worker %u: undecodable shuffle payload: %s\n", worker_id_, e.what());
        return;
    }
    if (const auto* agg = std::get_if<AggregateStage>(&spec.stages[w])) {
        // batch-scoped grouping: this frame holds the full key groups of its
        // origin batch for this partition
        rows = apply_aggregate(*agg, schema, rows, ExecMode::Serving);
    }
    execute_serving_batch(s, std::move(rows), w + 1);
}

Frame WorkerRuntime::handle_frame(Frame&& frame) {
    if (auto* f = std::get_if<ShuffleFrame>(&frame)) {
        metrics_.shuffle_frames_received.fetch_add(1);
        if (f->mode == ShuffleMode::Serving) {
            ServingPtr s = current_serving();
            if (!s || s->spec->id != f->pipeline_id) {
                return AckFrame{AckFrame::Error, "pipeline '" + f->pipeline_id +
                                "' is not being served here", 0};
            }
            auto frame_ptr = std::make_shared<ShuffleFrame>(std::move(*f));
            pool_submit([this, s, frame_ptr] {
                handle_serving_continuation(s, std::move(*frame_ptr));
            });
            return AckFrame{AckFrame::Ok, "", 0};
        }
        if (f->mode == ShuffleMode::Collect) {
            auto frame_ptr = std::make_shared<ShuffleFrame>(std::move(*f));
            pool_submit([this, frame_ptr] { handle_collect_job(std::move(*frame_ptr)); });
            return AckFrame{AckFrame::Ok, "", 0};
        }
        // raw exchange: record the contribution
        auto state = exchange_state(f->batch_id);
        {
            std::lock_guard lock(state->mu);
            state->seen.emplace_back(f->origin_worker, f->target_partition);
            for (auto& r : f->rows) state->rows.push_back(std::move(r));
            state->received += 1;
        }
        state->cv.notify_all();
        return AckFrame{AckFrame::Ok, "", 0};
    }
    if (auto* f = std::get_if<ResponseFrame>(&frame)) {
        metrics_.response_frames_received.fetch_add(1);
        if (f->id.worker_id != worker_id_) {
            return AckFrame{AckFrame::Error,
                            "routing id " + f->id.to_string() + " belongs to another worker", 0};
        }
        Value value;
        try {
            ByteReader in(f->response);
            value = decode_value(in, DataType::http_response());
        } catch (const CodecError& e) {
            return AckFrame{AckFrame::Error, std::string("bad response payload: ") + e.what(), 0};
        }
        if (value.is_null()) {
            return AckFrame{AckFrame::Error, "null response payload", 0};
        }
        if (registry_->complete(f->id, std::move(std::get<HttpResponseData>(value.v)))) {
            metrics_.replied.fetch_add(1);
            return AckFrame{AckFrame::Ok, "", 0};
        }
        // expired, duplicate, or never known: counted no-op either way
        metrics_.dropped_replies.fetch_add(1);
        return AckFrame{AckFrame::Duplicate, "routing id not open", 0};
    }
    if (auto* f = std::get_if<InstallPipelineFrame>(&frame)) {
        try {
            install_pipeline(f->pipeline_json);
            return AckFrame{AckFrame::Ok, "", 0};
        } catch (const std::exception& e) {
            return AckFrame{AckFrame::Error, e.what(), 0};
        }
    }
    if (auto* f = std::get_if<InstallTableFrame>(&frame)) {
        try {
            BroadcastTable table;
            table.table_id = f->table_id;
            table.schema = load_table_csv(f->table_id, f->schema_csv_header + "\n").schema;
            for (const auto& bytes : f->rows) {
                table.rows.push_back(decode_row(bytes, table.schema));
            }
            uint64_t computed = table.checksum();
            if (computed != f->checksum) {
                return AckFrame{AckFrame::Error,
                                "checksum mismatch on table '" + f->table_id + "'", computed};
            }
            install_table(std::move(table));
            return AckFrame{AckFrame::Ok, "", computed};
        } catch (const std::exception& e) {
            return AckFrame{AckFrame::Error, e.what(), 0};
        }
    }
    if (auto* f = std::get_if<ServeStartFrame>(&frame)) {
        try {
            serve_start(f->pipeline_id, ServingConfig::from_json(f->config_json), f->topology);
            return AckFrame{AckFrame::Ok, "", 0};
        } catch (const std::exception& e) {
            return AckFrame{AckFrame::Error, e.what(), 0};
        }
    }
    if (std::get_if<ServeStopFrame>(&frame)) {
        serve_stop();
        return AckFrame{AckFrame::Ok, "", 0};
    }
    if (std::get_if<DrainFrame>(&frame)) {
        set_draining(true);
        return AckFrame{AckFrame::Ok, "", 0};
    }
    if (auto* f = std::get_if<CollectFrame>(&frame)) {
        std::shared_ptr<CollectState> state;
        {
            std::lock_guard lock(collect_mu_);
            auto it = collects_.find(f->batch_id);
            if (it != collects_.end()) state = it->second;
        }
        if (!state) return AckFrame{AckFrame::Unknown, "no open collect job", 0};
        {
            std::lock_guard lock(state->mu);
            for (auto& r : f->rows) state->rows.push_back(std::move(r));
            state->received += 1;
        }
        state->cv.notify_all();
        return AckFrame{AckFrame::Ok, "", 0};
    }
    return AckFrame{AckFrame::Error, "unexpected frame kind", 0};
}

std::shared_ptr<WorkerRuntime::CollectState> WorkerRuntime::collect_state(uint64_t job_id) {
    std::lock_guard lock(collect_mu_);
    auto it = collects_.find(job_id);
    if (it == collects_.end()) {
        it = collects_.emplace(job_id, std::make_shared<CollectState>()).first;
    }
    return it->second;
}

std::shared_ptr<WorkerRuntime::ExchangeState> WorkerRuntime::exchange_state(uint64_t exchange_id) {
    std::lock_guard lock(exchange_mu_);
    auto it = exchanges_.find(exchange_id);
    if (it == exchanges_.end()) {
        it = exchanges_.emplace(exchange_id, std::make_shared<ExchangeState>()).first;
    }
    return it->second;
}

void WorkerRuntime::handle_collect_job(ShuffleFrame frame) {
    auto spec = pipelines_.find(frame.pipeline_id);
    if (!spec) return;
    size_t w = frame.stage_index;
    Schema schema = propagate_schema(*spec, ExecMode::Batch, w);
    std::vector<Row> rows;
    try {
        for (const auto& bytes : frame.rows) rows.push_back(decode_row(bytes, schema));
        if (const auto* agg = std::get_if<AggregateStage>(&spec->stages[w])) {
            rows = apply_aggregate(*agg, schema, rows, ExecMode::Batch);
            schema = stage_output_schema(spec->stages[w], schema, ExecMode::Batch,
                                         static_cast<int>(w));
        }
        rows = run_narrow_segment(*spec, w + 1, spec->stages.size(), std::move(rows),
                                  run_context(), ExecMode::Batch);
    } catch (const std::exception& e) {
        fprintf(stderr, "worker %u collect job failed: %s\n", worker_id_, e.what());
        rows.clear();
    }
    CollectFrame result;
    result.pipeline_id = frame.pipeline_id;
    result.batch_id = frame.batch_id;
    result.from_partition = frame.target_partition;
    for (const auto& r : rows) result.rows.push_back(encode_row(r));

    // origin address travels in the frame's pipeline-independent header
    std::string origin = frame.origin_address;
    if (origin.empty()) return;
    try {
        peers_.call_with_retry(origin, result, options_.shuffle_deadline_ms);
    } catch (const NetError& e) {
        fprintf(stderr, "worker %u cannot return collect results: %s\n", worker_id_, e.what());
    }
}

std::vector<Row> WorkerRuntime::execute_collect(const std::string& pipeline_id,
                                                std::vector<Row> rows,
                                                const std::vector<WorkerAddress>& topology,
                                                int64_t deadline_ms) {
    auto spec = pipelines_.find(pipeline_id);
    if (!spec) throw ConfigError("unknown pipeline '" + pipeline_id + "'");
    auto wide = spec->wide_stage_indices();
    if (wide.empty()) {
        return run_batch(*spec, std::move(rows), run_context(), ExecMode::Batch);
    }
    if (wide.size() > 1) {
        throw ConfigError("collect jobs support at most one wide stage");
    }
    size_t w = wide[0];
    rows = run_narrow_segment(*spec, 0, w, std::move(rows), run_context(), ExecMode::Batch);

    Schema schema = propagate_schema(*spec, ExecMode::Batch, w);
    Partitioning part = wide_stage_partitioning(spec->stages[w], schema,
                                                static_cast<uint32_t>(topology.size()));

    uint64_t job_id = (static_cast<uint64_t>(worker_id_) << 40) | next_batch_id_.fetch_add(1);
    auto state = collect_state(job_id);
    {
        std::lock_guard lock(state->mu);
        state->expected = part.partition_count;
    }

    std::vector<std::vector<Bytes>> by_partition(part.partition_count);
    for (const auto& r : rows) {
        uint32_t p = hash_partition(key_bytes(r, part.key_indices), part.partition_count);
        by_partition[p].push_back(encode_row(r));
    }
    for (uint32_t p = 0; p < part.partition_count; ++p) {
        ShuffleFrame frame;
        frame.pipeline_id = pipeline_id;
        frame.stage_index = static_cast<uint32_t>(w);
        frame.origin_worker = worker_id_;
        frame.origin_address = internal_address();
        frame.batch_id = job_id;
        frame.target_partition = p;
        frame.partition_count = part.partition_count;
        frame.mode = ShuffleMode::Collect;
        frame.rows = std::move(by_partition[p]);
        const WorkerAddress& owner = topology[p % topology.size()];
        if (owner.worker_id == worker_id_) {
            auto frame_ptr = std::make_shared<ShuffleFrame>(std::move(frame));
            pool_submit([this, frame_ptr] { handle_collect_job(std::move(*frame_ptr)); });
        } else {
            peers_.call_with_retry(owner.internal_address, frame, deadline_ms);
            metrics_.shuffle_frames_sent.fetch_add(1);
        }
    }

    Schema final_schema = propagate_schema(*spec, ExecMode::Batch);
    std::vector<Row> collected;
    {
        std::unique_lock lock(state->mu);
        bool done = state->cv.wait_for(lock, std::chrono::milliseconds(deadline_ms), [&] {
            return state->received >= state->expected;
        });
        if (!done) {
            throw NetError("collect job timed out: " + std::to_string(state->received) + "/" +
                           std::to_string(state->expected) + " partitions reported");
        }
        for (const auto& bytes : state->rows) collected.push_back(decode_row(bytes, final_schema));
    }
    {
        std::lock_guard lock(collect_mu_);
        collects_.erase(job_id);
    }
    return collected;
}

std::vector<Row> WorkerRuntime::exchange_rows(const std::string& pipeline_id,
                                              uint32_t stage_index, uint64_t exchange_id,
                                              const std::vector<Row>& rows,
                                              const std::string& key_col,
                                              uint32_t partition_count,
                                              const std::vector<WorkerAddress>& topology,
                                              int64_t deadline_ms) {
    auto spec = pipelines_.find(pipeline_id);
    if (!spec) throw ConfigError("unknown pipeline '" + pipeline_id + "'");
    Schema schema = propagate_schema(*spec, ExecMode::Batch, stage_index);
    size_t key_idx = schema.require(key_col);

    uint32_t w_count = static_cast<uint32_t>(topology.size());
    uint32_t owned = 0;
    for (uint32_t p = 0; p < partition_count; ++p) {
        if (topology[p % w_count].worker_id == worker_id_) ++owned;
    }
    auto state = exchange_state(exchange_id);

    std::vector<std::vector<Bytes>> by_partition(partition_count);
    std::array<size_t, 1> keys{key_idx};
    for (const auto& r : rows) {
        uint32_t p = hash_partition(key_bytes(r, keys), partition_count);
        by_partition[p].push_back(encode_row(r));
    }
    for (uint32_t p = 0; p < partition_count; ++p) {
        ShuffleFrame frame;
        frame.pipeline_id = pipeline_id;
        frame.stage_index = stage_index;
        frame.origin_worker = worker_id_;
        frame.origin_address = internal_address();
        frame.batch_id = exchange_id;
        frame.target_partition = p;
        frame.partition_count = partition_count;
        frame.mode = ShuffleMode::Exchange;
        frame.rows = std::move(by_partition[p]);
        const WorkerAddress& owner = topology[p % w_count];
        if (owner.worker_id == worker_id_) {
            std::lock_guard lock(state->mu);
            state->seen.emplace_back(worker_id_, p);
            for (auto& r : frame.rows) state->rows.push_back(std::move(r));
            state->received += 1;
        } else {
            peers_.call_with_retry(owner.internal_address, frame, deadline_ms);
            metrics_.shuffle_frames_sent.fetch_add(1);
        }
    }
    state->cv.notify_all();

    uint32_t expected = w_count * owned;
    std::vector<Row> received;
    {
        std::unique_lock lock(state->mu);
        bool done = state->cv.wait_for(lock, std::chrono::milliseconds(deadline_ms), [&] {
            return state->received >= expected;
        });
        if (!done) {
            std::vector<bool> heard(w_count, false);
            for (auto& [origin, p] : state->seen) {
                for (uint32_t i = 0; i < w_count; ++i) {
                    if (topology[i].worker_id == origin) heard[i] = true;
                }
            }
            std::string missing;
            for (uint32_t i = 0; i < w_count; ++i) {
                if (!heard[i]) {
                    missing += (missing.empty() ? "" : ", ") + topology[i].internal_address;
                }
            }
            throw NetError("shuffle exchange timed out waiting for: " +
                           (missing.empty() ? "partial frames" : missing));
        }
        for (const auto& bytes : state->rows) received.push_back(decode_row(bytes, schema));
    }
    {
        std::lock_guard lock(exchange_mu_);
        exchanges_.erase(exchange_id);
    }
    return received;
}

}  // namespace rowserve
