#include "rowserve/driver.hpp"

#include <httplib.h>
#include <json.hpp>

namespace rowserve {

using nlohmann::json;

DriverService::DriverService(DriverOptions options, const Clock& clock)
    : options_(std::move(options)),
      clock_(clock),
      monitor_(clock_, options_.heartbeat_ms),
      peers_(static_cast<int>(options_.control_deadline_ms)) {}

DriverService::~DriverService() {
    stop();
}

std::string DriverService::address() const {
    return options_.host + ":" + std::to_string(options_.port);
}

std::vector<WorkerAddress> DriverService::topology_snapshot() const {
    std::vector<WorkerAddress> topology;
    for (const auto& w : monitor_.live_workers()) {
        topology.push_back({w.worker_id, w.public_address, w.internal_address});
    }
    return topology;
}

std::vector<uint32_t> DriverService::install_pipeline(const std::string& pipeline_json) {
    PipelineSpec spec = parse_pipeline(pipeline_json);
    std::string canonical = pipeline_to_json(spec);
    std::string id = spec.id;
    pipelines_.install(std::move(spec));

    std::vector<uint32_t> installed;
    for (const auto& w : monitor_.live_workers()) {
        Frame ack = peers_.call_with_retry(w.internal_address, InstallPipelineFrame{canonical},
                                           options_.control_deadline_ms);
        const auto* a = std::get_if<AckFrame>(&ack);
        if (!a || a->code != AckFrame::Ok) {
            throw NetError("worker " + std::to_string(w.worker_id) + " rejected pipeline '" +
                           id + "': " + (a ? a->message : "bad ack"));
        }
        installed.push_back(w.worker_id);
    }
    {
        std::lock_guard lock(serving_mu_);
        installed_.insert(id);
    }
    return installed;
}

std::vector<uint32_t> DriverService::distribute_broadcast(const BroadcastTable& table) {
    InstallTableFrame frame;
    frame.table_id = table.table_id;
    {
        std::string header;
        for (size_t i = 0; i < table.schema.size(); ++i) {
            if (i) header += ",";
            header += table.schema.at(i).name + ":" + table.schema.at(i).type.to_string();
        }
        frame.schema_csv_header = header;
    }
    for (const auto& r : table.rows) frame.rows.push_back(encode_row(r));
    frame.checksum = table.checksum();

    std::vector<uint32_t> acked;
    for (const auto& w : monitor_.live_workers()) {
        Frame reply;
        try {
            reply = peers_.call_with_retry(w.internal_address, frame,
                                           options_.control_deadline_ms);
        } catch (const NetError& e) {
            throw NetError("broadcast of table '" + table.table_id + "' failed: worker " +
                           std::to_string(w.worker_id) + " (" + w.internal_address +
                           ") did not acknowledge: " + e.what());
        }
        const auto* a = std::get_if<AckFrame>(&reply);
        if (!a || a->code != AckFrame::Ok || a->checksum != frame.checksum) {
            throw NetError("broadcast of table '" + table.table_id + "' failed: worker " +
                           std::to_string(w.worker_id) +
                           (a ? " reported: " + a->message : " sent a bad ack"));
        }
        acked.push_back(w.worker_id);
    }
    {
        std::lock_guard lock(tables_mu_);
        tables_[table.table_id] = std::make_shared<const BroadcastTable>(table);
    }
    return acked;
}

std::vector<uint32_t> DriverService::start_serving(const std::string& pipeline_id,
                                                   const ServingConfig& config) {
    auto spec = pipelines_.find(pipeline_id);
    if (!spec) throw ConfigError("unknown pipeline '" + pipeline_id + "'");
    validate_serving(*spec, config);

    auto topology = topology_snapshot();
    if (topology.empty()) throw ConfigError("no live workers to serve on");

    ServeStartFrame frame;
    frame.pipeline_id = pipeline_id;
    frame.config_json = config.to_json();
    frame.topology = topology;

    std::vector<uint32_t> serving;
    for (const auto& w : topology) {
        Frame reply = peers_.call_with_retry(w.internal_address, frame,
                                             options_.control_deadline_ms);
        const auto* a = std::get_if<AckFrame>(&reply);
        if (!a || a->code != AckFrame::Ok) {
            throw NetError("worker " + std::to_string(w.worker_id) + " cannot serve '" +
                           pipeline_id + "': " + (a ? a->message : "bad ack"));
        }
        serving.push_back(w.worker_id);
    }
    {
        std::lock_guard lock(serving_mu_);
        serving_pipeline_ = pipeline_id;
        serving_mode_ = config.mode == ServingConfig::Mode::Continuous ? "continuous"
                                                                       : "minibatch";
    }
    return serving;
}

void DriverService::stop_serving(const std::string& pipeline_id) {
    for (const auto& w : monitor_.live_workers()) {
        try {
            peers_.call_with_retry(w.internal_address, ServeStopFrame{pipeline_id},
                                   options_.control_deadline_ms);
        } catch (const NetError&) {
            // worker already gone; monitor will mark it dead
        }
    }
    std::lock_guard lock(serving_mu_);
    if (serving_pipeline_ == pipeline_id) {
        serving_pipeline_.clear();
        serving_mode_.clear();
    }
}

void DriverService::start() {
    if (running_.exchange(true)) return;
    server_ = std::make_unique<httplib::Server>();

    server_->set_pre_routing_handler([this](const httplib::Request&, httplib::Response&) {
        http_requests_.fetch_add(1);
        return httplib::Server::HandlerResponse::Unhandled;
    });

    auto fail = [](httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(json{{"error", message}}.dump(), "application/json");
    };

    server_->Post("/v1/register", [this, fail](const httplib::Request& req,
                                               httplib::Response& res) {
        try {
            auto body = json::parse(req.body);
            auto status = monitor_.register_worker(body.at("publicAddress").get<std::string>(),
                                                   body.at("internalAddress").get<std::string>());
            res.set_content(json{{"workerId", status.worker_id},
                                 {"heartbeatMs", monitor_.heartbeat_interval_ms()}}
                                .dump(),
                            "application/json");
        } catch (const ConflictError& e) {
            fail(res, 409, e.what());
        } catch (const std::exception& e) {
            fail(res, 400, e.what());
        }
    });

    server_->Post("/v1/heartbeat", [this, fail](const httplib::Request& req,
                                                httplib::Response& res) {
        try {
            auto body = json::parse(req.body);
            monitor_.heartbeat(body.at("workerId").get<uint32_t>(),
                               body.value("queueDepth", int64_t{0}));
            res.set_content("{}", "application/json");
        } catch (const std::exception& e) {
            fail(res, 404, e.what());
        }
    });

    server_->Get("/v1/workers", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(monitor_.to_json(), "application/json");
    });

    server_->Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"http_requests_total", http_requests_.load()}}.dump(),
                        "application/json");
    });

    server_->Post("/v1/pipelines", [this, fail](const httplib::Request& req,
                                                httplib::Response& res) {
        try {
            PipelineSpec spec = parse_pipeline(req.body);
            std::string id = spec.id;
            auto workers = install_pipeline(req.body);
            res.set_content(json{{"id", id}, {"workers", workers}}.dump(), "application/json");
        } catch (const ParseError& e) {
            fail(res, 400, e.what());
        } catch (const std::exception& e) {
            fail(res, 502, e.what());
        }
    });

    server_->Get(R"(/v1/pipelines/([^/]+))", [this, fail](const httplib::Request& req,
                                                          httplib::Response& res) {
        std::string id = req.matches[1];
        auto spec = pipelines_.find(id);
        if (!spec) {
            fail(res, 404, "unknown pipeline '" + id + "'");
            return;
        }
        std::lock_guard lock(serving_mu_);
        json out{{"id", id},
                 {"stages", spec->stages.size()},
                 {"narrow", spec->all_narrow()},
                 {"serving", serving_pipeline_ == id}};
        if (serving_pipeline_ == id) out["mode"] = serving_mode_;
        res.set_content(out.dump(), "application/json");
    });

    server_->Post(R"(/v1/tables/([^/]+))", [this, fail](const httplib::Request& req,
                                                        httplib::Response& res) {
        try {
            BroadcastTable table = load_table_csv(req.matches[1], req.body);
            auto workers = distribute_broadcast(table);
            res.set_content(json{{"id", table.table_id},
                                 {"rows", table.rows.size()},
                                 {"checksum", table.checksum()},
                                 {"workers", workers}}
                                .dump(),
                            "application/json");
        } catch (const ParseError& e) {
            fail(res, 400, e.what());
        } catch (const std::exception& e) {
            fail(res, 502, e.what());
        }
    });

    server_->Post(R"(/v1/pipelines/([^/]+)/serve)", [this, fail](const httplib::Request& req,
                                                                 httplib::Response& res) {
        try {
            ServingConfig config =
                req.body.empty() ? ServingConfig{} : ServingConfig::from_json(req.body);
            auto workers = start_serving(req.matches[1], config);
            res.set_content(json{{"id", std::string(req.matches[1])}, {"workers", workers}}.dump(),
                            "application/json");
        } catch (const ParseError& e) {
            fail(res, 400, e.what());
        } catch (const ConfigError& e) {
            fail(res, 400, e.what());
        } catch (const SchemaError& e) {
            fail(res, 400, e.what());
        } catch (const std::exception& e) {
            fail(res, 502, e.what());
        }
    });

    server_->Post(R"(/v1/pipelines/([^/]+)/stop)", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
        stop_serving(req.matches[1]);
        res.set_content("{}", "application/json");
    });

    server_->Post(R"(/v1/workers/(\d+)/drain)", [this, fail](const httplib::Request& req,
                                                             httplib::Response& res) {
        uint32_t id = static_cast<uint32_t>(std::stoul(req.matches[1]));
        auto w = monitor_.find(id);
        if (!w) {
            fail(res, 404, "unknown worker " + std::to_string(id));
            return;
        }
        try {
            peers_.call_with_retry(w->internal_address, DrainFrame{},
                                   options_.control_deadline_ms);
        } catch (const NetError& e) {
            fail(res, 502, e.what());
            return;
        }
        monitor_.set_state(id, WorkerState::Draining);
        res.set_content("{}", "application/json");
    });

    int port = options_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(options_.host);
        if (port <= 0) throw NetError("cannot bind driver on " + options_.host);
    } else if (!server_->bind_to_port(options_.host, port)) {
        throw NetError("cannot bind driver " + address());
    }
    options_.port = port;
    server_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void DriverService::stop() {
    if (!running_.exchange(false)) return;
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace rowserve
