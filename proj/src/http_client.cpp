#include "rowserve/http_client.hpp"

#include <atomic>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "rowserve/clock.hpp"

namespace rowserve {

namespace {

struct SplitUrl {
    std::string base;    // scheme://host:port
    std::string target;  // /path?query
};

std::optional<SplitUrl> split_url(const std::string& uri) {
    if (!uri.starts_with("http://") && !uri.starts_with("https://")) return std::nullopt;
    size_t scheme_end = uri.find("://") + 3;
    size_t path_start = uri.find('/', scheme_end);
    if (path_start == std::string::npos) {
        return SplitUrl{uri, "/"};
    }
    return SplitUrl{uri.substr(0, path_start), uri.substr(path_start)};
}

// One client per base URL per worker thread; keep-alive reuses connections
// across requests to the same host.
class ClientCache {
public:
    explicit ClientCache(int timeout_ms) : timeout_ms_(timeout_ms) {}

    httplib::Client& get(const std::string& base) {
        auto it = clients_.find(base);
        if (it != clients_.end()) return *it->second;
        auto client = std::make_unique<httplib::Client>(base);
        client->set_connection_timeout(0, timeout_ms_ * 1000);
        client->set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        client->set_write_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        client->set_keep_alive(true);
        auto [pos, _] = clients_.emplace(base, std::move(client));
        return *pos->second;
    }

private:
    int timeout_ms_;
    std::unordered_map<std::string, std::unique_ptr<httplib::Client>> clients_;
};

struct AttemptOutcome {
    std::optional<HttpResponseData> response;
    std::string transport_error;
};

AttemptOutcome attempt_request(ClientCache& cache, const HttpRequestData& req) {
    auto url = split_url(req.uri);
    if (!url) {
        return {std::nullopt, "uri '" + req.uri + "' is not an absolute http URL"};
    }
    httplib::Request hreq;
    hreq.method = req.method;
    hreq.path = url->target;
    for (const auto& [name, value] : req.headers) {
        if (header_name_equal(name, "Content-Length")) continue;  // derived from the body
        if (header_name_equal(name, "Host")) continue;
        hreq.headers.emplace(name, value);
    }
    hreq.body.assign(req.body.begin(), req.body.end());
    if (!req.body.empty() && !req.header("Content-Type")) {
        hreq.headers.emplace("Content-Type", "application/octet-stream");
    }

    httplib::Response hres;
    httplib::Error err = httplib::Error::Success;
    if (!cache.get(url->base).send(hreq, hres, err)) {
        return {std::nullopt, httplib::to_string(err)};
    }
    HttpResponseData out;
    out.status = hres.status;
    out.reason = hres.reason;
    for (const auto& [name, value] : hres.headers) {
        out.headers.emplace_back(name, value);
    }
    out.body.assign(hres.body.begin(), hres.body.end());
    return {std::move(out), ""};
}

HttpResult run_with_retries(ClientCache& cache, const HttpRequestData& req,
                            const ClientConfig& config, TokenBucket& bucket,
                            JitterSource& jitter) {
    HttpResult result;
    int64_t start = steady_micros();
    int max_attempts = config.retry.max_retries + 1;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        bucket.acquire();
        result.attempts = attempt;
        AttemptOutcome outcome = attempt_request(cache, req);
        if (outcome.response) {
            result.last_status = outcome.response->status;
            if (!config.retry.retryable(outcome.response->status)) {
                // success or non-retryable status: returned as-is, no retry
                result.response = std::move(outcome.response);
                result.error.clear();
                break;
            }
            result.error = "retryable status " + std::to_string(outcome.response->status);
        } else {
            result.error = "transport: " + outcome.transport_error;
        }
        if (attempt < max_attempts) {
            double delay = backoff_delay_ms(config.retry, attempt, jitter.draw());
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
        }
    }
    result.elapsed_ms = static_cast<double>(steady_micros() - start) / 1000.0;
    return result;
}

}  // namespace

std::vector<HttpResult> execute_partition(
    const std::vector<std::optional<HttpRequestData>>& requests, const ClientConfig& config) {
    config.validate();
    std::vector<HttpResult> results(requests.size());
    if (requests.empty()) return results;

    TokenBucket bucket(config.rate_limit_per_sec);
    JitterSource jitter(config.retry);
    std::atomic<size_t> next{0};

    size_t pool = std::min<size_t>(static_cast<size_t>(config.max_concurrent_per_partition),
                                   requests.size());
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (size_t t = 0; t < pool; ++t) {
        threads.emplace_back([&] {
            ClientCache cache(config.request_timeout_ms);
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= requests.size()) break;
                if (!requests[i]) {
                    results[i].error = "no request built";
                    continue;
                }
                results[i] = run_with_retries(cache, *requests[i], config, bucket, jitter);
            }
        });
    }
    for (auto& t : threads) t.join();
    return results;
}

HttpResult execute_one(const HttpRequestData& request, const ClientConfig& config) {
    config.validate();
    TokenBucket bucket(config.rate_limit_per_sec);
    JitterSource jitter(config.retry);
    ClientCache cache(config.request_timeout_ms);
    return run_with_retries(cache, request, config, bucket, jitter);
}

}  // namespace rowserve
