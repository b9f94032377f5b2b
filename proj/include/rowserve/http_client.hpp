#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rowserve/retry.hpp"
#include "rowserve/schema.hpp"
#include "rowserve/value.hpp"

namespace rowserve {

/// Stage parameter: a constant shared by every row, or a column so each row
/// parameterizes its own request.
struct ParamBinding {
    enum class Kind { Lit, Col };
    Kind kind = Kind::Lit;
    Value literal;       // Lit
    std::string column;  // Col

    static ParamBinding lit(Value v) { return {Kind::Lit, std::move(v), {}}; }
    static ParamBinding column_ref(std::string name) {
        return {Kind::Col, Value::null(), std::move(name)};
    }
};

/// Request recipe: method, a URI pattern with {placeholder} slots, headers and
/// body, each bound to a literal or a column.
struct RequestTemplate {
    ParamBinding method = ParamBinding::lit(Value::of("GET"));
    std::string uri_pattern;
    std::map<std::string, ParamBinding> uri_bindings;  // placeholder -> binding
    std::vector<std::pair<std::string, ParamBinding>> headers;
    std::optional<ParamBinding> body;

    /// Checks every placeholder has a binding and every Col resolves with a
    /// usable type. Throws SchemaError.
    void validate(const Schema& schema) const;

    /// Names of the {slots} in uri_pattern, in order of appearance.
    std::vector<std::string> placeholders() const;
};

/// Row-level outcome of building a request; failures (null in a required
/// binding) are recorded, not thrown.
struct BuildResult {
    std::optional<HttpRequestData> request;
    std::string error;
    bool ok() const { return request.has_value(); }
};

BuildResult build_request(const RequestTemplate& tmpl, const Row& row, const Schema& schema);

struct ClientConfig {
    int max_concurrent_per_partition = 4;  // >= 1
    double rate_limit_per_sec = 0;         // <= 0 = unlimited
    int request_timeout_ms = 10000;
    RetryPolicy retry;

    void validate() const {
        if (max_concurrent_per_partition < 1) {
            throw ConfigError("maxConcurrentPerPartition must be >= 1");
        }
        if (request_timeout_ms <= 0) throw ConfigError("requestTimeoutMs must be positive");
        retry.validate();
    }
};

/// One slot of execute_partition output. Either a response or an error record;
/// attempts/elapsed are always filled.
struct HttpResult {
    std::optional<HttpResponseData> response;
    std::string error;              // non-empty iff no response
    std::optional<int> last_status; // last status seen (also set on retry exhaustion)
    int attempts = 0;
    double elapsed_ms = 0;

    bool ok() const { return response.has_value(); }
};

/// Executes requests with bounded concurrency, token-bucket throttling and
/// exponential backoff. Output order matches input order regardless of
/// completion order. Never throws for row-level failures.
std::vector<HttpResult> execute_partition(const std::vector<std::optional<HttpRequestData>>& requests,
                                          const ClientConfig& config);

/// Single request through the same retry machinery.
HttpResult execute_one(const HttpRequestData& request, const ClientConfig& config);

}  // namespace rowserve
