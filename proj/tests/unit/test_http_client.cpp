#include <doctest.h>

#include <cmath>

#include "rowserve/http_client.hpp"

using namespace rowserve;

TEST_CASE("backoff: geometric schedule without jitter") {
    RetryPolicy p;
    p.base_delay_ms = 100;
    p.multiplier = 2;
    p.max_retries = 3;
    p.jitter_fraction = 0;
    CHECK(backoff_delay_ms(p, 1, 1.0) == doctest::Approx(100));
    CHECK(backoff_delay_ms(p, 2, 1.0) == doctest::Approx(200));
    CHECK(backoff_delay_ms(p, 3, 1.0) == doctest::Approx(400));
    CHECK_THROWS_AS(backoff_delay_ms(p, 0, 1.0), ConfigError);
    CHECK_THROWS_AS(backoff_delay_ms(p, 4, 1.0), ConfigError);
}

TEST_CASE("backoff: multiplier 1 is a constant delay") {
    RetryPolicy p;
    p.base_delay_ms = 50;
    p.multiplier = 1;
    p.max_retries = 5;
    for (int a = 1; a <= 5; ++a) CHECK(backoff_delay_ms(p, a, 1.0) == doctest::Approx(50));
}

TEST_CASE("backoff: jitter 0.1 keeps attempt-2 delay within [180, 220] over 1000 draws") {
    RetryPolicy p;
    p.base_delay_ms = 100;
    p.multiplier = 2;
    p.max_retries = 2;
    p.jitter_fraction = 0.1;
    p.jitter_seed = 17;
    JitterSource jitter(p);
    double lo = 1e9, hi = 0;
    for (int i = 0; i < 1000; ++i) {
        double d = backoff_delay_ms(p, 2, jitter.draw());
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        CHECK(d >= 180.0);
        CHECK(d <= 220.0);
    }
    // draws actually spread across the band
    CHECK(lo < 185.0);
    CHECK(hi > 215.0);
}

TEST_CASE("retry policy validation") {
    RetryPolicy p;
    p.base_delay_ms = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.base_delay_ms = 10;
    p.multiplier = 0.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.multiplier = 1;
    p.jitter_fraction = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.jitter_fraction = 0.0;
    CHECK_NOTHROW(p.validate());
    CHECK(p.retryable(503));
    CHECK(p.retryable(429));
    CHECK_FALSE(p.retryable(400));
    CHECK_FALSE(p.retryable(200));
}

TEST_CASE("build_request: all-literal template is row independent") {
    RequestTemplate t;
    t.method = ParamBinding::lit(Value::of("POST"));
    t.uri_pattern = "http://localhost:1/score";
    t.body = ParamBinding::lit(Value::of("payload"));
    Schema schema({{"x", DataType::int64()}});
    t.validate(schema);
    auto a = build_request(t, Row({Value::of(int64_t{1})}), schema);
    auto b = build_request(t, Row({Value::of(int64_t{2})}), schema);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(*a.request == *b.request);
    CHECK(a.request->method == "POST");
    CHECK(a.request->body == to_bytes("payload"));
}

TEST_CASE("build_request: vectorized column binding varies per row") {
    RequestTemplate t;
    t.uri_pattern = "http://h:1/t?key={k}";
    t.uri_bindings.emplace("k", ParamBinding::column_ref("k"));
    Schema schema({{"k", DataType::string()}});
    t.validate(schema);
    auto a = build_request(t, Row({Value::of("a")}), schema);
    auto b = build_request(t, Row({Value::of("b")}), schema);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(a.request->uri == "http://h:1/t?key=a");
    CHECK(b.request->uri == "http://h:1/t?key=b");
    CHECK(*a.request != *b.request);
}

TEST_CASE("build_request: golden three-placeholder request") {
    RequestTemplate t;
    t.method = ParamBinding::column_ref("m");
    t.uri_pattern = "http://api.example:8080/v2/{tenant}/items/{item}?page={page}";
    t.uri_bindings.emplace("tenant", ParamBinding::column_ref("tenant"));
    t.uri_bindings.emplace("item", ParamBinding::lit(Value::of("widget")));
    t.uri_bindings.emplace("page", ParamBinding::column_ref("page"));
    t.headers.emplace_back("X-Sub-Key", ParamBinding::column_ref("key"));
    t.headers.emplace_back("Accept", ParamBinding::lit(Value::of("text/plain")));
    t.body = ParamBinding::column_ref("payload");

    Schema schema({{"m", DataType::string()},
                   {"tenant", DataType::string()},
                   {"page", DataType::int64()},
                   {"key", DataType::string()},
                   {"payload", DataType::binary()}});
    t.validate(schema);
    Row row({Value::of("PUT"), Value::of("acme"), Value::of(int64_t{3}), Value::of("s3cr3t"),
             Value::of(Bytes{0x62, 0x6f, 0x64, 0x79})});
    auto built = build_request(t, row, schema);
    REQUIRE(built.ok());

    HttpRequestData expected;
    expected.method = "PUT";
    expected.uri = "http://api.example:8080/v2/acme/items/widget?page=3";
    expected.headers = {{"X-Sub-Key", "s3cr3t"}, {"Accept", "text/plain"}};
    expected.body = {0x62, 0x6f, 0x64, 0x79};
    CHECK(*built.request == expected);
}

TEST_CASE("build_request: null in a required binding is a row-level error") {
    RequestTemplate t;
    t.uri_pattern = "http://h:1/{k}";
    t.uri_bindings.emplace("k", ParamBinding::column_ref("k"));
    Schema schema({{"k", DataType::string()}});
    auto r = build_request(t, Row({Value::null()}), schema);
    CHECK_FALSE(r.ok());
    CHECK(r.error.find("k") != std::string::npos);
}

TEST_CASE("template validation catches unbound placeholders and bad columns") {
    Schema schema({{"k", DataType::string()}});
    RequestTemplate t;
    t.uri_pattern = "http://h:1/{missing}";
    CHECK_THROWS_AS(t.validate(schema), SchemaError);
    t.uri_pattern = "http://h:1/x";
    t.body = ParamBinding::column_ref("nope");
    CHECK_THROWS_AS(t.validate(schema), SchemaError);
}

TEST_CASE("execute_partition: empty input, unresolvable host") {
    ClientConfig config;
    CHECK(execute_partition({}, config).empty());

    config.retry.max_retries = 0;
    config.request_timeout_ms = 200;
    HttpRequestData req;
    req.method = "GET";
    req.uri = "not-a-url";
    auto out = execute_partition({req}, config);
    REQUIRE(out.size() == 1);
    CHECK_FALSE(out[0].ok());
    CHECK(out[0].attempts == 1);
}
