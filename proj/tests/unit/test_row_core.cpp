#include <doctest.h>

#include "rowserve/codec.hpp"
#include "rowserve/hash.hpp"
#include "rowserve/schema.hpp"
#include "support/row_gen.hpp"

using namespace rowserve;

namespace {

// Independent FNV-1a reference, written from the published constants rather
// than shared code, plus frozen vectors from the FNV test suite.
uint64_t fnv_reference(const std::string& s) {
    uint64_t hash = 14695981039346656037ull;
    for (size_t i = 0; i < s.size(); ++i) {
        hash = (hash ^ static_cast<uint8_t>(s[i])) * 1099511628211ull;
    }
    return hash;
}

Bytes str_key(const std::string& s) {
    Bytes out;
    encode_value(out, Value::of(s));
    return out;
}

}  // namespace

TEST_CASE("validate_row: matching singleton") {
    Schema schema({{"x", DataType::int64()}});
    CHECK(validate_row(schema, Row({Value::of(int64_t{7})})).ok());
}

TEST_CASE("validate_row: type mismatch names the field") {
    Schema schema({{"x", DataType::int64()}});
    auto result = validate_row(schema, Row({Value::of("7")}));
    REQUIRE(result.violations.size() == 1);
    CHECK(result.violations[0].field == "x");
    CHECK(result.violations[0].message.find("int64") != std::string::npos);
    CHECK(result.violations[0].message.find("string") != std::string::npos);
}

TEST_CASE("validate_row: arity violation") {
    Schema schema({{"a", DataType::int64()}, {"b", DataType::string()}});
    auto result = validate_row(schema, Row({Value::of(int64_t{1})}));
    REQUIRE(result.violations.size() == 1);
    CHECK(result.violations[0].field.empty());
}

TEST_CASE("validate_row: http invariants") {
    Schema schema({{"r", DataType::http_request()}});
    HttpRequestData req;
    req.method = "POST";
    req.uri = "/x";
    req.set_header("content-length", "3");
    req.body = {1, 2, 3};
    CHECK(validate_row(schema, Row({Value::of(req)})).ok());
    req.body = {1, 2};
    CHECK_FALSE(validate_row(schema, Row({Value::of(req)})).ok());
    req.body.clear();
    req.headers.clear();
    req.method.clear();
    CHECK_FALSE(validate_row(schema, Row({Value::of(req)})).ok());

    Schema rs({{"r", DataType::http_response()}});
    HttpResponseData resp;
    resp.status = 99;
    CHECK_FALSE(validate_row(rs, Row({Value::of(resp)})).ok());
    resp.status = 599;
    CHECK(validate_row(rs, Row({Value::of(resp)})).ok());
}

TEST_CASE("schema rejects duplicate names") {
    CHECK_THROWS_AS(Schema({{"x", DataType::int64()}, {"x", DataType::string()}}), SchemaError);
}

TEST_CASE("DataType bans http inside arrays") {
    CHECK_FALSE(DataType::array(DataType::http_request()).well_formed());
    CHECK_FALSE(DataType::array(DataType::array(DataType::http_response())).well_formed());
    CHECK(DataType::array(DataType::array(DataType::int64())).well_formed());
}

TEST_CASE("header lookup is case-insensitive") {
    HttpRequestData req;
    req.method = "GET";
    req.set_header("Content-Type", "text/plain");
    CHECK(req.header("content-type") == "text/plain");
    CHECK(req.header("CONTENT-TYPE") == "text/plain");
    CHECK(req.header("Content-Type") == req.header("content-type"));
}

TEST_CASE("codec: empty-body 200 response round trip") {
    HttpResponseData resp;
    resp.status = 200;
    resp.reason = "OK";
    Schema schema({{"r", DataType::http_response()}});
    Row row({Value::of(resp)});
    Bytes encoded = encode_row(row);
    CHECK(decode_row(encoded, schema) == row);
}

TEST_CASE("codec: all scalar types round trip") {
    Schema schema({{"s", DataType::string()},
                   {"i", DataType::int64()},
                   {"f", DataType::float64()},
                   {"b", DataType::boolean()},
                   {"bin", DataType::binary()}});
    Row row({Value::of("hej"), Value::of(int64_t{-12345678901234}), Value::of(3.25),
             Value::of(true), Value::of(Bytes{0, 255, 3})});
    CHECK(decode_row(encode_row(row), schema) == row);

    Row with_nulls({Value::null(), Value::null(), Value::null(), Value::null(), Value::null()});
    CHECK(decode_row(encode_row(with_nulls), schema) == with_nulls);
}

TEST_CASE("codec: generated rows round trip and encode deterministically") {
    testing::RowGen gen(20260810);
    for (int i = 0; i < 1000; ++i) {
        Schema schema = gen.random_schema();
        Row row = gen.random_row(schema);
        Bytes a = encode_row(row);
        Bytes b = encode_row(row);
        CHECK(a == b);
        Row back = decode_row(a, schema);
        CHECK(back == row);
        CHECK(encode_row(back) == a);
    }
}

TEST_CASE("codec: every truncation fails with a framing error") {
    testing::RowGen gen(7);
    for (int i = 0; i < 50; ++i) {
        Schema schema = gen.random_schema(3);
        Row row = gen.random_row(schema);
        Bytes enc = encode_row(row);
        for (size_t cut = 0; cut < enc.size(); ++cut) {
            Bytes truncated(enc.begin(), enc.begin() + static_cast<long>(cut));
            try {
                decode_row(truncated, schema);
                FAIL("truncation at ", cut, " of ", enc.size(), " decoded");
            } catch (const CodecError& e) {
                CHECK(e.kind == CodecError::Kind::Framing);
            }
        }
    }
}

TEST_CASE("codec: trailing bytes rejected") {
    Schema schema({{"x", DataType::int64()}});
    Bytes enc = encode_row(Row({Value::of(int64_t{1})}));
    enc.push_back(0);
    CHECK_THROWS_AS(decode_row(enc, schema), CodecError);
}

TEST_CASE("codec: tag mismatch is a type error") {
    Schema int_schema({{"x", DataType::int64()}});
    Schema str_schema({{"x", DataType::string()}});
    Bytes enc = encode_row(Row({Value::of(int64_t{5})}));
    try {
        decode_row(enc, str_schema);
        FAIL("tag mismatch decoded");
    } catch (const CodecError& e) {
        CHECK(e.kind == CodecError::Kind::Type);
    }
    CHECK(decode_row(enc, int_schema) == Row({Value::of(int64_t{5})}));
}

TEST_CASE("fnv1a64 matches the published vectors and the independent loop") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    for (const char* s : {"", "a", "b", "ab", "shuffle", "rowserve", "0123456789"}) {
        CHECK(fnv1a64(s) == fnv_reference(s));
    }
}

TEST_CASE("hash_partition: single partition always 0") {
    testing::RowGen gen(3);
    for (int i = 0; i < 100; ++i) {
        Row row = gen.random_row(gen.random_schema(2));
        std::array<size_t, 1> k{0};
        CHECK(hash_partition(key_bytes(row, k), 1) == 0);
    }
}

TEST_CASE("hash_partition: key 'a' for 4 partitions matches the reference") {
    // canonical key bytes of the string value "a"
    Bytes key = str_key("a");
    uint64_t expected = fnv_reference(std::string(key.begin(), key.end()));
    CHECK(hash_partition(key, 4) == expected % 4);
}

TEST_CASE("hash_partition: 10k random keys spread over 8 partitions") {
    std::mt19937_64 rng(42);
    std::array<int, 8> counts{};
    for (int i = 0; i < 10000; ++i) {
        std::string key = "key-" + std::to_string(rng());
        counts[hash_partition(str_key(key), 8)]++;
    }
    for (int c : counts) {
        CHECK(c >= 500);   // 5%
        CHECK(c <= 2000);  // 20%
    }
}
