#include <doctest.h>

#include "rowserve/expr.hpp"

using namespace rowserve;

namespace {
const Schema kNum({{"x", DataType::int64()}, {"f", DataType::float64()}});
}

TEST_CASE("literal arithmetic") {
    auto e = arith(ArithOp::Mul, lit_int(3), lit_int(4));
    CHECK(e->infer_type(kNum) == DataType::int64());
    CHECK(e->eval(Row({Value::null(), Value::null()}), kNum) == Value::of(int64_t{12}));
}

TEST_CASE("null column propagates through arithmetic") {
    auto e = arith(ArithOp::Add, col("x"), lit_int(1));
    CHECK(e->eval(Row({Value::null(), Value::of(0.5)}), kNum).is_null());
    CHECK(e->eval(Row({Value::of(int64_t{2}), Value::of(0.5)}), kNum) == Value::of(int64_t{3}));
}

TEST_CASE("division by zero yields null") {
    CHECK(arith(ArithOp::Div, lit_int(1), lit_int(0))->eval(Row{}, Schema{}).is_null());
    CHECK(arith(ArithOp::Div, lit_float(1.0), lit_float(0.0))->eval(Row{}, Schema{}).is_null());
    CHECK(arith(ArithOp::Div, lit_int(7), lit_int(2))->eval(Row{}, Schema{}) ==
          Value::of(int64_t{3}));
}

TEST_CASE("mixed int/float widens to float") {
    auto e = arith(ArithOp::Add, col("x"), col("f"));
    CHECK(e->infer_type(kNum) == DataType::float64());
    CHECK(e->eval(Row({Value::of(int64_t{2}), Value::of(0.5)}), kNum) == Value::of(2.5));
}

TEST_CASE("comparisons") {
    CHECK(compare(CompareOp::Lt, lit_int(1), lit_float(1.5))->eval(Row{}, Schema{}) ==
          Value::of(true));
    CHECK(compare(CompareOp::Eq, lit_string("ab"), lit_string("ab"))->eval(Row{}, Schema{}) ==
          Value::of(true));
    CHECK(compare(CompareOp::Ge, col("x"), lit_int(1))
              ->eval(Row({Value::null(), Value::null()}), kNum)
              .is_null());
    CHECK_THROWS_AS(compare(CompareOp::Lt, lit_bool(true), lit_bool(false))->infer_type(Schema{}),
                    SchemaError);
}

TEST_CASE("concat stringifies scalars deterministically") {
    auto e = concat({lit_string("v="), lit_int(3), lit_string("/"), lit_float(2.5), lit_string("/"),
                     lit_bool(false)});
    CHECK(e->eval(Row{}, Schema{}) == Value::of("v=3/2.5/false"));
}

TEST_CASE("concat with null part is null") {
    Schema s({{"a", DataType::string()}});
    auto e = concat({lit_string("x"), col("a")});
    CHECK(e->eval(Row({Value::null()}), s).is_null());
}

TEST_CASE("string functions") {
    CHECK(func(FuncName::Lower, lit_string("AbC9"))->eval(Row{}, Schema{}) == Value::of("abc9"));
    CHECK(func(FuncName::Length, lit_string("abcd"))->eval(Row{}, Schema{}) ==
          Value::of(int64_t{4}));
}

TEST_CASE("request/response functions") {
    HttpRequestData req;
    req.method = "POST";
    req.uri = "/score";
    req.set_header("Content-Type", "text/plain");
    req.body = to_bytes("hello");
    Schema s({{"request", DataType::http_request()}});
    Row row({Value::of(req)});

    CHECK(func(FuncName::Body, col("request"))->eval(row, s) == Value::of("hello"));

    Value echoed = func(FuncName::Echo, col("request"))->eval(row, s);
    REQUIRE(echoed.is<HttpResponseData>());
    CHECK(echoed.as_response().status == 200);
    CHECK(echoed.as_response().body == req.body);
    CHECK(echoed.as_response().header("Content-Type") == "text/plain");

    Schema fs({{"score", DataType::float64()}});
    Value resp = func(FuncName::Respond, col("score"))->eval(Row({Value::of(0.25)}), fs);
    REQUIRE(resp.is<HttpResponseData>());
    CHECK(resp.as_response().body == to_bytes("0.25"));

    Schema rs({{"r", DataType::http_response()}});
    CHECK(func(FuncName::Status, col("r"))->eval(Row({echoed}), rs) == Value::of(int64_t{200}));
}

TEST_CASE("type errors are caught at inference time") {
    CHECK_THROWS_AS(arith(ArithOp::Add, lit_string("a"), lit_int(1))->infer_type(Schema{}),
                    SchemaError);
    CHECK_THROWS_AS(func(FuncName::Body, lit_string("a"))->infer_type(Schema{}), SchemaError);
    CHECK_THROWS_AS(col("missing")->infer_type(kNum), SchemaError);
}
