#include <doctest.h>

#include <random>

#include "rowserve/batch.hpp"

using namespace rowserve;

namespace {

PipelineSpec filter_gt1() {
    PipelineSpec spec;
    spec.id = "f";
    spec.input_schema = Schema({{"x", DataType::int64()}});
    spec.stages.push_back(FilterStage{compare(CompareOp::Gt, col("x"), lit_int(1))});
    return spec;
}

}  // namespace

TEST_CASE("run_batch: empty input stays empty for narrow pipelines") {
    CHECK(run_batch(filter_gt1(), {}, RunContext{}).empty());
}

TEST_CASE("run_batch: filter keeps rows greater than 1 unchanged") {
    std::vector<Row> rows;
    for (int64_t x : {0, 1, 2, 3}) rows.push_back(Row({Value::of(x)}));
    auto out = run_batch(filter_gt1(), rows, RunContext{});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == rows[2]);
    CHECK(out[1] == rows[3]);
}

TEST_CASE("run_batch: count by key matches the hand count") {
    PipelineSpec spec;
    spec.id = "agg";
    spec.input_schema = Schema({{"k", DataType::string()}});
    spec.stages.push_back(AggregateStage{{"k"}, {{AggFn::Count, "k", "n"}}});
    std::vector<Row> rows = {Row({Value::of("a")}), Row({Value::of("a")}), Row({Value::of("b")})};
    auto out = run_batch(spec, rows, RunContext{});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Row({Value::of("a"), Value::of(int64_t{2})}));
    CHECK(out[1] == Row({Value::of("b"), Value::of(int64_t{1})}));
}

TEST_CASE("run_batch: serving-mode aggregate joins back per row") {
    PipelineSpec spec;
    spec.id = "agg";
    spec.input_schema = Schema({{"k", DataType::string()}, {"v", DataType::int64()}});
    spec.stages.push_back(
        AggregateStage{{"k"}, {{AggFn::Sum, "v", "total"}, {AggFn::Min, "v", "lo"}}});
    std::vector<Row> rows = {Row({Value::of("a"), Value::of(int64_t{3})}),
                             Row({Value::of("b"), Value::of(int64_t{10})}),
                             Row({Value::of("a"), Value::of(int64_t{4})})};
    auto out = run_batch(spec, rows, RunContext{}, ExecMode::Serving);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == Row({Value::of("a"), Value::of(int64_t{3}), Value::of(int64_t{7}),
                         Value::of(int64_t{3})}));
    CHECK(out[1] == Row({Value::of("b"), Value::of(int64_t{10}), Value::of(int64_t{10}),
                         Value::of(int64_t{10})}));
    CHECK(out[2] == Row({Value::of("a"), Value::of(int64_t{4}), Value::of(int64_t{7}),
                         Value::of(int64_t{3})}));
}

TEST_CASE("run_batch: aggregate null handling follows SQL") {
    PipelineSpec spec;
    spec.id = "agg";
    spec.input_schema = Schema({{"k", DataType::string()}, {"v", DataType::float64()}});
    spec.stages.push_back(AggregateStage{
        {"k"}, {{AggFn::Count, "v", "n"}, {AggFn::Avg, "v", "mean"}, {AggFn::Max, "v", "hi"}}});
    std::vector<Row> rows = {Row({Value::of("a"), Value::of(1.0)}),
                             Row({Value::of("a"), Value::null()}),
                             Row({Value::of("b"), Value::null()})};
    auto out = run_batch(spec, rows, RunContext{});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Row({Value::of("a"), Value::of(int64_t{1}), Value::of(1.0), Value::of(1.0)}));
    CHECK(out[1] ==
          Row({Value::of("b"), Value::of(int64_t{0}), Value::null(), Value::null()}));
}

TEST_CASE("string index: dictionary hit, unseen, and null") {
    PipelineSpec spec;
    spec.id = "si";
    spec.input_schema = Schema({{"s", DataType::string()}});
    StringIndexStage si;
    si.in_col = "s";
    si.out_col = "i";
    si.dictionary = {{"alpha", 0}, {"beta", 1}};
    spec.stages.push_back(si);
    auto out = run_batch(spec,
                         {Row({Value::of("beta")}), Row({Value::of("novel")}),
                          Row({Value::null()})},
                         RunContext{});
    CHECK(out[0].values[1] == Value::of(int64_t{1}));
    CHECK(out[1].values[1] == Value::of(int64_t{2}));  // reserved unknown slot
    CHECK(out[2].values[1].is_null());
}

TEST_CASE("one hot: in-range, out-of-range, null") {
    PipelineSpec spec;
    spec.id = "oh";
    spec.input_schema = Schema({{"i", DataType::int64()}});
    spec.stages.push_back(OneHotStage{"i", "v", 3});
    auto out = run_batch(
        spec, {Row({Value::of(int64_t{1})}), Row({Value::of(int64_t{5})}), Row({Value::null()})},
        RunContext{});
    CHECK(out[0].values[1] ==
          Value::of(ValueList{Value::of(0.0), Value::of(1.0), Value::of(0.0)}));
    CHECK(out[1].values[1].is_null());
    CHECK(out[2].values[1].is_null());
}

TEST_CASE("score_linear: trivial cases") {
    std::vector<double> zero{0, 0};
    std::vector<double> feats{3, 4};
    CHECK(score_linear(zero, 0.0, feats, LinkFn::Sigmoid) == doctest::Approx(0.5));
    std::vector<double> w{1, 2};
    CHECK(score_linear(w, 1.0, feats, LinkFn::Identity) == doctest::Approx(12.0));
    std::vector<double> w3{1, 2, 3};
    CHECK_THROWS(score_linear(w3, 0.0, feats, LinkFn::Identity));
}

TEST_CASE("score_linear: random 10-dim case matches a scalar-loop reference") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(-2, 2);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> w(10), f(10);
        for (int i = 0; i < 10; ++i) {
            w[static_cast<size_t>(i)] = dist(rng);
            f[static_cast<size_t>(i)] = dist(rng);
        }
        double intercept = dist(rng);
        // brute-force dot product, accumulated in reverse order
        double expected = intercept;
        for (int i = 9; i >= 0; --i) {
            expected += w[static_cast<size_t>(i)] * f[static_cast<size_t>(i)];
        }
        CHECK(score_linear(w, intercept, f, LinkFn::Identity) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("broadcast join: inner drops misses, left fills nulls, fanout duplicates") {
    PipelineSpec spec;
    spec.id = "j";
    spec.input_schema = Schema({{"k", DataType::string()}});
    BroadcastJoinStage join;
    join.table_id = "t";
    join.left_key = "k";
    join.right_key = "rk";
    join.right_schema = Schema({{"rk", DataType::string()}, {"v", DataType::int64()}});
    join.kind = JoinKind::Inner;
    spec.stages.push_back(join);

    RunContext ctx;
    ctx.tables["t"] = std::make_shared<BroadcastTable>(
        load_table_csv("t", "rk:string,v:int64\na,1\nb,2\nb,3\n"));

    std::vector<Row> rows = {Row({Value::of("a")}), Row({Value::of("x")}), Row({Value::of("b")})};
    auto inner = run_batch(spec, rows, ctx);
    REQUIRE(inner.size() == 3);  // a->1, b->2, b->3; x dropped
    CHECK(inner[0] == Row({Value::of("a"), Value::of(int64_t{1})}));
    CHECK(inner[1] == Row({Value::of("b"), Value::of(int64_t{2})}));
    CHECK(inner[2] == Row({Value::of("b"), Value::of(int64_t{3})}));

    std::get<BroadcastJoinStage>(spec.stages[0]).kind = JoinKind::Left;
    auto left = run_batch(spec, rows, ctx);
    REQUIRE(left.size() == 4);
    CHECK(left[1] == Row({Value::of("x"), Value::null()}));
}

TEST_CASE("run_batch: missing broadcast table fails the batch") {
    PipelineSpec spec;
    spec.id = "j";
    spec.input_schema = Schema({{"k", DataType::string()}});
    BroadcastJoinStage join;
    join.table_id = "absent";
    join.left_key = "k";
    join.right_key = "rk";
    join.right_schema = Schema({{"rk", DataType::string()}});
    spec.stages.push_back(join);
    CHECK_THROWS_AS(run_batch(spec, {Row({Value::of("a")})}, RunContext{}), StageRuntimeError);
}

TEST_CASE("run_batch: project keeps exactly the requested columns in order") {
    PipelineSpec spec;
    spec.id = "p";
    spec.input_schema =
        Schema({{"a", DataType::int64()}, {"b", DataType::string()}, {"c", DataType::boolean()}});
    spec.stages.push_back(ProjectStage{{"c", "a"}});
    Schema out_schema = propagate_schema(spec);
    REQUIRE(out_schema.size() == 2);
    CHECK(out_schema.at(0).name == "c");
    CHECK(out_schema.at(1).name == "a");
    auto out = run_batch(spec, {Row({Value::of(int64_t{1}), Value::of("s"), Value::of(true)})},
                         RunContext{});
    CHECK(out[0] == Row({Value::of(true), Value::of(int64_t{1})}));
}
