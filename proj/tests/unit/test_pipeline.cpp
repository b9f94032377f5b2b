#include <doctest.h>

#include <fstream>
#include <sstream>

#include "rowserve/batch.hpp"
#include "rowserve/pipeline.hpp"

using namespace rowserve;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string repo_path(const std::string& rel) {
    const char* root = std::getenv("ROWSERVE_ROOT");
    return std::string(root ? root : ".") + "/" + rel;
}

}  // namespace

TEST_CASE("parse: minimal single-Project document") {
    auto spec = parse_pipeline(R"({
        "id": "p", "inputSchema": [{"name": "x", "type": "int64"}],
        "stages": [{"kind": "Project", "columns": ["x"]}]
    })");
    CHECK(spec.stages.size() == 1);
    CHECK(spec.id == "p");
}

TEST_CASE("parse: unknown stage kind names the offender") {
    try {
        parse_pipeline(R"({
            "id": "p", "inputSchema": [{"name": "x", "type": "int64"}],
            "stages": [{"kind": "Project", "columns": ["x"]}, {"kind": "Foo"}]
        })");
        FAIL("unknown stage accepted");
    } catch (const ParseError& e) {
        std::string msg = e.what();
        CHECK(msg.find("Foo") != std::string::npos);
        CHECK(msg.find("stage 1") != std::string::npos);
    }
}

TEST_CASE("parse: malformed JSON is a parse error") {
    CHECK_THROWS_AS(parse_pipeline("{not json"), ParseError);
    CHECK_THROWS_AS(parse_pipeline(R"({"id":"p"})"), ParseError);
}

TEST_CASE("parse: bundled LR document is a 3-stage spec") {
    auto spec = parse_pipeline(read_file(repo_path("pipelines/lr_core.json")));
    REQUIRE(spec.stages.size() == 3);
    CHECK(std::holds_alternative<StringIndexStage>(spec.stages[0]));
    CHECK(std::holds_alternative<OneHotStage>(spec.stages[1]));
    CHECK(std::holds_alternative<LinearScoreStage>(spec.stages[2]));
}

TEST_CASE("parse/serialize round trip over the bundled documents") {
    for (const char* name : {"lr_core.json", "select.json", "lr_serve.json", "join_serve.json",
                             "agg_serve.json", "shuffle_serve.json", "filter_serve.json"}) {
        auto spec = parse_pipeline(read_file(repo_path(std::string("pipelines/") + name)));
        auto again = parse_pipeline(pipeline_to_json(spec));
        CHECK(again.id == spec.id);
        CHECK(again.stages.size() == spec.stages.size());
        CHECK(propagate_schema(again) == propagate_schema(spec));
        CHECK(pipeline_to_json(again) == pipeline_to_json(spec));
    }
}

TEST_CASE("propagate: WithColumn appends the inferred type") {
    auto spec = parse_pipeline(R"({
        "id": "p", "inputSchema": [{"name": "x", "type": "float64"}],
        "stages": [{"kind": "WithColumn", "name": "y",
                    "expr": {"op": "+", "lhs": {"col": "x"}, "rhs": {"lit": 1}}}]
    })");
    Schema out = propagate_schema(spec);
    REQUIRE(out.size() == 2);
    CHECK(out.at(0).name == "x");
    CHECK(out.at(1).name == "y");
    CHECK(out.at(1).type == DataType::float64());
}

TEST_CASE("propagate: missing column names stage index") {
    PipelineSpec spec;
    spec.id = "p";
    spec.input_schema = Schema({{"x", DataType::int64()}});
    spec.stages.push_back(FilterStage{compare(CompareOp::Gt, col("z"), lit_int(0))});
    try {
        propagate_schema(spec);
        FAIL("missing column accepted");
    } catch (const SchemaError& e) {
        CHECK(e.stage_index == 0);
        CHECK(std::string(e.what()).find("z") != std::string::npos);
    }
}

TEST_CASE("propagate: LR chain appends a float64 score column") {
    auto spec = parse_pipeline(read_file(repo_path("pipelines/lr_core.json")));
    Schema out = propagate_schema(spec);
    // walked by hand: s, then the index, the one-hot vector, and the score
    REQUIRE(out.size() == 4);
    CHECK(out.at(0) == Field{"s", DataType::string()});
    CHECK(out.at(1) == Field{"s_idx", DataType::int64()});
    CHECK(out.at(2) == Field{"s_vec", DataType::array(DataType::float64())});
    CHECK(out.at(3) == Field{"score", DataType::float64()});
}

TEST_CASE("propagate: aggregate schema differs by mode") {
    auto spec = parse_pipeline(R"({
        "id": "p",
        "inputSchema": [{"name": "k", "type": "string"}, {"name": "v", "type": "int64"}],
        "stages": [{"kind": "Aggregate", "keyCols": ["k"],
                    "aggs": [{"fn": "sum", "col": "v", "outCol": "total"},
                              {"fn": "avg", "col": "v", "outCol": "mean"}]}]
    })");
    Schema batch = propagate_schema(spec, ExecMode::Batch);
    REQUIRE(batch.size() == 3);
    CHECK(batch.at(0).name == "k");
    CHECK(batch.at(1) == Field{"total", DataType::int64()});
    CHECK(batch.at(2) == Field{"mean", DataType::float64()});

    Schema serving = propagate_schema(spec, ExecMode::Serving);
    REQUIRE(serving.size() == 4);
    CHECK(serving.at(0).name == "k");
    CHECK(serving.at(1).name == "v");
    CHECK(serving.at(2).name == "total");
}

TEST_CASE("classify: per-row stages narrow, shuffling stages wide") {
    CHECK(classify_stage(FilterStage{lit_bool(true)}) == StageClass::Narrow);
    CHECK(classify_stage(ProjectStage{{"x"}}) == StageClass::Narrow);
    CHECK(classify_stage(StringIndexStage{}) == StageClass::Narrow);
    CHECK(classify_stage(BroadcastJoinStage{}) == StageClass::Narrow);
    CHECK(classify_stage(AggregateStage{}) == StageClass::Wide);
    CHECK(classify_stage(RepartitionStage{}) == StageClass::Wide);
}

TEST_CASE("validate: at most one Aggregate") {
    PipelineSpec spec;
    spec.id = "p";
    spec.input_schema = Schema({{"k", DataType::string()}});
    AggregateStage agg{{"k"}, {{AggFn::Count, "k", "n"}}};
    spec.stages.push_back(agg);
    CHECK_NOTHROW(validate_pipeline(spec));
    AggregateStage agg2{{"k"}, {{AggFn::Count, "k", "n2"}}};
    spec.stages.push_back(agg2);
    CHECK_THROWS_AS(validate_pipeline(spec), SchemaError);
}

TEST_CASE("broadcast join classified narrow agrees with per-partition execution") {
    // run the join partition-by-partition and compare to the single-process run
    auto spec = parse_pipeline(R"({
        "id": "p", "inputSchema": [{"name": "k", "type": "string"}],
        "stages": [{"kind": "BroadcastJoin", "tableId": "t", "leftKey": "k", "rightKey": "k2",
                    "joinKind": "left",
                    "rightSchema": [{"name": "k2", "type": "string"},
                                     {"name": "v", "type": "int64"}]}]
    })");
    auto table = std::make_shared<BroadcastTable>(
        load_table_csv("t", "k2:string,v:int64\na,1\nb,2\n"));
    RunContext ctx;
    ctx.tables["t"] = table;

    std::vector<Row> rows;
    for (const char* k : {"a", "b", "c", "a", "d", "b"}) {
        rows.push_back(Row({Value::of(k)}));
    }
    auto whole = run_batch(spec, rows, ctx);

    std::vector<Row> stitched;
    for (size_t start = 0; start < rows.size(); start += 2) {
        std::vector<Row> part(rows.begin() + static_cast<long>(start),
                              rows.begin() + static_cast<long>(start + 2));
        auto out = run_batch(spec, part, ctx);
        stitched.insert(stitched.end(), out.begin(), out.end());
    }
    CHECK(whole == stitched);
}
