#include "rowserve/stage.hpp"

#include <cmath>

#include "rowserve/pipeline.hpp"

namespace rowserve {

std::string_view agg_fn_name(AggFn fn) {
    switch (fn) {
        case AggFn::Count: return "count";
        case AggFn::Sum: return "sum";
        case AggFn::Avg: return "avg";
        case AggFn::Min: return "min";
        case AggFn::Max: return "max";
    }
    return "?";
}

std::string_view stage_kind_name(const StageSpec& stage) {
    struct Visitor {
        std::string_view operator()(const ProjectStage&) { return "Project"; }
        std::string_view operator()(const WithColumnStage&) { return "WithColumn"; }
        std::string_view operator()(const FilterStage&) { return "Filter"; }
        std::string_view operator()(const StringIndexStage&) { return "StringIndex"; }
        std::string_view operator()(const OneHotStage&) { return "OneHot"; }
        std::string_view operator()(const LinearScoreStage&) { return "LinearScore"; }
        std::string_view operator()(const BroadcastJoinStage&) { return "BroadcastJoin"; }
        std::string_view operator()(const AggregateStage&) { return "Aggregate"; }
        std::string_view operator()(const RepartitionStage&) { return "Repartition"; }
        std::string_view operator()(const HttpCallStage&) { return "HttpCall"; }
        std::string_view operator()(const LimeExplainStage&) { return "LimeExplain"; }
    };
    return std::visit(Visitor{}, stage);
}

StageClass classify_stage(const StageSpec& stage) {
    if (std::holds_alternative<AggregateStage>(stage) ||
        std::holds_alternative<RepartitionStage>(stage)) {
        return StageClass::Wide;
    }
    return StageClass::Narrow;
}

double score_linear(std::span<const double> weights, double intercept,
                    std::span<const double> features, LinkFn link) {
    if (weights.size() != features.size()) {
        throw Error("score_linear: " + std::to_string(weights.size()) + " weights vs " +
                    std::to_string(features.size()) + " features");
    }
    double z = intercept;
    for (size_t i = 0; i < weights.size(); ++i) z += weights[i] * features[i];
    if (link == LinkFn::Sigmoid) return 1.0 / (1.0 + std::exp(-z));
    return z;
}

namespace {

bool numeric_tag(const DataType& t) {
    return t.tag == TypeTag::Int64 || t.tag == TypeTag::Float64;
}

void append_field(std::vector<Field>& fields, const Schema& input, const std::string& name,
                  DataType type, int stage_index) {
    if (input.index_of(name)) {
        throw SchemaError("output column '" + name + "' already exists", stage_index);
    }
    for (const auto& f : fields) {
        if (f.name == name) {
            throw SchemaError("output column '" + name + "' added twice", stage_index);
        }
    }
    fields.push_back({name, std::move(type)});
}

DataType agg_output_type(const AggSpec& agg, const DataType& in, int stage_index) {
    switch (agg.fn) {
        case AggFn::Count:
            return DataType::int64();
        case AggFn::Sum:
            if (!numeric_tag(in)) {
                throw SchemaError("sum over non-numeric column '" + agg.col + "'", stage_index);
            }
            return in;
        case AggFn::Avg:
            if (!numeric_tag(in)) {
                throw SchemaError("avg over non-numeric column '" + agg.col + "'", stage_index);
            }
            return DataType::float64();
        case AggFn::Min:
        case AggFn::Max:
            if (!numeric_tag(in) && in.tag != TypeTag::String) {
                throw SchemaError(std::string(agg_fn_name(agg.fn)) + " over column '" + agg.col +
                                      "' of type " + in.to_string(),
                                  stage_index);
            }
            return in;
    }
    throw SchemaError("unknown aggregate", stage_index);
}

struct OutputSchemaVisitor {
    const Schema& input;
    ExecMode mode;
    int idx;

    Schema operator()(const ProjectStage& s) const {
        if (s.columns.empty()) throw SchemaError("Project needs at least one column", idx);
        std::vector<Field> fields;
        for (const auto& name : s.columns) {
            size_t i = input.require(name, idx);
            fields.push_back(input.at(i));
        }
        return Schema(std::move(fields));
    }

    Schema operator()(const WithColumnStage& s) const {
        DataType t;
        try {
            t = s.expr->infer_type(input);
        } catch (const SchemaError& e) {
            throw SchemaError(std::string(e.what()), idx);
        }
        auto fields = input.fields();
        append_field(fields, input, s.name, t, idx);
        return Schema(std::move(fields));
    }

    Schema operator()(const FilterStage& s) const {
        DataType t;
        try {
            t = s.predicate->infer_type(input);
        } catch (const SchemaError& e) {
            throw SchemaError(std::string(e.what()), idx);
        }
        if (t.tag != TypeTag::Bool) {
            throw SchemaError("Filter predicate must be bool, got " + t.to_string(), idx);
        }
        return input;
    }

    Schema operator()(const StringIndexStage& s) const {
        size_t i = input.require(s.in_col, idx);
        if (input.at(i).type.tag != TypeTag::String) {
            throw SchemaError("StringIndex input '" + s.in_col + "' must be string", idx);
        }
        auto fields = input.fields();
        append_field(fields, input, s.out_col, DataType::int64(), idx);
        return Schema(std::move(fields));
    }

    Schema operator()(const OneHotStage& s) const {
        size_t i = input.require(s.in_col, idx);
        if (input.at(i).type.tag != TypeTag::Int64) {
            throw SchemaError("OneHot input '" + s.in_col + "' must be int64", idx);
        }
        if (s.cardinality < 1) throw SchemaError("OneHot cardinality must be >= 1", idx);
        auto fields = input.fields();
        append_field(fields, input, s.out_col, DataType::array(DataType::float64()), idx);
        return Schema(std::move(fields));
    }

    Schema operator()(const LinearScoreStage& s) const {
        if (s.in_cols.empty()) throw SchemaError("LinearScore needs input columns", idx);
        for (const auto& name : s.in_cols) {
            size_t i = input.require(name, idx);
            const DataType& t = input.at(i).type;
            bool ok = t.tag == TypeTag::Float64 ||
                      (t.tag == TypeTag::Array && t.elem->tag == TypeTag::Float64);
            if (!ok) {
                throw SchemaError("LinearScore input '" + name +
                                      "' must be float64 or array<float64>, got " + t.to_string(),
                                  idx);
            }
        }
        auto fields = input.fields();
        append_field(fields, input, s.out_col, DataType::float64(), idx);
        return Schema(std::move(fields));
    }

    Schema operator()(const BroadcastJoinStage& s) const {
        size_t li = input.require(s.left_key, idx);
        auto ri = s.right_schema.index_of(s.right_key);
        if (!ri) {
            throw SchemaError("right key '" + s.right_key + "' not in declared right schema",
                              idx);
        }
        if (input.at(li).type != s.right_schema.at(*ri).type) {
            throw SchemaError("join key type mismatch: " + input.at(li).type.to_string() +
                                  " vs " + s.right_schema.at(*ri).type.to_string(),
                              idx);
        }
        auto fields = input.fields();
        for (const auto& f : s.right_schema.fields()) {
            if (f.name == s.right_key) continue;
            append_field(fields, input, f.name, f.type, idx);
        }
        return Schema(std::move(fields));
    }

    Schema operator()(const AggregateStage& s) const {
        if (s.key_cols.empty()) throw SchemaError("Aggregate needs key columns", idx);
        if (s.aggs.empty()) throw SchemaError("Aggregate needs at least one aggregation", idx);
        std::vector<Field> out;
        for (const auto& k : s.key_cols) {
            size_t i = input.require(k, idx);
            out.push_back(input.at(i));
        }
        std::vector<Field> agg_fields;
        for (const auto& agg : s.aggs) {
            size_t i = input.require(agg.col, idx);
            DataType t = agg_output_type(agg, input.at(i).type, idx);
            append_field(agg_fields, input, agg.out_col, t, idx);
        }
        if (mode == ExecMode::Serving) {
            // every request row keeps its columns and gains its group's aggregates
            auto fields = input.fields();
            for (auto& f : agg_fields) fields.push_back(std::move(f));
            return Schema(std::move(fields));
        }
        for (auto& f : agg_fields) {
            for (const auto& k : out) {
                if (k.name == f.name) {
                    throw SchemaError("aggregate output '" + f.name + "' collides with key", idx);
                }
            }
            out.push_back(std::move(f));
        }
        return Schema(std::move(out));
    }

    Schema operator()(const RepartitionStage& s) const {
        input.require(s.key_col, idx);
        if (s.partitions < 1) throw SchemaError("Repartition needs >= 1 partitions", idx);
        return input;
    }

    Schema operator()(const HttpCallStage& s) const {
        try {
            s.client.validate();
            s.tmpl.validate(input);
        } catch (const Error& e) {
            throw SchemaError(std::string(e.what()), idx);
        }
        auto fields = input.fields();
        append_field(fields, input, s.out_col, DataType::http_response(), idx);
        append_field(fields, input, s.error_col(), DataType::string(), idx);
        return Schema(std::move(fields));
    }

    Schema operator()(const LimeExplainStage& s) const {
        try {
            s.config.validate();
            s.segmentation.validate();
        } catch (const Error& e) {
            throw SchemaError(std::string(e.what()), idx);
        }
        size_t i = input.require(s.in_col, idx);
        const DataType& t = input.at(i).type;
        if (s.segmentation.tabular()) {
            if (!(t.tag == TypeTag::Array && t.elem->tag == TypeTag::Float64)) {
                throw SchemaError("LimeExplain tabular input '" + s.in_col +
                                      "' must be array<float64>",
                                  idx);
            }
        } else if (t.tag != TypeTag::Binary) {
            throw SchemaError("LimeExplain image input '" + s.in_col + "' must be binary", idx);
        }
        if (s.target_pipeline_id.empty()) {
            throw SchemaError("LimeExplain needs a target pipeline id", idx);
        }
        auto fields = input.fields();
        append_field(fields, input, s.out_col, DataType::array(DataType::float64()), idx);
        append_field(fields, input, s.out_col + "_intercept", DataType::float64(), idx);
        append_field(fields, input, s.out_col + "_r2", DataType::float64(), idx);
        return Schema(std::move(fields));
    }
};

}  // namespace

Schema stage_output_schema(const StageSpec& stage, const Schema& input, ExecMode mode,
                           int stage_index) {
    return std::visit(OutputSchemaVisitor{input, mode, stage_index}, stage);
}

bool PipelineSpec::all_narrow() const {
    for (const auto& s : stages) {
        if (classify_stage(s) == StageClass::Wide) return false;
    }
    return true;
}

std::vector<size_t> PipelineSpec::wide_stage_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (classify_stage(stages[i]) == StageClass::Wide) out.push_back(i);
    }
    return out;
}

Schema propagate_schema(const PipelineSpec& spec, ExecMode mode, size_t upto) {
    Schema schema = spec.input_schema;
    for (size_t i = 0; i < upto && i < spec.stages.size(); ++i) {
        schema = stage_output_schema(spec.stages[i], schema, mode, static_cast<int>(i));
    }
    return schema;
}

void validate_pipeline(const PipelineSpec& spec) {
    if (spec.id.empty()) throw SchemaError("pipeline id must not be empty");
    if (spec.input_schema.empty()) throw SchemaError("pipeline input schema must not be empty");
    size_t aggregates = 0;
    for (const auto& s : spec.stages) {
        if (std::holds_alternative<AggregateStage>(s)) ++aggregates;
    }
    if (aggregates > 1) {
        throw SchemaError("at most one Aggregate per pipeline (found " +
                          std::to_string(aggregates) + ")");
    }
    propagate_schema(spec, ExecMode::Batch);
    propagate_schema(spec, ExecMode::Serving);
}

}  // namespace rowserve
