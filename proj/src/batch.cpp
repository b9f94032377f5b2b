#include "rowserve/batch.hpp"

#include <unordered_map>

#include "rowserve/codec.hpp"
#include "rowserve/hash.hpp"
#include "rowserve/http_client.hpp"
#include "rowserve/lime.hpp"

namespace rowserve {

void PipelineRegistry::install(PipelineSpec spec) {
    validate_pipeline(spec);
    auto id = spec.id;
    std::lock_guard lock(mu_);
    specs_[id] = std::make_shared<const PipelineSpec>(std::move(spec));
}

std::shared_ptr<const PipelineSpec> PipelineRegistry::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = specs_.find(id);
    return it == specs_.end() ? nullptr : it->second;
}

std::vector<std::string> PipelineRegistry::ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : specs_) out.push_back(id);
    return out;
}

namespace {

std::string encoded_key(const Row& row, std::span<const size_t> key_indices) {
    Bytes kb = key_bytes(row, key_indices);
    return std::string(kb.begin(), kb.end());
}

std::vector<Row> apply_project(const ProjectStage& s, const Schema& input,
                               std::vector<Row>& rows, int idx) {
    std::vector<size_t> indices;
    for (const auto& name : s.columns) indices.push_back(input.require(name, idx));
    std::vector<Row> out;
    out.reserve(rows.size());
    for (auto& row : rows) {
        Row projected;
        projected.values.reserve(indices.size());
        for (size_t i : indices) projected.values.push_back(row.values[i]);
        out.push_back(std::move(projected));
    }
    return out;
}

std::vector<Row> apply_with_column(const WithColumnStage& s, const Schema& input,
                                   std::vector<Row> rows) {
    for (auto& row : rows) {
        row.values.push_back(s.expr->eval(row, input));
    }
    return rows;
}

std::vector<Row> apply_filter(const FilterStage& s, const Schema& input, std::vector<Row> rows) {
    std::vector<Row> out;
    out.reserve(rows.size());
    for (auto& row : rows) {
        Value keep = s.predicate->eval(row, input);
        if (!keep.is_null() && keep.as_bool()) out.push_back(std::move(row));
    }
    return out;
}

std::vector<Row> apply_string_index(const StringIndexStage& s, const Schema& input,
                                    std::vector<Row> rows, int idx) {
    size_t in = input.require(s.in_col, idx);
    for (auto& row : rows) {
        const Value& v = row.values[in];
        if (v.is_null()) {
            row.values.push_back(Value::null());
            continue;
        }
        auto it = s.dictionary.find(v.as_string());
        int64_t index = it == s.dictionary.end() ? s.unknown_index() : it->second;
        row.values.push_back(Value::of(index));
    }
    return rows;
}

std::vector<Row> apply_one_hot(const OneHotStage& s, const Schema& input, std::vector<Row> rows,
                               int idx) {
    size_t in = input.require(s.in_col, idx);
    for (auto& row : rows) {
        const Value& v = row.values[in];
        if (v.is_null() || v.as_int64() < 0 || v.as_int64() >= s.cardinality) {
            row.values.push_back(Value::null());
            continue;
        }
        ValueList vec(static_cast<size_t>(s.cardinality), Value::of(0.0));
        vec[static_cast<size_t>(v.as_int64())] = Value::of(1.0);
        row.values.push_back(Value::of(std::move(vec)));
    }
    return rows;
}

std::vector<Row> apply_linear_score(const LinearScoreStage& s, const Schema& input,
                                    std::vector<Row> rows, int idx) {
    std::vector<size_t> indices;
    for (const auto& name : s.in_cols) indices.push_back(input.require(name, idx));
    for (auto& row : rows) {
        std::vector<double> features;
        bool any_null = false;
        for (size_t i : indices) {
            const Value& v = row.values[i];
            if (v.is_null()) {
                any_null = true;
                break;
            }
            if (v.is<double>()) {
                features.push_back(v.as_float64());
            } else {
                for (const auto& elem : v.as_array()) {
                    if (elem.is_null()) {
                        any_null = true;
                        break;
                    }
                    features.push_back(elem.as_float64());
                }
            }
            if (any_null) break;
        }
        if (any_null) {
            row.values.push_back(Value::null());
            continue;
        }
        if (features.size() != s.weights.size()) {
            throw StageRuntimeError("LinearScore expects " + std::to_string(s.weights.size()) +
                                        " features, row produced " +
                                        std::to_string(features.size()),
                                    idx);
        }
        row.values.push_back(Value::of(score_linear(s.weights, s.intercept, features, s.link)));
    }
    return rows;
}

std::vector<Row> apply_broadcast_join(const BroadcastJoinStage& s, const Schema& input,
                                      std::vector<Row> rows, const RunContext& ctx, int idx) {
    auto it = ctx.tables.find(s.table_id);
    if (it == ctx.tables.end()) {
        throw StageRuntimeError("missing broadcast table '" + s.table_id + "'", idx);
    }
    const BroadcastTable& table = *it->second;
    if (table.schema != s.right_schema) {
        throw StageRuntimeError("broadcast table '" + s.table_id +
                                    "' schema does not match the declared right schema: " +
                                    table.schema.to_string() + " vs " +
                                    s.right_schema.to_string(),
                                idx);
    }
    size_t left_idx = input.require(s.left_key, idx);
    size_t right_idx = *s.right_schema.index_of(s.right_key);

    // matches emitted in table order so fan-out output is deterministic
    std::unordered_map<std::string, std::vector<const Row*>> index;
    index.reserve(table.rows.size());
    std::array<size_t, 1> rk{right_idx};
    for (const auto& r : table.rows) {
        if (r.values[right_idx].is_null()) continue;  // null keys never match
        index[encoded_key(r, rk)].push_back(&r);
    }

    size_t appended = s.right_schema.size() - 1;
    std::array<size_t, 1> lk{left_idx};
    std::vector<Row> out;
    out.reserve(rows.size());
    for (auto& row : rows) {
        const std::vector<const Row*>* matches = nullptr;
        if (!row.values[left_idx].is_null()) {
            auto found = index.find(encoded_key(row, lk));
            if (found != index.end()) matches = &found->second;
        }
        if (!matches) {
            if (s.kind == JoinKind::Left) {
                Row joined = row;
                for (size_t i = 0; i < appended; ++i) joined.values.push_back(Value::null());
                out.push_back(std::move(joined));
            }
            continue;  // inner miss drops the row
        }
        for (const Row* m : *matches) {
            Row joined = row;
            for (size_t i = 0; i < s.right_schema.size(); ++i) {
                if (i == right_idx) continue;
                joined.values.push_back(m->values[i]);
            }
            out.push_back(std::move(joined));
        }
    }
    return out;
}

std::vector<Row> apply_http_call(const HttpCallStage& s, const Schema& input,
                                 std::vector<Row> rows) {
    std::vector<std::optional<HttpRequestData>> requests;
    std::vector<std::string> build_errors(rows.size());
    requests.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        BuildResult built = build_request(s.tmpl, rows[i], input);
        if (built.ok()) {
            requests.push_back(std::move(built.request));
        } else {
            requests.push_back(std::nullopt);
            build_errors[i] = built.error;
        }
    }
    std::vector<HttpResult> results = execute_partition(requests, s.client);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!build_errors[i].empty()) {
            rows[i].values.push_back(Value::null());
            rows[i].values.push_back(Value::of("build: " + build_errors[i]));
            continue;
        }
        HttpResult& r = results[i];
        if (r.ok()) {
            rows[i].values.push_back(Value::of(std::move(*r.response)));
            rows[i].values.push_back(Value::null());
        } else {
            rows[i].values.push_back(Value::null());
            std::string record = "attempts=" + std::to_string(r.attempts);
            if (r.last_status) record += " status=" + std::to_string(*r.last_status);
            record += " elapsedMs=" + std::to_string(static_cast<int64_t>(r.elapsed_ms));
            record += ": " + r.error;
            rows[i].values.push_back(Value::of(std::move(record)));
        }
    }
    return rows;
}

// Target pipeline adapter: maps an instance onto the target's input schema and
// reads back the score column ("score" if present, else the last float64).
class PipelineBlackbox {
public:
    PipelineBlackbox(std::shared_ptr<const PipelineSpec> spec, const RunContext& ctx)
        : spec_(std::move(spec)), ctx_(ctx) {
        const Schema& in = spec_->input_schema;
        if (in.size() == 1 && in.at(0).type == DataType::array(DataType::float64())) {
            input_kind_ = InputKind::FeatureArray;
        } else if (in.size() == 1 && in.at(0).type.tag == TypeTag::Binary) {
            input_kind_ = InputKind::ImageBytes;
        } else {
            input_kind_ = InputKind::FeatureColumns;
            for (const auto& f : in.fields()) {
                if (f.type.tag != TypeTag::Float64) {
                    throw StageRuntimeError(
                        "target pipeline '" + spec_->id +
                        "' input schema must be float64 columns, one array<float64> column, or "
                        "one binary column");
                }
            }
        }
        Schema out = propagate_schema(*spec_, ExecMode::Batch);
        auto named = out.index_of("score");
        if (named && out.at(*named).type.tag == TypeTag::Float64) {
            score_idx_ = *named;
        } else {
            std::optional<size_t> last;
            for (size_t i = 0; i < out.size(); ++i) {
                if (out.at(i).type.tag == TypeTag::Float64) last = i;
            }
            if (!last) {
                throw StageRuntimeError("target pipeline '" + spec_->id +
                                        "' produces no float64 score column");
            }
            score_idx_ = *last;
        }
    }

    double operator()(const lime::Instance& instance) const {
        Row row;
        if (instance.is_tabular()) {
            const auto& feats = instance.features();
            if (input_kind_ == InputKind::FeatureArray) {
                ValueList list;
                list.reserve(feats.size());
                for (double f : feats) list.push_back(Value::of(f));
                row.values.push_back(Value::of(std::move(list)));
            } else if (input_kind_ == InputKind::FeatureColumns) {
                if (feats.size() != spec_->input_schema.size()) {
                    throw Error("instance has " + std::to_string(feats.size()) +
                                " features, target needs " +
                                std::to_string(spec_->input_schema.size()));
                }
                for (double f : feats) row.values.push_back(Value::of(f));
            } else {
                throw Error("tabular instance against an image target pipeline");
            }
        } else {
            if (input_kind_ != InputKind::ImageBytes) {
                throw Error("image instance against a tabular target pipeline");
            }
            row.values.push_back(Value::of(instance.img().rgb));
        }
        auto out = run_batch(*spec_, {std::move(row)}, ctx_, ExecMode::Batch);
        if (out.size() != 1 || out[0].values[score_idx_].is_null()) {
            throw Error("target pipeline produced no score");
        }
        return out[0].values[score_idx_].as_float64();
    }

private:
    enum class InputKind { FeatureArray, FeatureColumns, ImageBytes };

    std::shared_ptr<const PipelineSpec> spec_;
    const RunContext& ctx_;
    InputKind input_kind_;
    size_t score_idx_ = 0;
};

std::vector<Row> apply_lime_explain(const LimeExplainStage& s, const Schema& input,
                                    std::vector<Row> rows, const RunContext& ctx, int idx) {
    if (!ctx.pipelines) {
        throw StageRuntimeError("LimeExplain needs a pipeline registry", idx);
    }
    auto target = ctx.pipelines->find(s.target_pipeline_id);
    if (!target) {
        throw StageRuntimeError("unknown target pipeline '" + s.target_pipeline_id + "'", idx);
    }
    PipelineBlackbox blackbox(target, ctx);

    size_t in = input.require(s.in_col, idx);
    std::vector<lime::Instance> instances;
    std::vector<size_t> instance_rows;  // rows with non-null input
    for (size_t i = 0; i < rows.size(); ++i) {
        const Value& v = rows[i].values[in];
        if (v.is_null()) continue;
        if (s.segmentation.tabular()) {
            std::vector<double> feats;
            for (const auto& e : v.as_array()) {
                feats.push_back(e.is_null() ? 0.0 : e.as_float64());
            }
            instances.push_back(lime::Instance::tabular(std::move(feats)));
        } else {
            const auto& g = std::get<lime::GridSegmentation>(s.segmentation.kind);
            lime::Image img;
            img.width = g.width;
            img.height = g.height;
            img.rgb = v.as_binary();
            if (img.rgb.size() != static_cast<size_t>(g.width) * g.height * 3) {
                throw StageRuntimeError("image column has " + std::to_string(img.rgb.size()) +
                                            " bytes, grid expects " +
                                            std::to_string(g.width * g.height * 3),
                                        idx);
            }
            instances.push_back(lime::Instance::image(std::move(img)));
        }
        instance_rows.push_back(i);
    }

    lime::ExplainStats stats;
    auto explanations =
        lime::explain(instances, std::cref(blackbox), s.segmentation, s.config, &stats);
    if (ctx.blackbox_evaluations) {
        *ctx.blackbox_evaluations += stats.evaluations.load();
    }

    std::vector<std::optional<lime::Explanation>> per_row(rows.size());
    for (size_t k = 0; k < instance_rows.size(); ++k) {
        per_row[instance_rows[k]] = std::move(explanations[k]);
    }
    for (size_t i = 0; i < rows.size(); ++i) {
        if (per_row[i]) {
            ValueList ws;
            for (double w : per_row[i]->weights) ws.push_back(Value::of(w));
            rows[i].values.push_back(Value::of(std::move(ws)));
            rows[i].values.push_back(Value::of(per_row[i]->intercept));
            rows[i].values.push_back(Value::of(per_row[i]->weighted_r2));
        } else {
            rows[i].values.push_back(Value::null());
            rows[i].values.push_back(Value::null());
            rows[i].values.push_back(Value::null());
        }
    }
    return rows;
}

struct AggState {
    std::vector<Row> rows;  // group members in arrival order
};

Value compute_agg(const AggSpec& agg, const std::vector<Row>& group, size_t col_idx,
                  const DataType& in_type) {
    if (agg.fn == AggFn::Count) {
        int64_t n = 0;
        for (const auto& r : group) {
            if (!r.values[col_idx].is_null()) ++n;
        }
        return Value::of(n);
    }
    bool any = false;
    if (agg.fn == AggFn::Sum || agg.fn == AggFn::Avg) {
        double facc = 0;
        uint64_t iacc = 0;
        int64_t n = 0;
        for (const auto& r : group) {
            const Value& v = r.values[col_idx];
            if (v.is_null()) continue;
            any = true;
            ++n;
            if (v.is<int64_t>()) {
                iacc += static_cast<uint64_t>(v.as_int64());
                facc += static_cast<double>(v.as_int64());
            } else {
                facc += v.as_float64();
            }
        }
        if (!any) return Value::null();
        if (agg.fn == AggFn::Avg) return Value::of(facc / static_cast<double>(n));
        if (in_type.tag == TypeTag::Int64) return Value::of(static_cast<int64_t>(iacc));
        return Value::of(facc);
    }
    // min / max
    Value best;
    for (const auto& r : group) {
        const Value& v = r.values[col_idx];
        if (v.is_null()) continue;
        if (!any) {
            best = v;
            any = true;
            continue;
        }
        bool smaller;
        if (v.is<std::string>()) {
            smaller = v.as_string() < best.as_string();
        } else if (v.is<int64_t>() && best.is<int64_t>()) {
            smaller = v.as_int64() < best.as_int64();
        } else {
            double a = v.is<double>() ? v.as_float64() : static_cast<double>(v.as_int64());
            double b = best.is<double>() ? best.as_float64() : static_cast<double>(best.as_int64());
            smaller = a < b;
        }
        if ((agg.fn == AggFn::Min) == smaller) best = v;
    }
    return any ? best : Value::null();
}

}  // namespace

std::vector<Row> apply_aggregate(const AggregateStage& stage, const Schema& input,
                                 const std::vector<Row>& rows, ExecMode mode) {
    std::vector<size_t> key_idx;
    for (const auto& k : stage.key_cols) key_idx.push_back(input.require(k));
    std::vector<size_t> col_idx;
    for (const auto& a : stage.aggs) col_idx.push_back(input.require(a.col));

    std::vector<std::string> group_order;
    std::unordered_map<std::string, AggState> groups;
    for (const auto& row : rows) {
        std::string key = encoded_key(row, key_idx);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) group_order.push_back(key);
        it->second.rows.push_back(row);
    }

    std::unordered_map<std::string, std::vector<Value>> agg_values;
    for (const auto& key : group_order) {
        const auto& group = groups[key].rows;
        std::vector<Value> values;
        for (size_t a = 0; a < stage.aggs.size(); ++a) {
            values.push_back(compute_agg(stage.aggs[a], group, col_idx[a],
                                         input.at(col_idx[a]).type));
        }
        agg_values.emplace(key, std::move(values));
    }

    std::vector<Row> out;
    if (mode == ExecMode::Serving) {
        // each request row keeps its identity and gains its group's aggregates
        out.reserve(rows.size());
        for (const auto& row : rows) {
            std::string key = encoded_key(row, key_idx);
            Row r = row;
            for (const auto& v : agg_values[key]) r.values.push_back(v);
            out.push_back(std::move(r));
        }
        return out;
    }
    out.reserve(group_order.size());
    for (const auto& key : group_order) {
        const Row& first = groups[key].rows.front();
        Row r;
        for (size_t k : key_idx) r.values.push_back(first.values[k]);
        for (const auto& v : agg_values[key]) r.values.push_back(v);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Row> apply_narrow_stage(const StageSpec& stage, const Schema& input,
                                    std::vector<Row> rows, const RunContext& ctx,
                                    int stage_index) {
    if (const auto* s = std::get_if<ProjectStage>(&stage)) {
        return apply_project(*s, input, rows, stage_index);
    }
    if (const auto* s = std::get_if<WithColumnStage>(&stage)) {
        return apply_with_column(*s, input, std::move(rows));
    }
    if (const auto* s = std::get_if<FilterStage>(&stage)) {
        return apply_filter(*s, input, std::move(rows));
    }
    if (const auto* s = std::get_if<StringIndexStage>(&stage)) {
        return apply_string_index(*s, input, std::move(rows), stage_index);
    }
    if (const auto* s = std::get_if<OneHotStage>(&stage)) {
        return apply_one_hot(*s, input, std::move(rows), stage_index);
    }
    if (const auto* s = std::get_if<LinearScoreStage>(&stage)) {
        return apply_linear_score(*s, input, std::move(rows), stage_index);
    }
    if (const auto* s = std::get_if<BroadcastJoinStage>(&stage)) {
        return apply_broadcast_join(*s, input, std::move(rows), ctx, stage_index);
    }
    if (const auto* s = std::get_if<HttpCallStage>(&stage)) {
        return apply_http_call(*s, input, std::move(rows));
    }
    if (const auto* s = std::get_if<LimeExplainStage>(&stage)) {
        return apply_lime_explain(*s, input, std::move(rows), ctx, stage_index);
    }
    throw StageRuntimeError(std::string(stage_kind_name(stage)) + " is not a narrow stage",
                            stage_index);
}

std::vector<Row> run_narrow_segment(const PipelineSpec& spec, size_t from, size_t to,
                                    std::vector<Row> rows, const RunContext& ctx, ExecMode mode) {
    Schema schema = propagate_schema(spec, mode, from);
    for (size_t i = from; i < to; ++i) {
        rows = apply_narrow_stage(spec.stages[i], schema, std::move(rows), ctx,
                                  static_cast<int>(i));
        schema = stage_output_schema(spec.stages[i], schema, mode, static_cast<int>(i));
    }
    return rows;
}

std::vector<Row> run_batch(const PipelineSpec& spec, std::vector<Row> rows,
                           const RunContext& ctx, ExecMode mode) {
    for (size_t i = 0; i < rows.size(); ++i) {
        auto result = validate_row(spec.input_schema, rows[i]);
        if (!result.ok()) {
            throw StageRuntimeError("input row " + std::to_string(i) + " field '" +
                                    result.violations[0].field +
                                    "': " + result.violations[0].message);
        }
    }
    Schema schema = spec.input_schema;
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec& stage = spec.stages[i];
        if (const auto* agg = std::get_if<AggregateStage>(&stage)) {
            rows = apply_aggregate(*agg, schema, rows, mode);
        } else if (std::holds_alternative<RepartitionStage>(stage)) {
            // single-process reference: a repartition moves no rows
        } else {
            rows = apply_narrow_stage(stage, schema, std::move(rows), ctx, static_cast<int>(i));
        }
        schema = stage_output_schema(stage, schema, mode, static_cast<int>(i));
    }
    return rows;
}

}  // namespace rowserve
