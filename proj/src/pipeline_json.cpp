#include <json.hpp>

#include "rowserve/pipeline.hpp"

namespace rowserve {

using nlohmann::json;

namespace {

DataType parse_type(const json& j, const std::string& where) {
    if (!j.is_string()) throw ParseError(where + ": type must be a string");
    auto t = DataType::parse(j.get<std::string>());
    if (!t || !t->well_formed()) {
        throw ParseError(where + ": unknown type '" + j.get<std::string>() + "'");
    }
    return *t;
}

Schema parse_schema(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": schema must be an array");
    std::vector<Field> fields;
    for (const auto& f : j) {
        if (!f.is_object() || !f.contains("name") || !f.contains("type")) {
            throw ParseError(where + ": schema fields need name and type");
        }
        fields.push_back({f.at("name").get<std::string>(), parse_type(f.at("type"), where)});
    }
    try {
        return Schema(std::move(fields));
    } catch (const SchemaError& e) {
        throw ParseError(where + ": " + e.what());
    }
}

json schema_to_json(const Schema& schema) {
    json out = json::array();
    for (const auto& f : schema.fields()) {
        out.push_back({{"name", f.name}, {"type", f.type.to_string()}});
    }
    return out;
}

std::pair<Value, DataType> parse_literal(const json& j, const std::string& where) {
    const json& v = j.at("lit");
    Value value;
    DataType inferred;
    if (v.is_string()) {
        value = Value::of(v.get<std::string>());
        inferred = DataType::string();
    } else if (v.is_boolean()) {
        value = Value::of(v.get<bool>());
        inferred = DataType::boolean();
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
        value = Value::of(v.get<int64_t>());
        inferred = DataType::int64();
    } else if (v.is_number_float()) {
        value = Value::of(v.get<double>());
        inferred = DataType::float64();
    } else {
        throw ParseError(where + ": literal must be a scalar");
    }
    if (j.contains("type")) {
        DataType declared = parse_type(j.at("type"), where);
        // allow integral JSON numbers to declare float64
        if (declared.tag == TypeTag::Float64 && inferred.tag == TypeTag::Int64) {
            value = Value::of(static_cast<double>(value.as_int64()));
        } else if (declared != inferred) {
            throw ParseError(where + ": literal does not match declared type " +
                             declared.to_string());
        }
        return {value, declared};
    }
    return {value, inferred};
}

ExprPtr parse_expr(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expression must be an object");
    if (j.contains("col")) {
        return col(j.at("col").get<std::string>());
    }
    if (j.contains("lit")) {
        auto [value, type] = parse_literal(j, where);
        return lit(std::move(value), std::move(type));
    }
    if (j.contains("op")) {
        std::string op = j.at("op").get<std::string>();
        auto lhs = parse_expr(j.at("lhs"), where);
        auto rhs = parse_expr(j.at("rhs"), where);
        if (op == "+") return arith(ArithOp::Add, lhs, rhs);
        if (op == "-") return arith(ArithOp::Sub, lhs, rhs);
        if (op == "*") return arith(ArithOp::Mul, lhs, rhs);
        if (op == "/") return arith(ArithOp::Div, lhs, rhs);
        if (op == "==") return compare(CompareOp::Eq, lhs, rhs);
        if (op == "!=") return compare(CompareOp::Ne, lhs, rhs);
        if (op == "<") return compare(CompareOp::Lt, lhs, rhs);
        if (op == "<=") return compare(CompareOp::Le, lhs, rhs);
        if (op == ">") return compare(CompareOp::Gt, lhs, rhs);
        if (op == ">=") return compare(CompareOp::Ge, lhs, rhs);
        throw ParseError(where + ": unknown operator '" + op + "'");
    }
    if (j.contains("concat")) {
        std::vector<ExprPtr> parts;
        for (const auto& p : j.at("concat")) parts.push_back(parse_expr(p, where));
        return concat(std::move(parts));
    }
    if (j.contains("fn")) {
        std::string fn = j.at("fn").get<std::string>();
        auto arg = parse_expr(j.at("arg"), where);
        if (fn == "lower") return func(FuncName::Lower, arg);
        if (fn == "length") return func(FuncName::Length, arg);
        if (fn == "body") return func(FuncName::Body, arg);
        if (fn == "echo") return func(FuncName::Echo, arg);
        if (fn == "respond") return func(FuncName::Respond, arg);
        if (fn == "status") return func(FuncName::Status, arg);
        throw ParseError(where + ": unknown function '" + fn + "'");
    }
    throw ParseError(where + ": expression needs one of col/lit/op/concat/fn");
}

json expr_to_json(const ExprPtr& e);

json literal_to_json(const Literal& l) {
    json out;
    switch (l.type.tag) {
        case TypeTag::String: out["lit"] = l.value.as_string(); break;
        case TypeTag::Int64: out["lit"] = l.value.as_int64(); break;
        case TypeTag::Float64: out["lit"] = l.value.as_float64(); break;
        case TypeTag::Bool: out["lit"] = l.value.as_bool(); break;
        default: throw Error("literal of type " + l.type.to_string() + " has no JSON form");
    }
    out["type"] = l.type.to_string();
    return out;
}

json expr_to_json(const ExprPtr& e) {
    if (const auto* ref = std::get_if<ColumnRef>(&e->node)) {
        return json{{"col", ref->name}};
    }
    if (const auto* l = std::get_if<Literal>(&e->node)) {
        return literal_to_json(*l);
    }
    if (const auto* a = std::get_if<Arith>(&e->node)) {
        return json{{"op", std::string(arith_op_name(a->op))},
                    {"lhs", expr_to_json(a->lhs)},
                    {"rhs", expr_to_json(a->rhs)}};
    }
    if (const auto* c = std::get_if<Compare>(&e->node)) {
        return json{{"op", std::string(compare_op_name(c->op))},
                    {"lhs", expr_to_json(c->lhs)},
                    {"rhs", expr_to_json(c->rhs)}};
    }
    if (const auto* cc = std::get_if<Concat>(&e->node)) {
        json parts = json::array();
        for (const auto& p : cc->parts) parts.push_back(expr_to_json(p));
        return json{{"concat", std::move(parts)}};
    }
    const auto& f = std::get<Func>(e->node);
    return json{{"fn", std::string(func_name(f.name))}, {"arg", expr_to_json(f.arg)}};
}

ParamBinding parse_binding(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": binding must be an object");
    if (j.contains("col")) {
        return ParamBinding::column_ref(j.at("col").get<std::string>());
    }
    if (j.contains("lit")) {
        auto [value, type] = parse_literal(j, where);
        (void)type;
        return ParamBinding::lit(std::move(value));
    }
    throw ParseError(where + ": binding needs col or lit");
}

json binding_to_json(const ParamBinding& b) {
    if (b.kind == ParamBinding::Kind::Col) return json{{"col", b.column}};
    json out;
    switch (*b.literal.tag()) {
        case TypeTag::String: out["lit"] = b.literal.as_string(); break;
        case TypeTag::Int64: out["lit"] = b.literal.as_int64(); break;
        case TypeTag::Float64: out["lit"] = b.literal.as_float64(); break;
        case TypeTag::Bool: out["lit"] = b.literal.as_bool(); break;
        default: throw Error("binding literal has no JSON form");
    }
    return out;
}

RetryPolicy parse_retry(const json& j, const std::string& where) {
    RetryPolicy p;
    if (j.contains("baseDelayMs")) p.base_delay_ms = j.at("baseDelayMs").get<double>();
    if (j.contains("multiplier")) p.multiplier = j.at("multiplier").get<double>();
    if (j.contains("maxRetries")) p.max_retries = j.at("maxRetries").get<int>();
    if (j.contains("jitterFraction")) p.jitter_fraction = j.at("jitterFraction").get<double>();
    if (j.contains("jitterSeed")) p.jitter_seed = j.at("jitterSeed").get<uint64_t>();
    if (j.contains("retryableStatuses")) {
        p.retryable_statuses.clear();
        for (const auto& s : j.at("retryableStatuses")) p.retryable_statuses.insert(s.get<int>());
    }
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw ParseError(where + ": " + e.what());
    }
    return p;
}

ClientConfig parse_client(const json& j, const std::string& where) {
    ClientConfig c;
    if (j.contains("maxConcurrent")) c.max_concurrent_per_partition = j.at("maxConcurrent").get<int>();
    if (j.contains("rateLimitPerSec")) c.rate_limit_per_sec = j.at("rateLimitPerSec").get<double>();
    if (j.contains("timeoutMs")) c.request_timeout_ms = j.at("timeoutMs").get<int>();
    if (j.contains("retry")) c.retry = parse_retry(j.at("retry"), where);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ParseError(where + ": " + e.what());
    }
    return c;
}

json client_to_json(const ClientConfig& c) {
    json retry{{"baseDelayMs", c.retry.base_delay_ms},
               {"multiplier", c.retry.multiplier},
               {"maxRetries", c.retry.max_retries},
               {"jitterFraction", c.retry.jitter_fraction},
               {"retryableStatuses", c.retry.retryable_statuses}};
    if (c.retry.jitter_seed) retry["jitterSeed"] = c.retry.jitter_seed;
    return json{{"maxConcurrent", c.max_concurrent_per_partition},
                {"rateLimitPerSec", c.rate_limit_per_sec},
                {"timeoutMs", c.request_timeout_ms},
                {"retry", std::move(retry)}};
}

RequestTemplate parse_template(const json& j, const std::string& where) {
    RequestTemplate t;
    if (j.contains("method")) t.method = parse_binding(j.at("method"), where);
    if (!j.contains("uri")) throw ParseError(where + ": template needs uri");
    t.uri_pattern = j.at("uri").get<std::string>();
    if (j.contains("uriBindings")) {
        for (const auto& [name, b] : j.at("uriBindings").items()) {
            t.uri_bindings.emplace(name, parse_binding(b, where));
        }
    }
    if (j.contains("headers")) {
        for (const auto& h : j.at("headers")) {
            if (!h.is_array() || h.size() != 2) {
                throw ParseError(where + ": template headers are [name, binding] pairs");
            }
            t.headers.emplace_back(h.at(0).get<std::string>(), parse_binding(h.at(1), where));
        }
    }
    if (j.contains("body")) t.body = parse_binding(j.at("body"), where);
    return t;
}

json template_to_json(const RequestTemplate& t) {
    json out{{"method", binding_to_json(t.method)}, {"uri", t.uri_pattern}};
    if (!t.uri_bindings.empty()) {
        json b = json::object();
        for (const auto& [name, binding] : t.uri_bindings) b[name] = binding_to_json(binding);
        out["uriBindings"] = std::move(b);
    }
    if (!t.headers.empty()) {
        json hs = json::array();
        for (const auto& [name, binding] : t.headers) {
            hs.push_back(json::array({name, binding_to_json(binding)}));
        }
        out["headers"] = std::move(hs);
    }
    if (t.body) out["body"] = binding_to_json(*t.body);
    return out;
}

lime::SegmentationSpec parse_segmentation(const json& j, const std::string& where) {
    lime::SegmentationSpec spec;
    if (j.contains("tabular")) {
        const json& t = j.at("tabular");
        lime::TabularSegmentation seg;
        seg.feature_count = t.at("featureCount").get<int>();
        if (t.contains("neutralValues")) {
            seg.neutral_values = t.at("neutralValues").get<std::vector<double>>();
        } else {
            seg.neutral_values.assign(static_cast<size_t>(seg.feature_count), 0.0);
        }
        spec.kind = std::move(seg);
    } else if (j.contains("grid")) {
        const json& g = j.at("grid");
        lime::GridSegmentation seg;
        seg.width = g.at("width").get<int>();
        seg.height = g.at("height").get<int>();
        seg.cell_w = g.at("cellW").get<int>();
        seg.cell_h = g.at("cellH").get<int>();
        if (g.contains("neutralColor")) {
            auto c = g.at("neutralColor").get<std::vector<int>>();
            if (c.size() != 3) throw ParseError(where + ": neutralColor needs 3 components");
            seg.neutral_color = {static_cast<uint8_t>(c[0]), static_cast<uint8_t>(c[1]),
                                 static_cast<uint8_t>(c[2])};
        }
        spec.kind = std::move(seg);
    } else {
        throw ParseError(where + ": segmentation needs tabular or grid");
    }
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ParseError(where + ": " + e.what());
    }
    return spec;
}

json segmentation_to_json(const lime::SegmentationSpec& spec) {
    if (spec.tabular()) {
        const auto& t = std::get<lime::TabularSegmentation>(spec.kind);
        return json{{"tabular",
                     {{"featureCount", t.feature_count}, {"neutralValues", t.neutral_values}}}};
    }
    const auto& g = std::get<lime::GridSegmentation>(spec.kind);
    return json{{"grid",
                 {{"width", g.width},
                  {"height", g.height},
                  {"cellW", g.cell_w},
                  {"cellH", g.cell_h},
                  {"neutralColor", {g.neutral_color[0], g.neutral_color[1], g.neutral_color[2]}}}}};
}

lime::LimeConfig parse_lime_config(const json& j, const std::string& where) {
    lime::LimeConfig c;
    if (j.contains("numSamples")) c.num_samples = j.at("numSamples").get<int>();
    if (j.contains("kernelWidth")) c.kernel_width = j.at("kernelWidth").get<double>();
    if (j.contains("l1Penalty")) c.l1_penalty = j.at("l1Penalty").get<double>();
    if (j.contains("onProbability")) c.on_probability = j.at("onProbability").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ParseError(where + ": " + e.what());
    }
    return c;
}

json lime_config_to_json(const lime::LimeConfig& c) {
    json out{{"numSamples", c.num_samples},
             {"kernelWidth", c.kernel_width},
             {"onProbability", c.on_probability},
             {"seed", c.seed}};
    if (c.l1_penalty) out["l1Penalty"] = *c.l1_penalty;
    return out;
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError(where + ": malformed field '" + key + "'");
    }
}

StageSpec parse_stage(const json& j, int index) {
    std::string where = "stage " + std::to_string(index);
    if (!j.is_object()) throw ParseError(where + ": stage must be an object");
    std::string kind = get_field<std::string>(j, "kind", where);
    where += " (" + kind + ")";

    if (kind == "Project") {
        ProjectStage s;
        s.columns = get_field<std::vector<std::string>>(j, "columns", where);
        return s;
    }
    if (kind == "WithColumn") {
        WithColumnStage s;
        s.name = get_field<std::string>(j, "name", where);
        if (!j.contains("expr")) throw ParseError(where + ": missing field 'expr'");
        s.expr = parse_expr(j.at("expr"), where);
        return s;
    }
    if (kind == "Filter") {
        FilterStage s;
        if (!j.contains("expr")) throw ParseError(where + ": missing field 'expr'");
        s.predicate = parse_expr(j.at("expr"), where);
        return s;
    }
    if (kind == "StringIndex") {
        StringIndexStage s;
        s.in_col = get_field<std::string>(j, "inCol", where);
        s.out_col = get_field<std::string>(j, "outCol", where);
        if (!j.contains("dictionary") || !j.at("dictionary").is_object()) {
            throw ParseError(where + ": missing dictionary object");
        }
        for (const auto& [k, v] : j.at("dictionary").items()) {
            if (!v.is_number_integer() && !v.is_number_unsigned()) {
                throw ParseError(where + ": dictionary values must be integers");
            }
            s.dictionary.emplace(k, v.get<int64_t>());
        }
        return s;
    }
    if (kind == "OneHot") {
        OneHotStage s;
        s.in_col = get_field<std::string>(j, "inCol", where);
        s.out_col = get_field<std::string>(j, "outCol", where);
        s.cardinality = get_field<int64_t>(j, "cardinality", where);
        return s;
    }
    if (kind == "LinearScore") {
        LinearScoreStage s;
        s.weights = get_field<std::vector<double>>(j, "weights", where);
        s.intercept = get_field<double>(j, "intercept", where);
        s.in_cols = get_field<std::vector<std::string>>(j, "inCols", where);
        s.out_col = get_field<std::string>(j, "outCol", where);
        std::string link = j.value("link", "identity");
        if (link == "identity") {
            s.link = LinkFn::Identity;
        } else if (link == "sigmoid") {
            s.link = LinkFn::Sigmoid;
        } else {
            throw ParseError(where + ": unknown link '" + link + "'");
        }
        return s;
    }
    if (kind == "BroadcastJoin") {
        BroadcastJoinStage s;
        s.table_id = get_field<std::string>(j, "tableId", where);
        s.left_key = get_field<std::string>(j, "leftKey", where);
        s.right_key = get_field<std::string>(j, "rightKey", where);
        std::string joinKind = j.value("joinKind", "inner");
        if (joinKind == "inner") {
            s.kind = JoinKind::Inner;
        } else if (joinKind == "left") {
            s.kind = JoinKind::Left;
        } else {
            throw ParseError(where + ": unknown joinKind '" + joinKind + "'");
        }
        if (!j.contains("rightSchema")) throw ParseError(where + ": missing rightSchema");
        s.right_schema = parse_schema(j.at("rightSchema"), where);
        return s;
    }
    if (kind == "Aggregate") {
        AggregateStage s;
        s.key_cols = get_field<std::vector<std::string>>(j, "keyCols", where);
        if (!j.contains("aggs") || !j.at("aggs").is_array()) {
            throw ParseError(where + ": missing aggs array");
        }
        for (const auto& a : j.at("aggs")) {
            AggSpec agg;
            std::string fn = get_field<std::string>(a, "fn", where);
            if (fn == "count") agg.fn = AggFn::Count;
            else if (fn == "sum") agg.fn = AggFn::Sum;
            else if (fn == "avg") agg.fn = AggFn::Avg;
            else if (fn == "min") agg.fn = AggFn::Min;
            else if (fn == "max") agg.fn = AggFn::Max;
            else throw ParseError(where + ": unknown aggregate fn '" + fn + "'");
            agg.col = get_field<std::string>(a, "col", where);
            agg.out_col = get_field<std::string>(a, "outCol", where);
            s.aggs.push_back(std::move(agg));
        }
        return s;
    }
    if (kind == "Repartition") {
        RepartitionStage s;
        s.key_col = get_field<std::string>(j, "keyCol", where);
        int64_t n = get_field<int64_t>(j, "partitions", where);
        if (n < 1) throw ParseError(where + ": partitions must be >= 1");
        s.partitions = static_cast<uint32_t>(n);
        return s;
    }
    if (kind == "HttpCall") {
        HttpCallStage s;
        s.out_col = get_field<std::string>(j, "outCol", where);
        if (j.contains("client")) s.client = parse_client(j.at("client"), where);
        if (!j.contains("template")) throw ParseError(where + ": missing template");
        s.tmpl = parse_template(j.at("template"), where);
        return s;
    }
    if (kind == "LimeExplain") {
        LimeExplainStage s;
        s.in_col = get_field<std::string>(j, "inCol", where);
        s.out_col = get_field<std::string>(j, "outCol", where);
        s.target_pipeline_id = get_field<std::string>(j, "targetPipelineId", where);
        if (j.contains("lime")) s.config = parse_lime_config(j.at("lime"), where);
        if (!j.contains("segmentation")) throw ParseError(where + ": missing segmentation");
        s.segmentation = parse_segmentation(j.at("segmentation"), where);
        return s;
    }
    throw ParseError(where + ": unknown stage kind '" + kind + "'");
}

json stage_to_json(const StageSpec& stage) {
    json out;
    out["kind"] = std::string(stage_kind_name(stage));
    if (const auto* s = std::get_if<ProjectStage>(&stage)) {
        out["columns"] = s->columns;
    } else if (const auto* s = std::get_if<WithColumnStage>(&stage)) {
        out["name"] = s->name;
        out["expr"] = expr_to_json(s->expr);
    } else if (const auto* s = std::get_if<FilterStage>(&stage)) {
        out["expr"] = expr_to_json(s->predicate);
    } else if (const auto* s = std::get_if<StringIndexStage>(&stage)) {
        out["inCol"] = s->in_col;
        out["outCol"] = s->out_col;
        json dict = json::object();
        for (const auto& [k, v] : s->dictionary) dict[k] = v;
        out["dictionary"] = std::move(dict);
    } else if (const auto* s = std::get_if<OneHotStage>(&stage)) {
        out["inCol"] = s->in_col;
        out["outCol"] = s->out_col;
        out["cardinality"] = s->cardinality;
    } else if (const auto* s = std::get_if<LinearScoreStage>(&stage)) {
        out["weights"] = s->weights;
        out["intercept"] = s->intercept;
        out["inCols"] = s->in_cols;
        out["outCol"] = s->out_col;
        out["link"] = s->link == LinkFn::Sigmoid ? "sigmoid" : "identity";
    } else if (const auto* s = std::get_if<BroadcastJoinStage>(&stage)) {
        out["tableId"] = s->table_id;
        out["leftKey"] = s->left_key;
        out["rightKey"] = s->right_key;
        out["joinKind"] = s->kind == JoinKind::Left ? "left" : "inner";
        out["rightSchema"] = schema_to_json(s->right_schema);
    } else if (const auto* s = std::get_if<AggregateStage>(&stage)) {
        out["keyCols"] = s->key_cols;
        json aggs = json::array();
        for (const auto& a : s->aggs) {
            aggs.push_back({{"fn", std::string(agg_fn_name(a.fn))},
                            {"col", a.col},
                            {"outCol", a.out_col}});
        }
        out["aggs"] = std::move(aggs);
    } else if (const auto* s = std::get_if<RepartitionStage>(&stage)) {
        out["keyCol"] = s->key_col;
        out["partitions"] = s->partitions;
    } else if (const auto* s = std::get_if<HttpCallStage>(&stage)) {
        out["outCol"] = s->out_col;
        out["client"] = client_to_json(s->client);
        out["template"] = template_to_json(s->tmpl);
    } else if (const auto* s = std::get_if<LimeExplainStage>(&stage)) {
        out["inCol"] = s->in_col;
        out["outCol"] = s->out_col;
        out["targetPipelineId"] = s->target_pipeline_id;
        out["lime"] = lime_config_to_json(s->config);
        out["segmentation"] = segmentation_to_json(s->segmentation);
    }
    return out;
}

}  // namespace

PipelineSpec parse_pipeline(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed pipeline document: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("pipeline document must be a JSON object");
    std::string version = doc.value("version", "v1");
    if (version != "v1") throw ParseError("unsupported pipeline format version '" + version + "'");
    PipelineSpec spec;
    spec.id = doc.value("id", "");
    if (spec.id.empty()) throw ParseError("pipeline document needs a non-empty id");
    if (!doc.contains("inputSchema")) throw ParseError("pipeline document needs inputSchema");
    spec.input_schema = parse_schema(doc.at("inputSchema"), "inputSchema");
    if (!doc.contains("stages") || !doc.at("stages").is_array()) {
        throw ParseError("pipeline document needs a top-level stages array");
    }
    int index = 0;
    for (const auto& s : doc.at("stages")) {
        spec.stages.push_back(parse_stage(s, index));
        ++index;
    }
    try {
        validate_pipeline(spec);
    } catch (const SchemaError& e) {
        throw ParseError(std::string("invalid pipeline: ") + e.what());
    }
    return spec;
}

std::string pipeline_to_json(const PipelineSpec& spec) {
    json doc;
    doc["version"] = "v1";
    doc["id"] = spec.id;
    doc["inputSchema"] = schema_to_json(spec.input_schema);
    json stages = json::array();
    for (const auto& s : spec.stages) stages.push_back(stage_to_json(s));
    doc["stages"] = std::move(stages);
    return doc.dump(2);
}

}  // namespace rowserve
