#include "rowserve/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>

namespace rowserve {

std::string_view arith_op_name(ArithOp op) {
    switch (op) {
        case ArithOp::Add: return "+";
        case ArithOp::Sub: return "-";
        case ArithOp::Mul: return "*";
        case ArithOp::Div: return "/";
    }
    return "?";
}

std::string_view compare_op_name(CompareOp op) {
    switch (op) {
        case CompareOp::Eq: return "==";
        case CompareOp::Ne: return "!=";
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
    }
    return "?";
}

std::string_view func_name(FuncName f) {
    switch (f) {
        case FuncName::Lower: return "lower";
        case FuncName::Length: return "length";
        case FuncName::Body: return "body";
        case FuncName::Echo: return "echo";
        case FuncName::Respond: return "respond";
        case FuncName::Status: return "status";
    }
    return "?";
}

ExprPtr col(std::string name) {
    return std::make_shared<Expr>(Expr{ColumnRef{std::move(name)}});
}
ExprPtr lit(Value v, DataType type) {
    return std::make_shared<Expr>(Expr{Literal{std::move(v), std::move(type)}});
}
ExprPtr lit_string(std::string s) {
    return lit(Value::of(std::move(s)), DataType::string());
}
ExprPtr lit_int(int64_t v) {
    return lit(Value::of(v), DataType::int64());
}
ExprPtr lit_float(double v) {
    return lit(Value::of(v), DataType::float64());
}
ExprPtr lit_bool(bool v) {
    return lit(Value::of(v), DataType::boolean());
}
ExprPtr arith(ArithOp op, ExprPtr lhs, ExprPtr rhs) {
    return std::make_shared<Expr>(Expr{Arith{op, std::move(lhs), std::move(rhs)}});
}
ExprPtr compare(CompareOp op, ExprPtr lhs, ExprPtr rhs) {
    return std::make_shared<Expr>(Expr{Compare{op, std::move(lhs), std::move(rhs)}});
}
ExprPtr concat(std::vector<ExprPtr> parts) {
    return std::make_shared<Expr>(Expr{Concat{std::move(parts)}});
}
ExprPtr func(FuncName name, ExprPtr arg) {
    return std::make_shared<Expr>(Expr{Func{name, std::move(arg)}});
}

bool is_scalar_type(const DataType& t) {
    switch (t.tag) {
        case TypeTag::String:
        case TypeTag::Int64:
        case TypeTag::Float64:
        case TypeTag::Bool:
            return true;
        default:
            return false;
    }
}

std::string stringify_scalar(const Value& v) {
    switch (*v.tag()) {
        case TypeTag::String:
            return v.as_string();
        case TypeTag::Int64:
            return std::to_string(v.as_int64());
        case TypeTag::Float64: {
            std::array<char, 32> buf{};
            auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v.as_float64());
            (void)ec;
            return std::string(buf.data(), p);
        }
        case TypeTag::Bool:
            return v.as_bool() ? "true" : "false";
        default:
            throw Error("value of kind " + std::string(type_tag_name(*v.tag())) +
                        " has no text form");
    }
}

namespace {

bool numeric(const DataType& t) {
    return t.tag == TypeTag::Int64 || t.tag == TypeTag::Float64;
}

DataType infer_arith(const Arith& a, const Schema& schema) {
    DataType lt = a.lhs->infer_type(schema);
    DataType rt = a.rhs->infer_type(schema);
    if (!numeric(lt) || !numeric(rt)) {
        throw SchemaError("operator " + std::string(arith_op_name(a.op)) +
                          " needs numeric operands, got " + lt.to_string() + " and " +
                          rt.to_string());
    }
    if (lt.tag == TypeTag::Float64 || rt.tag == TypeTag::Float64) return DataType::float64();
    return DataType::int64();
}

DataType infer_compare(const Compare& c, const Schema& schema) {
    DataType lt = c.lhs->infer_type(schema);
    DataType rt = c.rhs->infer_type(schema);
    bool equality = c.op == CompareOp::Eq || c.op == CompareOp::Ne;
    if (numeric(lt) && numeric(rt)) return DataType::boolean();
    if (lt.tag == TypeTag::String && rt.tag == TypeTag::String) return DataType::boolean();
    if (lt.tag == TypeTag::Bool && rt.tag == TypeTag::Bool && equality) {
        return DataType::boolean();
    }
    throw SchemaError("cannot compare " + lt.to_string() + " " +
                      std::string(compare_op_name(c.op)) + " " + rt.to_string());
}

DataType infer_func(const Func& f, const Schema& schema) {
    DataType at = f.arg->infer_type(schema);
    switch (f.name) {
        case FuncName::Lower:
            if (at.tag != TypeTag::String) {
                throw SchemaError("lower() needs string, got " + at.to_string());
            }
            return DataType::string();
        case FuncName::Length:
            if (at.tag != TypeTag::String) {
                throw SchemaError("length() needs string, got " + at.to_string());
            }
            return DataType::int64();
        case FuncName::Body:
            if (at.tag != TypeTag::HttpRequest) {
                throw SchemaError("body() needs httpRequest, got " + at.to_string());
            }
            return DataType::string();
        case FuncName::Echo:
            if (at.tag != TypeTag::HttpRequest) {
                throw SchemaError("echo() needs httpRequest, got " + at.to_string());
            }
            return DataType::http_response();
        case FuncName::Respond:
            if (!is_scalar_type(at)) {
                throw SchemaError("respond() needs a scalar, got " + at.to_string());
            }
            return DataType::http_response();
        case FuncName::Status:
            if (at.tag != TypeTag::HttpResponse) {
                throw SchemaError("status() needs httpResponse, got " + at.to_string());
            }
            return DataType::int64();
    }
    throw SchemaError("unknown function");
}

Value eval_arith(const Arith& a, const Row& row, const Schema& schema) {
    Value lv = a.lhs->eval(row, schema);
    Value rv = a.rhs->eval(row, schema);
    if (lv.is_null() || rv.is_null()) return Value::null();
    bool as_float = lv.is<double>() || rv.is<double>();
    if (as_float) {
        double l = lv.is<double>() ? lv.as_float64() : static_cast<double>(lv.as_int64());
        double r = rv.is<double>() ? rv.as_float64() : static_cast<double>(rv.as_int64());
        switch (a.op) {
            case ArithOp::Add: return Value::of(l + r);
            case ArithOp::Sub: return Value::of(l - r);
            case ArithOp::Mul: return Value::of(l * r);
            case ArithOp::Div: return r == 0.0 ? Value::null() : Value::of(l / r);
        }
    }
    int64_t l = lv.as_int64(), r = rv.as_int64();
    switch (a.op) {
        case ArithOp::Add:
            return Value::of(static_cast<int64_t>(static_cast<uint64_t>(l) +
                                                  static_cast<uint64_t>(r)));
        case ArithOp::Sub:
            return Value::of(static_cast<int64_t>(static_cast<uint64_t>(l) -
                                                  static_cast<uint64_t>(r)));
        case ArithOp::Mul:
            return Value::of(static_cast<int64_t>(static_cast<uint64_t>(l) *
                                                  static_cast<uint64_t>(r)));
        case ArithOp::Div:
            if (r == 0) return Value::null();
            if (l == std::numeric_limits<int64_t>::min() && r == -1) return Value::null();
            return Value::of(l / r);
    }
    return Value::null();
}

template <typename T>
bool apply_order(CompareOp op, const T& l, const T& r) {
    switch (op) {
        case CompareOp::Eq: return l == r;
        case CompareOp::Ne: return l != r;
        case CompareOp::Lt: return l < r;
        case CompareOp::Le: return l <= r;
        case CompareOp::Gt: return l > r;
        case CompareOp::Ge: return l >= r;
    }
    return false;
}

Value eval_compare(const Compare& c, const Row& row, const Schema& schema) {
    Value lv = c.lhs->eval(row, schema);
    Value rv = c.rhs->eval(row, schema);
    if (lv.is_null() || rv.is_null()) return Value::null();
    if (lv.is<std::string>()) {
        return Value::of(apply_order(c.op, lv.as_string(), rv.as_string()));
    }
    if (lv.is<bool>() && rv.is<bool>()) {
        bool eq = lv.as_bool() == rv.as_bool();
        return Value::of(c.op == CompareOp::Eq ? eq : !eq);
    }
    if (lv.is<int64_t>() && rv.is<int64_t>()) {
        return Value::of(apply_order(c.op, lv.as_int64(), rv.as_int64()));
    }
    double l = lv.is<double>() ? lv.as_float64() : static_cast<double>(lv.as_int64());
    double r = rv.is<double>() ? rv.as_float64() : static_cast<double>(rv.as_int64());
    return Value::of(apply_order(c.op, l, r));
}

Value eval_func(const Func& f, const Row& row, const Schema& schema) {
    Value av = f.arg->eval(row, schema);
    if (av.is_null()) return Value::null();
    switch (f.name) {
        case FuncName::Lower: {
            std::string s = av.as_string();
            for (char& c : s) {
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            }
            return Value::of(std::move(s));
        }
        case FuncName::Length:
            return Value::of(static_cast<int64_t>(av.as_string().size()));
        case FuncName::Body: {
            const auto& b = av.as_request().body;
            return Value::of(std::string(b.begin(), b.end()));
        }
        case FuncName::Echo: {
            const auto& req = av.as_request();
            HttpResponseData resp;
            resp.status = 200;
            resp.reason = "OK";
            if (auto ct = req.header("Content-Type")) {
                resp.set_header("Content-Type", *ct);
            }
            resp.body = req.body;
            return Value::of(std::move(resp));
        }
        case FuncName::Respond: {
            HttpResponseData resp;
            resp.status = 200;
            resp.reason = "OK";
            resp.set_header("Content-Type", "text/plain");
            std::string text = stringify_scalar(av);
            resp.body.assign(text.begin(), text.end());
            return Value::of(std::move(resp));
        }
        case FuncName::Status:
            return Value::of(static_cast<int64_t>(av.as_response().status));
    }
    return Value::null();
}

}  // namespace

DataType Expr::infer_type(const Schema& schema) const {
    if (const auto* ref = std::get_if<ColumnRef>(&node)) {
        size_t idx = schema.require(ref->name);
        return schema.at(idx).type;
    }
    if (const auto* l = std::get_if<Literal>(&node)) {
        if (l->value.is_null()) {
            throw SchemaError("literal value must not be null");
        }
        if (auto err = value_conforms(l->value, l->type)) {
            throw SchemaError("literal does not match its declared type: " + *err);
        }
        return l->type;
    }
    if (const auto* a = std::get_if<Arith>(&node)) return infer_arith(*a, schema);
    if (const auto* c = std::get_if<Compare>(&node)) return infer_compare(*c, schema);
    if (const auto* cc = std::get_if<Concat>(&node)) {
        if (cc->parts.empty()) throw SchemaError("concat needs at least one part");
        for (const auto& p : cc->parts) {
            DataType t = p->infer_type(schema);
            if (!is_scalar_type(t)) {
                throw SchemaError("concat parts must be scalars, got " + t.to_string());
            }
        }
        return DataType::string();
    }
    return infer_func(std::get<Func>(node), schema);
}

Value Expr::eval(const Row& row, const Schema& schema) const {
    if (const auto* ref = std::get_if<ColumnRef>(&node)) {
        auto idx = schema.index_of(ref->name);
        if (!idx) throw SchemaError("missing column '" + ref->name + "'");
        return row.values[*idx];
    }
    if (const auto* l = std::get_if<Literal>(&node)) {
        return l->value;
    }
    if (const auto* a = std::get_if<Arith>(&node)) return eval_arith(*a, row, schema);
    if (const auto* c = std::get_if<Compare>(&node)) return eval_compare(*c, row, schema);
    if (const auto* cc = std::get_if<Concat>(&node)) {
        std::string out;
        for (const auto& p : cc->parts) {
            Value v = p->eval(row, schema);
            if (v.is_null()) return Value::null();
            out += stringify_scalar(v);
        }
        return Value::of(std::move(out));
    }
    return eval_func(std::get<Func>(node), row, schema);
}

}  // namespace rowserve
