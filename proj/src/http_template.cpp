#include "rowserve/expr.hpp"
#include "rowserve/http_client.hpp"

namespace rowserve {

std::vector<std::string> RequestTemplate::placeholders() const {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < uri_pattern.size()) {
        size_t open = uri_pattern.find('{', pos);
        if (open == std::string::npos) break;
        size_t close = uri_pattern.find('}', open + 1);
        if (close == std::string::npos) {
            throw ConfigError("unclosed '{' in uri pattern: " + uri_pattern);
        }
        out.push_back(uri_pattern.substr(open + 1, close - open - 1));
        pos = close + 1;
    }
    return out;
}

namespace {

void check_binding(const ParamBinding& b, const Schema& schema, const std::string& role,
                   bool allow_binary) {
    if (b.kind == ParamBinding::Kind::Lit) {
        if (b.literal.is_null()) {
            throw SchemaError(role + ": literal binding must not be null");
        }
        return;
    }
    auto idx = schema.index_of(b.column);
    if (!idx) {
        throw SchemaError(role + ": bound column '" + b.column + "' not in input schema");
    }
    const DataType& t = schema.at(*idx).type;
    if (is_scalar_type(t)) return;
    if (allow_binary && t.tag == TypeTag::Binary) return;
    throw SchemaError(role + ": column '" + b.column + "' of type " + t.to_string() +
                      " cannot parameterize a request");
}

/// Resolved binding value or an error description; null column values are
/// row-level errors per contract.
struct Resolved {
    Value value;
    std::string error;
    bool ok() const { return error.empty(); }
};

Resolved resolve(const ParamBinding& b, const Row& row, const Schema& schema,
                 const std::string& role) {
    if (b.kind == ParamBinding::Kind::Lit) return {b.literal, ""};
    auto idx = schema.index_of(b.column);
    if (!idx) return {Value::null(), role + ": column '" + b.column + "' missing"};
    const Value& v = row.values[*idx];
    if (v.is_null()) return {Value::null(), role + ": null value in column '" + b.column + "'"};
    return {v, ""};
}

}  // namespace

void RequestTemplate::validate(const Schema& schema) const {
    check_binding(method, schema, "method", false);
    for (const auto& name : placeholders()) {
        auto it = uri_bindings.find(name);
        if (it == uri_bindings.end()) {
            throw SchemaError("uri placeholder '{" + name + "}' has no binding");
        }
        check_binding(it->second, schema, "uri placeholder '" + name + "'", false);
    }
    for (const auto& [name, b] : headers) {
        check_binding(b, schema, "header '" + name + "'", false);
    }
    if (body) check_binding(*body, schema, "body", true);
}

BuildResult build_request(const RequestTemplate& tmpl, const Row& row, const Schema& schema) {
    HttpRequestData req;

    auto m = resolve(tmpl.method, row, schema, "method");
    if (!m.ok()) return {std::nullopt, m.error};
    req.method = stringify_scalar(m.value);

    std::string uri;
    size_t pos = 0;
    const std::string& pat = tmpl.uri_pattern;
    while (pos < pat.size()) {
        size_t open = pat.find('{', pos);
        if (open == std::string::npos) {
            uri.append(pat, pos, std::string::npos);
            break;
        }
        uri.append(pat, pos, open - pos);
        size_t close = pat.find('}', open + 1);
        std::string name = pat.substr(open + 1, close - open - 1);
        auto r = resolve(tmpl.uri_bindings.at(name), row, schema, "uri placeholder '" + name + "'");
        if (!r.ok()) return {std::nullopt, r.error};
        uri += stringify_scalar(r.value);
        pos = close + 1;
    }
    req.uri = std::move(uri);

    for (const auto& [name, b] : tmpl.headers) {
        auto r = resolve(b, row, schema, "header '" + name + "'");
        if (!r.ok()) return {std::nullopt, r.error};
        req.headers.emplace_back(name, stringify_scalar(r.value));
    }

    if (tmpl.body) {
        auto r = resolve(*tmpl.body, row, schema, "body");
        if (!r.ok()) return {std::nullopt, r.error};
        if (r.value.is<Bytes>()) {
            req.body = r.value.as_binary();
        } else {
            std::string text = stringify_scalar(r.value);
            req.body.assign(text.begin(), text.end());
        }
    }
    return {std::move(req), ""};
}

}  // namespace rowserve
