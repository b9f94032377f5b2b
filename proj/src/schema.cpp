#include "rowserve/schema.hpp"

namespace rowserve {

Schema::Schema(std::vector<Field> fields) : fields_(std::move(fields)) {
    index_.reserve(fields_.size());
    for (size_t i = 0; i < fields_.size(); ++i) {
        const auto& f = fields_[i];
        if (f.name.empty()) {
            throw SchemaError("field " + std::to_string(i) + " has an empty name");
        }
        if (!f.type.well_formed()) {
            throw SchemaError("field '" + f.name + "' has malformed type");
        }
        if (!index_.emplace(f.name, i).second) {
            throw SchemaError("duplicate field name '" + f.name + "'");
        }
    }
}

std::optional<size_t> Schema::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

size_t Schema::require(std::string_view name, std::optional<int> stage) const {
    auto idx = index_of(name);
    if (!idx) {
        throw SchemaError("missing column '" + std::string(name) + "'", stage);
    }
    return *idx;
}

std::string Schema::to_string() const {
    std::string out = "[";
    for (size_t i = 0; i < fields_.size(); ++i) {
        if (i) out += ", ";
        out += fields_[i].name + ": " + fields_[i].type.to_string();
    }
    out += "]";
    return out;
}

static std::optional<std::string> check_http_request(const HttpRequestData& r) {
    if (r.method.empty()) return "httpRequest method is empty";
    if (auto cl = r.header("Content-Length")) {
        size_t declared = 0;
        try {
            declared = std::stoull(*cl);
        } catch (...) {
            return "httpRequest Content-Length is not a number: " + *cl;
        }
        if (declared != r.body.size()) {
            return "httpRequest body has " + std::to_string(r.body.size()) +
                   " bytes but Content-Length declares " + std::to_string(declared);
        }
    }
    return std::nullopt;
}

std::optional<std::string> value_conforms(const Value& value, const DataType& type) {
    if (value.is_null()) return std::nullopt;
    auto actual = *value.tag();
    if (actual != type.tag) {
        return "expected " + type.to_string() + ", got " + std::string(type_tag_name(actual));
    }
    switch (type.tag) {
        case TypeTag::Array: {
            const auto& list = value.as_array();
            for (size_t i = 0; i < list.size(); ++i) {
                if (auto err = value_conforms(list[i], *type.elem)) {
                    return "element " + std::to_string(i) + ": " + *err;
                }
            }
            return std::nullopt;
        }
        case TypeTag::HttpRequest:
            return check_http_request(value.as_request());
        case TypeTag::HttpResponse: {
            int s = value.as_response().status;
            if (s < 100 || s > 599) {
                return "httpResponse status " + std::to_string(s) + " outside [100, 599]";
            }
            return std::nullopt;
        }
        default:
            return std::nullopt;
    }
}

ValidationResult validate_row(const Schema& schema, const Row& row) {
    ValidationResult result;
    if (row.size() != schema.size()) {
        result.violations.push_back(
            {"", "row has " + std::to_string(row.size()) + " values, schema declares " +
                     std::to_string(schema.size())});
        return result;
    }
    for (size_t i = 0; i < schema.size(); ++i) {
        if (auto err = value_conforms(row.values[i], schema.at(i).type)) {
            result.violations.push_back({schema.at(i).name, *err});
        }
    }
    return result;
}

}  // namespace rowserve
