#include "rowserve/value.hpp"

#include <array>
#include <charconv>
#include <cstring>

namespace rowserve {

std::string_view type_tag_name(TypeTag tag) {
    switch (tag) {
        case TypeTag::String: return "string";
        case TypeTag::Int64: return "int64";
        case TypeTag::Float64: return "float64";
        case TypeTag::Bool: return "bool";
        case TypeTag::Binary: return "binary";
        case TypeTag::Array: return "array";
        case TypeTag::HttpRequest: return "httpRequest";
        case TypeTag::HttpResponse: return "httpResponse";
    }
    return "?";
}

std::string DataType::to_string() const {
    if (tag == TypeTag::Array) {
        return "array<" + elem->to_string() + ">";
    }
    return std::string(type_tag_name(tag));
}

std::optional<DataType> DataType::parse(std::string_view text) {
    if (text == "string") return DataType::string();
    if (text == "int64") return DataType::int64();
    if (text == "float64") return DataType::float64();
    if (text == "bool") return DataType::boolean();
    if (text == "binary") return DataType::binary();
    if (text == "httpRequest") return DataType::http_request();
    if (text == "httpResponse") return DataType::http_response();
    if (text.starts_with("array<") && text.ends_with(">")) {
        auto inner = DataType::parse(text.substr(6, text.size() - 7));
        if (!inner) return std::nullopt;
        return DataType::array(*inner);
    }
    return std::nullopt;
}

bool DataType::well_formed() const {
    if (tag != TypeTag::Array) return true;
    if (!elem) return false;
    // http entities never nest inside arrays, directly or transitively
    if (elem->tag == TypeTag::HttpRequest || elem->tag == TypeTag::HttpResponse) return false;
    return elem->well_formed();
}

bool header_name_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        char ca = a[i], cb = b[i];
        if (ca >= 'A' && ca <= 'Z') ca = static_cast<char>(ca - 'A' + 'a');
        if (cb >= 'A' && cb <= 'Z') cb = static_cast<char>(cb - 'A' + 'a');
        if (ca != cb) return false;
    }
    return true;
}

template <typename T>
static std::optional<std::string> find_header(const T& headers, std::string_view name) {
    for (const auto& [k, v] : headers) {
        if (header_name_equal(k, name)) return v;
    }
    return std::nullopt;
}

std::optional<std::string> HttpRequestData::header(std::string_view name) const {
    return find_header(headers, name);
}

void HttpRequestData::set_header(std::string name, std::string value) {
    for (auto& [k, v] : headers) {
        if (header_name_equal(k, name)) {
            v = std::move(value);
            return;
        }
    }
    headers.emplace_back(std::move(name), std::move(value));
}

std::optional<std::string> HttpResponseData::header(std::string_view name) const {
    return find_header(headers, name);
}

void HttpResponseData::set_header(std::string name, std::string value) {
    for (auto& [k, v] : headers) {
        if (header_name_equal(k, name)) {
            v = std::move(value);
            return;
        }
    }
    headers.emplace_back(std::move(name), std::move(value));
}

std::optional<TypeTag> Value::tag() const {
    switch (v.index()) {
        case 0: return std::nullopt;
        case 1: return TypeTag::String;
        case 2: return TypeTag::Int64;
        case 3: return TypeTag::Float64;
        case 4: return TypeTag::Bool;
        case 5: return TypeTag::Binary;
        case 6: return TypeTag::Array;
        case 7: return TypeTag::HttpRequest;
        case 8: return TypeTag::HttpResponse;
    }
    return std::nullopt;
}

bool Value::operator==(const Value& other) const {
    if (v.index() != other.v.index()) return false;
    if (is<double>()) {
        return std::bit_cast<uint64_t>(as_float64()) ==
               std::bit_cast<uint64_t>(other.as_float64());
    }
    return v == other.v;
}

static void append_escaped(std::string& out, std::string_view s) {
    out.push_back('"');
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
}

std::string Value::repr() const {
    std::string out;
    switch (v.index()) {
        case 0: return "null";
        case 1: append_escaped(out, as_string()); return out;
        case 2: return std::to_string(as_int64());
        case 3: {
            std::array<char, 32> buf{};
            auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), as_float64());
            (void)ec;
            return std::string(buf.data(), p);
        }
        case 4: return as_bool() ? "true" : "false";
        case 5: return "binary[" + std::to_string(as_binary().size()) + "]";
        case 6: {
            out = "[";
            const auto& list = as_array();
            for (size_t i = 0; i < list.size(); ++i) {
                if (i) out += ", ";
                out += list[i].repr();
            }
            out += "]";
            return out;
        }
        case 7: {
            const auto& r = as_request();
            return r.method + " " + r.uri + " body[" + std::to_string(r.body.size()) + "]";
        }
        case 8: {
            const auto& r = as_response();
            return "HTTP " + std::to_string(r.status) + " body[" + std::to_string(r.body.size()) +
                   "]";
        }
    }
    return "?";
}

}  // namespace rowserve
