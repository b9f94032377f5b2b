#pragma once

#include <bit>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace rowserve {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration or CLI input; maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed document (pipeline JSON, CSV table, fixture).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Network / peer failure; maps to exit code 3.
class NetError : public Error {
public:
    using Error::Error;
};

using Bytes = std::vector<uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string_view_copy(const Bytes& b) {
    return std::string(b.begin(), b.end());
}

// Wire tags; values are part of the row encoding contract (docs/wire-format.md).
enum class TypeTag : uint8_t {
    String = 1,
    Int64 = 2,
    Float64 = 3,
    Bool = 4,
    Binary = 5,
    Array = 6,
    HttpRequest = 7,
    HttpResponse = 8,
};

std::string_view type_tag_name(TypeTag tag);

/// Column type. Arrays carry an element type; http types never nest inside arrays.
struct DataType {
    TypeTag tag = TypeTag::String;
    std::shared_ptr<const DataType> elem;  // set iff tag == Array

    static DataType string() { return {TypeTag::String, nullptr}; }
    static DataType int64() { return {TypeTag::Int64, nullptr}; }
    static DataType float64() { return {TypeTag::Float64, nullptr}; }
    static DataType boolean() { return {TypeTag::Bool, nullptr}; }
    static DataType binary() { return {TypeTag::Binary, nullptr}; }
    static DataType http_request() { return {TypeTag::HttpRequest, nullptr}; }
    static DataType http_response() { return {TypeTag::HttpResponse, nullptr}; }
    static DataType array(DataType element) {
        return {TypeTag::Array, std::make_shared<const DataType>(std::move(element))};
    }

    bool is_array() const { return tag == TypeTag::Array; }

    bool operator==(const DataType& other) const {
        if (tag != other.tag) return false;
        if (tag != TypeTag::Array) return true;
        return *elem == *other.elem;
    }
    bool operator!=(const DataType& other) const { return !(*this == other); }

    /// "int64", "array<string>", ...
    std::string to_string() const;
    static std::optional<DataType> parse(std::string_view text);

    /// False when an http type appears (transitively) inside an array.
    bool well_formed() const;
};

/// case-insensitive ASCII compare for header names
bool header_name_equal(std::string_view a, std::string_view b);

struct HttpRequestData {
    std::string method;  // uppercase token
    std::string uri;
    std::vector<std::pair<std::string, std::string>> headers;
    Bytes body;

    std::optional<std::string> header(std::string_view name) const;
    void set_header(std::string name, std::string value);

    bool operator==(const HttpRequestData& other) const {
        return method == other.method && uri == other.uri && headers == other.headers &&
               body == other.body;
    }
};

struct HttpResponseData {
    int status = 200;
    std::string reason;
    std::vector<std::pair<std::string, std::string>> headers;
    Bytes body;

    std::optional<std::string> header(std::string_view name) const;
    void set_header(std::string name, std::string value);

    bool operator==(const HttpResponseData& other) const {
        return status == other.status && reason == other.reason && headers == other.headers &&
               body == other.body;
    }
};

struct Value;
using ValueList = std::vector<Value>;

/// One cell. monostate means null. Declared types live in the Schema; the variant
/// alternative is the runtime tag.
struct Value {
    std::variant<std::monostate, std::string, int64_t, double, bool, Bytes, ValueList,
                 HttpRequestData, HttpResponseData>
        v;

    Value() = default;

    static Value null() { return Value{}; }
    static Value of(std::string s) { return Value{std::move(s)}; }
    static Value of(const char* s) { return Value{std::string(s)}; }
    static Value of(int64_t i) { return Value{i}; }
    static Value of(int i) { return Value{static_cast<int64_t>(i)}; }
    static Value of(double d) { return Value{d}; }
    static Value of(bool b) { return Value{b}; }
    static Value of(Bytes b) { return Value{std::move(b)}; }
    static Value of(ValueList l) { return Value{std::move(l)}; }
    static Value of(HttpRequestData r) { return Value{std::move(r)}; }
    static Value of(HttpResponseData r) { return Value{std::move(r)}; }

    template <typename T>
        requires(!std::same_as<std::remove_cvref_t<T>, Value>)
    explicit Value(T&& x) : v(std::forward<T>(x)) {}

    bool is_null() const { return std::holds_alternative<std::monostate>(v); }

    std::optional<TypeTag> tag() const;

    template <typename T>
    const T& as() const {
        return std::get<T>(v);
    }
    template <typename T>
    bool is() const {
        return std::holds_alternative<T>(v);
    }

    const std::string& as_string() const { return std::get<std::string>(v); }
    int64_t as_int64() const { return std::get<int64_t>(v); }
    double as_float64() const { return std::get<double>(v); }
    bool as_bool() const { return std::get<bool>(v); }
    const Bytes& as_binary() const { return std::get<Bytes>(v); }
    const ValueList& as_array() const { return std::get<ValueList>(v); }
    const HttpRequestData& as_request() const { return std::get<HttpRequestData>(v); }
    const HttpResponseData& as_response() const { return std::get<HttpResponseData>(v); }

    // Doubles compare bitwise so codec round trips and multiset diffs stay exact
    // (NaN payloads included).
    bool operator==(const Value& other) const;
    bool operator!=(const Value& other) const { return !(*this == other); }

    /// Debug rendering, e.g. for test failure messages.
    std::string repr() const;
};

struct Row {
    std::vector<Value> values;

    Row() = default;
    explicit Row(std::vector<Value> v) : values(std::move(v)) {}

    size_t size() const { return values.size(); }
    const Value& at(size_t i) const { return values.at(i); }

    bool operator==(const Row& other) const { return values == other.values; }
    bool operator!=(const Row& other) const { return !(*this == other); }
};

}  // namespace rowserve
