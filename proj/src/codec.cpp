#include "rowserve/codec.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace rowserve {

namespace {
constexpr size_t kMaxBlob = 64u << 20;  // refuse absurd length prefixes before allocating
}

void put_u8(Bytes& out, uint8_t v) {
    out.push_back(v);
}

void put_u32(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u64(Bytes& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

void put_i64(Bytes& out, int64_t v) {
    put_u64(out, static_cast<uint64_t>(v));
}

void put_f64(Bytes& out, double v) {
    put_u64(out, std::bit_cast<uint64_t>(v));
}

void put_blob(Bytes& out, std::span<const uint8_t> data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
}

void put_str(Bytes& out, std::string_view s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

std::span<const uint8_t> ByteReader::need(size_t n) {
    if (pos_ + n > data_.size()) {
        throw CodecError(CodecError::Kind::Framing,
                         "truncated input: need " + std::to_string(n) + " bytes at offset " +
                             std::to_string(pos_) + ", have " +
                             std::to_string(data_.size() - pos_));
    }
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

uint8_t ByteReader::u8() {
    return need(1)[0];
}

uint32_t ByteReader::u32() {
    auto b = need(4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t ByteReader::u64() {
    auto b = need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<size_t>(i)];
    return v;
}

int64_t ByteReader::i64() {
    return static_cast<int64_t>(u64());
}

double ByteReader::f64() {
    return std::bit_cast<double>(u64());
}

Bytes ByteReader::blob() {
    uint32_t n = u32();
    if (n > kMaxBlob) {
        throw CodecError(CodecError::Kind::Framing,
                         "length prefix " + std::to_string(n) + " exceeds limit");
    }
    auto b = need(n);
    return Bytes(b.begin(), b.end());
}

std::string ByteReader::str() {
    uint32_t n = u32();
    if (n > kMaxBlob) {
        throw CodecError(CodecError::Kind::Framing,
                         "length prefix " + std::to_string(n) + " exceeds limit");
    }
    auto b = need(n);
    return std::string(b.begin(), b.end());
}

static void encode_headers(Bytes& out,
                           const std::vector<std::pair<std::string, std::string>>& headers) {
    put_u32(out, static_cast<uint32_t>(headers.size()));
    for (const auto& [name, value] : headers) {
        put_str(out, name);
        put_str(out, value);
    }
}

static std::vector<std::pair<std::string, std::string>> decode_headers(ByteReader& in) {
    uint32_t n = in.u32();
    std::vector<std::pair<std::string, std::string>> headers;
    headers.reserve(std::min<uint32_t>(n, 1024));
    for (uint32_t i = 0; i < n; ++i) {
        auto name = in.str();
        auto value = in.str();
        headers.emplace_back(std::move(name), std::move(value));
    }
    return headers;
}

void encode_value(Bytes& out, const Value& value) {
    if (value.is_null()) {
        put_u8(out, 0);
        return;
    }
    put_u8(out, 1);
    TypeTag tag = *value.tag();
    put_u8(out, static_cast<uint8_t>(tag));
    switch (tag) {
        case TypeTag::String:
            put_str(out, value.as_string());
            break;
        case TypeTag::Int64:
            put_i64(out, value.as_int64());
            break;
        case TypeTag::Float64:
            put_f64(out, value.as_float64());
            break;
        case TypeTag::Bool:
            put_u8(out, value.as_bool() ? 1 : 0);
            break;
        case TypeTag::Binary:
            put_blob(out, value.as_binary());
            break;
        case TypeTag::Array: {
            const auto& list = value.as_array();
            put_u32(out, static_cast<uint32_t>(list.size()));
            for (const auto& elem : list) encode_value(out, elem);
            break;
        }
        case TypeTag::HttpRequest: {
            const auto& r = value.as_request();
            put_str(out, r.method);
            put_str(out, r.uri);
            encode_headers(out, r.headers);
            put_blob(out, r.body);
            break;
        }
        case TypeTag::HttpResponse: {
            const auto& r = value.as_response();
            put_u32(out, static_cast<uint32_t>(r.status));
            put_str(out, r.reason);
            encode_headers(out, r.headers);
            put_blob(out, r.body);
            break;
        }
    }
}

Value decode_value(ByteReader& in, const DataType& type) {
    uint8_t present = in.u8();
    if (present == 0) return Value::null();
    if (present != 1) {
        throw CodecError(CodecError::Kind::Framing,
                         "bad presence flag " + std::to_string(present));
    }
    uint8_t raw_tag = in.u8();
    if (raw_tag != static_cast<uint8_t>(type.tag)) {
        throw CodecError(CodecError::Kind::Type,
                         "tag mismatch: declared " + type.to_string() + ", encoded tag " +
                             std::to_string(raw_tag));
    }
    switch (type.tag) {
        case TypeTag::String:
            return Value::of(in.str());
        case TypeTag::Int64:
            return Value::of(in.i64());
        case TypeTag::Float64:
            return Value::of(in.f64());
        case TypeTag::Bool: {
            uint8_t b = in.u8();
            if (b > 1) {
                throw CodecError(CodecError::Kind::Type, "bool payload " + std::to_string(b));
            }
            return Value::of(b == 1);
        }
        case TypeTag::Binary:
            return Value::of(in.blob());
        case TypeTag::Array: {
            uint32_t n = in.u32();
            ValueList list;
            list.reserve(std::min<uint32_t>(n, 4096));
            for (uint32_t i = 0; i < n; ++i) list.push_back(decode_value(in, *type.elem));
            return Value::of(std::move(list));
        }
        case TypeTag::HttpRequest: {
            HttpRequestData r;
            r.method = in.str();
            r.uri = in.str();
            r.headers = decode_headers(in);
            r.body = in.blob();
            return Value::of(std::move(r));
        }
        case TypeTag::HttpResponse: {
            HttpResponseData r;
            uint32_t status = in.u32();
            if (status < 100 || status > 599) {
                throw CodecError(CodecError::Kind::Type,
                                 "httpResponse status " + std::to_string(status));
            }
            r.status = static_cast<int>(status);
            r.reason = in.str();
            r.headers = decode_headers(in);
            r.body = in.blob();
            return Value::of(std::move(r));
        }
    }
    throw CodecError(CodecError::Kind::Type, "unknown declared tag");
}

Bytes encode_row(const Row& row) {
    Bytes out;
    put_u32(out, static_cast<uint32_t>(row.size()));
    for (const auto& v : row.values) encode_value(out, v);
    return out;
}

Row decode_row(ByteReader& in, const Schema& schema) {
    uint32_t arity = in.u32();
    if (arity != schema.size()) {
        throw CodecError(CodecError::Kind::Type,
                         "row arity " + std::to_string(arity) + " does not match schema arity " +
                             std::to_string(schema.size()));
    }
    Row row;
    row.values.reserve(arity);
    for (uint32_t i = 0; i < arity; ++i) {
        row.values.push_back(decode_value(in, schema.at(i).type));
    }
    return row;
}

Row decode_row(std::span<const uint8_t> data, const Schema& schema) {
    ByteReader in(data);
    Row row = decode_row(in, schema);
    if (!in.exhausted()) {
        throw CodecError(CodecError::Kind::Framing,
                         std::to_string(in.remaining()) + " trailing bytes after row");
    }
    return row;
}

Bytes key_bytes(const Row& row, std::span<const size_t> key_indices) {
    Bytes out;
    for (size_t idx : key_indices) {
        encode_value(out, row.values.at(idx));
    }
    return out;
}

}  // namespace rowserve
