#pragma once

#include <cstddef>
#include <span>

#include "rowserve/schema.hpp"
#include "rowserve/value.hpp"

namespace rowserve {

/// Decode failure. Framing = truncated/oversized/trailing input, Type = tag or
/// payload contradicts the declared schema.
class CodecError : public Error {
public:
    enum class Kind { Framing, Type };

    CodecError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
    Kind kind;
};

// little-endian primitives shared by the row codec and the frame protocol
void put_u8(Bytes& out, uint8_t v);
void put_u32(Bytes& out, uint32_t v);
void put_u64(Bytes& out, uint64_t v);
void put_i64(Bytes& out, int64_t v);
void put_f64(Bytes& out, double v);
void put_blob(Bytes& out, std::span<const uint8_t> data);  // u32 length prefix
void put_str(Bytes& out, std::string_view s);              // u32 length prefix

/// Cursor over an immutable byte span; every read throws CodecError(Framing)
/// on underflow.
class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    int64_t i64();
    double f64();
    Bytes blob();        // u32 length prefix
    std::string str();   // u32 length prefix

    size_t remaining() const { return data_.size() - pos_; }
    bool exhausted() const { return pos_ == data_.size(); }
    size_t position() const { return pos_; }

private:
    std::span<const uint8_t> need(size_t n);

    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

// Canonical value encoding: 1-byte presence flag, then for non-null values a
// 1-byte type tag and the tag-specific payload. Deterministic: equal values
// produce equal bytes. Full layout in docs/wire-format.md.
void encode_value(Bytes& out, const Value& value);
Value decode_value(ByteReader& in, const DataType& type);

/// u32 arity followed by each value.
Bytes encode_row(const Row& row);

/// Requires the schema used at encode time; rejects trailing bytes.
Row decode_row(std::span<const uint8_t> data, const Schema& schema);

/// Continues decoding rows from a shared reader (frame payloads).
Row decode_row(ByteReader& in, const Schema& schema);

/// Canonical key bytes for hashing/grouping: the concatenated value encodings
/// of the key columns, in the given order.
Bytes key_bytes(const Row& row, std::span<const size_t> key_indices);

}  // namespace rowserve
