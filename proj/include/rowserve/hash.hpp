#pragma once

#include <cstdint>
#include <span>

#include "rowserve/value.hpp"

namespace rowserve {

// FNV-1a, 64 bit. Fixed algorithm so every worker of the same build computes
// identical partition assignments.
inline uint64_t fnv1a64(std::span<const uint8_t> data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

/// Partition index in [0, num_partitions). key_bytes must be the canonical
/// encoding of the key value(s).
inline uint32_t hash_partition(std::span<const uint8_t> key_bytes, uint32_t num_partitions) {
    if (num_partitions == 0) {
        throw Error("hash_partition: num_partitions must be >= 1");
    }
    return static_cast<uint32_t>(fnv1a64(key_bytes) % num_partitions);
}

}  // namespace rowserve
