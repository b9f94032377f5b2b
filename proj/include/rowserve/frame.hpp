#pragma once

#include <string>
#include <variant>
#include <vector>

#include "rowserve/codec.hpp"
#include "rowserve/registry.hpp"

namespace rowserve {

// Internal wire protocol shared by the shuffle and routing services. Every
// frame travels as a u32le payload length followed by the payload bytes; the
// payload starts with a 1-byte kind. Layout documented in docs/wire-format.md.
enum class FrameKind : uint8_t {
    Shuffle = 1,
    Response = 2,
    Ack = 3,
    InstallPipeline = 4,
    InstallTable = 5,
    ServeStart = 6,
    ServeStop = 7,
    Collect = 8,
    Drain = 9,
};

/// How a shuffle frame's rows are consumed at the receiver.
enum class ShuffleMode : uint8_t {
    Serving = 0,   // independent continuation; replies route home by id
    Collect = 1,   // batch job; final rows return to the origin worker
    Exchange = 2,  // raw collective exchange (shuffle_exchange primitive)
};

struct ShuffleFrame {
    std::string pipeline_id;
    uint32_t stage_index = 0;  // the wide stage these rows feed
    uint32_t origin_worker = 0;
    std::string origin_address;  // internal address; collect results return here
    uint64_t batch_id = 0;
    uint32_t target_partition = 0;
    uint32_t partition_count = 0;
    ShuffleMode mode = ShuffleMode::Serving;
    std::vector<Bytes> rows;  // row_codec encoded, schema = stage input schema
};

struct ResponseFrame {
    RoutingId id;
    Bytes response;  // encoded httpResponse value
};

struct AckFrame {
    enum Code : uint8_t { Ok = 0, Duplicate = 1, Unknown = 2, Error = 3 };
    uint8_t code = Ok;
    std::string message;
    uint64_t checksum = 0;  // table installs echo the checksum
};

struct InstallPipelineFrame {
    std::string pipeline_json;
};

struct InstallTableFrame {
    std::string table_id;
    std::string schema_csv_header;  // "name:type,..." header line
    std::vector<Bytes> rows;
    uint64_t checksum = 0;
};

struct WorkerAddress {
    uint32_t worker_id = 0;
    std::string public_address;
    std::string internal_address;
};

struct ServeStartFrame {
    std::string pipeline_id;
    std::string config_json;
    std::vector<WorkerAddress> topology;  // sorted by worker_id
};

struct ServeStopFrame {
    std::string pipeline_id;
};

struct CollectFrame {
    std::string pipeline_id;
    uint64_t batch_id = 0;
    uint32_t from_partition = 0;
    std::vector<Bytes> rows;  // final output schema
};

struct DrainFrame {};

using Frame = std::variant<ShuffleFrame, ResponseFrame, AckFrame, InstallPipelineFrame,
                           InstallTableFrame, ServeStartFrame, ServeStopFrame, CollectFrame,
                           DrainFrame>;

FrameKind frame_kind(const Frame& frame);

/// Payload bytes (without the length prefix).
Bytes encode_frame(const Frame& frame);
Frame decode_frame(std::span<const uint8_t> payload);

}  // namespace rowserve
