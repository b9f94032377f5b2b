#include "rowserve/frame.hpp"

namespace rowserve {

FrameKind frame_kind(const Frame& frame) {
    struct Visitor {
        FrameKind operator()(const ShuffleFrame&) { return FrameKind::Shuffle; }
        FrameKind operator()(const ResponseFrame&) { return FrameKind::Response; }
        FrameKind operator()(const AckFrame&) { return FrameKind::Ack; }
        FrameKind operator()(const InstallPipelineFrame&) { return FrameKind::InstallPipeline; }
        FrameKind operator()(const InstallTableFrame&) { return FrameKind::InstallTable; }
        FrameKind operator()(const ServeStartFrame&) { return FrameKind::ServeStart; }
        FrameKind operator()(const ServeStopFrame&) { return FrameKind::ServeStop; }
        FrameKind operator()(const CollectFrame&) { return FrameKind::Collect; }
        FrameKind operator()(const DrainFrame&) { return FrameKind::Drain; }
    };
    return std::visit(Visitor{}, frame);
}

namespace {

void put_rows(Bytes& out, const std::vector<Bytes>& rows) {
    put_u32(out, static_cast<uint32_t>(rows.size()));
    for (const auto& row : rows) put_blob(out, row);
}

std::vector<Bytes> read_rows(ByteReader& in) {
    uint32_t n = in.u32();
    std::vector<Bytes> rows;
    rows.reserve(std::min<uint32_t>(n, 65536));
    for (uint32_t i = 0; i < n; ++i) rows.push_back(in.blob());
    return rows;
}

}  // namespace

Bytes encode_frame(const Frame& frame) {
    Bytes out;
    put_u8(out, static_cast<uint8_t>(frame_kind(frame)));
    if (const auto* f = std::get_if<ShuffleFrame>(&frame)) {
        put_str(out, f->pipeline_id);
        put_u32(out, f->stage_index);
        put_u32(out, f->origin_worker);
        put_str(out, f->origin_address);
        put_u64(out, f->batch_id);
        put_u32(out, f->target_partition);
        put_u32(out, f->partition_count);
        put_u8(out, static_cast<uint8_t>(f->mode));
        put_rows(out, f->rows);
    } else if (const auto* f = std::get_if<ResponseFrame>(&frame)) {
        put_u32(out, f->id.worker_id);
        put_u64(out, f->id.seq);
        put_blob(out, f->response);
    } else if (const auto* f = std::get_if<AckFrame>(&frame)) {
        put_u8(out, f->code);
        put_str(out, f->message);
        put_u64(out, f->checksum);
    } else if (const auto* f = std::get_if<InstallPipelineFrame>(&frame)) {
        put_str(out, f->pipeline_json);
    } else if (const auto* f = std::get_if<InstallTableFrame>(&frame)) {
        put_str(out, f->table_id);
        put_str(out, f->schema_csv_header);
        put_rows(out, f->rows);
        put_u64(out, f->checksum);
    } else if (const auto* f = std::get_if<ServeStartFrame>(&frame)) {
        put_str(out, f->pipeline_id);
        put_str(out, f->config_json);
        put_u32(out, static_cast<uint32_t>(f->topology.size()));
        for (const auto& w : f->topology) {
            put_u32(out, w.worker_id);
            put_str(out, w.public_address);
            put_str(out, w.internal_address);
        }
    } else if (const auto* f = std::get_if<ServeStopFrame>(&frame)) {
        put_str(out, f->pipeline_id);
    } else if (const auto* f = std::get_if<CollectFrame>(&frame)) {
        put_str(out, f->pipeline_id);
        put_u64(out, f->batch_id);
        put_u32(out, f->from_partition);
        put_rows(out, f->rows);
    }
    return out;
}

Frame decode_frame(std::span<const uint8_t> payload) {
    ByteReader in(payload);
    auto kind = static_cast<FrameKind>(in.u8());
    switch (kind) {
        case FrameKind::Shuffle: {
            ShuffleFrame f;
            f.pipeline_id = in.str();
            f.stage_index = in.u32();
            f.origin_worker = in.u32();
            f.origin_address = in.str();
            f.batch_id = in.u64();
            f.target_partition = in.u32();
            f.partition_count = in.u32();
            f.mode = static_cast<ShuffleMode>(in.u8());
            f.rows = read_rows(in);
            return f;
        }
        case FrameKind::Response: {
            ResponseFrame f;
            f.id.worker_id = in.u32();
            f.id.seq = in.u64();
            f.response = in.blob();
            return f;
        }
        case FrameKind::Ack: {
            AckFrame f;
            f.code = in.u8();
            f.message = in.str();
            f.checksum = in.u64();
            return f;
        }
        case FrameKind::InstallPipeline: {
            InstallPipelineFrame f;
            f.pipeline_json = in.str();
            return f;
        }
        case FrameKind::InstallTable: {
            InstallTableFrame f;
            f.table_id = in.str();
            f.schema_csv_header = in.str();
            f.rows = read_rows(in);
            f.checksum = in.u64();
            return f;
        }
        case FrameKind::ServeStart: {
            ServeStartFrame f;
            f.pipeline_id = in.str();
            f.config_json = in.str();
            uint32_t n = in.u32();
            for (uint32_t i = 0; i < n; ++i) {
                WorkerAddress w;
                w.worker_id = in.u32();
                w.public_address = in.str();
                w.internal_address = in.str();
                f.topology.push_back(std::move(w));
            }
            return f;
        }
        case FrameKind::ServeStop: {
            ServeStopFrame f;
            f.pipeline_id = in.str();
            return f;
        }
        case FrameKind::Collect: {
            CollectFrame f;
            f.pipeline_id = in.str();
            f.batch_id = in.u64();
            f.from_partition = in.u32();
            f.rows = read_rows(in);
            return f;
        }
        case FrameKind::Drain:
            return DrainFrame{};
    }
    throw CodecError(CodecError::Kind::Framing,
                     "unknown frame kind " + std::to_string(static_cast<int>(kind)));
}

}  // namespace rowserve
