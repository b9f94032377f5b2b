#pragma once

#include <string>
#include <vector>

#include "rowserve/stage.hpp"

namespace rowserve {

/// Which semantics Aggregate uses. Batch collapses each group to one row;
/// serving joins the group aggregates back onto every input row so each request
/// keeps its routing identity and receives exactly one answer.
enum class ExecMode { Batch, Serving };

struct PipelineSpec {
    std::string id;
    Schema input_schema;
    std::vector<StageSpec> stages;

    bool all_narrow() const;
    /// Indices of wide stages, in order.
    std::vector<size_t> wide_stage_indices() const;
};

/// Parses and validates the documented JSON pipeline format (version v1).
/// Rejects unknown stage kinds and malformed parameters with diagnostics that
/// name the stage index.
PipelineSpec parse_pipeline(const std::string& text);

/// Inverse of parse_pipeline; parse(to_json(spec)) reproduces the spec.
std::string pipeline_to_json(const PipelineSpec& spec);

/// Schema after stage `upto` (exclusive); upto = stages.size() for the output
/// schema. Fails fast with a SchemaError naming the stage index and column.
Schema propagate_schema(const PipelineSpec& spec, ExecMode mode, size_t upto);

inline Schema propagate_schema(const PipelineSpec& spec, ExecMode mode = ExecMode::Batch) {
    return propagate_schema(spec, mode, spec.stages.size());
}

/// Output schema of a single stage given its input schema.
Schema stage_output_schema(const StageSpec& stage, const Schema& input, ExecMode mode,
                           int stage_index);

/// Full structural validation: non-empty input schema, schema propagation end
/// to end, at most one Aggregate.
void validate_pipeline(const PipelineSpec& spec);

}  // namespace rowserve
