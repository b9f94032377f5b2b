#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rowserve/pipeline.hpp"
#include "rowserve/table.hpp"

namespace rowserve {

/// Failure while executing a stage (missing broadcast table, declared/actual
/// table mismatch, dimension mismatch). Aborts the batch that hit it.
class StageRuntimeError : public Error {
public:
    explicit StageRuntimeError(const std::string& msg, int stage = -1)
        : Error(stage >= 0 ? "stage " + std::to_string(stage) + ": " + msg : msg) {}
};

/// Validated pipelines by id; LimeExplain resolves its target here.
class PipelineRegistry {
public:
    void install(PipelineSpec spec);
    std::shared_ptr<const PipelineSpec> find(const std::string& id) const;
    std::vector<std::string> ids() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const PipelineSpec>> specs_;
};

struct RunContext {
    TableCatalog tables;
    const PipelineRegistry* pipelines = nullptr;
    std::atomic<uint64_t>* blackbox_evaluations = nullptr;  // LIME cost accounting
};

/// Applies one narrow stage with reference semantics. Rows keep their input
/// order; Filter and inner-join misses drop rows, joins may fan out.
std::vector<Row> apply_narrow_stage(const StageSpec& stage, const Schema& input,
                                    std::vector<Row> rows, const RunContext& ctx,
                                    int stage_index);

/// Aggregate with reference semantics for either mode (batch collapses groups,
/// serving joins aggregates back onto every row). Group order follows first
/// key appearance.
std::vector<Row> apply_aggregate(const AggregateStage& stage, const Schema& input,
                                 const std::vector<Row>& rows, ExecMode mode);

/// Runs the consecutive narrow stages [from, to) and returns the surviving rows.
std::vector<Row> run_narrow_segment(const PipelineSpec& spec, size_t from, size_t to,
                                    std::vector<Row> rows, const RunContext& ctx, ExecMode mode);

/// Single-process reference execution; the oracle for cluster and serving
/// modes. Validates input rows against the input schema.
std::vector<Row> run_batch(const PipelineSpec& spec, std::vector<Row> rows,
                           const RunContext& ctx, ExecMode mode = ExecMode::Batch);

}  // namespace rowserve
