#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rowserve/expr.hpp"
#include "rowserve/http_client.hpp"
#include "rowserve/lime.hpp"
#include "rowserve/schema.hpp"

namespace rowserve {

enum class LinkFn { Identity, Sigmoid };
enum class JoinKind { Inner, Left };
enum class AggFn { Count, Sum, Avg, Min, Max };

std::string_view agg_fn_name(AggFn fn);

struct ProjectStage {
    std::vector<std::string> columns;
};

struct WithColumnStage {
    std::string name;
    ExprPtr expr;
};

struct FilterStage {
    ExprPtr predicate;
};

/// Maps strings to dictionary indices; unseen strings take the reserved index
/// dictionary.size() so serving never crashes on novel input.
struct StringIndexStage {
    std::string in_col;
    std::string out_col;
    std::unordered_map<std::string, int64_t> dictionary;

    int64_t unknown_index() const { return static_cast<int64_t>(dictionary.size()); }
};

struct OneHotStage {
    std::string in_col;
    std::string out_col;
    int64_t cardinality = 0;
};

struct LinearScoreStage {
    std::vector<double> weights;
    double intercept = 0;
    std::vector<std::string> in_cols;  // float64 or array<float64> columns
    std::string out_col;
    LinkFn link = LinkFn::Identity;
};

/// Join against a table replicated on every worker; the right schema is
/// declared in the stage so schema propagation needs no catalog.
struct BroadcastJoinStage {
    std::string table_id;
    std::string left_key;
    std::string right_key;
    JoinKind kind = JoinKind::Inner;
    Schema right_schema;
};

struct AggSpec {
    AggFn fn = AggFn::Count;
    std::string col;
    std::string out_col;
};

struct AggregateStage {
    std::vector<std::string> key_cols;
    std::vector<AggSpec> aggs;
};

struct RepartitionStage {
    std::string key_col;
    uint32_t partitions = 1;
};

struct HttpCallStage {
    ClientConfig client;
    RequestTemplate tmpl;
    std::string out_col;

    std::string error_col() const { return out_col + "_error"; }
};

struct LimeExplainStage {
    lime::LimeConfig config;
    lime::SegmentationSpec segmentation;
    std::string in_col;  // array<float64> (tabular) or binary (raw RGB per grid dims)
    std::string target_pipeline_id;
    std::string out_col;
};

using StageSpec = std::variant<ProjectStage, WithColumnStage, FilterStage, StringIndexStage,
                               OneHotStage, LinearScoreStage, BroadcastJoinStage, AggregateStage,
                               RepartitionStage, HttpCallStage, LimeExplainStage>;

std::string_view stage_kind_name(const StageSpec& stage);

enum class StageClass { Narrow, Wide };

/// Narrow stages run per row/partition with no data movement; Aggregate and
/// Repartition require a shuffle.
StageClass classify_stage(const StageSpec& stage);

/// z = dot(weights, features) + intercept, through the link.
double score_linear(std::span<const double> weights, double intercept,
                    std::span<const double> features, LinkFn link);

}  // namespace rowserve
