#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "rowserve/schema.hpp"
#include "rowserve/value.hpp"

namespace rowserve {

enum class ArithOp { Add, Sub, Mul, Div };
enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

// lower/length/body work on strings and requests; echo/respond/status build and
// inspect response values so a pipeline can terminate in a reply column.
enum class FuncName { Lower, Length, Body, Echo, Respond, Status };

std::string_view arith_op_name(ArithOp op);
std::string_view compare_op_name(CompareOp op);
std::string_view func_name(FuncName f);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct ColumnRef {
    std::string name;
};

struct Literal {
    Value value;
    DataType type;
};

struct Arith {
    ArithOp op;
    ExprPtr lhs, rhs;
};

struct Compare {
    CompareOp op;
    ExprPtr lhs, rhs;
};

struct Concat {
    std::vector<ExprPtr> parts;
};

struct Func {
    FuncName name;
    ExprPtr arg;
};

/// Expression over one row. Nulls propagate through every operator; integer or
/// float division by zero yields null rather than trapping.
struct Expr {
    std::variant<ColumnRef, Literal, Arith, Compare, Concat, Func> node;

    /// Result type against the input schema; SchemaError on any type misuse.
    DataType infer_type(const Schema& schema) const;

    /// Strict evaluation. Assumes infer_type succeeded for this schema.
    Value eval(const Row& row, const Schema& schema) const;
};

ExprPtr col(std::string name);
ExprPtr lit(Value v, DataType type);
ExprPtr lit_string(std::string s);
ExprPtr lit_int(int64_t v);
ExprPtr lit_float(double v);
ExprPtr lit_bool(bool v);
ExprPtr arith(ArithOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr compare(CompareOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr concat(std::vector<ExprPtr> parts);
ExprPtr func(FuncName name, ExprPtr arg);

/// Deterministic text form of a scalar (string, int64, float64, bool); used by
/// Concat, respond() and URI parameter substitution. Throws on other kinds.
std::string stringify_scalar(const Value& v);

bool is_scalar_type(const DataType& t);

}  // namespace rowserve
