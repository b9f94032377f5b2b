#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rowserve/value.hpp"

namespace rowserve {

/// Schema / pipeline validation failure. stage_index is set when the error is
/// attributable to a pipeline stage.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg, std::optional<int> stage = std::nullopt)
        : Error(stage ? "stage " + std::to_string(*stage) + ": " + msg : msg),
          stage_index(stage) {}

    std::optional<int> stage_index;
};

struct Field {
    std::string name;
    DataType type;

    bool operator==(const Field& other) const {
        return name == other.name && type == other.type;
    }
};

/// Ordered, uniquely named columns. Immutable after construction.
class Schema {
public:
    Schema() = default;
    explicit Schema(std::vector<Field> fields);

    const std::vector<Field>& fields() const { return fields_; }
    size_t size() const { return fields_.size(); }
    bool empty() const { return fields_.empty(); }
    const Field& at(size_t i) const { return fields_.at(i); }

    std::optional<size_t> index_of(std::string_view name) const;

    /// index_of or SchemaError naming the column.
    size_t require(std::string_view name, std::optional<int> stage = std::nullopt) const;

    bool operator==(const Schema& other) const { return fields_ == other.fields_; }
    bool operator!=(const Schema& other) const { return !(*this == other); }

    std::string to_string() const;

private:
    std::vector<Field> fields_;
    std::unordered_map<std::string, size_t> index_;
};

struct Violation {
    std::string field;  // offending field name, or "" for row-level problems
    std::string message;
};

struct ValidationResult {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

/// Deep conformance check of one value against a declared type; nullopt when it
/// conforms. Nulls always conform (nullability is a stage contract, not a type).
std::optional<std::string> value_conforms(const Value& value, const DataType& type);

/// Arity plus per-field type check. Violations name the field and both types.
ValidationResult validate_row(const Schema& schema, const Row& row);

}  // namespace rowserve
