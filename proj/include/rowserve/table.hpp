#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rowserve/schema.hpp"

namespace rowserve {

/// Small table replicated in full on every serving worker.
struct BroadcastTable {
    std::string table_id;
    Schema schema;
    std::vector<Row> rows;

    /// FNV-1a over the canonical encoding of schema and rows; compared across
    /// workers after distribution.
    uint64_t checksum() const;
};

/// Parses CSV with a header row. Header cells may carry a ":type" suffix
/// ("price:float64"); the default column type is string. Values parse per the
/// declared type; empty cells become null.
BroadcastTable load_table_csv(const std::string& table_id, const std::string& csv_text);

BroadcastTable load_table_csv_file(const std::string& table_id, const std::string& path);

std::string table_to_csv(const BroadcastTable& table);

using TableCatalog = std::map<std::string, std::shared_ptr<const BroadcastTable>>;

}  // namespace rowserve
