#include "rowserve/table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rowserve/codec.hpp"
#include "rowserve/expr.hpp"
#include "rowserve/hash.hpp"

namespace rowserve {

uint64_t BroadcastTable::checksum() const {
    Bytes buf;
    put_str(buf, table_id);
    put_u32(buf, static_cast<uint32_t>(schema.size()));
    for (const auto& f : schema.fields()) {
        put_str(buf, f.name);
        put_str(buf, f.type.to_string());
    }
    put_u32(buf, static_cast<uint32_t>(rows.size()));
    for (const auto& r : rows) {
        Bytes enc = encode_row(r);
        buf.insert(buf.end(), enc.begin(), enc.end());
    }
    return fnv1a64(buf);
}

namespace {

// RFC-4180-ish: quoted fields with "" escapes, no multi-line fields.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

Value parse_cell(const std::string& text, const DataType& type, const std::string& where) {
    if (text.empty()) return Value::null();
    switch (type.tag) {
        case TypeTag::String:
            return Value::of(text);
        case TypeTag::Int64: {
            int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || p != text.data() + text.size()) {
                throw ParseError(where + ": '" + text + "' is not an int64");
            }
            return Value::of(v);
        }
        case TypeTag::Float64: {
            try {
                size_t used = 0;
                double v = std::stod(text, &used);
                if (used != text.size()) throw std::invalid_argument(text);
                return Value::of(v);
            } catch (...) {
                throw ParseError(where + ": '" + text + "' is not a float64");
            }
        }
        case TypeTag::Bool:
            if (text == "true" || text == "1") return Value::of(true);
            if (text == "false" || text == "0") return Value::of(false);
            throw ParseError(where + ": '" + text + "' is not a bool");
        default:
            throw ParseError(where + ": CSV tables support scalar columns only, got " +
                                type.to_string());
    }
}

}  // namespace

BroadcastTable load_table_csv(const std::string& table_id, const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("table '" + table_id + "': empty CSV");
    }
    std::vector<Field> fields;
    for (auto& cell : split_csv_line(line)) {
        size_t colon = cell.rfind(':');
        std::string name = cell;
        DataType type = DataType::string();
        if (colon != std::string::npos) {
            auto maybe = DataType::parse(cell.substr(colon + 1));
            if (maybe) {
                type = *maybe;
                name = cell.substr(0, colon);
            }
        }
        fields.push_back({std::move(name), std::move(type)});
    }
    BroadcastTable table;
    table.table_id = table_id;
    table.schema = Schema(std::move(fields));

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        std::string where = "table '" + table_id + "' line " + std::to_string(line_no);
        if (cells.size() != table.schema.size()) {
            throw ParseError(where + ": " + std::to_string(cells.size()) + " cells, header has " +
                                std::to_string(table.schema.size()));
        }
        Row row;
        for (size_t i = 0; i < cells.size(); ++i) {
            row.values.push_back(parse_cell(cells[i], table.schema.at(i).type, where));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

BroadcastTable load_table_csv_file(const std::string& table_id, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open table CSV: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_table_csv(table_id, buf.str());
}

std::string table_to_csv(const BroadcastTable& table) {
    std::string out;
    for (size_t i = 0; i < table.schema.size(); ++i) {
        if (i) out += ",";
        out += table.schema.at(i).name + ":" + table.schema.at(i).type.to_string();
    }
    out += "\n";
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            const Value& v = row.values[i];
            if (v.is_null()) continue;
            std::string cell = stringify_scalar(v);
            if (cell.find_first_of(",\"\n") != std::string::npos) {
                std::string quoted = "\"";
                for (char c : cell) {
                    if (c == '"') quoted += "\"\"";
                    else quoted.push_back(c);
                }
                quoted += "\"";
                cell = std::move(quoted);
            }
            out += cell;
        }
        out += "\n";
    }
    return out;
}

}  // namespace rowserve
