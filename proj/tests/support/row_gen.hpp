#pragma once

// Seeded random schema/row generator shared by the unit and acceptance
// property suites.

#include <random>
#include <string>

#include "rowserve/schema.hpp"
#include "rowserve/value.hpp"

namespace rowserve::testing {

class RowGen {
public:
    explicit RowGen(uint64_t seed) : rng_(seed) {}

    DataType random_type(int depth = 0) {
        // arrays nest up to depth 2; http types only at top level per invariant
        int hi = depth == 0 ? 7 : (depth < 2 ? 5 : 4);
        switch (pick(0, hi)) {
            case 0: return DataType::string();
            case 1: return DataType::int64();
            case 2: return DataType::float64();
            case 3: return DataType::boolean();
            case 4: return DataType::binary();
            case 5: return DataType::array(random_type(depth + 1));
            case 6: return DataType::http_request();
            default: return DataType::http_response();
        }
    }

    Schema random_schema(int max_fields = 6) {
        int n = pick(1, max_fields);
        std::vector<Field> fields;
        for (int i = 0; i < n; ++i) {
            fields.push_back({"c" + std::to_string(i), random_type()});
        }
        return Schema(std::move(fields));
    }

    Value random_value(const DataType& type, bool allow_null = true) {
        if (allow_null && pick(0, 9) == 0) return Value::null();
        switch (type.tag) {
            case TypeTag::String: return Value::of(random_string());
            case TypeTag::Int64: return Value::of(static_cast<int64_t>(rng_()));
            case TypeTag::Float64: return Value::of(random_double());
            case TypeTag::Bool: return Value::of(pick(0, 1) == 1);
            case TypeTag::Binary: return Value::of(random_bytes());
            case TypeTag::Array: {
                ValueList list;
                int n = pick(0, 4);
                for (int i = 0; i < n; ++i) list.push_back(random_value(*type.elem));
                return Value::of(std::move(list));
            }
            case TypeTag::HttpRequest: {
                HttpRequestData r;
                r.method = pick(0, 1) ? "GET" : "POST";
                r.uri = "/" + random_string();
                int h = pick(0, 3);
                for (int i = 0; i < h; ++i) {
                    r.headers.emplace_back("X-H" + std::to_string(i), random_string());
                }
                r.body = random_bytes();
                return Value::of(std::move(r));
            }
            case TypeTag::HttpResponse: {
                HttpResponseData r;
                r.status = pick(100, 599);
                r.reason = random_string();
                int h = pick(0, 3);
                for (int i = 0; i < h; ++i) {
                    r.headers.emplace_back("X-H" + std::to_string(i), random_string());
                }
                r.body = random_bytes();
                return Value::of(std::move(r));
            }
        }
        return Value::null();
    }

    Row random_row(const Schema& schema) {
        Row row;
        for (const auto& f : schema.fields()) row.values.push_back(random_value(f.type));
        return row;
    }

    int pick(int lo, int hi) {  // inclusive
        return lo + static_cast<int>(rng_() % static_cast<uint64_t>(hi - lo + 1));
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::string random_string() {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789 _-";
        int n = pick(0, 12);
        std::string s;
        for (int i = 0; i < n; ++i) {
            s.push_back(alphabet[static_cast<size_t>(pick(0, sizeof(alphabet) - 2))]);
        }
        return s;
    }

    Bytes random_bytes() {
        int n = pick(0, 16);
        Bytes b;
        for (int i = 0; i < n; ++i) b.push_back(static_cast<uint8_t>(rng_() & 0xff));
        return b;
    }

    double random_double() {
        switch (pick(0, 9)) {
            case 0: return 0.0;
            case 1: return -0.0;
            case 2: return std::numeric_limits<double>::quiet_NaN();
            case 3: return std::numeric_limits<double>::infinity();
            default: {
                std::uniform_real_distribution<double> dist(-1e6, 1e6);
                return dist(rng_);
            }
        }
    }

    std::mt19937_64 rng_;
};

}  // namespace rowserve::testing
