// json_io.hpp - Value <-> JSON conversion (nlohmann/json from vendor/)
#pragma once

#include <string>

#include <json.hpp>

#include "pan/errors.hpp"
#include "pan/value.hpp"

namespace pan {

using Json = nlohmann::json;

inline Value value_from_json(const Json& j) {
    if (j.is_null()) return Value::null();
    if (j.is_boolean()) return Value(j.get<bool>());
    if (j.is_number_integer() || j.is_number_unsigned())
        return Value(static_cast<std::int64_t>(j.get<std::int64_t>()));
    if (j.is_number_float()) return Value(j.get<double>());
    if (j.is_string()) return Value(j.get<std::string>());
    if (j.is_array()) {
        std::vector<Value> items;
        items.reserve(j.size());
        for (const auto& e : j) items.push_back(value_from_json(e));
        return Value::list(std::move(items));
    }
    if (j.is_object()) {
        std::map<std::string, Value> entries;
        for (auto it = j.begin(); it != j.end(); ++it) entries.emplace(it.key(), value_from_json(it.value()));
        return Value::map(std::move(entries));
    }
    throw PanError("JsonError", "unsupported JSON value");
}

inline Json value_to_json(const Value& v) {
    if (v.is_null()) return nullptr;
    if (v.is_bool()) return v.as_bool();
    if (v.is_int()) return v.as_int();
    if (v.is_float()) return v.as_float();
    if (v.is_str()) return v.as_str();
    if (v.is_fn()) return "<fn " + v.as_fn().name + ">";
    if (v.is_list()) {
        Json arr = Json::array();
        for (const auto& e : v.as_list()->items) arr.push_back(value_to_json(e));
        return arr;
    }
    Json obj = Json::object();
    for (const auto& [k, e] : v.as_map()->entries) obj[k] = value_to_json(e);
    return obj;
}

}  // namespace pan
