// builtin_names.hpp - the builtin function vocabulary (shared by validate and eval)
#pragma once

#include <set>
#include <string>

namespace pan {

inline const std::set<std::string>& builtin_names() {
    static const std::set<std::string> names = {
        "len", "append", "push", "keys", "range", "str", "abs", "min", "max", "sorted",
    };
    return names;
}

inline bool is_builtin_name(const std::string& name) {
    return builtin_names().count(name) > 0;
}

}  // namespace pan
