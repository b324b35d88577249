// value.hpp - dynamic value model: null/bool/int/float/str plus shared list
// and map cells.  Lists and maps have reference semantics (assignment aliases
// the cell); deep_copy with a memo table reproduces an isomorphic graph.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pan/errors.hpp"

namespace pan {

class Value;

struct ListCell {
    std::vector<Value> items;
};

struct MapCell {
    std::map<std::string, Value> entries;  // Str keys only; std::map keeps key order stable
};

// Reference to a program function by name (first-class enough for score
// evaluators; calls resolve against the loaded program).
struct FnRef {
    std::string name;
    bool operator==(const FnRef& o) const { return name == o.name; }
};

using ListPtr = std::shared_ptr<ListCell>;
using MapPtr = std::shared_ptr<MapCell>;

class Value {
public:
    using Repr = std::variant<std::monostate, bool, std::int64_t, double, std::string, ListPtr, MapPtr, FnRef>;

    Value() : repr_(std::monostate{}) {}
    Value(bool b) : repr_(b) {}
    Value(std::int64_t i) : repr_(i) {}
    Value(int i) : repr_(static_cast<std::int64_t>(i)) {}
    Value(double d) : repr_(d) {}
    Value(const char* s) : repr_(std::string(s)) {}
    Value(std::string s) : repr_(std::move(s)) {}
    Value(ListPtr l) : repr_(std::move(l)) {}
    Value(MapPtr m) : repr_(std::move(m)) {}
    Value(FnRef f) : repr_(std::move(f)) {}

    static Value null() { return Value(); }
    static Value list(std::vector<Value> items = {}) {
        return Value(std::make_shared<ListCell>(ListCell{std::move(items)}));
    }
    static Value map(std::map<std::string, Value> entries = {}) {
        return Value(std::make_shared<MapCell>(MapCell{std::move(entries)}));
    }

    bool is_null() const { return std::holds_alternative<std::monostate>(repr_); }
    bool is_bool() const { return std::holds_alternative<bool>(repr_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(repr_); }
    bool is_float() const { return std::holds_alternative<double>(repr_); }
    bool is_number() const { return is_int() || is_float(); }
    bool is_str() const { return std::holds_alternative<std::string>(repr_); }
    bool is_list() const { return std::holds_alternative<ListPtr>(repr_); }
    bool is_map() const { return std::holds_alternative<MapPtr>(repr_); }
    bool is_fn() const { return std::holds_alternative<FnRef>(repr_); }

    bool as_bool() const { return std::get<bool>(repr_); }
    std::int64_t as_int() const { return std::get<std::int64_t>(repr_); }
    double as_float() const { return std::get<double>(repr_); }
    double as_number() const { return is_int() ? static_cast<double>(as_int()) : as_float(); }
    const std::string& as_str() const { return std::get<std::string>(repr_); }
    const ListPtr& as_list() const { return std::get<ListPtr>(repr_); }
    const MapPtr& as_map() const { return std::get<MapPtr>(repr_); }
    const FnRef& as_fn() const { return std::get<FnRef>(repr_); }

    const char* type_name() const {
        switch (repr_.index()) {
            case 0: return "null";
            case 1: return "bool";
            case 2: return "int";
            case 3: return "float";
            case 4: return "str";
            case 5: return "list";
            case 6: return "map";
            default: return "fn";
        }
    }

    // Structural equality; numbers compare across int/float.
    bool equals(const Value& o) const {
        if (is_number() && o.is_number()) {
            if (is_int() && o.is_int()) return as_int() == o.as_int();
            return as_number() == o.as_number();
        }
        if (repr_.index() != o.repr_.index()) return false;
        if (is_null()) return true;
        if (is_bool()) return as_bool() == o.as_bool();
        if (is_str()) return as_str() == o.as_str();
        if (is_fn()) return as_fn() == o.as_fn();
        if (is_list()) {
            const auto& a = as_list()->items;
            const auto& b = o.as_list()->items;
            if (a.size() != b.size()) return false;
            for (size_t i = 0; i < a.size(); ++i)
                if (!a[i].equals(b[i])) return false;
            return true;
        }
        const auto& a = as_map()->entries;
        const auto& b = o.as_map()->entries;
        if (a.size() != b.size()) return false;
        for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
            if (ia->first != ib->first || !ia->second.equals(ib->second)) return false;
        }
        return true;
    }

    bool operator==(const Value& o) const { return equals(o); }

    // Ordering is defined for numbers (cross int/float) and strings only.
    // Returns <0, 0, >0.  Throws RuntimeError(TypeError) otherwise.
    int compare(const Value& o) const {
        if (is_number() && o.is_number()) {
            if (is_int() && o.is_int()) {
                auto a = as_int(), b = o.as_int();
                return a < b ? -1 : a > b ? 1 : 0;
            }
            double a = as_number(), b = o.as_number();
            return a < b ? -1 : a > b ? 1 : 0;
        }
        if (is_str() && o.is_str()) return as_str().compare(o.as_str());
        throw RuntimeError("TypeError",
                           std::string("values of type ") + type_name() + " and " + o.type_name() +
                               " are not ordered");
    }

    // Deep copy preserving internal aliasing: cells already present in `memo`
    // map to their recorded copies (pre-seeding memo with identity mappings
    // exempts chosen cells from copying).
    Value deep_copy(std::unordered_map<const void*, Value>& memo) const {
        if (is_list()) {
            const void* key = as_list().get();
            auto it = memo.find(key);
            if (it != memo.end()) return it->second;
            auto cell = std::make_shared<ListCell>();
            memo.emplace(key, Value(cell));
            cell->items.reserve(as_list()->items.size());
            for (const auto& v : as_list()->items) cell->items.push_back(v.deep_copy(memo));
            return Value(cell);
        }
        if (is_map()) {
            const void* key = as_map().get();
            auto it = memo.find(key);
            if (it != memo.end()) return it->second;
            auto cell = std::make_shared<MapCell>();
            memo.emplace(key, Value(cell));
            for (const auto& [k, v] : as_map()->entries) cell->entries.emplace(k, v.deep_copy(memo));
            return Value(cell);
        }
        return *this;  // scalars are immutable
    }

    Value deep_copy() const {
        std::unordered_map<const void*, Value> memo;
        return deep_copy(memo);
    }

    // Canonical single-line rendering; doubles as a deterministic map key for
    // labels/identities.  Distinct from str() coercion (strings get quoted).
    std::string repr() const {
        std::ostringstream os;
        write_repr(os);
        return os.str();
    }

    // Human string conversion: like repr() but bare for strings.
    std::string to_display() const {
        if (is_str()) return as_str();
        return repr();
    }

    const Repr& raw() const { return repr_; }

private:
    void write_repr(std::ostringstream& os) const {
        if (is_null()) { os << "null"; return; }
        if (is_bool()) { os << (as_bool() ? "true" : "false"); return; }
        if (is_int()) { os << as_int(); return; }
        if (is_float()) {
            double d = as_float();
            if (d == static_cast<std::int64_t>(d) && d > -1e15 && d < 1e15) {
                os << static_cast<std::int64_t>(d) << ".0";
            } else {
                char buf[32];
                snprintf(buf, sizeof buf, "%.17g", d);
                os << buf;
            }
            return;
        }
        if (is_str()) { write_quoted(os, as_str()); return; }
        if (is_fn()) { os << "<fn " << as_fn().name << ">"; return; }
        if (is_list()) {
            os << "[";
            bool first = true;
            for (const auto& v : as_list()->items) {
                if (!first) os << ", ";
                first = false;
                v.write_repr(os);
            }
            os << "]";
            return;
        }
        os << "{";
        bool first = true;
        for (const auto& [k, v] : as_map()->entries) {
            if (!first) os << ", ";
            first = false;
            write_quoted(os, k);
            os << ": ";
            v.write_repr(os);
        }
        os << "}";
    }

    static void write_quoted(std::ostringstream& os, const std::string& s) {
        os << '"';
        for (char c : s) {
            switch (c) {
                case '"': os << "\\\""; break;
                case '\\': os << "\\\\"; break;
                case '\n': os << "\\n"; break;
                case '\t': os << "\\t"; break;
                case '\r': os << "\\r"; break;
                default: os << c;
            }
        }
        os << '"';
    }

    Repr repr_;
};

// Truthiness is strict: only Bool converts to a condition.
inline bool require_bool(const Value& v, const char* what) {
    if (!v.is_bool()) {
        throw RuntimeError("TypeError", std::string(what) + " must be a bool, got " + v.type_name());
    }
    return v.as_bool();
}

}  // namespace pan
