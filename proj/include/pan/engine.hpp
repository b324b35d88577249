// engine.hpp - the execution core: expression evaluation, the direct
// statement walker, and the block trampoline that advances a program state to
// its next branchpoint yield or terminal.
//
// Control flow out of a running segment uses three channels:
//   - RuntimeError: program-level failures; protect() can intercept them at
//     the guarded expression, otherwise they surface to the stepping layer.
//   - KilledSignal: kill_branch() aborting the current branch.
//   - ProtectFailureSignal: a protected expression caught its tag; the
//     stepping layer discards the attempt and replays the segment.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pan/cps.hpp"
#include "pan/frame.hpp"
#include "pan/session.hpp"
#include "pan/value.hpp"

namespace pan {

// Thrown by kill_branch; terminates the branch, not the program.
struct KilledSignal {
    Value payload;
};

// Thrown when a protected expression catches its declared tag.
struct ProtectFailureSignal {
    std::uint64_t site_key = 0;            // source offset of the protect expression
    std::string tag;
    std::optional<int> max_retries;        // protect's own retry budget, if given
    std::string underlying;                // message of the caught error
};

// Runtime continuation environment: immutable chain of name -> continuation.
struct ContVal;
using ContPtr = std::shared_ptr<const ContVal>;

struct RtEnv;
using EnvPtr = std::shared_ptr<const RtEnv>;
struct RtEnv {
    std::vector<std::pair<std::string, ContPtr>> binds;
    EnvPtr parent;
};

// A runtime continuation.  Continuations are frame-agnostic: the frame
// travels on the trampoline, which is what makes cloned states resumable.
struct ContVal {
    enum class K { Block, ReturnToCaller, RootTerminal };
    K k = K::RootTerminal;
    int fn = -1;
    int block = -1;
    EnvPtr env;     // Block
    int slot = -1;  // ReturnToCaller: caller temp slot receiving the value
    ContPtr rest;   // ReturnToCaller: continuation in the caller
};

inline ContPtr cont_block(int fn, int block, EnvPtr env) {
    auto c = std::make_shared<ContVal>();
    c->k = ContVal::K::Block;
    c->fn = fn;
    c->block = block;
    c->env = std::move(env);
    return c;
}

inline ContPtr cont_root_terminal() {
    auto c = std::make_shared<ContVal>();
    c->k = ContVal::K::RootTerminal;
    return c;
}

inline ContPtr cont_return_to_caller(int slot, ContPtr rest) {
    auto c = std::make_shared<ContVal>();
    c->k = ContVal::K::ReturnToCaller;
    c->slot = slot;
    c->rest = std::move(rest);
    return c;
}

inline ContPtr env_lookup(const EnvPtr& env, const std::string& name) {
    for (EnvPtr e = env; e; e = e->parent) {
        for (const auto& [k, v] : e->binds)
            if (k == name) return v;
    }
    throw EngineError("InternalError", "unbound continuation '" + name + "'");
}

// The engine bundle shared by every state of one session.
struct Engine {
    std::shared_ptr<const CompiledSpace> space;
    SessionPtr session;
    FramePtr globals;  // immutable frame binding every program function name

    const CompiledFunction& fn(int idx) const { return space->fns[idx]; }
};
using EnginePtr = std::shared_ptr<const Engine>;

// Result of advancing a state: either parked at a site or finished.
struct StepOutcome {
    bool yielded = false;
    // yielded:
    const SiteInfo* site = nullptr;
    int slot = -1;
    int choices_slot = -1;
    std::map<std::string, Value> params;
    ContPtr rest;
    FramePtr frame;
    // terminal:
    enum class Term { Finish, Returned, Killed };
    Term term = Term::Finish;
    Value value;
};

namespace detail {

constexpr int kMaxPlainCallDepth = 200;

enum class Sig { Normal, Brk, Cont };

inline RuntimeError builtin_arity_err(const std::string& name, const char* expects, Span span) {
    return RuntimeError("TypeError", "builtin " + name + " expects " + expects, span);
}

inline Value eval_builtin(const std::string& name, std::vector<Value>& args, Span span) {
    auto want = [&](std::size_t n, const char* sig) {
        if (args.size() != n) throw builtin_arity_err(name, sig, span);
    };
    if (name == "len") {
        want(1, "1 argument");
        const Value& v = args[0];
        if (v.is_list()) return Value(static_cast<std::int64_t>(v.as_list()->items.size()));
        if (v.is_map()) return Value(static_cast<std::int64_t>(v.as_map()->entries.size()));
        if (v.is_str()) return Value(static_cast<std::int64_t>(v.as_str().size()));
        throw RuntimeError("TypeError", std::string("len of ") + v.type_name(), span);
    }
    if (name == "append") {  // in-place; returns null
        want(2, "2 arguments");
        if (!args[0].is_list())
            throw RuntimeError("TypeError", "append needs a list first argument", span);
        args[0].as_list()->items.push_back(args[1]);
        return Value::null();
    }
    if (name == "push") {  // non-mutating: returns a fresh list with the element added
        want(2, "2 arguments");
        if (!args[0].is_list())
            throw RuntimeError("TypeError", "push needs a list first argument", span);
        std::vector<Value> items = args[0].as_list()->items;
        items.push_back(args[1]);
        return Value::list(std::move(items));
    }
    if (name == "keys") {
        want(1, "1 argument");
        if (!args[0].is_map()) throw RuntimeError("TypeError", "keys needs a map", span);
        std::vector<Value> out;
        for (const auto& [k, _] : args[0].as_map()->entries) out.push_back(Value(k));
        return Value::list(std::move(out));
    }
    if (name == "range") {
        if (args.size() != 1 && args.size() != 2) throw builtin_arity_err(name, "1 or 2 arguments", span);
        for (const auto& a : args)
            if (!a.is_int()) throw RuntimeError("TypeError", "range bounds must be ints", span);
        std::int64_t lo = args.size() == 2 ? args[0].as_int() : 0;
        std::int64_t hi = args.size() == 2 ? args[1].as_int() : args[0].as_int();
        std::vector<Value> out;
        for (std::int64_t i = lo; i < hi; ++i) out.push_back(Value(i));
        return Value::list(std::move(out));
    }
    if (name == "str") {
        want(1, "1 argument");
        return Value(args[0].to_display());
    }
    if (name == "abs") {
        want(1, "1 argument");
        if (args[0].is_int()) return Value(args[0].as_int() < 0 ? -args[0].as_int() : args[0].as_int());
        if (args[0].is_float()) return Value(args[0].as_float() < 0 ? -args[0].as_float() : args[0].as_float());
        throw RuntimeError("TypeError", "abs needs a number", span);
    }
    if (name == "min" || name == "max") {
        std::vector<Value>* pool = &args;
        std::vector<Value> unpacked;
        if (args.size() == 1 && args[0].is_list()) {
            unpacked = args[0].as_list()->items;
            pool = &unpacked;
        } else if (args.size() < 2) {
            throw builtin_arity_err(name, "a list or at least 2 arguments", span);
        }
        if (pool->empty())
            throw RuntimeError("TypeError", name + " of an empty sequence", span);
        Value best = (*pool)[0];
        for (std::size_t i = 1; i < pool->size(); ++i) {
            int c;
            try {
                c = (*pool)[i].compare(best);
            } catch (const RuntimeError& e) {
                throw RuntimeError(e.tag(), e.message(), span);
            }
            if ((name == "min" && c < 0) || (name == "max" && c > 0)) best = (*pool)[i];
        }
        return best;
    }
    if (name == "sorted") {
        want(1, "1 argument");
        if (!args[0].is_list()) throw RuntimeError("TypeError", "sorted needs a list", span);
        std::vector<Value> items = args[0].as_list()->items;
        try {
            std::stable_sort(items.begin(), items.end(),
                             [](const Value& a, const Value& b) { return a.compare(b) < 0; });
        } catch (const RuntimeError& e) {
            throw RuntimeError(e.tag(), e.message(), span);
        }
        return Value::list(std::move(items));
    }
    throw RuntimeError("NameError", "unknown function '" + name + "'", span);
}

class Exec {
public:
    Exec(const Engine& eng, Info& info, int depth) : eng_(eng), info_(info), depth_(depth) {}

    // ---------------- expression evaluation ----------------

    Value eval(const NodePtr& e, Frame& frame) {
        switch (e->kind) {
            case NodeKind::Literal:
                return e->lit;
            case NodeKind::Name: {
                auto it = frame.locals.find(e->name);
                if (it != frame.locals.end()) return it->second;
                if (frame.enclosing) {
                    auto git = frame.enclosing->locals.find(e->name);
                    if (git != frame.enclosing->locals.end()) return git->second;
                }
                throw RuntimeError("NameError", "undefined variable '" + e->name + "'", e->span);
            }
            case NodeKind::TmpRef: {
                auto it = frame.tmp.find(e->slot);
                if (it == frame.tmp.end())
                    throw EngineError("InternalError", "temp slot " + std::to_string(e->slot) + " unset");
                return it->second;
            }
            case NodeKind::BinOp:
                return eval_binop(e, frame);
            case NodeKind::UnaryOp: {
                Value v = eval(e->a, frame);
                if (e->unop == UnaryOpKind::Neg) {
                    if (v.is_int()) return Value(-v.as_int());
                    if (v.is_float()) return Value(-v.as_float());
                    throw RuntimeError("TypeError", std::string("cannot negate ") + v.type_name(),
                                       e->span);
                }
                return Value(!require_bool(v, "operand of '!'"));
            }
            case NodeKind::Index:
                return eval_index(e, frame);
            case NodeKind::Call:
                return eval_call(e, frame);
            case NodeKind::ListLit: {
                std::vector<Value> items;
                items.reserve(e->body.size());
                for (const auto& it : e->body) items.push_back(eval(it, frame));
                return Value::list(std::move(items));
            }
            case NodeKind::MapLit: {
                std::map<std::string, Value> entries;
                for (const auto& [k, v] : e->kwargs) entries[k] = eval(v, frame);
                return Value::map(std::move(entries));
            }
            case NodeKind::Perform: {
                std::vector<Value> args;
                args.reserve(e->body.size() + e->kwargs.size());
                for (const auto& a : e->body) args.push_back(eval(a, frame));
                for (const auto& [k, v] : e->kwargs) args.push_back(Value(k + "=" + eval(v, frame).repr()));
                return eng_.session->provider.call(e->str_val, args, e->span.begin);
            }
            default:
                throw EngineError("InternalError",
                                  "expression kind not evaluable here (normalization bug)");
        }
    }

    // ---------------- direct statement walker ----------------

    Sig exec_stmt(const NodePtr& s, Frame& frame) {
        switch (s->kind) {
            case NodeKind::Assign: {
                Value v = eval(s->b, frame);
                assign_to(s->a, std::move(v), frame);
                return Sig::Normal;
            }
            case NodeKind::ExprStmt:
                eval(s->a, frame);
                return Sig::Normal;
            case NodeKind::TempAssign: {
                Value v = s->a->kind == NodeKind::Protect ? eval_protected(s->a, frame)
                                                          : eval(s->a, frame);
                frame.tmp[s->slot] = std::move(v);
                return Sig::Normal;
            }
            case NodeKind::ChoicesMaterialize: {
                Value v = eval(s->a, frame);
                std::vector<Value> seq = materialize(v, s->span);
                if (seq.empty()) info_.done_stepping = true;
                frame.tmp[s->slot] = Value::list(std::move(seq));
                return Sig::Normal;
            }
            case NodeKind::ClearTemps:
                for (int slot : s->slots) frame.tmp.erase(slot);
                return Sig::Normal;
            case NodeKind::InfoSet:
                if (s->name == "early_stop_search") {
                    eng_.session->raise_early_stop();
                } else if (s->name == "optional_rv") {
                    info_.optional_rv = eval(s->a, frame);
                } else if (s->name == "score") {
                    record_score(s->a, frame);
                } else {
                    throw EngineError("InternalError", "unknown info field " + s->name);
                }
                return Sig::Normal;
            case NodeKind::InfoCosts:
                for (const auto& [k, vexpr] : s->kwargs) {
                    Value v = eval(vexpr, frame);
                    if (!v.is_number())
                        throw RuntimeError("TypeError",
                                           "cost '" + k + "' must be a number, got " + v.type_name(),
                                           vexpr->span);
                    info_.costs[k] += v.as_number();
                    eng_.session->add_cost(k, v.as_number());
                }
                return Sig::Normal;
            case NodeKind::InfoNoCopyAdd:
                info_.nocopy.insert(s->name);
                return Sig::Normal;
            case NodeKind::InfoNoCopyRemove:
                info_.nocopy.erase(s->name);
                return Sig::Normal;
            case NodeKind::If: {
                bool c = require_bool(eval(s->a, frame), "if condition");
                return run_body(c ? s->body : s->orelse, frame);
            }
            case NodeKind::While:
                while (require_bool(eval(s->a, frame), "while condition")) {
                    Sig sig = run_body(s->body, frame);
                    if (sig == Sig::Brk) break;
                    // Sig::Cont and Sig::Normal both re-test the condition.
                }
                return Sig::Normal;
            case NodeKind::ForIn: {
                std::vector<Value> seq = materialize(eval(s->a, frame), s->a->span);
                frame.iterables.push_back(IterState{std::move(seq), 0});
                Sig out = Sig::Normal;
                for (;;) {
                    IterState& it = frame.iterables.back();
                    if (it.cursor >= it.seq.size()) break;
                    frame.locals[s->name] = it.seq[it.cursor++];
                    Sig sig = run_body(s->body, frame);
                    if (sig == Sig::Brk) break;
                }
                frame.iterables.pop_back();
                return out;
            }
            case NodeKind::BreakCallback:
                return Sig::Brk;
            case NodeKind::ContinueCallback:
                return Sig::Cont;
            case NodeKind::IfElseCallback:
                return Sig::Normal;  // join marker: fall through
            case NodeKind::FinishCallback:
                if (s->killed) throw KilledSignal{s->a ? eval(s->a, frame) : Value::null()};
                throw EngineError("InternalError", "finish marker inside a direct statement");
            case NodeKind::ReturnCallback:
                throw EngineError("InternalError", "return marker inside a direct statement");
            default:
                throw EngineError("InternalError", "statement kind not executable here");
        }
    }

    Value eval_protected(const NodePtr& p, Frame& frame) {
        std::optional<int> retries;
        if (p->b) {
            Value r = eval(p->b, frame);
            if (!r.is_int() || r.as_int() < 0)
                throw RuntimeError("TypeError", "protect retry count must be a non-negative int",
                                   p->b->span);
            retries = static_cast<int>(r.as_int());
        }
        try {
            return eval(p->a, frame);
        } catch (const RuntimeError& e) {
            if (e.tag() == p->str_val)
                throw ProtectFailureSignal{p->span.begin, p->str_val, retries, e.message()};
            throw;
        }
    }

    std::vector<Value> materialize(const Value& v, Span span) {
        std::vector<Value> out;
        if (v.is_list()) {
            out = v.as_list()->items;  // snapshot; elements still alias
        } else if (v.is_map()) {
            for (const auto& [k, _] : v.as_map()->entries) out.push_back(Value(k));
        } else if (v.is_str()) {
            for (char c : v.as_str()) out.push_back(Value(std::string(1, c)));
        } else {
            throw RuntimeError("NotIterable",
                               std::string("cannot iterate over ") + v.type_name(), span);
        }
        return out;
    }

private:
    Sig run_body(const NodeList& stmts, Frame& frame) {
        for (const auto& s : stmts) {
            Sig sig = exec_stmt(s, frame);
            if (sig != Sig::Normal) return sig;
        }
        return Sig::Normal;
    }

    void record_score(const NodePtr& sub, Frame& frame) {
        if (sub->kind == NodeKind::ScoreDbSubmit) {
            Value v = eval(sub->a, frame);
            info_.score = eng_.session->scores.submit(v);
            return;
        }
        if (sub->kind == NodeKind::ScoreDbGroupSubmit) {
            if (!eng_.space->has_fn(sub->name))
                throw RuntimeError("NameError", "unknown group evaluator '" + sub->name + "'",
                                   sub->span);
            Value target = eval(sub->a, frame);
            Value label = sub->b ? eval(sub->b, frame) : Value::null();
            info_.score = eng_.session->scores.submit_group(sub->name, target, label);
            return;
        }
        throw EngineError("InternalError", "malformed score submission");
    }

    void assign_to(const NodePtr& lv, Value v, Frame& frame) {
        if (lv->kind == NodeKind::Name) {
            frame.locals[lv->name] = std::move(v);
            return;
        }
        if (lv->kind != NodeKind::Index)
            throw EngineError("InternalError", "malformed assignment target");
        Value base = eval(lv->a, frame);
        Value idx = eval(lv->b, frame);
        if (base.is_list()) {
            if (!idx.is_int())
                throw RuntimeError("TypeError", "list index must be an int", lv->b->span);
            auto& items = base.as_list()->items;
            std::int64_t i = idx.as_int();
            if (i < 0 || i >= static_cast<std::int64_t>(items.size()))
                throw RuntimeError("IndexError",
                                   "index " + std::to_string(i) + " out of range for list of length " +
                                       std::to_string(items.size()),
                                   lv->span);
            items[static_cast<std::size_t>(i)] = std::move(v);
            return;
        }
        if (base.is_map()) {
            if (!idx.is_str())
                throw RuntimeError("TypeError", "map key must be a string", lv->b->span);
            base.as_map()->entries[idx.as_str()] = std::move(v);
            return;
        }
        throw RuntimeError("TypeError", std::string("cannot assign into ") + base.type_name(),
                           lv->span);
    }

    Value eval_binop(const NodePtr& e, Frame& frame) {
        using K = BinOpKind;
        if (e->binop == K::And || e->binop == K::Or) {
            bool a = require_bool(eval(e->a, frame), "operand of and/or");
            if (e->binop == K::And && !a) return Value(false);
            if (e->binop == K::Or && a) return Value(true);
            return Value(require_bool(eval(e->b, frame), "operand of and/or"));
        }
        Value a = eval(e->a, frame);
        Value b = eval(e->b, frame);
        switch (e->binop) {
            case K::Eq: return Value(a.equals(b));
            case K::Ne: return Value(!a.equals(b));
            case K::Lt: return compare_op(a, b, e->span, [](int c) { return c < 0; });
            case K::Le: return compare_op(a, b, e->span, [](int c) { return c <= 0; });
            case K::Gt: return compare_op(a, b, e->span, [](int c) { return c > 0; });
            case K::Ge: return compare_op(a, b, e->span, [](int c) { return c >= 0; });
            case K::Add:
                if (a.is_str() && b.is_str()) return Value(a.as_str() + b.as_str());
                if (a.is_list() && b.is_list()) {
                    std::vector<Value> items = a.as_list()->items;
                    const auto& more = b.as_list()->items;
                    items.insert(items.end(), more.begin(), more.end());
                    return Value::list(std::move(items));
                }
                return arith(a, b, e->span, '+');
            case K::Sub: return arith(a, b, e->span, '-');
            case K::Mul: return arith(a, b, e->span, '*');
            case K::Div:
                if (a.is_number() && b.is_number()) {
                    if ((b.is_int() && b.as_int() == 0) || (b.is_float() && b.as_float() == 0.0))
                        throw RuntimeError("DivZero", "division by zero", e->span);
                    if (a.is_int() && b.is_int()) return Value(a.as_int() / b.as_int());
                    return Value(a.as_number() / b.as_number());
                }
                throw type_err(a, b, "/", e->span);
            case K::Mod:
                if (a.is_int() && b.is_int()) {
                    if (b.as_int() == 0) throw RuntimeError("DivZero", "modulo by zero", e->span);
                    return Value(a.as_int() % b.as_int());
                }
                throw type_err(a, b, "%", e->span);
            default:
                throw EngineError("InternalError", "unhandled binary operator");
        }
    }

    template <class Cmp>
    Value compare_op(const Value& a, const Value& b, Span span, Cmp cmp) {
        try {
            return Value(cmp(a.compare(b)));
        } catch (const RuntimeError& e) {
            throw RuntimeError(e.tag(), e.message(), span);
        }
    }

    static RuntimeError type_err(const Value& a, const Value& b, const char* op, Span span) {
        return RuntimeError("TypeError", std::string("unsupported operands for '") + op + "': " +
                                             a.type_name() + " and " + b.type_name(),
                            span);
    }

    static Value arith(const Value& a, const Value& b, Span span, char op) {
        if (!a.is_number() || !b.is_number()) throw type_err(a, b, std::string(1, op).c_str(), span);
        if (a.is_int() && b.is_int()) {
            std::int64_t x = a.as_int(), y = b.as_int();
            switch (op) {
                case '+': return Value(x + y);
                case '-': return Value(x - y);
                default: return Value(x * y);
            }
        }
        double x = a.as_number(), y = b.as_number();
        switch (op) {
            case '+': return Value(x + y);
            case '-': return Value(x - y);
            default: return Value(x * y);
        }
    }

    Value eval_index(const NodePtr& e, Frame& frame) {
        Value base = eval(e->a, frame);
        Value idx = eval(e->b, frame);
        if (base.is_list()) {
            if (!idx.is_int())
                throw RuntimeError("TypeError", "list index must be an int", e->b->span);
            const auto& items = base.as_list()->items;
            std::int64_t i = idx.as_int();
            if (i < 0 || i >= static_cast<std::int64_t>(items.size()))
                throw RuntimeError("IndexError",
                                   "index " + std::to_string(i) + " out of range for list of length " +
                                       std::to_string(items.size()),
                                   e->span);
            return items[static_cast<std::size_t>(i)];
        }
        if (base.is_map()) {
            if (!idx.is_str())
                throw RuntimeError("TypeError", "map key must be a string", e->b->span);
            const auto& entries = base.as_map()->entries;
            auto it = entries.find(idx.as_str());
            if (it == entries.end())
                throw RuntimeError("KeyError", "missing key " + idx.repr(), e->span);
            return it->second;
        }
        if (base.is_str()) {
            if (!idx.is_int())
                throw RuntimeError("TypeError", "string index must be an int", e->b->span);
            const auto& s = base.as_str();
            std::int64_t i = idx.as_int();
            if (i < 0 || i >= static_cast<std::int64_t>(s.size()))
                throw RuntimeError("IndexError",
                                   "index " + std::to_string(i) + " out of range for string of length " +
                                       std::to_string(s.size()),
                                   e->span);
            return Value(std::string(1, s[static_cast<std::size_t>(i)]));
        }
        throw RuntimeError("TypeError", std::string("cannot index ") + base.type_name(), e->span);
    }

    Value eval_call(const NodePtr& e, Frame& frame);  // defined after run_segment

    const Engine& eng_;
    Info& info_;
    int depth_;
};

// Resolve a compile-time continuation expression against the live environment.
inline ContPtr resolve_cont(const ContExprPtr& ce, const EnvPtr& env, int fn_idx) {
    if (ce->is_ref) return env_lookup(env, ce->name);
    if (ce->binds.empty()) return cont_block(fn_idx, ce->block, env);
    auto child = std::make_shared<RtEnv>();
    child->parent = env;
    child->binds.reserve(ce->binds.size());
    for (const auto& [k, v] : ce->binds) child->binds.emplace_back(k, resolve_cont(v, env, fn_idx));
    return cont_block(fn_idx, ce->block, child);
}

// Advance from `cont` with `frame` until the next yield or terminal.  Frames
// and continuations travel iteratively; host stack depth stays bounded by
// expression nesting plus plain-call depth.
inline StepOutcome run_segment(ContPtr cont, FramePtr frame, Info& info, const Engine& eng,
                               int depth) {
    Exec ex(eng, info, depth);
    Value pending;  // value travelling into a return continuation
    try {
        for (;;) {
            switch (cont->k) {
                case ContVal::K::RootTerminal: {
                    StepOutcome out;
                    out.yielded = false;
                    out.term = StepOutcome::Term::Returned;
                    out.value = std::move(pending);
                    out.frame = std::move(frame);
                    return out;
                }
                case ContVal::K::ReturnToCaller: {
                    FramePtr caller = frame->caller;
                    if (!caller) throw EngineError("InternalError", "return with no caller frame");
                    caller->tmp[cont->slot] = std::move(pending);
                    pending = Value();
                    frame = std::move(caller);
                    cont = cont->rest;
                    break;
                }
                case ContVal::K::Block: {
                    const CompiledFunction& fn = eng.fn(cont->fn);
                    const Block& blk = fn.blocks[cont->block];
                    const EnvPtr& env = cont->env;
                    const int fn_idx = cont->fn;
                    for (const auto& ins : blk.instrs) {
                        switch (ins.k) {
                            case Instr::K::Exec: {
                                Sig sig = ex.exec_stmt(ins.node, *frame);
                                if (sig != Sig::Normal)
                                    throw EngineError("InternalError",
                                                      "loop control escaped a compiled block");
                                break;
                            }
                            case Instr::K::PushIter: {
                                Value v = ex.eval(ins.node, *frame);
                                frame->iterables.push_back(
                                    IterState{ex.materialize(v, ins.node->span), 0});
                                break;
                            }
                            case Instr::K::PopIter:
                                frame->iterables.pop_back();
                                break;
                        }
                    }
                    const Terminator& t = blk.term;
                    switch (t.k) {
                        case Terminator::K::Tail:
                            cont = resolve_cont(t.cont, env, fn_idx);
                            break;
                        case Terminator::K::Cond: {
                            bool c = require_bool(ex.eval(t.expr, *frame), "condition");
                            cont = resolve_cont(c ? t.cont : t.alt, env, fn_idx);
                            break;
                        }
                        case Terminator::K::ForStep: {
                            if (frame->iterables.empty())
                                throw EngineError("InternalError", "for-step with empty iterator stack");
                            IterState& it = frame->iterables.back();
                            if (it.cursor < it.seq.size()) {
                                frame->locals[t.var] = it.seq[it.cursor++];
                                cont = resolve_cont(t.cont, env, fn_idx);
                            } else {
                                frame->iterables.pop_back();
                                cont = resolve_cont(t.alt, env, fn_idx);
                            }
                            break;
                        }
                        case Terminator::K::Yield: {
                            StepOutcome out;
                            out.yielded = true;
                            out.site = &eng.space->sites[t.site];
                            out.slot = t.slot;
                            out.choices_slot = t.choices_slot;
                            for (const auto& [k, v] : t.kwargs)
                                out.params[k] = ex.eval(v, *frame);
                            out.rest = resolve_cont(t.cont, env, fn_idx);
                            out.frame = std::move(frame);
                            return out;
                        }
                        case Terminator::K::CallFn: {
                            const CompiledFunction& callee = eng.space->fn(t.callee);
                            if (callee.params.size() != t.args.size())
                                throw RuntimeError(
                                    "TypeError", "function '" + t.callee + "' expects " +
                                                     std::to_string(callee.params.size()) +
                                                     " arguments, got " + std::to_string(t.args.size()));
                            auto child = std::make_shared<Frame>();
                            for (std::size_t i = 0; i < t.args.size(); ++i)
                                child->locals[callee.params[i]] = ex.eval(t.args[i], *frame);
                            child->caller = frame;
                            child->enclosing = eng.globals;
                            ContPtr ret = cont_return_to_caller(
                                t.slot, resolve_cont(t.cont, env, fn_idx));
                            auto env0 = std::make_shared<RtEnv>();
                            env0->binds.emplace_back("return", std::move(ret));
                            cont = cont_block(eng.space->fn_index.at(t.callee), 0, env0);
                            frame = std::move(child);
                            break;
                        }
                        case Terminator::K::Return:
                        case Terminator::K::Finish:
                            pending = t.expr ? ex.eval(t.expr, *frame) : Value::null();
                            frame->iterables.clear();  // return unwinds active loops
                            cont = env_lookup(env, "return");
                            break;
                        case Terminator::K::Kill: {
                            StepOutcome out;
                            out.yielded = false;
                            out.term = StepOutcome::Term::Killed;
                            out.value = t.expr ? ex.eval(t.expr, *frame) : Value::null();
                            out.frame = std::move(frame);
                            return out;
                        }
                    }
                    break;
                }
            }
        }
    } catch (const KilledSignal& k) {
        StepOutcome out;
        out.yielded = false;
        out.term = StepOutcome::Term::Killed;
        out.value = k.payload;
        out.frame = std::move(frame);
        return out;
    }
}

// Invoke a program function outside any search: used for plain calls in
// expressions and for group evaluators.  The function must not reach a
// branchpoint.
inline Value invoke_plain(const std::string& name, const std::vector<Value>& args, const Engine& eng,
                          Info& info, int depth) {
    if (depth > kMaxPlainCallDepth)
        throw RuntimeError("RecursionError",
                           "plain call depth exceeded " + std::to_string(kMaxPlainCallDepth));
    const CompiledFunction& callee = eng.space->fn(name);
    if (callee.params.size() != args.size())
        throw RuntimeError("TypeError", "function '" + name + "' expects " +
                                            std::to_string(callee.params.size()) + " arguments, got " +
                                            std::to_string(args.size()));
    auto frame = std::make_shared<Frame>();
    for (std::size_t i = 0; i < args.size(); ++i) frame->locals[callee.params[i]] = args[i];
    frame->enclosing = eng.globals;
    auto env0 = std::make_shared<RtEnv>();
    env0->binds.emplace_back("return", cont_root_terminal());
    StepOutcome out = run_segment(cont_block(eng.space->fn_index.at(name), 0, env0), frame, info,
                                  eng, depth + 1);
    if (out.yielded)
        throw RuntimeError("TypeError", "function '" + name +
                                            "' contains branchpoints and must be called via searchover");
    if (out.term == StepOutcome::Term::Killed) throw KilledSignal{out.value};
    return out.value;
}

inline Value Exec::eval_call(const NodePtr& e, Frame& frame) {
    // Resolution: local binding first (FnRef values are callable), then the
    // enclosing program-function frame, then builtins.
    const std::string& name = e->name;
    std::vector<Value> args;
    args.reserve(e->body.size());
    for (const auto& a : e->body) args.push_back(eval(a, frame));

    const Value* bound = nullptr;
    auto it = frame.locals.find(name);
    if (it != frame.locals.end()) {
        bound = &it->second;
    } else if (frame.enclosing) {
        auto git = frame.enclosing->locals.find(name);
        if (git != frame.enclosing->locals.end()) bound = &git->second;
    }
    if (bound) {
        if (!bound->is_fn())
            throw RuntimeError("TypeError", "'" + name + "' is not callable", e->span);
        return invoke_plain(bound->as_fn().name, args, eng_, info_, depth_);
    }
    return eval_builtin(name, args, e->span);
}

}  // namespace detail

// Builds the immutable globals frame binding every program function.
inline FramePtr make_globals(const CompiledSpace& space) {
    auto g = std::make_shared<Frame>();
    for (const auto& fn : space.fns) g->locals[fn.name] = Value(FnRef{fn.name});
    return g;
}

inline EnginePtr make_engine(std::shared_ptr<const CompiledSpace> space, SessionPtr session) {
    auto eng = std::make_shared<Engine>();
    eng->space = std::move(space);
    eng->session = std::move(session);
    eng->globals = make_globals(*eng->space);
    // Group evaluators re-enter the engine with a detached per-call info.
    const Engine* raw = eng.get();
    eng->session->fn_invoker = [raw](const std::string& fn, const std::vector<Value>& args) {
        Info scratch;
        scratch.session = raw->session;
        return detail::invoke_plain(fn, args, *raw, scratch, 0);
    };
    return eng;
}

}  // namespace pan
