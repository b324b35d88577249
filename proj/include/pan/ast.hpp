// ast.hpp - AST node model for PanScript, covering both surface syntax and
// the normalized forms introduced by preprocessing (terminal-callback markers,
// info-map writes, temp-slot assignments).
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pan/source.hpp"
#include "pan/value.hpp"

namespace pan {

enum class NodeKind {
    // --- statements (surface) ---
    Assign,
    NoCopyDecl,
    NeedsCopyDecl,
    If,
    While,
    ForIn,
    Break,
    Continue,
    Return,
    ExprStmt,
    FunctionDef,
    RecordScore,
    RecordScoreGroup,
    RecordCosts,
    EarlyStop,
    KillBranch,
    OptionalReturn,
    // --- expressions (surface) ---
    Literal,
    Name,
    BinOp,
    UnaryOp,
    Call,
    Index,
    ListLit,
    MapLit,
    Branchpoint,
    Choose,
    Protect,
    Searchover,
    Perform,
    // --- normalized-only statements ---
    TempAssign,          // tmp[slot] = expr (expr may be a lifted primitive)
    ChoicesMaterialize,  // tmp[slot] = choices(expr); flags done-stepping when empty
    ClearTemps,          // drop finished temp slots
    FinishCallback,      // end of entry body; killed=true for kill_branch
    ContinueCallback,
    BreakCallback,
    IfElseCallback,
    ReturnCallback,      // end of function body / explicit return
    InfoSet,             // info[field] = expr  (field: early_stop_search | optional_rv | score)
    InfoCosts,           // accumulate named costs into info + session aggregates
    InfoNoCopyAdd,
    InfoNoCopyRemove,
    // --- normalized-only expressions ---
    TmpRef,              // tmp[slot]
    ScoreDbSubmit,       // plain score submission, resolves immediately
    ScoreDbGroupSubmit,  // deferred group submission, resolves at flush
};

enum class BinOpKind { Add, Sub, Mul, Div, Mod, Eq, Ne, Lt, Le, Gt, Ge, And, Or };
enum class UnaryOpKind { Neg, Not };

struct Node;
using NodePtr = std::shared_ptr<Node>;
using NodeList = std::vector<NodePtr>;
using KwArgs = std::vector<std::pair<std::string, NodePtr>>;

// One struct for all kinds; only the fields relevant to `kind` are populated.
// Nodes are treated as immutable once built, so subtrees may be shared freely.
struct Node {
    NodeKind kind;
    Span span;

    // generic operand slots (meaning depends on kind; see builder helpers)
    NodePtr a;  // cond / lvalue / base / operand / payload / guarded expr / target
    NodePtr b;  // value / index / rhs / label / retries
    NodeList body;    // statement bodies; Call/ListLit/Perform argument lists
    NodeList orelse;  // else-arm statements
    KwArgs kwargs;    // keyword arguments; MapLit entries

    std::string name;      // identifier: variable, function, callee, for-var, info field
    std::string str_val;   // protect tag / perform op name
    Value lit;             // Literal payload
    BinOpKind binop = BinOpKind::Add;
    UnaryOpKind unop = UnaryOpKind::Neg;
    std::vector<std::string> params;  // FunctionDef parameter names
    int slot = -1;                    // TempAssign / TmpRef / ChoicesMaterialize
    std::vector<int> slots;           // ClearTemps
    bool killed = false;              // FinishCallback from kill_branch
};

inline NodePtr make_node(NodeKind kind, Span span = {}) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->span = span;
    return n;
}

// A parsed source file: function definitions in source order.
struct Program {
    std::string path;
    std::string text;
    NodeList functions;  // FunctionDef nodes

    const Node* find_function(const std::string& fn_name) const {
        for (const auto& f : functions)
            if (f->name == fn_name) return f.get();
        return nullptr;
    }
};

inline bool is_expr_kind(NodeKind k) {
    switch (k) {
        case NodeKind::Literal:
        case NodeKind::Name:
        case NodeKind::BinOp:
        case NodeKind::UnaryOp:
        case NodeKind::Call:
        case NodeKind::Index:
        case NodeKind::ListLit:
        case NodeKind::MapLit:
        case NodeKind::Branchpoint:
        case NodeKind::Choose:
        case NodeKind::Protect:
        case NodeKind::Searchover:
        case NodeKind::Perform:
        case NodeKind::TmpRef:
        case NodeKind::ScoreDbSubmit:
        case NodeKind::ScoreDbGroupSubmit:
            return true;
        default:
            return false;
    }
}

// Terminal-callback markers: a body whose last statement is one of these has
// explicit control flow to its continuation.
inline bool is_terminal_marker(NodeKind k) {
    switch (k) {
        case NodeKind::FinishCallback:
        case NodeKind::ContinueCallback:
        case NodeKind::BreakCallback:
        case NodeKind::IfElseCallback:
        case NodeKind::ReturnCallback:
            return true;
        default:
            return false;
    }
}

// Structural equality ignoring spans (used by idempotence / round-trip tests).
inline bool node_equal(const NodePtr& x, const NodePtr& y) {
    if (!x || !y) return !x && !y;
    if (x->kind != y->kind) return false;
    if (x->name != y->name || x->str_val != y->str_val) return false;
    if (x->kind == NodeKind::Literal &&
        (x->lit.raw().index() != y->lit.raw().index() || !x->lit.equals(y->lit)))
        return false;
    if (x->kind == NodeKind::BinOp && x->binop != y->binop) return false;
    if (x->kind == NodeKind::UnaryOp && x->unop != y->unop) return false;
    if (x->params != y->params || x->slot != y->slot || x->slots != y->slots) return false;
    if (x->killed != y->killed) return false;
    if (!node_equal(x->a, y->a) || !node_equal(x->b, y->b)) return false;
    auto list_equal = [](const NodeList& p, const NodeList& q) {
        if (p.size() != q.size()) return false;
        for (size_t i = 0; i < p.size(); ++i)
            if (!node_equal(p[i], q[i])) return false;
        return true;
    };
    if (!list_equal(x->body, y->body) || !list_equal(x->orelse, y->orelse)) return false;
    if (x->kwargs.size() != y->kwargs.size()) return false;
    for (size_t i = 0; i < x->kwargs.size(); ++i) {
        if (x->kwargs[i].first != y->kwargs[i].first) return false;
        if (!node_equal(x->kwargs[i].second, y->kwargs[i].second)) return false;
    }
    return true;
}

inline bool program_equal(const Program& p, const Program& q) {
    if (p.functions.size() != q.functions.size()) return false;
    for (size_t i = 0; i < p.functions.size(); ++i)
        if (!node_equal(p.functions[i], q.functions[i])) return false;
    return true;
}

}  // namespace pan
