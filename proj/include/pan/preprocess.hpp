// preprocess.hpp - the three normalization passes run before CPS compilation:
//   1. append_terminal_callbacks: break/continue/return become explicit marker
//      statements and every body ends in its terminal marker (loop bodies get
//      ContinueCallback, if/else arms IfElseCallback, function bodies
//      ReturnCallback, the entry body FinishCallback).
//   2. desugar_keywords: early_stop / kill_branch / nocopy / needscopy /
//      optional_return / record_costs / record_score become info-map writes.
//   3. anf_lift_primitives: every Branchpoint/Choose/Searchover/Protect is
//      hoisted to `tmp[i] = prim(...)`, innermost first, left to right;
//      choose additionally materializes its choice list into its own slot.
// The pipeline is idempotent: normalized programs pass through unchanged.
#pragma once

#include <string>

#include "pan/ast.hpp"
#include "pan/errors.hpp"

namespace pan {

namespace detail {

inline bool ends_terminal(const NodeList& body) {
    if (body.empty()) return false;
    NodeKind k = body.back()->kind;
    // KillBranch desugars to a FinishCallback(killed) later; treating it as
    // terminal here avoids appending a dead marker behind it.
    return is_terminal_marker(k) || k == NodeKind::KillBranch;
}

// ---- pass 1: terminal callbacks ----

class TerminalPass {
public:
    explicit TerminalPass(const std::string& entry) : entry_(entry) {}

    Program run(const Program& prog) {
        Program out;
        out.path = prog.path;
        out.text = prog.text;
        for (const auto& fn : prog.functions) {
            auto nfn = make_node(NodeKind::FunctionDef, fn->span);
            nfn->name = fn->name;
            nfn->params = fn->params;
            nfn->body = rewrite_body(fn->body);
            if (!ends_terminal(nfn->body)) {
                bool is_entry = fn->name == entry_;
                nfn->body.push_back(
                    make_node(is_entry ? NodeKind::FinishCallback : NodeKind::ReturnCallback,
                              tail_span(fn->span)));
            }
            out.functions.push_back(nfn);
        }
        return out;
    }

private:
    static Span tail_span(Span s) { return {s.end, s.end}; }

    NodeList rewrite_body(const NodeList& body) {
        NodeList out;
        out.reserve(body.size());
        for (const auto& s : body) out.push_back(rewrite_stmt(s));
        return out;
    }

    NodePtr rewrite_stmt(const NodePtr& s) {
        switch (s->kind) {
            case NodeKind::Break:
                return make_node(NodeKind::BreakCallback, s->span);
            case NodeKind::Continue:
                return make_node(NodeKind::ContinueCallback, s->span);
            case NodeKind::Return: {
                auto n = make_node(NodeKind::ReturnCallback, s->span);
                n->a = s->a;
                return n;
            }
            case NodeKind::If: {
                auto n = make_node(NodeKind::If, s->span);
                n->a = s->a;
                n->body = rewrite_body(s->body);
                n->orelse = rewrite_body(s->orelse);
                if (!ends_terminal(n->body))
                    n->body.push_back(make_node(NodeKind::IfElseCallback, tail_span(s->span)));
                if (!ends_terminal(n->orelse))  // synthesizes the empty else arm too
                    n->orelse.push_back(make_node(NodeKind::IfElseCallback, tail_span(s->span)));
                return n;
            }
            case NodeKind::While: {
                auto n = make_node(NodeKind::While, s->span);
                n->a = s->a;
                n->body = rewrite_body(s->body);
                if (!ends_terminal(n->body))
                    n->body.push_back(make_node(NodeKind::ContinueCallback, tail_span(s->span)));
                return n;
            }
            case NodeKind::ForIn: {
                auto n = make_node(NodeKind::ForIn, s->span);
                n->name = s->name;
                n->a = s->a;
                n->body = rewrite_body(s->body);
                if (!ends_terminal(n->body))
                    n->body.push_back(make_node(NodeKind::ContinueCallback, tail_span(s->span)));
                return n;
            }
            default:
                return s;
        }
    }

    std::string entry_;
};

// ---- pass 2: keyword desugaring ----

class DesugarPass {
public:
    Program run(const Program& prog) {
        Program out;
        out.path = prog.path;
        out.text = prog.text;
        for (const auto& fn : prog.functions) {
            auto nfn = make_node(NodeKind::FunctionDef, fn->span);
            nfn->name = fn->name;
            nfn->params = fn->params;
            nfn->body = rewrite_body(fn->body);
            out.functions.push_back(nfn);
        }
        return out;
    }

private:
    NodeList rewrite_body(const NodeList& body) {
        NodeList out;
        for (const auto& s : body) out.push_back(rewrite_stmt(s));
        return out;
    }

    NodePtr rewrite_stmt(const NodePtr& s) {
        switch (s->kind) {
            case NodeKind::EarlyStop: {
                auto n = make_node(NodeKind::InfoSet, s->span);
                n->name = "early_stop_search";
                auto t = make_node(NodeKind::Literal, s->span);
                t->lit = Value(true);
                n->a = t;
                return n;
            }
            case NodeKind::KillBranch: {
                auto n = make_node(NodeKind::FinishCallback, s->span);
                n->a = s->a;
                n->killed = true;
                return n;
            }
            case NodeKind::NoCopyDecl: {
                auto n = make_node(NodeKind::InfoNoCopyAdd, s->span);
                n->name = s->name;
                return n;
            }
            case NodeKind::NeedsCopyDecl: {
                auto n = make_node(NodeKind::InfoNoCopyRemove, s->span);
                n->name = s->name;
                return n;
            }
            case NodeKind::OptionalReturn: {
                auto n = make_node(NodeKind::InfoSet, s->span);
                n->name = "optional_rv";
                n->a = s->a;
                return n;
            }
            case NodeKind::RecordCosts: {
                auto n = make_node(NodeKind::InfoCosts, s->span);
                n->kwargs = s->kwargs;
                return n;
            }
            case NodeKind::RecordScore: {
                auto n = make_node(NodeKind::InfoSet, s->span);
                n->name = "score";
                auto sub = make_node(NodeKind::ScoreDbSubmit, s->span);
                sub->a = s->a;
                n->a = sub;
                return n;
            }
            case NodeKind::RecordScoreGroup: {
                auto n = make_node(NodeKind::InfoSet, s->span);
                n->name = "score";
                auto sub = make_node(NodeKind::ScoreDbGroupSubmit, s->span);
                sub->name = s->name;
                sub->a = s->a;
                if (s->b) {
                    sub->b = s->b;
                } else {
                    auto nil = make_node(NodeKind::Literal, s->span);
                    nil->lit = Value::null();
                    sub->b = nil;
                }
                n->a = sub;
                return n;
            }
            case NodeKind::If: {
                auto n = make_node(NodeKind::If, s->span);
                n->a = s->a;
                n->body = rewrite_body(s->body);
                n->orelse = rewrite_body(s->orelse);
                return n;
            }
            case NodeKind::While: {
                auto n = make_node(NodeKind::While, s->span);
                n->a = s->a;
                n->body = rewrite_body(s->body);
                return n;
            }
            case NodeKind::ForIn: {
                auto n = make_node(NodeKind::ForIn, s->span);
                n->name = s->name;
                n->a = s->a;
                n->body = rewrite_body(s->body);
                return n;
            }
            default:
                return s;
        }
    }
};

// ---- pass 3: A-normal-form lifting ----

class AnfPass {
public:
    Program run(const Program& prog) {
        Program out;
        out.path = prog.path;
        out.text = prog.text;
        for (const auto& fn : prog.functions) {
            auto nfn = make_node(NodeKind::FunctionDef, fn->span);
            nfn->name = fn->name;
            nfn->params = fn->params;
            nfn->body = rewrite_body(fn->body);
            out.functions.push_back(nfn);
        }
        return out;
    }

private:
    static bool is_liftable(NodeKind k) {
        return k == NodeKind::Branchpoint || k == NodeKind::Choose ||
               k == NodeKind::Searchover || k == NodeKind::Protect;
    }

    NodeList rewrite_body(const NodeList& body) {
        NodeList out;
        for (const auto& s : body) rewrite_stmt(s, out);
        return out;
    }

    // Lifting state for one statement.
    struct Lift {
        NodeList prefix;
        std::vector<int> slots;
        int next_slot = 0;

        int alloc() {
            slots.push_back(next_slot);
            return next_slot++;
        }
    };

    void rewrite_stmt(const NodePtr& s, NodeList& out) {
        Lift lift;
        NodePtr rewritten = rewrite_one(s, lift);
        bool terminal = rewritten && is_terminal_marker(rewritten->kind);
        for (auto& p : lift.prefix) out.push_back(std::move(p));
        if (rewritten) out.push_back(rewritten);
        // Temp slots die with their statement; terminal markers leave the
        // body so clearing after them would be dead code.
        if (!lift.slots.empty() && !terminal) {
            auto clear = make_node(NodeKind::ClearTemps, s->span);
            clear->slots = lift.slots;
            out.push_back(clear);
        }
    }

    // Returns the in-place replacement for `s` (nullptr to drop it), pushing
    // lifted temp assignments onto lift.prefix.
    NodePtr rewrite_one(const NodePtr& s, Lift& lift) {
        switch (s->kind) {
            case NodeKind::Assign: {
                auto n = make_node(NodeKind::Assign, s->span);
                n->b = lift_expr(s->b, lift);       // rhs first
                n->a = lift_lvalue(s->a, lift);     // then target indices
                return n;
            }
            case NodeKind::ExprStmt: {
                if (is_liftable(s->a->kind)) {
                    lift_expr(s->a, lift);  // value discarded
                    return nullptr;
                }
                auto n = make_node(NodeKind::ExprStmt, s->span);
                n->a = lift_expr(s->a, lift);
                return n;
            }
            case NodeKind::If: {
                auto n = make_node(NodeKind::If, s->span);
                n->a = lift_expr(s->a, lift);  // condition evaluated once
                n->body = rewrite_body(s->body);
                n->orelse = rewrite_body(s->orelse);
                return n;
            }
            case NodeKind::While: {
                // Loop conditions re-evaluate every iteration; lifting would
                // change semantics, so liftable primitives stay put and the
                // CPS compiler rejects them there.
                auto n = make_node(NodeKind::While, s->span);
                n->a = s->a;
                n->body = rewrite_body(s->body);
                return n;
            }
            case NodeKind::ForIn: {
                auto n = make_node(NodeKind::ForIn, s->span);
                n->name = s->name;
                n->a = lift_expr(s->a, lift);  // iterable evaluated once at entry
                n->body = rewrite_body(s->body);
                return n;
            }
            case NodeKind::ReturnCallback:
            case NodeKind::FinishCallback: {
                auto n = make_node(s->kind, s->span);
                n->killed = s->killed;
                if (s->a) n->a = lift_expr(s->a, lift);
                return n;
            }
            case NodeKind::InfoSet: {
                auto n = make_node(NodeKind::InfoSet, s->span);
                n->name = s->name;
                n->a = lift_expr(s->a, lift);
                return n;
            }
            case NodeKind::InfoCosts: {
                auto n = make_node(NodeKind::InfoCosts, s->span);
                for (const auto& [k, v] : s->kwargs) n->kwargs.emplace_back(k, lift_expr(v, lift));
                return n;
            }
            case NodeKind::TempAssign: {  // already normalized (idempotence)
                auto n = make_node(NodeKind::TempAssign, s->span);
                n->slot = s->slot;
                n->a = lift_children_only(s->a, lift);
                return n;
            }
            case NodeKind::ChoicesMaterialize: {
                auto n = make_node(NodeKind::ChoicesMaterialize, s->span);
                n->slot = s->slot;
                n->a = lift_expr(s->a, lift);
                return n;
            }
            default:
                return s;  // markers without payloads, ClearTemps, info ops
        }
    }

    NodePtr lift_lvalue(const NodePtr& e, Lift& lift) {
        if (e->kind == NodeKind::Index) {
            auto n = make_node(NodeKind::Index, e->span);
            n->a = lift_lvalue(e->a, lift);
            n->b = lift_expr(e->b, lift);
            return n;
        }
        return e;
    }

    // Recurse into children but do not lift `e` itself even if primitive —
    // used for the RHS of an existing TempAssign.
    NodePtr lift_children_only(const NodePtr& e, Lift& lift) {
        if (!is_liftable(e->kind)) return lift_expr(e, lift);
        auto n = make_node(e->kind, e->span);
        n->name = e->name;
        n->str_val = e->str_val;
        switch (e->kind) {
            case NodeKind::Branchpoint:
                for (const auto& [k, v] : e->kwargs) n->kwargs.emplace_back(k, lift_expr(v, lift));
                return n;
            case NodeKind::Choose:
                n->a = lift_expr(e->a, lift);
                for (const auto& [k, v] : e->kwargs) n->kwargs.emplace_back(k, lift_expr(v, lift));
                return n;
            case NodeKind::Searchover: {
                const Node& call = *e->a;
                auto ncall = make_node(NodeKind::Call, call.span);
                ncall->name = call.name;
                for (const auto& arg : call.body) ncall->body.push_back(lift_expr(arg, lift));
                n->a = ncall;
                return n;
            }
            default:  // Protect: guarded expression untouched, retries lifted
                n->a = e->a;
                if (e->b) n->b = lift_expr(e->b, lift);
                return n;
        }
    }

    NodePtr lift_expr(const NodePtr& e, Lift& lift) {
        switch (e->kind) {
            case NodeKind::Branchpoint: {
                auto site = make_node(NodeKind::Branchpoint, e->span);
                for (const auto& [k, v] : e->kwargs) site->kwargs.emplace_back(k, lift_expr(v, lift));
                return assign_temp(site, e->span, lift);
            }
            case NodeKind::Choose: {
                NodePtr choices = lift_expr(e->a, lift);
                KwArgs kwargs;
                for (const auto& [k, v] : e->kwargs) kwargs.emplace_back(k, lift_expr(v, lift));
                int mslot = lift.alloc();
                auto mat = make_node(NodeKind::ChoicesMaterialize, e->span);
                mat->slot = mslot;
                mat->a = choices;
                lift.prefix.push_back(mat);
                auto site = make_node(NodeKind::Choose, e->span);
                auto mref = make_node(NodeKind::TmpRef, e->span);
                mref->slot = mslot;
                site->a = mref;
                site->kwargs = std::move(kwargs);
                return assign_temp(site, e->span, lift);
            }
            case NodeKind::Searchover: {
                const Node& call = *e->a;
                auto ncall = make_node(NodeKind::Call, call.span);
                ncall->name = call.name;
                for (const auto& arg : call.body) ncall->body.push_back(lift_expr(arg, lift));
                auto site = make_node(NodeKind::Searchover, e->span);
                site->a = ncall;
                return assign_temp(site, e->span, lift);
            }
            case NodeKind::Protect: {
                auto site = make_node(NodeKind::Protect, e->span);
                site->str_val = e->str_val;
                site->a = e->a;  // guarded expression stays in place
                if (e->b) site->b = lift_expr(e->b, lift);
                return assign_temp(site, e->span, lift);
            }
            case NodeKind::BinOp: {
                auto n = make_node(NodeKind::BinOp, e->span);
                n->binop = e->binop;
                n->a = lift_expr(e->a, lift);
                n->b = lift_expr(e->b, lift);
                return n;
            }
            case NodeKind::UnaryOp: {
                auto n = make_node(NodeKind::UnaryOp, e->span);
                n->unop = e->unop;
                n->a = lift_expr(e->a, lift);
                return n;
            }
            case NodeKind::Index: {
                auto n = make_node(NodeKind::Index, e->span);
                n->a = lift_expr(e->a, lift);
                n->b = lift_expr(e->b, lift);
                return n;
            }
            case NodeKind::Call: {
                auto n = make_node(NodeKind::Call, e->span);
                n->name = e->name;
                for (const auto& arg : e->body) n->body.push_back(lift_expr(arg, lift));
                return n;
            }
            case NodeKind::ListLit: {
                auto n = make_node(NodeKind::ListLit, e->span);
                for (const auto& it : e->body) n->body.push_back(lift_expr(it, lift));
                return n;
            }
            case NodeKind::MapLit: {
                auto n = make_node(NodeKind::MapLit, e->span);
                for (const auto& [k, v] : e->kwargs) n->kwargs.emplace_back(k, lift_expr(v, lift));
                return n;
            }
            case NodeKind::Perform: {
                auto n = make_node(NodeKind::Perform, e->span);
                n->str_val = e->str_val;
                for (const auto& arg : e->body) n->body.push_back(lift_expr(arg, lift));
                for (const auto& [k, v] : e->kwargs) n->kwargs.emplace_back(k, lift_expr(v, lift));
                return n;
            }
            case NodeKind::ScoreDbSubmit: {
                auto n = make_node(NodeKind::ScoreDbSubmit, e->span);
                n->a = lift_expr(e->a, lift);
                return n;
            }
            case NodeKind::ScoreDbGroupSubmit: {
                auto n = make_node(NodeKind::ScoreDbGroupSubmit, e->span);
                n->name = e->name;
                n->a = lift_expr(e->a, lift);
                n->b = lift_expr(e->b, lift);
                return n;
            }
            default:
                return e;  // literals, names, tmp refs
        }
    }

    NodePtr assign_temp(NodePtr site, Span span, Lift& lift) {
        int slot = lift.alloc();
        auto ta = make_node(NodeKind::TempAssign, span);
        ta->slot = slot;
        ta->a = std::move(site);
        lift.prefix.push_back(ta);
        auto ref = make_node(NodeKind::TmpRef, span);
        ref->slot = slot;
        return ref;
    }
};

}  // namespace detail

inline Program append_terminal_callbacks(const Program& prog, const std::string& entry) {
    return detail::TerminalPass(entry).run(prog);
}

inline Program desugar_keywords(const Program& prog) {
    return detail::DesugarPass().run(prog);
}

inline Program anf_lift_primitives(const Program& prog) {
    return detail::AnfPass().run(prog);
}

// Full pipeline.  `entry` decides which body receives the FinishCallback.
inline Program preprocess(const Program& prog, const std::string& entry) {
    if (!prog.find_function(entry)) {
        throw CompileError("unknown entry function '" + entry + "'");
    }
    return anf_lift_primitives(desugar_keywords(append_terminal_callbacks(prog, entry)));
}

}  // namespace pan
