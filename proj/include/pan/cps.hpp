// cps.hpp - continuation-passing compilation of normalized programs into
// resumable search spaces.
//
// Each function body becomes a graph of basic blocks.  A block is a run of
// direct (branchpoint-free) statements ending in one terminator: a tail
// transfer, a conditional dispatch, a for-loop step, a branchpoint yield, a
// sub-search call, or a terminal (finish/return/killed).  Stepping a program
// state runs block-to-block on a trampoline, so call-stack depth is bounded by
// static nesting depth and never grows with iteration count.
//
// Rule summary:
//   - Direct statements (no branchpoint sites, no control markers escaping the
//     statement) stay as single instructions executed by the statement walker.
//   - `while` with sites in the body becomes a header block: cond true enters
//     the body with continue:=header and break:=loop_rest, cond false leaves
//     through loop_rest.  Loop conditions may not contain sites.
//   - `for` pushes an iterator snapshot; the header advances the cursor and
//     exits (popping) on exhaustion; break pops before leaving.
//   - `if`/`else` compiles both arms against a shared join continuation.
//   - Markers end blocks: continue/break/ifelse transfer to the continuation
//     bound under that name; return/finish dispatch the function's return
//     continuation; a kill marker terminates the branch immediately.
#pragma once

#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pan/ast.hpp"
#include "pan/errors.hpp"
#include "pan/pretty.hpp"

namespace pan {

// One branchpoint or choose site.  `static_name` is the site's name= keyword
// argument when it is a string literal, else empty.
struct SiteInfo {
    int id = -1;
    bool is_choose = false;
    std::string fn;
    std::string static_name;
    Span span;
};

// Continuation expression: how a terminator names its successor.  A Ref picks
// a continuation already bound in the environment (continue/break/ifelse/
// loop_rest/return); a Make closes a block over freshly bound continuations.
struct ContExpr;
using ContExprPtr = std::shared_ptr<const ContExpr>;
struct ContExpr {
    bool is_ref = false;
    std::string name;  // Ref: environment binding name
    int block = -1;    // Make: target block id within the same function
    std::vector<std::pair<std::string, ContExprPtr>> binds;  // Make: new bindings
};

inline ContExprPtr cont_ref(std::string name) {
    auto ce = std::make_shared<ContExpr>();
    ce->is_ref = true;
    ce->name = std::move(name);
    return ce;
}

inline ContExprPtr cont_make(int block, std::vector<std::pair<std::string, ContExprPtr>> binds = {}) {
    auto ce = std::make_shared<ContExpr>();
    ce->block = block;
    ce->binds = std::move(binds);
    return ce;
}

struct Instr {
    enum class K { Exec, PushIter, PopIter };
    K k = K::Exec;
    NodePtr node;  // Exec: the statement; PushIter: the iterable expression
};

struct Terminator {
    enum class K { Tail, Cond, ForStep, Yield, CallFn, Return, Finish, Kill };
    K k = K::Tail;
    ContExprPtr cont;  // Tail target / Cond then / ForStep body / Yield rest / CallFn rest
    ContExprPtr alt;   // Cond else / ForStep exhaustion exit
    NodePtr expr;      // Cond condition / Return-Finish-Kill payload (may be null)
    int site = -1;         // Yield: site id
    int slot = -1;         // Yield: result slot; CallFn: return-value slot
    int choices_slot = -1; // Yield at a choose site: slot holding the choices
    KwArgs kwargs;         // Yield: site keyword arguments (unevaluated)
    std::string var;       // ForStep: loop variable
    std::string callee;    // CallFn: target function name
    NodeList args;         // CallFn: argument expressions
};

struct Block {
    int id = -1;
    std::string label;
    std::vector<Instr> instrs;
    Terminator term;
};

struct CompiledFunction {
    std::string name;
    std::vector<std::string> params;
    std::vector<Block> blocks;  // block 0 is the function entry
};

struct CompiledSpace {
    std::string entry;
    std::vector<CompiledFunction> fns;
    std::map<std::string, int> fn_index;
    std::vector<SiteInfo> sites;
    std::shared_ptr<const Program> program;  // normalized source; owns the AST nodes

    const CompiledFunction& fn(const std::string& name) const {
        auto it = fn_index.find(name);
        if (it == fn_index.end()) throw EngineError("InternalError", "unknown compiled function " + name);
        return fns[it->second];
    }
    bool has_fn(const std::string& name) const { return fn_index.count(name) != 0; }
};

namespace detail {

inline bool node_is_site(NodeKind k) {
    return k == NodeKind::Branchpoint || k == NodeKind::Choose || k == NodeKind::Searchover;
}

inline bool contains_site(const NodePtr& n) {
    if (!n) return false;
    if (node_is_site(n->kind)) return true;
    if (contains_site(n->a) || contains_site(n->b)) return true;
    for (const auto& c : n->body)
        if (contains_site(c)) return true;
    for (const auto& c : n->orelse)
        if (contains_site(c)) return true;
    for (const auto& [k, v] : n->kwargs)
        if (contains_site(v)) return true;
    return false;
}

// A return/finish marker anywhere inside `n` escapes every enclosing
// statement (kill markers do not: they abort the branch via a signal).
inline bool has_escaping_return(const NodePtr& n) {
    if (!n) return false;
    if (n->kind == NodeKind::ReturnCallback) return true;
    if (n->kind == NodeKind::FinishCallback && !n->killed) return true;
    for (const auto& c : n->body)
        if (has_escaping_return(c)) return true;
    for (const auto& c : n->orelse)
        if (has_escaping_return(c)) return true;
    return false;
}

// Break/continue markers escape `n` unless a loop inside `n` encloses them.
inline bool has_escaping_loopctl(const NodePtr& n) {
    if (!n) return false;
    if (n->kind == NodeKind::BreakCallback || n->kind == NodeKind::ContinueCallback) return true;
    if (n->kind == NodeKind::While || n->kind == NodeKind::ForIn) return false;  // captured
    for (const auto& c : n->body)
        if (has_escaping_loopctl(c)) return true;
    for (const auto& c : n->orelse)
        if (has_escaping_loopctl(c)) return true;
    return false;
}

// Branchy statements cannot run as single instructions: they contain a yield
// site or transfer control out of themselves.
inline bool is_branchy_stmt(const NodePtr& s) {
    switch (s->kind) {
        case NodeKind::TempAssign:
            return s->a && node_is_site(s->a->kind);
        case NodeKind::If:
            return contains_site(s) || has_escaping_return(s) || has_escaping_loopctl(s);
        case NodeKind::While:
        case NodeKind::ForIn:
            return contains_site(s) || has_escaping_return(s);
        default:
            return false;
    }
}

class FnCompiler {
public:
    FnCompiler(const Node& fn, const Program& prog, std::vector<SiteInfo>& sites)
        : fn_(fn), prog_(prog), sites_(sites) {
        out_.name = fn.name;
        out_.params = fn.params;
    }

    CompiledFunction compile() {
        int entry = compile_block(fn_.body, 0);
        (void)entry;  // always 0: first allocation
        // Label assignment: entry, then bp#<site> for yield rest blocks,
        // L<id> otherwise.
        for (auto& b : out_.blocks) b.label = "L" + std::to_string(b.id);
        out_.blocks[0].label = "entry";
        for (const auto& b : out_.blocks) {
            if (b.term.k == Terminator::K::Yield && b.term.cont && !b.term.cont->is_ref) {
                auto& target = out_.blocks[b.term.cont->block];
                if (target.id != 0) target.label = "bp#" + std::to_string(b.term.site);
            }
        }
        return std::move(out_);
    }

private:
    int new_block() {
        int id = static_cast<int>(out_.blocks.size());
        Block b;
        b.id = id;
        out_.blocks.push_back(std::move(b));
        return id;
    }

    void set_block(int id, std::vector<Instr> instrs, Terminator term) {
        out_.blocks[id].instrs = std::move(instrs);
        out_.blocks[id].term = std::move(term);
    }

    int add_site(bool is_choose, const KwArgs& kwargs, Span span) {
        SiteInfo s;
        s.id = static_cast<int>(sites_.size());
        s.is_choose = is_choose;
        s.fn = fn_.name;
        s.span = span;
        for (const auto& [k, v] : kwargs) {
            if (k == "name" && v->kind == NodeKind::Literal && v->lit.is_str())
                s.static_name = v->lit.as_str();
        }
        sites_.push_back(std::move(s));
        return sites_.back().id;
    }

    // Compile stmts[i..] into a fresh block; returns its id.
    int compile_block(const NodeList& stmts, std::size_t i) {
        int id = new_block();
        std::vector<Instr> instrs;
        for (; i < stmts.size(); ++i) {
            const NodePtr& s = stmts[i];
            switch (s->kind) {
                case NodeKind::ContinueCallback:
                    set_block(id, std::move(instrs), make_tail(cont_ref("continue")));
                    return id;
                case NodeKind::BreakCallback:
                    set_block(id, std::move(instrs), make_tail(cont_ref("break")));
                    return id;
                case NodeKind::IfElseCallback:
                    set_block(id, std::move(instrs), make_tail(cont_ref("ifelse")));
                    return id;
                case NodeKind::ReturnCallback: {
                    Terminator t;
                    t.k = Terminator::K::Return;
                    t.expr = s->a;
                    set_block(id, std::move(instrs), std::move(t));
                    return id;
                }
                case NodeKind::FinishCallback: {
                    Terminator t;
                    t.k = s->killed ? Terminator::K::Kill : Terminator::K::Finish;
                    t.expr = s->a;
                    set_block(id, std::move(instrs), std::move(t));
                    return id;
                }
                default:
                    break;
            }
            if (is_branchy_stmt(s)) {
                compile_branchy(id, std::move(instrs), s, stmts, i + 1);
                return id;
            }
            instrs.push_back({Instr::K::Exec, s});
        }
        throw CompileError("internal: statement list does not end in a terminal marker");
    }

    // The continuation entering stmts[i..]; bare control markers collapse to
    // environment references instead of one-transfer blocks.
    ContExprPtr compile_rest(const NodeList& stmts, std::size_t i) {
        if (i < stmts.size()) {
            switch (stmts[i]->kind) {
                case NodeKind::ContinueCallback: return cont_ref("continue");
                case NodeKind::BreakCallback: return cont_ref("break");
                case NodeKind::IfElseCallback: return cont_ref("ifelse");
                default: break;
            }
        }
        return cont_make(compile_block(stmts, i));
    }

    static Terminator make_tail(ContExprPtr ce) {
        Terminator t;
        t.k = Terminator::K::Tail;
        t.cont = std::move(ce);
        return t;
    }

    void compile_branchy(int id, std::vector<Instr> instrs, const NodePtr& s, const NodeList& stmts,
                         std::size_t rest_from) {
        switch (s->kind) {
            case NodeKind::TempAssign: {
                const NodePtr& site = s->a;
                if (site->kind == NodeKind::Branchpoint || site->kind == NodeKind::Choose) {
                    bool is_choose = site->kind == NodeKind::Choose;
                    Terminator t;
                    t.k = Terminator::K::Yield;
                    t.site = add_site(is_choose, site->kwargs, site->span);
                    t.slot = s->slot;
                    t.kwargs = site->kwargs;
                    if (is_choose) {
                        if (!site->a || site->a->kind != NodeKind::TmpRef)
                            throw CompileError("internal: choose site not in normal form", site->span);
                        t.choices_slot = site->a->slot;
                    }
                    t.cont = compile_rest(stmts, rest_from);
                    set_block(id, std::move(instrs), std::move(t));
                    return;
                }
                // searchover
                const NodePtr& call = site->a;
                if (!prog_.find_function(call->name)) {
                    throw CompileError("searchover target is not a workflow function: " + call->name,
                                       site->span);
                }
                Terminator t;
                t.k = Terminator::K::CallFn;
                t.callee = call->name;
                t.args = call->body;
                t.slot = s->slot;
                t.cont = compile_rest(stmts, rest_from);
                set_block(id, std::move(instrs), std::move(t));
                return;
            }
            case NodeKind::If: {
                int then_id = compile_block(s->body, 0);
                int else_id = compile_block(s->orelse, 0);
                ContExprPtr rest = compile_rest(stmts, rest_from);
                Terminator t;
                t.k = Terminator::K::Cond;
                t.expr = s->a;
                t.cont = cont_make(then_id, {{"ifelse", rest}});
                t.alt = cont_make(else_id, {{"ifelse", rest}});
                set_block(id, std::move(instrs), std::move(t));
                return;
            }
            case NodeKind::While: {
                if (contains_site(s->a))
                    throw CompileError("branchpoint in loop condition", s->a->span);
                int hdr = new_block();
                int body_id = compile_block(s->body, 0);
                Terminator ht;
                ht.k = Terminator::K::Cond;
                ht.expr = s->a;
                ht.cont = cont_make(body_id, {{"continue", cont_make(hdr)}, {"break", cont_ref("loop_rest")}});
                ht.alt = cont_ref("loop_rest");
                set_block(hdr, {}, std::move(ht));
                ContExprPtr rest = compile_rest(stmts, rest_from);
                set_block(id, std::move(instrs), make_tail(cont_make(hdr, {{"loop_rest", rest}})));
                return;
            }
            case NodeKind::ForIn: {
                instrs.push_back({Instr::K::PushIter, s->a});
                int hdr = new_block();
                int brk = new_block();
                int body_id = compile_block(s->body, 0);
                Terminator ht;
                ht.k = Terminator::K::ForStep;
                ht.var = s->name;
                ht.cont = cont_make(body_id, {{"continue", cont_make(hdr)}, {"break", cont_make(brk)}});
                ht.alt = cont_ref("loop_rest");
                set_block(hdr, {}, std::move(ht));
                set_block(brk, {{Instr::K::PopIter, nullptr}}, make_tail(cont_ref("loop_rest")));
                ContExprPtr rest = compile_rest(stmts, rest_from);
                set_block(id, std::move(instrs), make_tail(cont_make(hdr, {{"loop_rest", rest}})));
                return;
            }
            default:
                throw CompileError("internal: unexpected branchy statement");
        }
    }

    const Node& fn_;
    const Program& prog_;
    std::vector<SiteInfo>& sites_;
    CompiledFunction out_;
};

}  // namespace detail

// Compiles a preprocessed program.  Deterministic: identical inputs give
// structurally identical spaces.
inline CompiledSpace compile_program(std::shared_ptr<const Program> prog, const std::string& entry) {
    CompiledSpace space;
    space.entry = entry;
    space.program = prog;
    if (!prog->find_function(entry)) throw CompileError("unknown entry function: " + entry);
    for (const auto& fn : prog->functions) {
        detail::FnCompiler fc(*fn, *prog, space.sites);
        space.fn_index.emplace(fn->name, static_cast<int>(space.fns.size()));
        space.fns.push_back(fc.compile());
    }
    return space;
}

// ---------------------------------------------------------------------------
// Stable textual emission of the block graph.

namespace detail {

inline void emit_cont(std::ostream& os, const ContExprPtr& ce, const CompiledFunction& fn) {
    if (ce->is_ref) {
        os << "^" << ce->name;
        return;
    }
    os << fn.blocks[ce->block].label << "[";
    bool first = true;
    for (const auto& [k, v] : ce->binds) {
        if (!first) os << ", ";
        first = false;
        os << k << "=";
        emit_cont(os, v, fn);
    }
    os << "]";
}

inline void emit_indented(std::ostream& os, const std::string& text, const std::string& pad) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) os << pad << line << "\n";
}

}  // namespace detail

inline std::string emit_cps(const CompiledSpace& space) {
    std::ostringstream os;
    os << "space entry=" << space.entry << " fns=" << space.fns.size() << " sites="
       << space.sites.size() << "\n";
    for (const auto& s : space.sites) {
        os << "site bp#" << s.id << " kind=" << (s.is_choose ? "choose" : "branchpoint") << " fn="
           << s.fn;
        if (!s.static_name.empty()) os << " name=\"" << s.static_name << "\"";
        os << " span=" << s.span.begin << ".." << s.span.end << "\n";
    }
    for (const auto& fn : space.fns) {
        os << "\nfn " << fn.name << "(";
        for (std::size_t i = 0; i < fn.params.size(); ++i) {
            if (i) os << ", ";
            os << fn.params[i];
        }
        os << "):\n";
        for (const auto& b : fn.blocks) {
            os << "  " << b.label << ":\n";
            for (const auto& ins : b.instrs) {
                switch (ins.k) {
                    case Instr::K::Exec:
                        detail::emit_indented(os, pretty_stmt(*ins.node), "    ");
                        break;
                    case Instr::K::PushIter:
                        os << "    push_iter " << pretty_expr(*ins.node) << "\n";
                        break;
                    case Instr::K::PopIter:
                        os << "    pop_iter\n";
                        break;
                }
            }
            const Terminator& t = b.term;
            os << "    ";
            switch (t.k) {
                case Terminator::K::Tail:
                    os << "tail ";
                    detail::emit_cont(os, t.cont, fn);
                    break;
                case Terminator::K::Cond:
                    os << "cond " << pretty_expr(*t.expr) << " ? ";
                    detail::emit_cont(os, t.cont, fn);
                    os << " : ";
                    detail::emit_cont(os, t.alt, fn);
                    break;
                case Terminator::K::ForStep:
                    os << "fornext " << t.var << " ? ";
                    detail::emit_cont(os, t.cont, fn);
                    os << " : ";
                    detail::emit_cont(os, t.alt, fn);
                    break;
                case Terminator::K::Yield: {
                    os << "yield bp#" << t.site;
                    if (t.choices_slot >= 0) os << " choices=tmp[" << t.choices_slot << "]";
                    os << " -> tmp[" << t.slot << "]";
                    for (const auto& [k, v] : t.kwargs) os << " kw " << k << "=" << pretty_expr(*v);
                    os << " rest=";
                    detail::emit_cont(os, t.cont, fn);
                    break;
                }
                case Terminator::K::CallFn: {
                    os << "call " << t.callee << "(";
                    for (std::size_t i = 0; i < t.args.size(); ++i) {
                        if (i) os << ", ";
                        os << pretty_expr(*t.args[i]);
                    }
                    os << ") -> tmp[" << t.slot << "] rest=";
                    detail::emit_cont(os, t.cont, fn);
                    break;
                }
                case Terminator::K::Return:
                    os << "return";
                    if (t.expr) os << " " << pretty_expr(*t.expr);
                    break;
                case Terminator::K::Finish:
                    os << "finish";
                    if (t.expr) os << " " << pretty_expr(*t.expr);
                    break;
                case Terminator::K::Kill:
                    os << "killed";
                    if (t.expr) os << " " << pretty_expr(*t.expr);
                    break;
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace pan
