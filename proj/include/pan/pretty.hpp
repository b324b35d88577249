// pretty.hpp - canonical pretty-printer for surface and normalized ASTs.
// Surface output re-parses to a structurally equal AST (round-trip property);
// normalized-only nodes print in a stable marker notation for golden tests.
#pragma once

#include <sstream>
#include <string>

#include "pan/ast.hpp"

namespace pan {

namespace detail {

class Printer {
public:
    std::string print(const Program& prog) {
        for (size_t i = 0; i < prog.functions.size(); ++i) {
            if (i) os_ << "\n";
            print_fn(*prog.functions[i]);
        }
        return os_.str();
    }

    std::string print_expr_str(const Node& e) {
        print_expr(e, 0);
        return os_.str();
    }

    std::string print_stmt_str(const Node& s) {
        print_stmt(s);
        std::string out = os_.str();
        if (!out.empty() && out.back() == '\n') out.pop_back();
        // strip leading indentation of the first line only (none at depth 0)
        return out;
    }

private:
    void print_fn(const Node& fn) {
        os_ << "fn " << fn.name << "(";
        for (size_t i = 0; i < fn.params.size(); ++i) {
            if (i) os_ << ", ";
            os_ << fn.params[i];
        }
        os_ << ") ";
        print_block(fn.body);
        os_ << "\n";
    }

    void print_block(const NodeList& stmts) {
        if (stmts.empty()) {
            os_ << "{}";
            return;
        }
        os_ << "{\n";
        ++depth_;
        for (const auto& s : stmts) print_stmt(*s);
        --depth_;
        indent();
        os_ << "}";
    }

    void indent() {
        for (int i = 0; i < depth_; ++i) os_ << "    ";
    }

    void print_stmt(const Node& s) {
        indent();
        switch (s.kind) {
            case NodeKind::Assign:
                print_expr(*s.a, 0);
                os_ << " = ";
                print_expr(*s.b, 0);
                break;
            case NodeKind::NoCopyDecl: os_ << "nocopy " << s.name; break;
            case NodeKind::NeedsCopyDecl: os_ << "needscopy " << s.name; break;
            case NodeKind::If:
                os_ << "if ";
                print_expr(*s.a, 0);
                os_ << " ";
                print_block(s.body);
                if (!s.orelse.empty()) {
                    os_ << " else ";
                    print_block(s.orelse);
                }
                break;
            case NodeKind::While:
                os_ << "while ";
                print_expr(*s.a, 0);
                os_ << " ";
                print_block(s.body);
                break;
            case NodeKind::ForIn:
                os_ << "for " << s.name << " in ";
                print_expr(*s.a, 0);
                os_ << " ";
                print_block(s.body);
                break;
            case NodeKind::Break: os_ << "break"; break;
            case NodeKind::Continue: os_ << "continue"; break;
            case NodeKind::Return:
                os_ << "return";
                if (s.a) {
                    os_ << " ";
                    print_expr(*s.a, 0);
                }
                break;
            case NodeKind::ExprStmt: print_expr(*s.a, 0); break;
            case NodeKind::RecordScore:
                os_ << "record_score(";
                print_expr(*s.a, 0);
                os_ << ")";
                break;
            case NodeKind::RecordScoreGroup:
                os_ << "record_score(" << s.name << ", ";
                print_expr(*s.a, 0);
                if (s.b) {
                    os_ << ", label=";
                    print_expr(*s.b, 0);
                }
                os_ << ")";
                break;
            case NodeKind::RecordCosts:
                os_ << "record_costs(";
                print_kwargs(s.kwargs, false);
                os_ << ")";
                break;
            case NodeKind::EarlyStop: os_ << "early_stop()"; break;
            case NodeKind::KillBranch:
                os_ << "kill_branch(";
                if (s.a) print_expr(*s.a, 0);
                os_ << ")";
                break;
            case NodeKind::OptionalReturn:
                os_ << "optional_return(";
                print_expr(*s.a, 0);
                os_ << ")";
                break;
            // --- normalized markers ---
            case NodeKind::TempAssign:
                os_ << "tmp[" << s.slot << "] = ";
                print_expr(*s.a, 0);
                break;
            case NodeKind::ChoicesMaterialize:
                os_ << "tmp[" << s.slot << "] = choices(";
                print_expr(*s.a, 0);
                os_ << ")";
                break;
            case NodeKind::ClearTemps:
                os_ << "clear_tmp(";
                for (size_t i = 0; i < s.slots.size(); ++i) {
                    if (i) os_ << ", ";
                    os_ << s.slots[i];
                }
                os_ << ")";
                break;
            case NodeKind::FinishCallback:
                os_ << "finish_callback(";
                if (s.a) print_expr(*s.a, 0);
                if (s.killed) os_ << (s.a ? ", " : "") << "killed=true";
                os_ << ")";
                break;
            case NodeKind::ContinueCallback: os_ << "continue_callback()"; break;
            case NodeKind::BreakCallback: os_ << "break_callback()"; break;
            case NodeKind::IfElseCallback: os_ << "if_else_callback()"; break;
            case NodeKind::ReturnCallback:
                os_ << "return_callback(";
                if (s.a) print_expr(*s.a, 0);
                os_ << ")";
                break;
            case NodeKind::InfoSet:
                os_ << "info[" << s.name << "] = ";
                print_expr(*s.a, 0);
                break;
            case NodeKind::InfoCosts:
                os_ << "info[costs] += (";
                print_kwargs(s.kwargs, false);
                os_ << ")";
                break;
            case NodeKind::InfoNoCopyAdd: os_ << "info[nocopy] += \"" << s.name << "\""; break;
            case NodeKind::InfoNoCopyRemove: os_ << "info[nocopy] -= \"" << s.name << "\""; break;
            default:
                os_ << "<?stmt>";
        }
        os_ << "\n";
    }

    // Precedence levels: Or=1 And=2 Cmp=3 Add=4 Mul=5 Unary=6 Postfix=7.
    static int level(BinOpKind op) {
        switch (op) {
            case BinOpKind::Or: return 1;
            case BinOpKind::And: return 2;
            case BinOpKind::Eq: case BinOpKind::Ne:
            case BinOpKind::Lt: case BinOpKind::Le:
            case BinOpKind::Gt: case BinOpKind::Ge: return 3;
            case BinOpKind::Add: case BinOpKind::Sub: return 4;
            default: return 5;
        }
    }

    static const char* op_text(BinOpKind op) {
        switch (op) {
            case BinOpKind::Add: return "+";
            case BinOpKind::Sub: return "-";
            case BinOpKind::Mul: return "*";
            case BinOpKind::Div: return "/";
            case BinOpKind::Mod: return "%";
            case BinOpKind::Eq: return "==";
            case BinOpKind::Ne: return "!=";
            case BinOpKind::Lt: return "<";
            case BinOpKind::Le: return "<=";
            case BinOpKind::Gt: return ">";
            case BinOpKind::Ge: return ">=";
            case BinOpKind::And: return "and";
            case BinOpKind::Or: return "or";
        }
        return "?";
    }

    void print_expr(const Node& e, int min_level) {
        switch (e.kind) {
            case NodeKind::Literal: os_ << e.lit.repr(); break;
            case NodeKind::Name: os_ << e.name; break;
            case NodeKind::TmpRef: os_ << "tmp[" << e.slot << "]"; break;
            case NodeKind::BinOp: {
                int lv = level(e.binop);
                bool parens = lv < min_level;
                if (parens) os_ << "(";
                print_expr(*e.a, lv);
                os_ << " " << op_text(e.binop) << " ";
                print_expr(*e.b, lv + 1);  // left-associative
                if (parens) os_ << ")";
                break;
            }
            case NodeKind::UnaryOp: {
                bool parens = 6 < min_level;
                if (parens) os_ << "(";
                os_ << (e.unop == UnaryOpKind::Neg ? "-" : "!");
                print_expr(*e.a, 6);
                if (parens) os_ << ")";
                break;
            }
            case NodeKind::Index:
                print_expr(*e.a, 7);
                os_ << "[";
                print_expr(*e.b, 0);
                os_ << "]";
                break;
            case NodeKind::Call:
                os_ << e.name << "(";
                print_args(e.body, e.kwargs);
                os_ << ")";
                break;
            case NodeKind::ListLit:
                os_ << "[";
                for (size_t i = 0; i < e.body.size(); ++i) {
                    if (i) os_ << ", ";
                    print_expr(*e.body[i], 0);
                }
                os_ << "]";
                break;
            case NodeKind::MapLit:
                os_ << "{";
                for (size_t i = 0; i < e.kwargs.size(); ++i) {
                    if (i) os_ << ", ";
                    os_ << Value(e.kwargs[i].first).repr() << ": ";
                    print_expr(*e.kwargs[i].second, 0);
                }
                os_ << "}";
                break;
            case NodeKind::Branchpoint:
                os_ << "branchpoint(";
                print_kwargs(e.kwargs, false);
                os_ << ")";
                break;
            case NodeKind::Choose:
                os_ << "choose(";
                print_expr(*e.a, 0);
                print_kwargs(e.kwargs, true);
                os_ << ")";
                break;
            case NodeKind::Protect:
                os_ << "protect(";
                print_expr(*e.a, 0);
                os_ << ", " << Value(e.str_val).repr();
                if (e.b) {
                    os_ << ", ";
                    print_expr(*e.b, 0);
                }
                os_ << ")";
                break;
            case NodeKind::Searchover:
                os_ << "searchover(";
                print_expr(*e.a, 0);
                os_ << ")";
                break;
            case NodeKind::Perform:
                os_ << "perform(" << Value(e.str_val).repr();
                for (const auto& arg : e.body) {
                    os_ << ", ";
                    print_expr(*arg, 0);
                }
                print_kwargs(e.kwargs, true);
                os_ << ")";
                break;
            case NodeKind::ScoreDbSubmit:
                os_ << "scoredb_submit(";
                print_expr(*e.a, 0);
                os_ << ")";
                break;
            case NodeKind::ScoreDbGroupSubmit:
                os_ << "scoredb_submit_group(" << e.name << ", ";
                print_expr(*e.a, 0);
                os_ << ", label=";
                print_expr(*e.b, 0);
                os_ << ")";
                break;
            default:
                os_ << "<?expr>";
        }
    }

    void print_args(const NodeList& args, const KwArgs& kwargs) {
        bool first = true;
        for (const auto& a : args) {
            if (!first) os_ << ", ";
            first = false;
            print_expr(*a, 0);
        }
        for (const auto& [k, v] : kwargs) {
            if (!first) os_ << ", ";
            first = false;
            os_ << k << "=";
            print_expr(*v, 0);
        }
    }

    // leading_comma: emit ", " before the first kwarg (after a positional arg)
    void print_kwargs(const KwArgs& kwargs, bool leading_comma) {
        bool first = true;
        for (const auto& [k, v] : kwargs) {
            if (!first || leading_comma) os_ << ", ";
            first = false;
            os_ << k << "=";
            print_expr(*v, 0);
        }
    }

    std::ostringstream os_;
    int depth_ = 0;
};

}  // namespace detail

inline std::string pretty_print(const Program& prog) {
    return detail::Printer().print(prog);
}

inline std::string pretty_expr(const Node& e) {
    return detail::Printer().print_expr_str(e);
}

inline std::string pretty_stmt(const Node& s) {
    return detail::Printer().print_stmt_str(s);
}

}  // namespace pan
