// validate.hpp - structural checks over a parsed program, reported as
// diagnostics (never thrown): loop-only break/continue, searchover and
// group-evaluator targets resolve, unique function names, call arity.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "pan/ast.hpp"
#include "pan/builtin_names.hpp"

namespace pan {

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity;
    std::string message;
    Span span;
};

namespace detail {

class Validator {
public:
    explicit Validator(const Program& prog) : prog_(prog) {}

    std::vector<Diagnostic> run() {
        std::set<std::string> seen;
        for (const auto& fn : prog_.functions) {
            if (!seen.insert(fn->name).second) {
                error("duplicate function name '" + fn->name + "'", fn->span);
            }
        }
        for (const auto& fn : prog_.functions) {
            check_body(fn->body, /*loop_depth=*/0);
        }
        return std::move(diags_);
    }

private:
    void error(std::string msg, Span span) {
        diags_.push_back({Severity::Error, std::move(msg), span});
    }

    void check_body(const NodeList& stmts, int loop_depth) {
        for (const auto& s : stmts) check_stmt(*s, loop_depth);
    }

    void check_stmt(const Node& s, int loop_depth) {
        switch (s.kind) {
            case NodeKind::Break:
                if (loop_depth == 0) error("break outside loop", s.span);
                break;
            case NodeKind::Continue:
                if (loop_depth == 0) error("continue outside loop", s.span);
                break;
            case NodeKind::If:
                check_expr(*s.a);
                check_body(s.body, loop_depth);
                check_body(s.orelse, loop_depth);
                break;
            case NodeKind::While:
                check_expr(*s.a);
                check_body(s.body, loop_depth + 1);
                break;
            case NodeKind::ForIn:
                check_expr(*s.a);
                check_body(s.body, loop_depth + 1);
                break;
            case NodeKind::Assign:
                check_expr(*s.a);
                check_expr(*s.b);
                break;
            case NodeKind::Return:
            case NodeKind::ExprStmt:
            case NodeKind::KillBranch:
            case NodeKind::OptionalReturn:
            case NodeKind::RecordScore:
                if (s.a) check_expr(*s.a);
                break;
            case NodeKind::RecordScoreGroup: {
                if (!prog_.find_function(s.name)) {
                    error("unknown function " + s.name, s.span);
                }
                check_expr(*s.a);
                if (s.b) check_expr(*s.b);
                break;
            }
            case NodeKind::RecordCosts:
                for (const auto& [k, v] : s.kwargs) check_expr(*v);
                break;
            default:
                break;  // declarations and markers carry nothing to check
        }
    }

    void check_expr(const Node& e) {
        switch (e.kind) {
            case NodeKind::Searchover: {
                const Node& call = *e.a;
                const Node* target = prog_.find_function(call.name);
                if (!target) {
                    error("unknown function " + call.name, call.span);
                } else if (target->params.size() != call.body.size()) {
                    error("function " + call.name + " takes " +
                              std::to_string(target->params.size()) + " arguments, got " +
                              std::to_string(call.body.size()),
                          call.span);
                }
                for (const auto& arg : call.body) check_expr(*arg);
                break;
            }
            case NodeKind::Call: {
                const Node* target = prog_.find_function(e.name);
                if (target) {
                    if (target->params.size() != e.body.size()) {
                        error("function " + e.name + " takes " +
                                  std::to_string(target->params.size()) + " arguments, got " +
                                  std::to_string(e.body.size()),
                              e.span);
                    }
                } else if (!is_builtin_name(e.name)) {
                    error("unknown function " + e.name, e.span);
                }
                for (const auto& arg : e.body) check_expr(*arg);
                break;
            }
            case NodeKind::BinOp:
            case NodeKind::Index:
                check_expr(*e.a);
                check_expr(*e.b);
                break;
            case NodeKind::UnaryOp:
            case NodeKind::Choose:
                check_expr(*e.a);
                for (const auto& [k, v] : e.kwargs) check_expr(*v);
                break;
            case NodeKind::Protect:
                check_expr(*e.a);
                if (e.b) check_expr(*e.b);
                break;
            case NodeKind::Branchpoint:
                for (const auto& [k, v] : e.kwargs) check_expr(*v);
                break;
            case NodeKind::Perform:
                for (const auto& arg : e.body) check_expr(*arg);
                for (const auto& [k, v] : e.kwargs) check_expr(*v);
                break;
            case NodeKind::ListLit:
                for (const auto& item : e.body) check_expr(*item);
                break;
            case NodeKind::MapLit:
                for (const auto& [k, v] : e.kwargs) check_expr(*v);
                break;
            default:
                break;
        }
    }

    const Program& prog_;
    std::vector<Diagnostic> diags_;
};

}  // namespace detail

inline std::vector<Diagnostic> validate(const Program& prog) {
    return detail::Validator(prog).run();
}

}  // namespace pan
