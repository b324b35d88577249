// parser.hpp - recursive-descent parser producing the PanScript AST
#pragma once

#include <string>
#include <vector>

#include "pan/ast.hpp"
#include "pan/errors.hpp"
#include "pan/lexer.hpp"

namespace pan {

namespace detail {

class Parser {
public:
    Parser(std::vector<Token> toks, std::string path, std::string text)
        : toks_(std::move(toks)), path_(std::move(path)), text_(std::move(text)) {}

    Program parse() {
        Program prog;
        prog.path = path_;
        prog.text = text_;
        while (!at_end()) {
            prog.functions.push_back(parse_fndef());
        }
        return prog;
    }

private:
    const Token& cur() const { return toks_[pos_]; }
    const Token& peek(size_t k = 1) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    bool at_end() const { return cur().kind == Tok::End; }
    Token advance() { return toks_[pos_++]; }

    bool check(Tok k) const { return cur().kind == k; }
    bool check_kw(const char* w) const { return cur().kind == Tok::Keyword && cur().text == w; }
    bool check_prim(const char* w) const { return cur().kind == Tok::Prim && cur().text == w; }

    bool accept(Tok k) {
        if (!check(k)) return false;
        ++pos_;
        return true;
    }

    Token expect(Tok k, const char* what) {
        if (!check(k)) fail(std::string("expected ") + what);
        return advance();
    }

    void expect_kw(const char* w) {
        if (!check_kw(w)) fail(std::string("expected '") + w + "'");
        ++pos_;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        std::string got = at_end() ? "end of input" : describe(cur());
        throw ParseError(msg + ", got " + got, cur().span);
    }

    static std::string describe(const Token& t) {
        switch (t.kind) {
            case Tok::Int: case Tok::Float: return "number '" + t.text + "'";
            case Tok::Str: return "string";
            case Tok::Name: return "'" + t.text + "'";
            case Tok::Keyword: case Tok::Prim: return "'" + t.text + "'";
            case Tok::End: return "end of input";
            default: return "'" + t.text + "'";
        }
    }

    // ---- declarations ----

    NodePtr parse_fndef() {
        size_t begin = cur().span.begin;
        expect_kw("fn");
        Token name = expect(Tok::Name, "function name");
        auto fn = make_node(NodeKind::FunctionDef, {begin, name.span.end});
        fn->name = name.text;
        expect(Tok::LParen, "'('");
        if (!check(Tok::RParen)) {
            do {
                fn->params.push_back(expect(Tok::Name, "parameter name").text);
            } while (accept(Tok::Comma));
        }
        expect(Tok::RParen, "')'");
        fn->body = parse_block();
        fn->span.end = prev_end_;
        return fn;
    }

    NodeList parse_block() {
        expect(Tok::LBrace, "'{'");
        NodeList stmts;
        while (!check(Tok::RBrace)) {
            if (at_end()) fail("expected '}'");
            stmts.push_back(parse_stmt());
        }
        prev_end_ = cur().span.end;
        advance();  // consume }
        return stmts;
    }

    // ---- statements ----

    NodePtr parse_stmt() {
        size_t begin = cur().span.begin;
        if (check_kw("nocopy") || check_kw("needscopy")) {
            bool no = cur().text == "nocopy";
            advance();
            Token name = expect(Tok::Name, "variable name");
            auto n = make_node(no ? NodeKind::NoCopyDecl : NodeKind::NeedsCopyDecl,
                               {begin, name.span.end});
            n->name = name.text;
            return n;
        }
        if (check_kw("if")) return parse_if();
        if (check_kw("while")) {
            advance();
            auto n = make_node(NodeKind::While, {begin, begin});
            n->a = parse_expr();
            n->body = parse_block();
            n->span.end = prev_end_;
            return n;
        }
        if (check_kw("for")) {
            advance();
            auto n = make_node(NodeKind::ForIn, {begin, begin});
            n->name = expect(Tok::Name, "loop variable").text;
            expect_kw("in");
            n->a = parse_expr();
            n->body = parse_block();
            n->span.end = prev_end_;
            return n;
        }
        if (check_kw("break")) {
            Token t = advance();
            return make_node(NodeKind::Break, t.span);
        }
        if (check_kw("continue")) {
            Token t = advance();
            return make_node(NodeKind::Continue, t.span);
        }
        if (check_kw("return")) {
            Token t = advance();
            auto n = make_node(NodeKind::Return, t.span);
            // A bare `return` is only unambiguous as the last statement of a
            // block (there are no statement separators).
            if (!check(Tok::RBrace)) {
                n->a = parse_expr();
                n->span.end = n->a->span.end;
            }
            return n;
        }
        if (cur().kind == Tok::Prim) {
            const std::string& p = cur().text;
            if (p == "record_score") return parse_record_score();
            if (p == "record_costs") {
                advance();
                auto n = make_node(NodeKind::RecordCosts, {begin, begin});
                expect(Tok::LParen, "'('");
                if (!check(Tok::RParen)) parse_kwargs_into(n->kwargs);
                n->span.end = expect(Tok::RParen, "')'").span.end;
                return n;
            }
            if (p == "early_stop") {
                advance();
                expect(Tok::LParen, "'('");
                Token t = expect(Tok::RParen, "')'");
                auto n = make_node(NodeKind::EarlyStop, {begin, t.span.end});
                return n;
            }
            if (p == "kill_branch") {
                advance();
                auto n = make_node(NodeKind::KillBranch, {begin, begin});
                expect(Tok::LParen, "'('");
                if (!check(Tok::RParen)) n->a = parse_expr();
                n->span.end = expect(Tok::RParen, "')'").span.end;
                return n;
            }
            if (p == "optional_return") {
                advance();
                auto n = make_node(NodeKind::OptionalReturn, {begin, begin});
                expect(Tok::LParen, "'('");
                n->a = parse_expr();
                n->span.end = expect(Tok::RParen, "')'").span.end;
                return n;
            }
            // branchpoint/choose/protect/searchover/perform fall through to
            // the expression-statement path.
        }
        // assignment or expression statement
        NodePtr e = parse_expr();
        if (check(Tok::Eq)) {
            if (!is_lvalue(e)) throw ParseError("invalid assignment target", e->span);
            advance();
            auto n = make_node(NodeKind::Assign, {begin, begin});
            n->a = e;
            n->b = parse_expr();
            n->span.end = n->b->span.end;
            return n;
        }
        auto n = make_node(NodeKind::ExprStmt, e->span);
        n->a = e;
        return n;
    }

    static bool is_lvalue(const NodePtr& e) {
        if (e->kind == NodeKind::Name) return true;
        if (e->kind == NodeKind::Index) return is_lvalue(e->a);
        return false;
    }

    NodePtr parse_if() {
        size_t begin = cur().span.begin;
        expect_kw("if");
        auto n = make_node(NodeKind::If, {begin, begin});
        n->a = parse_expr();
        n->body = parse_block();
        if (check_kw("else")) {
            advance();
            n->orelse = parse_block();
        }
        n->span.end = prev_end_;
        return n;
    }

    NodePtr parse_record_score() {
        size_t begin = cur().span.begin;
        advance();  // record_score
        expect(Tok::LParen, "'('");
        // Group form starts `record_score(NAME,` — a bare evaluator name
        // followed by a comma; otherwise it is the plain one-expression form.
        if (check(Tok::Name) && peek().kind == Tok::Comma) {
            auto n = make_node(NodeKind::RecordScoreGroup, {begin, begin});
            n->name = advance().text;
            expect(Tok::Comma, "','");
            n->a = parse_expr();
            if (accept(Tok::Comma)) {
                Token kw = expect(Tok::Name, "'label'");
                if (kw.text != "label") throw ParseError("expected 'label'", kw.span);
                expect(Tok::Eq, "'='");
                n->b = parse_expr();
            }
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        auto n = make_node(NodeKind::RecordScore, {begin, begin});
        n->a = parse_expr();
        n->span.end = expect(Tok::RParen, "')'").span.end;
        return n;
    }

    // ---- expressions ----

    NodePtr parse_expr() { return parse_or(); }

    NodePtr mk_bin(BinOpKind op, NodePtr lhs, NodePtr rhs) {
        auto n = make_node(NodeKind::BinOp, {lhs->span.begin, rhs->span.end});
        n->binop = op;
        n->a = std::move(lhs);
        n->b = std::move(rhs);
        return n;
    }

    NodePtr parse_or() {
        NodePtr e = parse_and();
        while (check(Tok::Or)) {
            advance();
            e = mk_bin(BinOpKind::Or, e, parse_and());
        }
        return e;
    }

    NodePtr parse_and() {
        NodePtr e = parse_cmp();
        while (check(Tok::And)) {
            advance();
            e = mk_bin(BinOpKind::And, e, parse_cmp());
        }
        return e;
    }

    NodePtr parse_cmp() {
        NodePtr e = parse_add();
        for (;;) {
            BinOpKind op;
            if (check(Tok::EqEq)) op = BinOpKind::Eq;
            else if (check(Tok::NotEq)) op = BinOpKind::Ne;
            else if (check(Tok::Lt)) op = BinOpKind::Lt;
            else if (check(Tok::LtEq)) op = BinOpKind::Le;
            else if (check(Tok::Gt)) op = BinOpKind::Gt;
            else if (check(Tok::GtEq)) op = BinOpKind::Ge;
            else break;
            advance();
            e = mk_bin(op, e, parse_add());
        }
        return e;
    }

    NodePtr parse_add() {
        NodePtr e = parse_mul();
        for (;;) {
            if (check(Tok::Plus)) { advance(); e = mk_bin(BinOpKind::Add, e, parse_mul()); }
            else if (check(Tok::Minus)) { advance(); e = mk_bin(BinOpKind::Sub, e, parse_mul()); }
            else break;
        }
        return e;
    }

    NodePtr parse_mul() {
        NodePtr e = parse_unary();
        for (;;) {
            if (check(Tok::Star)) { advance(); e = mk_bin(BinOpKind::Mul, e, parse_unary()); }
            else if (check(Tok::Slash)) { advance(); e = mk_bin(BinOpKind::Div, e, parse_unary()); }
            else if (check(Tok::Percent)) { advance(); e = mk_bin(BinOpKind::Mod, e, parse_unary()); }
            else break;
        }
        return e;
    }

    NodePtr parse_unary() {
        if (check(Tok::Minus) || check(Tok::Bang)) {
            Token t = advance();
            auto n = make_node(NodeKind::UnaryOp, t.span);
            n->unop = t.kind == Tok::Minus ? UnaryOpKind::Neg : UnaryOpKind::Not;
            n->a = parse_unary();
            n->span.end = n->a->span.end;
            return n;
        }
        return parse_postfix();
    }

    NodePtr parse_postfix() {
        NodePtr e = parse_primary();
        while (check(Tok::LBracket)) {
            advance();
            auto n = make_node(NodeKind::Index, {e->span.begin, 0});
            n->a = e;
            n->b = parse_expr();
            n->span.end = expect(Tok::RBracket, "']'").span.end;
            e = n;
        }
        return e;
    }

    NodePtr parse_primary() {
        size_t begin = cur().span.begin;
        if (check(Tok::Int)) {
            Token t = advance();
            auto n = make_node(NodeKind::Literal, t.span);
            n->lit = Value(t.int_value);
            return n;
        }
        if (check(Tok::Float)) {
            Token t = advance();
            auto n = make_node(NodeKind::Literal, t.span);
            n->lit = Value(t.float_value);
            return n;
        }
        if (check(Tok::Str)) {
            Token t = advance();
            auto n = make_node(NodeKind::Literal, t.span);
            n->lit = Value(t.text);
            return n;
        }
        if (check_kw("true") || check_kw("false")) {
            Token t = advance();
            auto n = make_node(NodeKind::Literal, t.span);
            n->lit = Value(t.text == "true");
            return n;
        }
        if (check_kw("null")) {
            Token t = advance();
            auto n = make_node(NodeKind::Literal, t.span);
            n->lit = Value::null();
            return n;
        }
        if (check(Tok::LParen)) {
            advance();
            NodePtr e = parse_expr();
            expect(Tok::RParen, "')'");
            return e;
        }
        if (check(Tok::LBracket)) {
            advance();
            auto n = make_node(NodeKind::ListLit, {begin, begin});
            if (!check(Tok::RBracket)) {
                do {
                    n->body.push_back(parse_expr());
                } while (accept(Tok::Comma));
            }
            n->span.end = expect(Tok::RBracket, "']'").span.end;
            return n;
        }
        if (check(Tok::LBrace)) {
            advance();
            auto n = make_node(NodeKind::MapLit, {begin, begin});
            if (!check(Tok::RBrace)) {
                do {
                    Token key = expect(Tok::Str, "string key");
                    expect(Tok::Colon, "':'");
                    n->kwargs.emplace_back(key.text, parse_expr());
                } while (accept(Tok::Comma));
            }
            n->span.end = expect(Tok::RBrace, "'}'").span.end;
            return n;
        }
        if (cur().kind == Tok::Prim) return parse_primitive_expr();
        if (check(Tok::Name)) {
            Token t = advance();
            if (check(Tok::LParen)) {
                auto n = make_node(NodeKind::Call, {begin, begin});
                n->name = t.text;
                advance();
                if (!check(Tok::RParen)) parse_args_into(n->body, nullptr);
                n->span.end = expect(Tok::RParen, "')'").span.end;
                return n;
            }
            auto n = make_node(NodeKind::Name, t.span);
            n->name = t.text;
            return n;
        }
        fail("expected expression");
    }

    NodePtr parse_primitive_expr() {
        size_t begin = cur().span.begin;
        const std::string p = cur().text;
        if (p == "branchpoint") {
            advance();
            auto n = make_node(NodeKind::Branchpoint, {begin, begin});
            expect(Tok::LParen, "'('");
            if (!check(Tok::RParen)) parse_kwargs_into(n->kwargs);
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        if (p == "choose") {
            advance();
            auto n = make_node(NodeKind::Choose, {begin, begin});
            expect(Tok::LParen, "'('");
            n->a = parse_expr();
            if (accept(Tok::Comma)) parse_kwargs_into(n->kwargs);
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        if (p == "protect") {
            advance();
            auto n = make_node(NodeKind::Protect, {begin, begin});
            expect(Tok::LParen, "'('");
            n->a = parse_expr();
            expect(Tok::Comma, "','");
            n->str_val = expect(Tok::Str, "error tag string").text;
            if (accept(Tok::Comma)) n->b = parse_expr();
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        if (p == "searchover") {
            advance();
            auto n = make_node(NodeKind::Searchover, {begin, begin});
            expect(Tok::LParen, "'('");
            Token callee = expect(Tok::Name, "function name");
            auto call = make_node(NodeKind::Call, callee.span);
            call->name = callee.text;
            expect(Tok::LParen, "'('");
            if (!check(Tok::RParen)) parse_args_into(call->body, nullptr);
            call->span.end = expect(Tok::RParen, "')'").span.end;
            n->a = call;
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        if (p == "perform") {
            advance();
            auto n = make_node(NodeKind::Perform, {begin, begin});
            expect(Tok::LParen, "'('");
            n->str_val = expect(Tok::Str, "operation name string").text;
            if (accept(Tok::Comma)) parse_args_into(n->body, &n->kwargs);
            n->span.end = expect(Tok::RParen, "')'").span.end;
            return n;
        }
        throw ParseError("'" + p + "' is a statement, not an expression", cur().span);
    }

    // args: positional expressions; kwargs (NAME=expr) allowed only when a
    // kwargs sink is supplied, and only after all positionals.
    void parse_args_into(NodeList& positional, KwArgs* kwargs) {
        bool saw_kw = false;
        do {
            if (check(Tok::Name) && peek().kind == Tok::Eq) {
                if (!kwargs) throw ParseError("keyword arguments are not allowed here", cur().span);
                Token name = advance();
                advance();  // =
                kwargs->emplace_back(name.text, parse_expr());
                saw_kw = true;
            } else {
                if (saw_kw) throw ParseError("positional argument after keyword argument", cur().span);
                positional.push_back(parse_expr());
            }
        } while (accept(Tok::Comma));
    }

    void parse_kwargs_into(KwArgs& kwargs) {
        do {
            Token name = expect(Tok::Name, "keyword name");
            expect(Tok::Eq, "'='");
            kwargs.emplace_back(name.text, parse_expr());
        } while (accept(Tok::Comma));
    }

    std::vector<Token> toks_;
    std::string path_;
    std::string text_;
    size_t pos_ = 0;
    size_t prev_end_ = 0;
};

}  // namespace detail

inline Program parse_program(const std::string& source, const std::string& path = "<input>") {
    return detail::Parser(tokenize(source), path, source).parse();
}

}  // namespace pan
