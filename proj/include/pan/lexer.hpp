// lexer.hpp - tokenizer for .pan sources
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pan/errors.hpp"
#include "pan/source.hpp"

namespace pan {

enum class Tok {
    // literals / atoms
    Int,
    Float,
    Str,
    Name,
    Keyword,  // fn if else while for in break continue return nocopy needscopy true false null
    Prim,     // branchpoint choose searchover protect perform record_score record_costs
              // early_stop kill_branch optional_return
    // punctuation / operators
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Eq,      // =
    EqEq,    // ==
    NotEq,   // !=
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,    // !
    And,     // 'and'
    Or,      // 'or'
    End,     // end of input
};

struct Token {
    Tok kind;
    Span span;
    std::string text;          // raw text for Name/Keyword/Prim; decoded contents for Str
    std::int64_t int_value = 0;
    double float_value = 0.0;
};

inline const std::set<std::string>& keyword_set() {
    static const std::set<std::string> kws = {
        "fn", "if", "else", "while", "for", "in", "break", "continue", "return",
        "nocopy", "needscopy", "true", "false", "null",
    };
    return kws;
}

inline const std::set<std::string>& primitive_set() {
    static const std::set<std::string> prims = {
        "branchpoint", "choose", "searchover", "protect", "perform",
        "record_score", "record_costs", "early_stop", "kill_branch", "optional_return",
    };
    return prims;
}

inline std::vector<Token> tokenize(const std::string& src) {
    std::vector<Token> out;
    size_t i = 0;
    const size_t n = src.size();

    auto push = [&](Tok kind, size_t begin, size_t end, std::string text = "") {
        out.push_back(Token{kind, Span{begin, end}, std::move(text)});
    };

    while (i < n) {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        if (c == '#') {  // line comment
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        size_t begin = i;
        if (isdigit(static_cast<unsigned char>(c))) {
            while (i < n && isdigit(static_cast<unsigned char>(src[i]))) ++i;
            bool is_float = false;
            if (i < n && src[i] == '.' && i + 1 < n && isdigit(static_cast<unsigned char>(src[i + 1]))) {
                is_float = true;
                ++i;
                while (i < n && isdigit(static_cast<unsigned char>(src[i]))) ++i;
            }
            if (i < n && (src[i] == 'e' || src[i] == 'E')) {
                size_t j = i + 1;
                if (j < n && (src[j] == '+' || src[j] == '-')) ++j;
                if (j < n && isdigit(static_cast<unsigned char>(src[j]))) {
                    is_float = true;
                    i = j;
                    while (i < n && isdigit(static_cast<unsigned char>(src[i]))) ++i;
                }
            }
            std::string text = src.substr(begin, i - begin);
            Token t{is_float ? Tok::Float : Tok::Int, Span{begin, i}, text};
            if (is_float) {
                t.float_value = std::stod(text);
            } else {
                try {
                    t.int_value = std::stoll(text);
                } catch (const std::out_of_range&) {
                    throw LexError("integer literal out of range", Span{begin, i});
                }
            }
            out.push_back(std::move(t));
            continue;
        }
        if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i < n && (isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
            std::string word = src.substr(begin, i - begin);
            if (word == "and") push(Tok::And, begin, i, word);
            else if (word == "or") push(Tok::Or, begin, i, word);
            else if (keyword_set().count(word)) push(Tok::Keyword, begin, i, word);
            else if (primitive_set().count(word)) push(Tok::Prim, begin, i, word);
            else push(Tok::Name, begin, i, word);
            continue;
        }
        if (c == '"') {
            ++i;
            std::string decoded;
            bool closed = false;
            while (i < n) {
                char d = src[i];
                if (d == '"') {
                    ++i;
                    closed = true;
                    break;
                }
                if (d == '\\') {
                    if (i + 1 >= n) break;
                    char e = src[i + 1];
                    switch (e) {
                        case 'n': decoded += '\n'; break;
                        case 't': decoded += '\t'; break;
                        case 'r': decoded += '\r'; break;
                        case '"': decoded += '"'; break;
                        case '\\': decoded += '\\'; break;
                        default:
                            throw LexError(std::string("unknown escape '\\") + e + "'", Span{i, i + 2});
                    }
                    i += 2;
                    continue;
                }
                if (d == '\n') break;  // strings may not span lines
                decoded += d;
                ++i;
            }
            if (!closed) throw LexError("unterminated string literal", Span{begin, i});
            Token t{Tok::Str, Span{begin, i}, std::move(decoded)};
            out.push_back(std::move(t));
            continue;
        }
        auto two = [&](char next) { return i + 1 < n && src[i + 1] == next; };
        switch (c) {
            case '(': push(Tok::LParen, i, i + 1); ++i; break;
            case ')': push(Tok::RParen, i, i + 1); ++i; break;
            case '[': push(Tok::LBracket, i, i + 1); ++i; break;
            case ']': push(Tok::RBracket, i, i + 1); ++i; break;
            case '{': push(Tok::LBrace, i, i + 1); ++i; break;
            case '}': push(Tok::RBrace, i, i + 1); ++i; break;
            case ',': push(Tok::Comma, i, i + 1); ++i; break;
            case ':': push(Tok::Colon, i, i + 1); ++i; break;
            case '+': push(Tok::Plus, i, i + 1); ++i; break;
            case '-': push(Tok::Minus, i, i + 1); ++i; break;
            case '*': push(Tok::Star, i, i + 1); ++i; break;
            case '/': push(Tok::Slash, i, i + 1); ++i; break;
            case '%': push(Tok::Percent, i, i + 1); ++i; break;
            case '=':
                if (two('=')) { push(Tok::EqEq, i, i + 2); i += 2; }
                else { push(Tok::Eq, i, i + 1); ++i; }
                break;
            case '!':
                if (two('=')) { push(Tok::NotEq, i, i + 2); i += 2; }
                else { push(Tok::Bang, i, i + 1); ++i; }
                break;
            case '<':
                if (two('=')) { push(Tok::LtEq, i, i + 2); i += 2; }
                else { push(Tok::Lt, i, i + 1); ++i; }
                break;
            case '>':
                if (two('=')) { push(Tok::GtEq, i, i + 2); i += 2; }
                else { push(Tok::Gt, i, i + 1); ++i; }
                break;
            default:
                throw LexError(std::string("unexpected character '") + c + "'", Span{i, i + 1});
        }
    }
    push(Tok::End, n, n);
    return out;
}

}  // namespace pan
