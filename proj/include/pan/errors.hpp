// errors.hpp - error hierarchy shared by the frontend, compiler, and engine
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "pan/source.hpp"

namespace pan {

// Base for every intentional failure raised by the library.  `kind` is a
// stable machine-readable discriminator; `message` is for humans.
class PanError : public std::runtime_error {
public:
    PanError(std::string kind, std::string message, std::optional<Span> span = std::nullopt)
        : std::runtime_error(message.empty() ? kind : kind + ": " + message),
          kind_(std::move(kind)),
          message_(std::move(message)),
          span_(span) {}

    const std::string& kind() const { return kind_; }
    const std::string& message() const { return message_; }
    std::optional<Span> span() const { return span_; }

private:
    std::string kind_;
    std::string message_;
    std::optional<Span> span_;
};

// Lexing failure: malformed token.
class LexError : public PanError {
public:
    LexError(std::string message, Span span) : PanError("LexError", std::move(message), span) {}
};

// Parsing failure: token stream does not match the grammar.
class ParseError : public PanError {
public:
    ParseError(std::string message, Span span) : PanError("ParseError", std::move(message), span) {}
};

// Structural failure while lowering a program into a search space.
class CompileError : public PanError {
public:
    CompileError(std::string message, std::optional<Span> span = std::nullopt)
        : PanError("CompileError", std::move(message), span) {}
};

// Runtime failure inside a running program.  `tag` is the name protect()
// matches against: NameError, TypeError, IndexError, KeyError, DivZero,
// NotIterable, ProviderExhausted, or any tag a provider script declares.
class RuntimeError : public PanError {
public:
    RuntimeError(std::string tag, std::string message, std::optional<Span> span = std::nullopt)
        : PanError("RuntimeError", tag + ": " + message, span), tag_(std::move(tag)) {}

    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
};

// Engine-level failures (misuse of the checkpoint/search API, exhausted
// protection budgets, unknown algorithms, ...).  Distinct from RuntimeError:
// these are not catchable by protect().
class EngineError : public PanError {
public:
    EngineError(std::string kind, std::string message) : PanError(std::move(kind), std::move(message)) {}
};

}  // namespace pan
