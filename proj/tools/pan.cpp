// pan.cpp - command-line driver: run a program single-path, search its
// execution tree with a chosen algorithm, or emit compilation artifacts.
// Results go to stdout as JSON; diagnostics go to stderr.
// Exit codes: 0 success, 1 program/runtime error, 2 usage/compile error.
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pan/checkpoint.hpp"
#include "pan/cps.hpp"
#include "pan/json_io.hpp"
#include "pan/parser.hpp"
#include "pan/preprocess.hpp"
#include "pan/pretty.hpp"
#include "pan/search.hpp"
#include "pan/validate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitProgramError = 1;
constexpr int kExitUsageError = 2;

// Raised after diagnostics were already written to stderr.
struct FatalDiagnostics {};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, pan::Value> parse_value_map(const std::string& text, const char* flag) {
    std::map<std::string, pan::Value> out;
    if (text.empty()) return out;
    pan::Json j = pan::Json::parse(text);
    if (!j.is_object()) throw std::runtime_error(std::string(flag) + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = pan::value_from_json(it.value());
    return out;
}

void print_located(const std::string& path, const pan::SourceMap& sm, std::optional<pan::Span> span,
                   const char* severity, const std::string& message) {
    std::cerr << path;
    if (span) {
        auto lc = sm.locate(span->begin);
        std::cerr << ":" << lc.line << ":" << lc.col;
    }
    std::cerr << ": " << severity << ": " << message << "\n";
}

// Parses and validates a source file; prints diagnostics with line/column
// positions and throws FatalDiagnostics on any error-severity finding.
pan::Program parse_and_validate(const std::string& path, const std::string& src) {
    pan::SourceMap sm(src);
    pan::Program prog;
    try {
        prog = pan::parse_program(src, path);
    } catch (const pan::PanError& e) {  // LexError / ParseError carry spans
        print_located(path, sm, e.span(), "error", e.kind() + ": " + e.message());
        throw FatalDiagnostics{};
    }
    bool fatal = false;
    for (const auto& d : pan::validate(prog)) {
        bool is_error = d.severity == pan::Severity::Error;
        print_located(path, sm, d.span, is_error ? "error" : "warning", d.message);
        fatal = fatal || is_error;
    }
    if (fatal) throw FatalDiagnostics{};
    return prog;
}

std::shared_ptr<const pan::CompiledSpace> load_space(const std::string& path,
                                                     const std::string& entry) {
    std::string src = slurp(path);
    pan::Program prog = parse_and_validate(path, src);
    auto norm = std::make_shared<const pan::Program>(pan::preprocess(prog, entry));
    return std::make_shared<const pan::CompiledSpace>(pan::compile_program(norm, entry));
}

pan::SessionPtr make_session(std::uint64_t seed, const std::string& provider_path) {
    auto session = std::make_shared<pan::SessionState>();
    session->seed = seed;
    session->provider.set_seed(seed);
    if (!provider_path.empty()) session->provider.load_json_text(slurp(provider_path));
    return session;
}

pan::Json result_entry_json(const pan::ResultEntry& e) {
    pan::Json j;
    j["value"] = pan::value_to_json(e.value);
    if (e.score) {
        j["score"] = *e.score;
    } else {
        j["score"] = nullptr;
    }
    return j;
}

int cmd_run(const std::string& file, const std::string& entry, const std::string& args_json,
            const std::string& provider_path, std::uint64_t seed) {
    auto space = load_space(file, entry);
    auto session = make_session(seed, provider_path);
    auto args = parse_value_map(args_json, "--args");
    pan::CheckpointPtr cp = pan::start_program(space, session, args);
    while (cp->status() == pan::Status::RUNNING && !session->should_stop()) cp = cp->step();
    switch (cp->status()) {
        case pan::Status::RUNNING:  // early-stopped with a provisional value parked
            if (cp->has_return_value()) {
                std::cout << pan::value_to_json(cp->return_value()).dump() << "\n";
                return kExitOk;
            }
            std::cerr << "error: run stopped early without a provisional return value\n";
            return kExitProgramError;
        case pan::Status::RETURNED:
            std::cout << pan::value_to_json(cp->return_value()).dump() << "\n";
            return kExitOk;
        case pan::Status::DONE_STEPPING:
            std::cerr << "error: a choose site ran out of elements on the single-step path\n";
            return kExitProgramError;
        case pan::Status::KILLED:
            if (cp->error()) {
                std::cerr << "error: " << *cp->error() << "\n";
            } else {
                std::cerr << "error: branch killed: " << cp->kill_payload().repr() << "\n";
            }
            return kExitProgramError;
    }
    return kExitProgramError;
}

int cmd_search(const std::string& file, const std::string& entry, const std::string& algo,
               const std::string& params_json, bool all, const std::string& args_json,
               const std::string& provider_path, std::uint64_t seed, int parallelism,
               const std::string& trace_path, const std::string& trace_dot_path) {
    auto space = load_space(file, entry);
    auto session = make_session(seed, provider_path);
    auto args = parse_value_map(args_json, "--args");
    pan::SearchConfig cfg;
    cfg.algo = algo;
    cfg.params = parse_value_map(params_json, "--params");
    if (parallelism != 1)
        cfg.params["max_parallelism"] = pan::Value(static_cast<std::int64_t>(parallelism));

    pan::SearchResult result = pan::run_search(space, args, cfg, session);

    if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        if (!out) throw std::runtime_error("cannot write trace file: " + trace_path);
        out << result.trace.to_json() << "\n";
    }
    if (!trace_dot_path.empty()) {
        std::ofstream out(trace_dot_path);
        if (!out) throw std::runtime_error("cannot write trace file: " + trace_dot_path);
        out << result.trace.to_dot();
    }

    if (all) {
        pan::Json j;
        j["best"] = result_entry_json(result.best);
        pan::Json list = pan::Json::array();
        for (const auto& e : result.all) list.push_back(result_entry_json(e));
        j["all"] = list;
        std::cout << j.dump() << "\n";
    } else {
        std::cout << result_entry_json(result.best).dump() << "\n";
    }
    return kExitOk;
}

int cmd_compile(const std::string& file, const std::string& emit) {
    std::string src = slurp(file);
    pan::Program prog = parse_and_validate(file, src);
    if (emit == "ast") {
        std::cout << pan::pretty_print(prog);
        return kExitOk;
    }
    // Normalization and compilation need an entry function: `main` when
    // present, otherwise the first function in the file.
    std::string entry = prog.functions.empty() ? "main" : prog.functions.front()->name;
    for (const auto& fn : prog.functions)
        if (fn->name == "main") entry = "main";
    auto norm = pan::preprocess(prog, entry);
    if (emit == "normalized") {
        std::cout << pan::pretty_print(norm);
        return kExitOk;
    }
    auto space = pan::compile_program(std::make_shared<const pan::Program>(norm), entry);
    std::cout << pan::emit_cps(space);
    return kExitOk;
}

// Engine-error kinds that indicate a bad command line rather than a failing
// program: unknown algorithm, bad algorithm params, args not matching the
// entry signature.
bool is_usage_engine_error(const std::string& kind) {
    return kind == "UnknownAlgo" || kind == "ParamError" || kind == "ArgError";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PanScript: programs with branchpoints, searched over execution paths"};
    app.require_subcommand(1);

    std::string file, entry = "main", args_json, provider_path, algo, params_json;
    std::string emit, trace_path, trace_dot_path;
    std::uint64_t seed = 0;
    int parallelism = 1;
    bool all = false;

    auto* run = app.add_subcommand("run", "execute one path: every branchpoint stepped once");
    run->add_option("FILE", file)->required();
    run->add_option("--entry", entry, "entry function name");
    run->add_option("--args", args_json, "entry arguments as a JSON object");
    run->add_option("--provider", provider_path, "effect provider config (JSON file)");
    run->add_option("--seed", seed, "session seed");

    auto* search = app.add_subcommand("search", "search the execution-path tree");
    search->add_option("FILE", file)->required();
    search->add_option("--entry", entry, "entry function name");
    search->add_option("--algo", algo, "search algorithm name")->required();
    search->add_option("--params", params_json, "algorithm parameters as a JSON object");
    search->add_flag("--all", all, "print every surviving result, not just the best");
    search->add_option("--args", args_json, "entry arguments as a JSON object");
    search->add_option("--provider", provider_path, "effect provider config (JSON file)");
    search->add_option("--seed", seed, "session seed");
    search->add_option("--parallelism", parallelism, "max worker threads for expansion");
    search->add_option("--trace", trace_path, "write the search trace as JSON");
    search->add_option("--trace-dot", trace_dot_path, "write the search trace as Graphviz DOT");

    auto* compile = app.add_subcommand("compile", "emit compilation artifacts");
    compile->add_option("FILE", file)->required();
    compile->add_option("--emit", emit, "artifact: ast | normalized | cps")
        ->required()
        ->check(CLI::IsMember({"ast", "normalized", "cps"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsageError;
    }

    try {
        if (run->parsed()) return cmd_run(file, entry, args_json, provider_path, seed);
        if (search->parsed())
            return cmd_search(file, entry, algo, params_json, all, args_json, provider_path, seed,
                              parallelism, trace_path, trace_dot_path);
        return cmd_compile(file, emit);
    } catch (const FatalDiagnostics&) {
        return kExitUsageError;
    } catch (const pan::RuntimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProgramError;
    } catch (const pan::EngineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_usage_engine_error(e.kind()) ? kExitUsageError : kExitProgramError;
    } catch (const pan::PanError& e) {  // CompileError, bad provider config, ...
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsageError;
    } catch (const pan::Json::parse_error& e) {
        std::cerr << "usage error: invalid JSON argument: " << e.what() << "\n";
        return kExitUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsageError;
    }
}
