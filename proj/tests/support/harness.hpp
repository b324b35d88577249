// harness.hpp - drives a program through the compiled engine one branch step
// at a time and shapes the result like a reference-interpreter outcome, so
// the two routes can be compared field by field.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pan/checkpoint.hpp"
#include "pan/cps.hpp"
#include "pan/parser.hpp"
#include "pan/preprocess.hpp"
#include "support/reference_interp.hpp"

namespace pantest {

// "RuntimeError: Tag: message" -> "Tag" (checkpoint errors store what()).
inline std::string error_tag_of(const std::string& what) {
    std::string s = what;
    const std::string prefix = "RuntimeError: ";
    if (s.rfind(prefix, 0) == 0) s = s.substr(prefix.size());
    auto colon = s.find(':');
    return colon == std::string::npos ? s : s.substr(0, colon);
}

struct EngineRun {
    RefOutcome outcome;
    std::vector<std::string> provider_log;
    pan::SessionPtr session;
    pan::CheckpointPtr last;  // terminal or stopped-at checkpoint (may be null on error)
};

inline EngineRun engine_single_steps(const std::string& src, const std::string& entry,
                                     const std::map<std::string, pan::Value>& args,
                                     const std::string& provider_json, std::uint64_t seed) {
    EngineRun run;
    auto prog = pan::parse_program(src);
    auto norm = std::make_shared<const pan::Program>(pan::preprocess(prog, entry));
    auto space = std::make_shared<const pan::CompiledSpace>(pan::compile_program(norm, entry));
    run.session = std::make_shared<pan::SessionState>();
    run.session->seed = seed;
    run.session->provider.set_seed(seed);
    if (!provider_json.empty()) run.session->provider.load_json_text(provider_json);

    RefOutcome& out = run.outcome;
    try {
        pan::CheckpointPtr cp = pan::Checkpoint::start(pan::make_engine(space, run.session), args);
        while (cp->status() == pan::Status::RUNNING && !run.session->should_stop())
            cp = cp->step();
        run.last = cp;
        switch (cp->status()) {
            case pan::Status::RUNNING:  // early-stop flag observed before the next step
                out.kind = RefOutcome::Kind::Stopped;
                if (cp->has_return_value()) out.optional_value = cp->return_value();
                out.score = cp->score_number();
                break;
            case pan::Status::RETURNED:
                out.kind = RefOutcome::Kind::Returned;
                out.value = cp->return_value();
                out.score = cp->score_number();
                break;
            case pan::Status::DONE_STEPPING:
                out.kind = RefOutcome::Kind::Done;
                out.score = cp->score_number();
                break;
            case pan::Status::KILLED:
                if (cp->error()) {
                    out.kind = RefOutcome::Kind::Error;
                    out.error_tag = error_tag_of(*cp->error());
                } else {
                    out.kind = RefOutcome::Kind::Killed;
                    out.value = cp->kill_payload();
                    out.score = cp->score_number();
                }
                break;
        }
    } catch (const pan::RuntimeError& e) {
        out.kind = RefOutcome::Kind::Error;
        out.error_tag = e.tag();
    } catch (const pan::EngineError& e) {
        out.kind = RefOutcome::Kind::Error;
        out.error_tag = e.kind();
    }
    out.costs = run.session->aggregate_costs();
    run.provider_log = run.session->provider.log();
    return run;
}

inline RefOutcome reference_single_steps(const std::string& src, const std::string& entry,
                                         const std::map<std::string, pan::Value>& args,
                                         const std::string& provider_json, std::uint64_t seed,
                                         std::vector<std::string>* log_out = nullptr) {
    auto prog = pan::parse_program(src);
    pan::EffectProvider provider;
    provider.set_seed(seed);
    if (!provider_json.empty()) provider.load_json_text(provider_json);
    FirstChoicePolicy policy;
    RefInterp interp(prog, provider, policy);
    RefOutcome out = interp.run(entry, args);
    if (log_out) *log_out = provider.log();
    return out;
}

inline const char* kind_name(RefOutcome::Kind k) {
    switch (k) {
        case RefOutcome::Kind::Returned: return "returned";
        case RefOutcome::Kind::Killed: return "killed";
        case RefOutcome::Kind::Done: return "done";
        case RefOutcome::Kind::Stopped: return "stopped";
        case RefOutcome::Kind::Error: return "error";
    }
    return "?";
}

// One-line summary used in test failure messages.
inline std::string describe(const RefOutcome& o) {
    std::string s = kind_name(o.kind);
    if (o.kind == RefOutcome::Kind::Error) s += ":" + o.error_tag;
    if (o.kind == RefOutcome::Kind::Returned || o.kind == RefOutcome::Kind::Killed)
        s += " value=" + o.value.repr();
    if (o.score) s += " score=" + std::to_string(*o.score);
    return s;
}

}  // namespace pantest
