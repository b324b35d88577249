// checkpoint.hpp - the resumable program state handed to search algorithms.
//
// A checkpoint wraps a parked program state (frame + info + continuation) at a
// branchpoint site, or a terminal outcome.  Checkpoints are immutable after
// creation: step() clones the frame (honoring nocopy), copies the info, binds
// the message or the next choice element, and runs the trampoline to the next
// yield or terminal, returning a fresh child.  The only interior mutability is
// stepping bookkeeping (the choose cursor), which is atomic.
//
// Protect semantics: when a protected expression inside the stepped segment
// catches its declared tag, the whole attempt is discarded and the segment is
// replayed from this checkpoint.  Each protect site allows its own
// max_retries (default below when unspecified); a step-level cap and the
// site's max_protection keyword argument lower that bound.  When retries run
// out the step raises ProtectExhausted.
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pan/engine.hpp"

namespace pan {

enum class Status { RUNNING, DONE_STEPPING, RETURNED, KILLED };

inline const char* status_name(Status s) {
    switch (s) {
        case Status::RUNNING: return "RUNNING";
        case Status::DONE_STEPPING: return "DONE_STEPPING";
        case Status::RETURNED: return "RETURNED";
        default: return "KILLED";
    }
}

constexpr int kDefaultProtectRetries = 8;  // cap when protect() gives no max_retries

class Checkpoint;
using CheckpointPtr = std::shared_ptr<const Checkpoint>;

class Checkpoint : public std::enable_shared_from_this<Checkpoint> {
public:
    // ---- construction ----

    // Runs the entry function until its first branchpoint (or terminal).
    // RuntimeErrors before the first branchpoint propagate to the caller.
    static CheckpointPtr start(EnginePtr eng, const std::map<std::string, Value>& args) {
        const CompiledFunction& entry = eng->space->fn(eng->space->entry);
        for (const auto& [k, v] : args) {
            (void)v;
            if (std::find(entry.params.begin(), entry.params.end(), k) == entry.params.end())
                throw EngineError("ArgError", "entry function '" + entry.name +
                                                  "' has no parameter '" + k + "'");
        }
        Info info;
        info.session = eng->session;
        auto attempt = [&]() -> std::pair<StepOutcome, Info> {
            auto frame = std::make_shared<Frame>();
            for (const auto& p : entry.params) {
                auto it = args.find(p);
                if (it == args.end())
                    throw EngineError("ArgError", "missing argument '" + p + "' for entry function '" +
                                                      entry.name + "'");
                frame->locals[p] = it->second.deep_copy();
            }
            frame->enclosing = eng->globals;
            Info run_info = info.copy();
            run_info.begin_transition();
            auto env0 = std::make_shared<RtEnv>();
            env0->binds.emplace_back("return", cont_root_terminal());
            ContPtr entry_cont = cont_block(eng->space->fn_index.at(entry.name), 0, env0);
            StepOutcome out = detail::run_segment(entry_cont, frame, run_info, *eng, 0);
            return {std::move(out), std::move(run_info)};
        };
        auto [out, run_info] = run_with_protection(attempt, std::nullopt, nullptr, nullptr);
        eng->session->scores.flush(eng->session->fn_invoker);
        return finish_child(std::move(eng), -1, std::move(out), std::move(run_info));
    }

    // ---- stepping ----

    CheckpointPtr step(std::optional<Value> message = std::nullopt, bool flush_scores = true,
                       std::optional<int> max_protection = std::nullopt) const {
        return step_impl(std::move(message), flush_scores, max_protection, nullptr);
    }

    // Repeatedly steps, collecting children; stops at max_samples, at choice
    // exhaustion, or when the shared protection budget runs out.
    std::vector<CheckpointPtr> step_sampler(std::optional<int> max_samples = std::nullopt,
                                            std::optional<int> max_protection = std::nullopt) const {
        require_running("step_sampler");
        std::vector<CheckpointPtr> out;
        std::atomic<int> budget{max_protection.value_or(0)};
        std::atomic<int>* budget_ptr = max_protection ? &budget : nullptr;
        while (!max_samples || static_cast<int>(out.size()) < *max_samples) {
            if (info_.session->should_stop()) break;
            CheckpointPtr child;
            try {
                child = step_impl(std::nullopt, true, std::nullopt, budget_ptr);
            } catch (const EngineError& e) {
                if (e.kind() == "ProtectExhausted") break;  // stream ends at exhaustion
                throw;
            }
            if (child->status() == Status::DONE_STEPPING) break;
            out.push_back(std::move(child));
        }
        return out;
    }

    // Same contract as step_sampler but steps run on `width` workers.  Only
    // the multiset of children is deterministic, not their order.
    std::vector<CheckpointPtr> parallel_step_sampler(
        int num_samples, int width, std::optional<int> max_protection = std::nullopt) const {
        require_running("parallel_step_sampler");
        if (width <= 1) return step_sampler(num_samples, max_protection);
        std::vector<CheckpointPtr> out;
        std::mutex out_mu;
        std::atomic<int> claimed{0};
        std::atomic<bool> done{false};
        std::atomic<int> budget{max_protection.value_or(0)};
        std::atomic<int>* budget_ptr = max_protection ? &budget : nullptr;
        auto worker = [&]() {
            for (;;) {
                if (done.load() || info_.session->should_stop()) return;
                int idx = claimed.fetch_add(1);
                if (idx >= num_samples) return;
                CheckpointPtr child;
                try {
                    child = step_impl(std::nullopt, true, std::nullopt, budget_ptr);
                } catch (const EngineError& e) {
                    if (e.kind() == "ProtectExhausted") {
                        done.store(true);
                        return;
                    }
                    throw;
                }
                if (child->status() == Status::DONE_STEPPING) {
                    done.store(true);
                    return;
                }
                std::lock_guard<std::mutex> lock(out_mu);
                out.push_back(std::move(child));
            }
        };
        std::vector<std::thread> pool;
        int n_workers = std::min(width, num_samples);
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        std::sort(out.begin(), out.end(),
                  [](const CheckpointPtr& a, const CheckpointPtr& b) { return a->node_id() < b->node_id(); });
        return out;
    }

    // ---- accessors ----

    Status status() const { return status_; }
    std::int64_t node_id() const { return node_id_; }
    std::int64_t parent_id() const { return parent_id_; }

    // The most recent recorded score, if it has resolved.
    std::optional<Value> score() const {
        if (info_.score && info_.score->value) return info_.score->value;
        return std::nullopt;
    }
    std::optional<double> score_number() const {
        auto s = score();
        if (!s) return std::nullopt;
        return s->as_number();
    }

    bool has_return_value() const {
        if (status_ == Status::RETURNED) return true;
        return status_ != Status::KILLED && info_.optional_rv.has_value();
    }

    const Value& return_value() const {
        if (status_ == Status::RETURNED) return return_value_;
        if (status_ != Status::KILLED && info_.optional_rv) return *info_.optional_rv;
        throw EngineError("NoReturnValue", "checkpoint has no return value");
    }

    bool early_stopped_search() const { return info_.session->should_stop(); }

    const std::map<std::string, Value>& branchpoint_params() const { return params_; }

    Value message_from_agent() const {
        auto it = params_.find("message_to_controller");
        return it == params_.end() ? Value::null() : it->second;
    }

    bool at_choose_site() const { return site_ && site_->is_choose; }
    const SiteInfo* site() const { return site_; }

    std::string site_label() const {
        if (!site_) return std::string(status_name(status_));
        auto it = params_.find("name");
        if (it != params_.end() && it->second.is_str()) return it->second.as_str();
        return "bp#" + std::to_string(site_->id);
    }

    // Number of elements at a choose site (0 for plain branchpoints).
    std::size_t num_choices() const {
        if (!at_choose_site()) return 0;
        return frame_->tmp.at(choices_slot_).as_list()->items.size();
    }

    // Declared branching factor: the site's branching= parameter if present.
    std::optional<int> declared_branching() const {
        auto it = params_.find("branching");
        if (it != params_.end() && it->second.is_int()) return static_cast<int>(it->second.as_int());
        return std::nullopt;
    }

    const std::optional<std::string>& error() const { return error_; }
    const Value& kill_payload() const { return return_value_; }
    const Info& info() const { return info_; }
    const FramePtr& frame() const { return frame_; }
    const EnginePtr& engine() const { return eng_; }
    const std::map<std::string, double>& transition_costs() const { return info_.costs; }

private:
    Checkpoint() = default;

    void require_running(const char* op) const {
        if (status_ != Status::RUNNING)
            throw EngineError("StepError", std::string(op) + " requires a RUNNING checkpoint, status is " +
                                               status_name(status_));
    }

    template <class Attempt>
    static std::pair<StepOutcome, Info> run_with_protection(
        Attempt&& attempt, std::optional<int> step_cap,
        const std::map<std::string, Value>* site_params, std::atomic<int>* stream_budget) {
        std::map<std::uint64_t, int> failures;
        for (;;) {
            try {
                return attempt();
            } catch (const ProtectFailureSignal& f) {
                int used = ++failures[f.site_key];
                std::optional<int> cap = f.max_retries;
                auto lower = [&cap](int c) {
                    if (!cap || c < *cap) cap = c;
                };
                if (step_cap) lower(*step_cap);
                if (site_params) {
                    auto it = site_params->find("max_protection");
                    if (it != site_params->end() && it->second.is_int())
                        lower(static_cast<int>(it->second.as_int()));
                }
                if (!cap) cap = kDefaultProtectRetries;
                if (used > *cap)
                    throw EngineError("ProtectExhausted",
                                      "protected expression failed " + std::to_string(used) +
                                          " times (tag " + f.tag + "): " + f.underlying);
                if (stream_budget && stream_budget->fetch_sub(1) <= 0)
                    throw EngineError("ProtectExhausted", "sampler protection budget exhausted (tag " +
                                                              f.tag + "): " + f.underlying);
            }
        }
    }

    CheckpointPtr step_impl(std::optional<Value> message, bool flush_scores,
                            std::optional<int> max_protection, std::atomic<int>* stream_budget) const {
        require_running("step");
        SessionPtr session = info_.session;

        // Choose sites consume one element index per step call; protect
        // retries within the call re-run the same element.
        std::optional<Value> choice;
        if (at_choose_site()) {
            std::int64_t k = choose_cursor_.fetch_add(1);
            const auto& items = frame_->tmp.at(choices_slot_).as_list()->items;
            if (k >= static_cast<std::int64_t>(items.size())) return make_done_child();
            choice = Value(static_cast<std::int64_t>(k));  // index; element bound post-clone
        }

        auto attempt = [&]() -> std::pair<StepOutcome, Info> {
            FramePtr frame = frame_clone(frame_, info_.nocopy);
            Info info = info_.copy();
            info.begin_transition();
            if (at_choose_site()) {
                const auto& items = frame->tmp.at(choices_slot_).as_list()->items;
                frame->tmp[slot_] = items[static_cast<std::size_t>(choice->as_int())];
            } else {
                frame->tmp[slot_] = message ? *message : Value::null();
            }
            StepOutcome out = detail::run_segment(resume_, frame, info, *eng_, 0);
            return {std::move(out), std::move(info)};
        };

        std::pair<StepOutcome, Info> result;
        try {
            result = run_with_protection(attempt, max_protection, &params_, stream_budget);
        } catch (const RuntimeError& e) {
            // Unprotected runtime failure: the branch dies, carrying the error.
            session->count_branchpoint_step_if_named(params_);
            if (flush_scores) session->scores.flush(session->fn_invoker);
            return make_killed_child(e.what());
        }
        session->count_branchpoint_step_if_named(params_);
        if (flush_scores) session->scores.flush(session->fn_invoker);
        return finish_child(eng_, node_id_, std::move(result.first), std::move(result.second));
    }

    static CheckpointPtr finish_child(EnginePtr eng, std::int64_t parent_id, StepOutcome out,
                                      Info info) {
        auto cp = std::shared_ptr<Checkpoint>(new Checkpoint());
        cp->eng_ = std::move(eng);
        cp->parent_id_ = parent_id;
        cp->info_ = std::move(info);
        cp->frame_ = out.frame;
        if (out.yielded) {
            cp->status_ = Status::RUNNING;
            cp->site_ = out.site;
            cp->slot_ = out.slot;
            cp->choices_slot_ = out.choices_slot;
            cp->params_ = std::move(out.params);
            cp->resume_ = std::move(out.rest);
        } else if (out.term == StepOutcome::Term::Killed) {
            cp->status_ = Status::KILLED;
            cp->return_value_ = std::move(out.value);
            cp->info_.killed = true;
            cp->info_.optional_rv.reset();  // killed branches surrender provisional returns
        } else {
            cp->status_ = Status::RETURNED;
            cp->return_value_ = std::move(out.value);
        }
        cp->node_id_ = cp->info_.session->next_step_ordinal();
        cp->emit_creation_trace();
        return cp;
    }

    CheckpointPtr make_done_child() const {
        auto cp = std::shared_ptr<Checkpoint>(new Checkpoint());
        cp->eng_ = eng_;
        cp->parent_id_ = node_id_;
        cp->status_ = Status::DONE_STEPPING;
        cp->frame_ = frame_;  // shared: a done marker never executes
        cp->info_ = info_.copy();
        cp->info_.begin_transition();  // ran no segment: no costs, no provisional return
        cp->info_.done_stepping = true;
        cp->node_id_ = info_.session->next_step_ordinal();
        cp->emit_creation_trace();
        return cp;
    }

    CheckpointPtr make_killed_child(const std::string& error) const {
        auto cp = std::shared_ptr<Checkpoint>(new Checkpoint());
        cp->eng_ = eng_;
        cp->parent_id_ = node_id_;
        cp->status_ = Status::KILLED;
        cp->frame_ = frame_;
        cp->info_ = info_.copy();
        cp->info_.begin_transition();
        cp->info_.killed = true;
        cp->error_ = error;
        cp->node_id_ = info_.session->next_step_ordinal();
        cp->emit_creation_trace();
        return cp;
    }

    void emit_creation_trace() const {
        TraceEvent ev;
        ev.node_id = node_id_;
        ev.parent_id = parent_id_;
        ev.site = site_label();
        ev.status = status_name(status_);
        if (auto s = score_number()) ev.score = *s;
        ev.costs = info_.costs;
        info_.session->emit_trace(ev);
    }

    EnginePtr eng_;
    std::int64_t node_id_ = -1;
    std::int64_t parent_id_ = -1;
    Status status_ = Status::RUNNING;
    FramePtr frame_;
    Info info_;
    ContPtr resume_;
    int slot_ = -1;
    int choices_slot_ = -1;
    const SiteInfo* site_ = nullptr;
    std::map<std::string, Value> params_;
    Value return_value_;
    std::optional<std::string> error_;
    mutable std::atomic<std::int64_t> choose_cursor_{0};
};

// Convenience: compile+start in one call for tests and tools.
inline CheckpointPtr start_program(std::shared_ptr<const CompiledSpace> space, SessionPtr session,
                                   const std::map<std::string, Value>& args) {
    return Checkpoint::start(make_engine(std::move(space), std::move(session)), args);
}

}  // namespace pan
