// session.hpp - state shared by every branch of one search session, plus the
// per-branch Info record that travels with each execution path.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "pan/provider.hpp"
#include "pan/scoredb.hpp"
#include "pan/value.hpp"

namespace pan {

// One record per checkpoint created; consumed by trace collectors.
struct TraceEvent {
    std::int64_t node_id = -1;
    std::int64_t parent_id = -1;
    std::string site;    // site label of the node's own position, or terminal kind
    std::string status;  // RUNNING | DONE_STEPPING | RETURNED | KILLED
    std::optional<double> score;
    std::map<std::string, double> costs;  // costs of the transition that created this node
};

struct SessionState {
    std::uint64_t seed = 0;
    EffectProvider provider;
    ScoreDb scores;

    // Set by the engine once the program is loaded; used by ScoreDb::flush to
    // invoke group evaluator functions.
    FnInvoker fn_invoker;

    void set_trace_hook(std::function<void(const TraceEvent&)> hook) {
        std::lock_guard<std::mutex> lock(trace_mu_);
        trace_hook_ = std::move(hook);
    }

    void emit_trace(const TraceEvent& ev) {
        std::lock_guard<std::mutex> lock(trace_mu_);
        if (trace_hook_) trace_hook_(ev);
    }

    // Monotone stop flag; early_stop_step records the global step ordinal at
    // which the flag was first raised (for "no steps after stop" audits).
    std::atomic<bool> early_stop{false};
    std::atomic<std::int64_t> early_stop_step{-1};

    // Global step ordinal: one per checkpoint created (root included).
    std::atomic<std::int64_t> step_counter{0};

    bool should_stop() const { return early_stop.load(std::memory_order_acquire); }

    void raise_early_stop() {
        bool expected = false;
        if (early_stop.compare_exchange_strong(expected, true, std::memory_order_acq_rel)) {
            early_stop_step.store(step_counter.load(std::memory_order_acquire),
                                  std::memory_order_release);
        }
    }

    std::int64_t next_step_ordinal() { return step_counter.fetch_add(1, std::memory_order_acq_rel); }

    void add_cost(const std::string& key, double amount) {
        std::lock_guard<std::mutex> lock(agg_mu_);
        aggregate_costs_[key] += amount;
    }

    std::map<std::string, double> aggregate_costs() const {
        std::lock_guard<std::mutex> lock(agg_mu_);
        return aggregate_costs_;
    }

    void count_branchpoint_step(const std::string& name) {
        std::lock_guard<std::mutex> lock(count_mu_);
        branchpoint_step_counts_[name] += 1;
    }

    // Steps at anonymous sites are not tracked; only name= kwargs count.
    void count_branchpoint_step_if_named(const std::map<std::string, Value>& params) {
        auto it = params.find("name");
        if (it != params.end() && it->second.is_str()) count_branchpoint_step(it->second.as_str());
    }

    std::map<std::string, std::int64_t> branchpoint_step_counts() const {
        std::lock_guard<std::mutex> lock(count_mu_);
        return branchpoint_step_counts_;
    }

    void zero_branchpoint_step_counts() {
        std::lock_guard<std::mutex> lock(count_mu_);
        branchpoint_step_counts_.clear();
    }

private:
    mutable std::mutex agg_mu_;
    std::map<std::string, double> aggregate_costs_;
    mutable std::mutex count_mu_;
    std::map<std::string, std::int64_t> branchpoint_step_counts_;
    std::mutex trace_mu_;
    std::function<void(const TraceEvent&)> trace_hook_;
};

using SessionPtr = std::shared_ptr<SessionState>;

// Per-branch bookkeeping carried alongside the frame.  Copied (by value) at
// every step; the session link stays shared.
struct Info {
    ScoreHandle score;                // null until the first record_score
    std::set<std::string> nocopy;     // names whose cells survive cloning shared
    std::optional<Value> optional_rv; // provisional return since the last branchpoint
    std::map<std::string, double> costs;  // costs recorded during this transition
    bool done_stepping = false;
    bool killed = false;
    SessionPtr session;

    Info copy() const { return *this; }

    // Reset the transition-scoped fields before running a fresh segment.
    void begin_transition() {
        optional_rv.reset();
        costs.clear();
        done_stepping = false;
    }
};

}  // namespace pan
