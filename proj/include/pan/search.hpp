// search.hpp - built-in search algorithms over the Checkpoint interface, the
// algorithm registry, and the run_search entry point with trace capture.
//
// Determinism: with max_parallelism=1 (the default) every algorithm is fully
// deterministic for a fixed seed and deterministic providers.  Tie-breaking is
// discovery-order FIFO; beam search additionally round-robins over parents
// before discovery order (an optional seeded shuffle flag restores the
// randomized-baseline behavior).  Every algorithm observes the session's
// early-stop flag before scheduling another step.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pan/checkpoint.hpp"
#include "pan/json_io.hpp"

namespace pan {

// ---------------------------------------------------------------------------
// Trace

struct Trace {
    std::vector<TraceEvent> nodes;

    std::string to_json() const {
        Json arr = Json::array();
        for (const auto& n : nodes) {
            Json rec;
            rec["id"] = n.node_id;
            rec["parent"] = n.parent_id;
            rec["site"] = n.site;
            rec["status"] = n.status;
            if (n.score) {
                rec["score"] = *n.score;
            } else {
                rec["score"] = nullptr;
            }
            Json costs = Json::object();
            for (const auto& [k, v] : n.costs) costs[k] = v;
            rec["costs"] = costs;
            rec["order"] = n.node_id;
            arr.push_back(std::move(rec));
        }
        return arr.dump(2);
    }

    std::string to_dot() const {
        std::ostringstream os;
        os << "digraph search {\n  node [shape=box, fontname=\"monospace\"];\n";
        for (const auto& n : nodes) {
            os << "  n" << n.node_id << " [label=\"#" << n.node_id << " " << n.site << "\\n"
               << n.status;
            if (n.score) os << " score=" << *n.score;
            os << "\"];\n";
        }
        for (const auto& n : nodes) {
            if (n.parent_id >= 0) os << "  n" << n.parent_id << " -> n" << n.node_id << ";\n";
        }
        os << "}\n";
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// Config / results

struct SearchConfig {
    std::string algo;
    std::map<std::string, Value> params;
};

struct ResultEntry {
    Value value;
    std::optional<double> score;
    CheckpointPtr cp;
};

struct SearchResult {
    ResultEntry best;
    std::vector<ResultEntry> all;  // discovery order; KILLED branches excluded
    Trace trace;
    std::map<std::string, double> aggregate_costs;
};

// ---------------------------------------------------------------------------
// Algorithm context and registry

struct AlgoContext {
    CheckpointPtr root;
    SessionPtr session;
    std::map<std::string, Value> params;
    std::vector<CheckpointPtr> results;

    bool stop() const { return session->should_stop(); }

    std::int64_t param_int(const std::string& key, std::int64_t fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        if (!it->second.is_int())
            throw EngineError("ParamError", "param '" + key + "' must be an int");
        return it->second.as_int();
    }

    double param_num(const std::string& key, double fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        if (!it->second.is_number())
            throw EngineError("ParamError", "param '" + key + "' must be a number");
        return it->second.as_number();
    }

    bool param_flag(const std::string& key, bool fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        if (!it->second.is_bool())
            throw EngineError("ParamError", "param '" + key + "' must be a bool");
        return it->second.as_bool();
    }

    std::string param_str(const std::string& key, const std::string& fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        if (!it->second.is_str())
            throw EngineError("ParamError", "param '" + key + "' must be a string");
        return it->second.as_str();
    }

    int parallelism() const { return static_cast<int>(param_int("max_parallelism", 1)); }
    std::uint64_t seed() const {
        return static_cast<std::uint64_t>(param_int("seed", static_cast<std::int64_t>(session->seed)));
    }

    // Effective branching at a site: per-site branching= parameter overrides
    // the config default.  0 means unbounded (only meaningful at choose sites,
    // where exhaustion bounds the fan-out).
    int branching_for(const CheckpointPtr& cp, int fallback) const {
        if (auto declared = cp->declared_branching()) return *declared;
        return fallback;
    }

    // Samples up to `branching` children; 0 = until exhaustion (choose only).
    std::vector<CheckpointPtr> expand(const CheckpointPtr& cp, int branching) const {
        std::optional<int> cap;
        if (branching > 0) cap = branching;
        if (!cap && !cp->at_choose_site())
            throw EngineError("ParamError",
                              "unbounded branching is only valid at choose sites (site " +
                                  cp->site_label() + ")");
        int width = parallelism();
        if (width > 1 && cap && *cap > 1) return cp->parallel_step_sampler(*cap, width);
        return cp->step_sampler(cap);
    }

    // Route a freshly sampled child: provisional or terminal returns become
    // results; RUNNING children are returned for the frontier.
    bool classify(const CheckpointPtr& child) {
        if (child->status() == Status::KILLED) return false;
        if (child->has_return_value()) results.push_back(child);
        return child->status() == Status::RUNNING;
    }
};

using AlgoRunner = std::function<void(AlgoContext&)>;

namespace detail {

struct AlgoEntry {
    AlgoRunner run;
    std::set<std::string> param_names;
};

inline std::map<std::string, AlgoEntry>& algo_registry() {
    static std::map<std::string, AlgoEntry> reg;
    return reg;
}

inline std::mutex& algo_registry_mu() {
    static std::mutex mu;
    return mu;
}

using ValueFn = std::function<double(const Checkpoint&)>;

inline std::map<std::string, ValueFn>& value_fn_registry() {
    static std::map<std::string, ValueFn> reg{
        {"recorded_score",
         [](const Checkpoint& cp) { return cp.score_number().value_or(0.0); }}};
    return reg;
}

void ensure_builtin_algos();

}  // namespace detail

inline void register_algo(const std::string& name, AlgoRunner run,
                          std::set<std::string> param_names) {
    detail::ensure_builtin_algos();
    std::lock_guard<std::mutex> lock(detail::algo_registry_mu());
    auto& reg = detail::algo_registry();
    if (reg.count(name)) throw EngineError("DuplicateAlgo", "algorithm '" + name + "' already registered");
    param_names.insert("max_parallelism");
    param_names.insert("seed");
    reg.emplace(name, detail::AlgoEntry{std::move(run), std::move(param_names)});
}

inline void register_value_fn(const std::string& name, detail::ValueFn fn) {
    std::lock_guard<std::mutex> lock(detail::algo_registry_mu());
    auto& reg = detail::value_fn_registry();
    if (reg.count(name)) throw EngineError("DuplicateAlgo", "value_fn '" + name + "' already registered");
    reg.emplace(name, std::move(fn));
}

// ---------------------------------------------------------------------------
// Built-in algorithms

namespace detail {

inline void traversal_run(AlgoContext& ctx, bool depth_first) {
    int fallback = static_cast<int>(ctx.param_int("default_branching", 1));
    std::deque<CheckpointPtr> frontier;
    if (ctx.root->status() == Status::RUNNING) frontier.push_back(ctx.root);
    while (!frontier.empty() && !ctx.stop()) {
        CheckpointPtr cp;
        if (depth_first) {
            cp = frontier.back();
            frontier.pop_back();
        } else {
            cp = frontier.front();
            frontier.pop_front();
        }
        auto children = ctx.expand(cp, ctx.branching_for(cp, fallback));
        if (depth_first) {
            // push reversed so the first-sampled child is explored first
            for (auto it = children.rbegin(); it != children.rend(); ++it)
                if (ctx.classify(*it)) frontier.push_back(*it);
        } else {
            for (const auto& child : children)
                if (ctx.classify(child)) frontier.push_back(child);
        }
    }
}

inline void sampling_run(AlgoContext& ctx) {
    std::int64_t rollouts = ctx.param_int("num_rollouts", 1);
    for (std::int64_t r = 0; r < rollouts && !ctx.stop(); ++r) {
        CheckpointPtr cur = ctx.root;
        while (cur->status() == Status::RUNNING && !ctx.stop()) {
            auto kids = cur->step_sampler(1);
            if (kids.empty()) break;  // choice exhaustion
            bool running = ctx.classify(kids[0]);
            if (!running) break;
            cur = kids[0];
        }
    }
}

inline void beam_run(AlgoContext& ctx) {
    int width = static_cast<int>(ctx.param_int("beam_width", 1));
    if (width < 1) throw EngineError("ParamError", "beam_width must be >= 1");
    int fallback = static_cast<int>(ctx.param_int("default_branching", 1));
    std::int64_t root_branching = ctx.param_int("root_branching", -1);
    bool shuffle = ctx.param_flag("shuffle", false);
    std::mt19937_64 rng(ctx.seed());

    struct Cand {
        CheckpointPtr cp;
        std::size_t parent_idx;
        std::size_t rank_within_parent;
    };

    std::vector<CheckpointPtr> beam;
    if (ctx.root->status() == Status::RUNNING) beam.push_back(ctx.root);
    bool first_level = true;
    while (!beam.empty() && !ctx.stop()) {
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < beam.size(); ++i) {
            int b = ctx.branching_for(beam[i], fallback);
            if (first_level && root_branching > 0) b = static_cast<int>(root_branching);
            auto children = ctx.expand(beam[i], b);
            std::size_t rank = 0;
            for (const auto& child : children) {
                if (ctx.classify(child)) cands.push_back({child, i, rank++});
            }
        }
        first_level = false;
        if (shuffle) std::shuffle(cands.begin(), cands.end(), rng);
        // Rank: score descending (unscored last), then round-robin over
        // parents (child rank, then parent index).
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            double sa = a.cp->score_number().value_or(-std::numeric_limits<double>::infinity());
            double sb = b.cp->score_number().value_or(-std::numeric_limits<double>::infinity());
            if (sa != sb) return sa > sb;
            if (a.rank_within_parent != b.rank_within_parent)
                return a.rank_within_parent < b.rank_within_parent;
            return a.parent_idx < b.parent_idx;
        });
        beam.clear();
        for (std::size_t i = 0; i < cands.size() && static_cast<int>(i) < width; ++i)
            beam.push_back(cands[i].cp);
    }
}

inline void best_first_run(AlgoContext& ctx, bool reexpand, bool explorative) {
    int fallback = static_cast<int>(ctx.param_int("default_branching", 1));
    int top_k = static_cast<int>(ctx.param_int("top_k_popped", 1));
    if (top_k < 1) throw EngineError("ParamError", "top_k_popped must be >= 1");
    std::int64_t max_results = ctx.param_int("max_num_results", 1);
    double c = explorative ? ctx.param_num("exploration_c", 1.0) : 0.0;

    struct Entry {
        CheckpointPtr cp;
        std::int64_t seq;  // discovery order, for FIFO tie-breaking
        int pops = 0;
    };
    std::vector<Entry> frontier;
    std::int64_t seq = 0;
    std::int64_t total_pops = 0;
    std::int64_t result_count = 0;

    auto priority = [&](const Entry& e) {
        double s = e.cp->score_number().value_or(-std::numeric_limits<double>::infinity());
        if (explorative)
            s += c * std::sqrt(std::log(static_cast<double>(std::max<std::int64_t>(1, total_pops))) /
                               (1.0 + e.pops));
        return s;
    };
    auto pop_best = [&]() {
        std::size_t best = 0;
        double best_p = priority(frontier[0]);
        for (std::size_t i = 1; i < frontier.size(); ++i) {
            double p = priority(frontier[i]);
            if (p > best_p || (p == best_p && frontier[i].seq < frontier[best].seq)) {
                best = i;
                best_p = p;
            }
        }
        Entry e = frontier[best];
        frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(best));
        return e;
    };

    if (ctx.root->status() == Status::RUNNING || ctx.root->status() == Status::RETURNED)
        frontier.push_back({ctx.root, seq++, 0});

    while (!frontier.empty() && result_count < max_results && !ctx.stop()) {
        for (int k = 0; k < top_k && !frontier.empty() && result_count < max_results && !ctx.stop();
             ++k) {
            Entry e = pop_best();
            ++total_pops;
            if (e.cp->status() == Status::RETURNED) {
                // A returned state becomes a result only when popped: nothing
                // cheaper is left, which is what makes best-first optimal.
                ctx.results.push_back(e.cp);
                ++result_count;
                continue;
            }
            if (reexpand) {
                auto kids = e.cp->step_sampler(1);
                if (!kids.empty()) {
                    const auto& child = kids[0];
                    if (child->status() != Status::KILLED) {
                        if (child->status() == Status::RUNNING && child->has_return_value())
                            ctx.results.push_back(child);
                        if (child->status() == Status::RUNNING || child->status() == Status::RETURNED)
                            frontier.push_back({child, seq++, 0});
                    }
                    e.pops += 1;
                    frontier.push_back(e);  // eligible for further sampling
                }
            } else {
                auto kids = ctx.expand(e.cp, ctx.branching_for(e.cp, fallback));
                for (const auto& child : kids) {
                    if (child->status() == Status::KILLED) continue;
                    if (child->status() == Status::RUNNING && child->has_return_value())
                        ctx.results.push_back(child);
                    if (child->status() == Status::RUNNING || child->status() == Status::RETURNED)
                        frontier.push_back({child, seq++, 0});
                }
            }
        }
    }
}

inline void mcts_run(AlgoContext& ctx) {
    std::int64_t iterations = ctx.param_int("num_iterations", 1);
    double c = ctx.param_num("exploration_c", 1.414);
    std::string vf_name = ctx.param_str("value_fn", "recorded_score");
    ValueFn value_fn;
    {
        std::lock_guard<std::mutex> lock(algo_registry_mu());
        auto it = value_fn_registry().find(vf_name);
        if (it == value_fn_registry().end())
            throw EngineError("ParamError", "unknown value_fn '" + vf_name + "'");
        value_fn = it->second;
    }

    struct MNode {
        CheckpointPtr cp;
        MNode* parent = nullptr;
        std::vector<std::unique_ptr<MNode>> children;
        int visits = 0;
        double total = 0.0;
        bool exhausted = false;
    };
    MNode root;
    root.cp = ctx.root;
    if (ctx.root->has_return_value()) ctx.results.push_back(ctx.root);

    for (std::int64_t it = 0; it < iterations && !ctx.stop(); ++it) {
        // selection: descend by UCT until we expand a new child or reach a leaf
        MNode* node = &root;
        for (;;) {
            if (node->cp->status() != Status::RUNNING) break;  // terminal leaf
            if (!node->exhausted) {
                auto kids = node->cp->step_sampler(1);
                if (kids.empty()) {
                    node->exhausted = true;
                } else {
                    auto child = std::make_unique<MNode>();
                    child->cp = kids[0];
                    child->parent = node;
                    if (child->cp->status() != Status::KILLED && child->cp->has_return_value())
                        ctx.results.push_back(child->cp);
                    node->children.push_back(std::move(child));
                    node = node->children.back().get();
                    break;  // expansion done: evaluate this new node
                }
            }
            // fully expanded: pick the UCT-best child
            MNode* best = nullptr;
            double best_u = -std::numeric_limits<double>::infinity();
            for (const auto& ch : node->children) {
                if (ch->cp->status() == Status::KILLED) continue;
                double u = ch->visits == 0
                               ? std::numeric_limits<double>::infinity()
                               : ch->total / ch->visits +
                                     c * std::sqrt(std::log(std::max(1, node->visits)) / ch->visits);
                if (u > best_u) {
                    best_u = u;
                    best = ch.get();
                }
            }
            if (!best) break;  // no viable children
            node = best;
        }
        double v = value_fn(*node->cp);
        for (MNode* n = node; n; n = n->parent) {
            n->visits += 1;
            n->total += v;
        }
    }
}

inline void ensure_builtin_algos() {
    static std::once_flag once;
    std::call_once(once, []() {
        auto& reg = algo_registry();
        auto add = [&reg](const std::string& name, AlgoRunner run, std::set<std::string> names) {
            names.insert("max_parallelism");
            names.insert("seed");
            reg.emplace(name, AlgoEntry{std::move(run), std::move(names)});
        };
        add("dfs", [](AlgoContext& ctx) { traversal_run(ctx, true); }, {"default_branching"});
        add("bfs", [](AlgoContext& ctx) { traversal_run(ctx, false); }, {"default_branching"});
        add("sampling", [](AlgoContext& ctx) { sampling_run(ctx); }, {"num_rollouts"});
        add("beam", [](AlgoContext& ctx) { beam_run(ctx); },
            {"beam_width", "default_branching", "root_branching", "shuffle"});
        add("best_first", [](AlgoContext& ctx) { best_first_run(ctx, false, false); },
            {"default_branching", "top_k_popped", "max_num_results"});
        add("best_first_reexpand", [](AlgoContext& ctx) { best_first_run(ctx, true, false); },
            {"top_k_popped", "max_num_results"});
        add("best_first_explorative", [](AlgoContext& ctx) { best_first_run(ctx, true, true); },
            {"top_k_popped", "max_num_results", "exploration_c"});
        add("mcts", [](AlgoContext& ctx) { mcts_run(ctx); },
            {"num_iterations", "value_fn", "exploration_c", "default_branching"});
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry point

inline SearchResult run_search(std::shared_ptr<const CompiledSpace> space,
                               const std::map<std::string, Value>& args, const SearchConfig& config,
                               SessionPtr session) {
    detail::ensure_builtin_algos();
    detail::AlgoEntry entry;
    {
        std::lock_guard<std::mutex> lock(detail::algo_registry_mu());
        auto& reg = detail::algo_registry();
        auto it = reg.find(config.algo);
        if (it == reg.end())
            throw EngineError("UnknownAlgo", "no search algorithm named '" + config.algo + "'");
        entry = it->second;
    }
    for (const auto& [k, v] : config.params) {
        (void)v;
        if (!entry.param_names.count(k))
            throw EngineError("ParamError",
                              "algorithm '" + config.algo + "' has no parameter '" + k + "'");
    }

    SearchResult result;
    session->set_trace_hook([&result](const TraceEvent& ev) { result.trace.nodes.push_back(ev); });

    AlgoContext ctx;
    ctx.session = session;
    ctx.params = config.params;
    ctx.root = Checkpoint::start(make_engine(space, session), args);
    if (ctx.root->has_return_value()) {
        ctx.results.push_back(ctx.root);
    }
    if (ctx.root->status() == Status::RUNNING) entry.run(ctx);
    session->set_trace_hook(nullptr);
    session->scores.flush(session->fn_invoker);

    for (const auto& cp : ctx.results) {
        ResultEntry re;
        re.value = cp->return_value();
        re.score = cp->score_number();
        re.cp = cp;
        result.all.push_back(std::move(re));
    }
    if (result.all.empty())
        throw EngineError("NoSurvivingBranch", "search produced no surviving results");
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.all.size(); ++i) {
        double a = result.all[i].score.value_or(-std::numeric_limits<double>::infinity());
        double b = result.all[best].score.value_or(-std::numeric_limits<double>::infinity());
        if (a > b) best = i;  // strict: ties keep the earliest discovery
    }
    result.best = result.all[best];
    result.aggregate_costs = session->aggregate_costs();
    return result;
}

}  // namespace pan
