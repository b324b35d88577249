// test_search.cpp - search algorithms against independent oracles: exhaustive
// enumeration, Dijkstra, sequential best-of-N selection, plus registry,
// trace, early-stop, and parallel-determinism checks.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pan/search.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

using namespace pan;

namespace {

SearchResult do_search(const std::string& src, const std::string& algo,
                       const std::map<std::string, Value>& params,
                       const std::string& provider_json = "", std::uint64_t seed = 0,
                       const std::map<std::string, Value>& args = {},
                       SessionPtr* session_out = nullptr) {
    auto prog = parse_program(src);
    auto norm = std::make_shared<const Program>(preprocess(prog, "main"));
    auto space = std::make_shared<const CompiledSpace>(compile_program(norm, "main"));
    auto session = std::make_shared<SessionState>();
    session->seed = seed;
    session->provider.set_seed(seed);
    if (!provider_json.empty()) session->provider.load_json_text(provider_json);
    if (session_out) *session_out = session;
    SearchConfig cfg;
    cfg.algo = algo;
    cfg.params = params;
    return run_search(space, args, cfg, session);
}

std::vector<double> sorted_scores(const SearchResult& r) {
    std::vector<double> out;
    for (const auto& e : r.all) out.push_back(e.score.value_or(-1e300));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

TEST_CASE("unknown algorithm and unknown parameters are rejected") {
    const std::string src = "fn main() { branchpoint() \n return 1 }";
    try {
        do_search(src, "simulated_annealing", {});
        FAIL("expected UnknownAlgo");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "UnknownAlgo");
    }
    try {
        do_search(src, "bfs", {{"beam_width", Value(2)}});  // beam-only param
        FAIL("expected ParamError");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "ParamError");
    }
    CHECK_THROWS_AS(do_search(src, "bfs", {{"default_branching", Value("x")}}), EngineError);
}

TEST_CASE("custom algorithms and value functions register once") {
    register_algo("take_first_only",
                  [](AlgoContext& ctx) {
                      auto kids = ctx.root->step_sampler(1);
                      if (!kids.empty()) ctx.classify(kids[0]);
                  },
                  {});
    auto res = do_search("fn main() { x = choose([4, 9]) \n return x }", "take_first_only", {});
    REQUIRE(res.all.size() == 1);
    CHECK(res.best.value == Value(4));
    CHECK_THROWS_AS(register_algo("take_first_only", [](AlgoContext&) {}, {}), EngineError);
    CHECK_THROWS_AS(register_algo("bfs", [](AlgoContext&) {}, {}), EngineError);

    register_value_fn("negated_score",
                      [](const Checkpoint& cp) { return -cp.score_number().value_or(0.0); });
    CHECK_THROWS_AS(register_value_fn("negated_score", [](const Checkpoint&) { return 0.0; }),
                    EngineError);
    CHECK_THROWS_AS(register_value_fn("recorded_score", [](const Checkpoint&) { return 0.0; }),
                    EngineError);
    // The registered function is reachable from mcts params.
    auto res2 = do_search("fn main() { x = choose([1, 2]) \n record_score(x) \n return x }",
                          "mcts", {{"num_iterations", Value(4)}, {"value_fn", Value("negated_score")}});
    CHECK(res2.all.size() == 2);
}

// ---------------------------------------------------------------------------
// Exhaustive traversal
// ---------------------------------------------------------------------------

TEST_CASE("bfs with unbounded branching enumerates the full cross product") {
    const std::string src =
        "fn main() {\n"
        "    a = choose([1, 2, 3])\n"
        "    b = choose([10, 20, 30, 40])\n"
        "    record_score(a * 100 + b)\n"
        "    return a * 100 + b\n"
        "}";
    auto res = do_search(src, "bfs", {{"default_branching", Value(0)}});
    REQUIRE(res.all.size() == 12);
    std::vector<std::int64_t> values;
    for (const auto& e : res.all) values.push_back(e.value.as_int());
    std::sort(values.begin(), values.end());
    std::vector<std::int64_t> expect;
    for (int a = 1; a <= 3; ++a)
        for (int b = 10; b <= 40; b += 10) expect.push_back(a * 100 + b);
    std::sort(expect.begin(), expect.end());
    CHECK(values == expect);
    CHECK(res.best.value == Value(340));
    CHECK(res.best.score == 340.0);
    int returned = 0;
    for (const auto& n : res.trace.nodes)
        if (n.status == "RETURNED") ++returned;
    CHECK(returned == 12);
}

TEST_CASE("unbounded branching at a plain branchpoint is a parameter error") {
    try {
        do_search("fn main() { branchpoint() \n return 1 }", "bfs",
                  {{"default_branching", Value(0)}});
        FAIL("expected ParamError");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "ParamError");
    }
}

TEST_CASE("per-site branching overrides the configured default") {
    const std::string src =
        "fn main() {\n"
        "    a = choose([1, 2, 3, 4], branching=2)\n"
        "    b = choose([5, 6])\n"
        "    return a * 10 + b\n"
        "}";
    // default 1 would visit one leaf; the a-site override yields 2 x 1.
    auto res = do_search(src, "dfs", {{"default_branching", Value(1)}});
    REQUIRE(res.all.size() == 2);
    CHECK(res.all[0].value == Value(15));
    CHECK(res.all[1].value == Value(25));
}

TEST_CASE("dfs enumeration matches the path-enumeration oracle") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        DYNAMIC_SECTION("choose-only program " << seed) {
            std::mt19937_64 rng(seed * 6151 + 7);
            std::size_t expected_leaves = 0;
            std::string src = pantest::gen_choose_program(rng, &expected_leaves);
            INFO("program:\n" << src);
            auto oracle = pantest::enumerate_paths(src, "main", {}, "", 0);
            REQUIRE(oracle.leaves.size() == expected_leaves);

            auto res = do_search(src, "dfs", {{"default_branching", Value(0)}});
            CHECK(res.all.size() == oracle.leaves.size());
            REQUIRE(res.best.score.has_value());
            REQUIRE(oracle.max_score.has_value());
            CHECK(*res.best.score == *oracle.max_score);

            std::vector<double> oracle_scores;
            for (const auto& leaf : oracle.leaves)
                oracle_scores.push_back(leaf.score.value_or(-1e300));
            std::sort(oracle_scores.begin(), oracle_scores.end());
            CHECK(sorted_scores(res) == oracle_scores);
        }
    }
}

// ---------------------------------------------------------------------------
// Beam search
// ---------------------------------------------------------------------------

namespace {
const char* kTwoStageSrc =
    "fn main() {\n"
    "    branchpoint(name=\"stage1\")\n"
    "    a = perform(\"a\")\n"
    "    record_score(a)\n"
    "    branchpoint(name=\"stage2\")\n"
    "    b = perform(\"b\")\n"
    "    record_score(a * 10 + b)\n"
    "    return a * 10 + b\n"
    "}";
const char* kTwoStageCfg =
    R"({"ops": {"a": {"mode": "scripted", "responses": [3, 1]},
                "b": {"mode": "scripted", "responses": [5, 6, 7, 8]}}})";
}  // namespace

TEST_CASE("beam keeps the top-width candidates level by level") {
    // Stage 1 drafts score 3 and 1; both survive width 2.  Stage 2 expands the
    // higher-scoring draft first: 3 -> {35, 36}, then 1 -> {17, 18}.
    auto res = do_search(kTwoStageSrc, "beam",
                         {{"beam_width", Value(2)}, {"default_branching", Value(2)}},
                         kTwoStageCfg);
    REQUIRE(res.all.size() == 4);
    CHECK(res.all[0].value == Value(35));
    CHECK(res.all[1].value == Value(36));
    CHECK(res.all[2].value == Value(17));
    CHECK(res.all[3].value == Value(18));
    CHECK(res.best.value == Value(36));
    CHECK(res.best.score == 36.0);
}

TEST_CASE("beam width one explores only the best continuation") {
    auto res = do_search(kTwoStageSrc, "beam",
                         {{"beam_width", Value(1)}, {"default_branching", Value(2)}},
                         kTwoStageCfg);
    REQUIRE(res.all.size() == 2);  // only the a=3 draft reaches stage 2
    CHECK(res.all[0].value == Value(35));
    CHECK(res.all[1].value == Value(36));
    CHECK(res.best.value == Value(36));
    CHECK_THROWS_AS(do_search(kTwoStageSrc, "beam", {{"beam_width", Value(0)}}, kTwoStageCfg),
                    EngineError);
}

TEST_CASE("beam with seeded shuffle stays deterministic per seed") {
    auto once = do_search(kTwoStageSrc, "beam",
                          {{"beam_width", Value(1)},
                           {"default_branching", Value(2)},
                           {"shuffle", Value(true)},
                           {"seed", Value(11)}},
                          kTwoStageCfg);
    auto twice = do_search(kTwoStageSrc, "beam",
                           {{"beam_width", Value(1)},
                            {"default_branching", Value(2)},
                            {"shuffle", Value(true)},
                            {"seed", Value(11)}},
                           kTwoStageCfg);
    CHECK(once.best.value == twice.best.value);
    CHECK(once.all.size() == twice.all.size());
}

TEST_CASE("width-1 beam equals the local best-of-n oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DYNAMIC_SECTION("three-site fixture " << seed) {
            std::mt19937_64 rng(seed * 7877 + 3);
            int n = 2 + static_cast<int>(rng() % 3);
            auto fx = pantest::gen_three_site_program(rng, n);
            INFO("program:\n" << fx.src << "provider: " << fx.provider_json);
            auto res = do_search(fx.src, "beam",
                                 {{"beam_width", Value(1)},
                                  {"default_branching", Value(static_cast<std::int64_t>(n))}},
                                 fx.provider_json, seed);
            auto oracle =
                pantest::oracle_local_best_of_n(fx.src, "main", {}, fx.provider_json, seed, n);
            CHECK(res.best.value == oracle.value);
            REQUIRE(res.best.score.has_value());
            REQUIRE(oracle.score.has_value());
            CHECK(*res.best.score == *oracle.score);
        }
    }
}

TEST_CASE("width-n beam with root fan-out equals the global best-of-n oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DYNAMIC_SECTION("three-site fixture " << seed) {
            std::mt19937_64 rng(seed * 4391 + 29);
            int n = 2 + static_cast<int>(rng() % 3);
            auto fx = pantest::gen_three_site_program(rng, n);
            INFO("program:\n" << fx.src << "provider: " << fx.provider_json);
            auto res = do_search(fx.src, "beam",
                                 {{"beam_width", Value(static_cast<std::int64_t>(n))},
                                  {"default_branching", Value(1)},
                                  {"root_branching", Value(static_cast<std::int64_t>(n))}},
                                 fx.provider_json, seed);
            auto oracle =
                pantest::oracle_global_best_of_n(fx.src, "main", {}, fx.provider_json, seed, n);
            CHECK(res.best.value == oracle.value);
            REQUIRE(res.best.score.has_value());
            REQUIRE(oracle.score.has_value());
            CHECK(*res.best.score == *oracle.score);
        }
    }
}

// ---------------------------------------------------------------------------
// Best-first
// ---------------------------------------------------------------------------

TEST_CASE("best-first on path programs finds Dijkstra-optimal costs") {
    std::string graph_src = pantest::read_corpus_file("graph_astar.pan");
    REQUIRE_FALSE(graph_src.empty());
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        DYNAMIC_SECTION("random digraph " << seed) {
            std::mt19937_64 rng(seed * 2749 + 101);
            auto g = pantest::random_digraph(rng, 8);
            int goal = g.n - 1;
            auto dist = pantest::dijkstra(g, 0);
            std::map<std::string, Value> args{
                {"graph", pantest::digraph_to_value(g)},
                {"start", Value(pantest::graph_node_name(0))},
                {"goal", Value(pantest::graph_node_name(goal))}};
            if (dist[static_cast<std::size_t>(goal)]) {
                auto res = do_search(graph_src, "best_first", {{"default_branching", Value(0)}},
                                     "", 0, args);
                CHECK(res.best.value ==
                      Value(static_cast<std::int64_t>(*dist[static_cast<std::size_t>(goal)])));
            } else {
                try {
                    do_search(graph_src, "best_first", {{"default_branching", Value(0)}}, "", 0,
                              args);
                    FAIL("expected NoSurvivingBranch for an unreachable goal");
                } catch (const EngineError& e) {
                    CHECK(e.kind() == "NoSurvivingBranch");
                }
            }
        }
    }
}

TEST_CASE("best-first can return several results in score order") {
    const std::string src =
        "fn main() {\n"
        "    x = choose([4, 9, 1, 7])\n"
        "    record_score(x)\n"
        "    return x\n"
        "}";
    auto res = do_search(src, "best_first",
                         {{"default_branching", Value(0)}, {"max_num_results", Value(3)}});
    REQUIRE(res.all.size() == 3);
    CHECK(res.all[0].value == Value(9));  // popped best-first
    CHECK(res.all[1].value == Value(7));
    CHECK(res.all[2].value == Value(4));
    CHECK(res.best.value == Value(9));
    CHECK_THROWS_AS(
        do_search(src, "best_first", {{"top_k_popped", Value(0)}}), EngineError);
}

TEST_CASE("explorative best-first with zero exploration equals plain reexpansion") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        DYNAMIC_SECTION("choose-only program " << seed) {
            std::mt19937_64 rng(seed * 919 + 5);
            std::string src = pantest::gen_choose_program(rng);
            INFO("program:\n" << src);
            std::map<std::string, Value> base{{"top_k_popped", Value(2)},
                                              {"max_num_results", Value(3)}};
            auto plain = do_search(src, "best_first_reexpand", base);
            base["exploration_c"] = Value(0.0);
            auto zero_c = do_search(src, "best_first_explorative", base);
            REQUIRE(plain.all.size() == zero_c.all.size());
            for (std::size_t i = 0; i < plain.all.size(); ++i) {
                CHECK(plain.all[i].value == zero_c.all[i].value);
                CHECK(plain.all[i].score == zero_c.all[i].score);
            }
            CHECK(plain.trace.nodes.size() == zero_c.trace.nodes.size());
        }
    }
}

// ---------------------------------------------------------------------------
// MCTS and sampling
// ---------------------------------------------------------------------------

TEST_CASE("mcts discovers every leaf of a small tree within its budget") {
    const std::string src =
        "fn main() { x = choose([2, 8, 5, 3]) \n record_score(x) \n return x }";
    auto res = do_search(src, "mcts", {{"num_iterations", Value(8)}});
    CHECK(res.all.size() == 4);  // four expansions, then selection-only passes
    CHECK(res.best.value == Value(8));
    try {
        do_search(src, "mcts", {{"value_fn", Value("ghost")}});
        FAIL("expected ParamError");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "ParamError");
    }
}

TEST_CASE("sampling performs the requested number of rollouts") {
    const std::string src =
        "fn main() {\n"
        "    branchpoint(name=\"roll\")\n"
        "    x = perform(\"d\")\n"
        "    record_score(x)\n"
        "    return x\n"
        "}";
    const std::string cfg =
        R"({"ops": {"d": {"mode": "seeded", "candidates": [1, 2, 3, 4, 5, 6, 7]}}})";
    auto res = do_search(src, "sampling", {{"num_rollouts", Value(5)}}, cfg, 3);
    CHECK(res.all.size() == 5);
    double best = -1;
    for (const auto& e : res.all) best = std::max(best, e.score.value_or(-1));
    CHECK(res.best.score == best);
}

// ---------------------------------------------------------------------------
// Early stop, dead ends, parallelism, costs
// ---------------------------------------------------------------------------

TEST_CASE("early stop halts expansion immediately") {
    const std::string src =
        "fn main() {\n"
        "    x = choose([1, 2, 3, 4, 5])\n"
        "    record_score(x)\n"
        "    if x == 3 {\n"
        "        early_stop()\n"
        "    }\n"
        "    return x\n"
        "}";
    SessionPtr session;
    auto res = do_search(src, "bfs", {{"default_branching", Value(0)}}, "", 0, {}, &session);
    CHECK(res.all.size() == 3);  // elements 4 and 5 were never stepped
    CHECK(res.best.value == Value(3));
    std::int64_t stop_step = session->early_stop_step.load();
    REQUIRE(stop_step >= 0);
    for (const auto& n : res.trace.nodes) {
        INFO("node " << n.node_id << " vs stop step " << stop_step);
        CHECK(n.node_id <= stop_step);
    }
}

TEST_CASE("a search where every branch dies reports no surviving branch") {
    const std::string src =
        "fn main() { x = choose([1, 2]) \n kill_branch(\"nope\") \n return x }";
    try {
        do_search(src, "dfs", {{"default_branching", Value(0)}});
        FAIL("expected NoSurvivingBranch");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "NoSurvivingBranch");
    }
}

TEST_CASE("parallel expansion yields the same result set as serial") {
    const std::string src =
        "fn main() {\n"
        "    a = choose([1, 2, 3, 4, 5, 6])\n"
        "    b = choose([7, 8, 9])\n"
        "    record_score(a * 10 + b)\n"
        "    return a * 10 + b\n"
        "}";
    auto serial = do_search(src, "bfs", {{"default_branching", Value(0)}});
    auto parallel = do_search(
        src, "bfs", {{"default_branching", Value(0)}, {"max_parallelism", Value(4)}});
    CHECK(sorted_scores(serial) == sorted_scores(parallel));
    CHECK(serial.best.value == parallel.best.value);
}

TEST_CASE("aggregate costs equal the sum of per-node transition costs") {
    const std::string src =
        "fn main() {\n"
        "    record_costs(tokens=2)\n"
        "    a = choose([1, 2, 3])\n"
        "    record_costs(tokens=3, calls=1)\n"
        "    b = choose([4, 5])\n"
        "    record_costs(tokens=1)\n"
        "    record_score(a * b)\n"
        "    return a * b\n"
        "}";
    SessionPtr session;
    auto res = do_search(src, "bfs", {{"default_branching", Value(0)}}, "", 0, {}, &session);
    std::map<std::string, double> summed;
    for (const auto& n : res.trace.nodes)
        for (const auto& [k, v] : n.costs) summed[k] += v;
    CHECK(res.aggregate_costs == summed);
    CHECK(res.aggregate_costs == session->aggregate_costs());
    CHECK(res.aggregate_costs.at("tokens") == 2 + 3 * 3 + 6 * 1);
    CHECK(res.aggregate_costs.at("calls") == 3);
}

TEST_CASE("trace parents always precede their children") {
    auto res = do_search(
        "fn main() {\n"
        "    a = choose([1, 2])\n"
        "    b = choose([3, 4])\n"
        "    return a * b\n"
        "}",
        "bfs", {{"default_branching", Value(0)}});
    std::vector<std::int64_t> seen;
    for (const auto& n : res.trace.nodes) {
        if (n.parent_id >= 0)
            CHECK(std::find(seen.begin(), seen.end(), n.parent_id) != seen.end());
        seen.push_back(n.node_id);
    }
    CHECK(res.trace.to_json().find("\"status\"") != std::string::npos);
    CHECK(res.trace.to_dot().find("digraph search") != std::string::npos);
}
