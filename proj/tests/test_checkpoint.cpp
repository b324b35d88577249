// test_checkpoint.cpp - stepping semantics: branch isolation, choose cursors,
// protect retry arithmetic, optional returns, scores/costs bookkeeping,
// samplers, and step counters.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pan/checkpoint.hpp"
#include "pan/cps.hpp"
#include "pan/parser.hpp"
#include "pan/preprocess.hpp"

using namespace pan;

namespace {

std::shared_ptr<const CompiledSpace> make_space(const std::string& src,
                                                const std::string& entry = "main") {
    auto prog = parse_program(src);
    auto norm = std::make_shared<const Program>(preprocess(prog, entry));
    return std::make_shared<const CompiledSpace>(compile_program(norm, entry));
}

SessionPtr make_session(std::uint64_t seed = 0, const std::string& provider_json = "") {
    auto s = std::make_shared<SessionState>();
    s->seed = seed;
    s->provider.set_seed(seed);
    if (!provider_json.empty()) s->provider.load_json_text(provider_json);
    return s;
}

CheckpointPtr start_src(const std::string& src, SessionPtr session,
                        const std::map<std::string, Value>& args = {}) {
    return start_program(make_space(src), std::move(session), args);
}

}  // namespace

// ---------------------------------------------------------------------------
// Start
// ---------------------------------------------------------------------------

TEST_CASE("start runs to the first branchpoint") {
    auto cp = start_src("fn main() { x = 1 \n branchpoint(name=\"first\") \n return x }",
                        make_session());
    REQUIRE(cp->status() == Status::RUNNING);
    CHECK(cp->site_label() == "first");
    CHECK_FALSE(cp->at_choose_site());
    CHECK(cp->node_id() == 0);
    CHECK(cp->parent_id() == -1);
    auto done = cp->step();
    REQUIRE(done->status() == Status::RETURNED);
    CHECK(done->return_value() == Value(1));
    CHECK(done->parent_id() == 0);
    CHECK(done->node_id() == 1);
}

TEST_CASE("start on a site-free program returns immediately") {
    auto cp = start_src("fn main() { return 2 + 3 }", make_session());
    REQUIRE(cp->status() == Status::RETURNED);
    CHECK(cp->return_value() == Value(5));
}

TEST_CASE("errors before the first branchpoint propagate from start") {
    CHECK_THROWS_AS(start_src("fn main() { return 1 / 0 }", make_session()), RuntimeError);
}

TEST_CASE("entry arguments are validated and deep-copied") {
    const std::string src = "fn main(xs) { branchpoint() \n append(xs, 2) \n return xs }";
    CHECK_THROWS_AS(start_src(src, make_session(), {{"bogus", Value(1)}}), EngineError);
    CHECK_THROWS_AS(start_src(src, make_session()), EngineError);  // missing argument

    Value arg = Value::list({Value(1)});
    auto cp = start_src(src, make_session(), {{"xs", arg}});
    arg.as_list()->items.push_back(Value(99));  // caller mutation is invisible
    auto done = cp->step();
    CHECK(done->return_value() == Value::list({Value(1), Value(2)}));
}

// ---------------------------------------------------------------------------
// Messages and site parameters
// ---------------------------------------------------------------------------

TEST_CASE("branchpoint yields the stepped message into the program") {
    const std::string src = "fn main() { x = branchpoint() \n return x }";
    auto cp = start_src(src, make_session());
    CHECK(cp->step(Value("hello"))->return_value() == Value("hello"));
    CHECK(cp->step()->return_value() == Value::null());
}

TEST_CASE("site parameters are evaluated on every arrival") {
    auto cp = start_src(
        "fn main() {\n"
        "    i = 0\n"
        "    while i < 2 {\n"
        "        branchpoint(name=\"s\", round=i, message_to_controller=\"r\" + str(i))\n"
        "        i = i + 1\n"
        "    }\n"
        "    return i\n"
        "}",
        make_session());
    REQUIRE(cp->status() == Status::RUNNING);
    CHECK(cp->branchpoint_params().at("round") == Value(0));
    CHECK(cp->message_from_agent() == Value("r0"));
    CHECK(cp->declared_branching() == std::nullopt);
    auto cp2 = cp->step();
    REQUIRE(cp2->status() == Status::RUNNING);
    CHECK(cp2->branchpoint_params().at("round") == Value(1));
    CHECK(cp2->message_from_agent() == Value("r1"));
    CHECK(cp2->step()->return_value() == Value(2));
}

TEST_CASE("declared branching comes from the branching parameter") {
    auto cp = start_src("fn main() { branchpoint(branching=5) \n return 0 }", make_session());
    CHECK(cp->declared_branching() == 5);
}

// ---------------------------------------------------------------------------
// Branch isolation and sharing
// ---------------------------------------------------------------------------

TEST_CASE("sibling branches get independent deep copies by default") {
    const std::string src =
        "fn main() { xs = [1] \n branchpoint() \n append(xs, 2) \n return xs }";
    auto cp = start_src(src, make_session());
    auto a = cp->step();
    auto b = cp->step();
    CHECK(a->return_value() == Value::list({Value(1), Value(2)}));
    CHECK(b->return_value() == Value::list({Value(1), Value(2)}));  // not [1, 2, 2]
}

TEST_CASE("nocopy names share one cell across siblings") {
    const std::string src =
        "fn main() {\n"
        "    nocopy xs\n"
        "    xs = [1]\n"
        "    branchpoint()\n"
        "    append(xs, 2)\n"
        "    return xs\n"
        "}";
    auto cp = start_src(src, make_session());
    auto a = cp->step();
    CHECK(a->return_value() == Value::list({Value(1), Value(2)}));
    auto b = cp->step();
    CHECK(b->return_value() == Value::list({Value(1), Value(2), Value(2)}));
    // The shared cell means sibling A's returned handle sees B's append too.
    CHECK(a->return_value() == b->return_value());
}

TEST_CASE("needscopy restores isolation after nocopy") {
    const std::string src =
        "fn main() {\n"
        "    nocopy xs\n"
        "    needscopy xs\n"
        "    xs = [1]\n"
        "    branchpoint()\n"
        "    append(xs, 2)\n"
        "    return xs\n"
        "}";
    auto cp = start_src(src, make_session());
    cp->step();
    CHECK(cp->step()->return_value() == Value::list({Value(1), Value(2)}));
}

TEST_CASE("each sampled attempt observes all earlier attempts' feedback") {
    // Shared-memory refinement: the i-th child must see exactly i-1 entries.
    const std::string src =
        "fn main() {\n"
        "    nocopy fb\n"
        "    fb = []\n"
        "    branchpoint(name=\"attempt\")\n"
        "    n = len(fb)\n"
        "    append(fb, n)\n"
        "    return n\n"
        "}";
    auto cp = start_src(src, make_session());
    for (std::int64_t i = 0; i < 5; ++i) {
        auto child = cp->step();
        REQUIRE(child->status() == Status::RETURNED);
        CHECK(child->return_value() == Value(i));  // i prior feedback entries
    }
}

// ---------------------------------------------------------------------------
// Choose sites
// ---------------------------------------------------------------------------

TEST_CASE("choose steps through elements in order then reports done") {
    const std::string src = "fn main() { x = choose([10, 20, 30]) \n return x * 2 }";
    auto cp = start_src(src, make_session());
    REQUIRE(cp->at_choose_site());
    CHECK(cp->num_choices() == 3);
    CHECK(cp->step()->return_value() == Value(20));
    CHECK(cp->step()->return_value() == Value(40));
    CHECK(cp->step()->return_value() == Value(60));
    auto done = cp->step();
    CHECK(done->status() == Status::DONE_STEPPING);
    CHECK_THROWS_AS(done->step(), EngineError);
}

TEST_CASE("choose over map keys and strings uses canonical order") {
    auto cp = start_src("fn main() { k = choose({\"b\": 1, \"a\": 2}) \n return k }",
                        make_session());
    CHECK(cp->step()->return_value() == Value("a"));
    CHECK(cp->step()->return_value() == Value("b"));
    auto cp2 = start_src("fn main() { c = choose(\"hi\") \n return c }", make_session());
    CHECK(cp2->step()->return_value() == Value("h"));
    CHECK(cp2->step()->return_value() == Value("i"));
}

TEST_CASE("choose sequence is snapshotted when the site is reached") {
    // Mutating the source list from a sibling branch must not affect the
    // choices already materialized at the parked site.
    const std::string src =
        "fn main() {\n"
        "    xs = [1, 2]\n"
        "    y = choose(xs)\n"
        "    append(xs, 99)\n"
        "    return y\n"
        "}";
    auto cp = start_src(src, make_session());
    CHECK(cp->num_choices() == 2);
    CHECK(cp->step()->return_value() == Value(1));
    CHECK(cp->num_choices() == 2);  // sibling's append did not grow the snapshot
    CHECK(cp->step()->return_value() == Value(2));
    CHECK(cp->step()->status() == Status::DONE_STEPPING);
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

TEST_CASE("step_sampler collects children until exhaustion or cap") {
    const std::string src = "fn main() { x = choose([1, 2, 3, 4]) \n return x }";
    auto all = start_src(src, make_session())->step_sampler();
    REQUIRE(all.size() == 4);
    CHECK(all[3]->return_value() == Value(4));
    auto capped = start_src(src, make_session())->step_sampler(2);
    CHECK(capped.size() == 2);
}

TEST_CASE("parallel sampler yields the same multiset as the serial sampler") {
    const std::string src =
        "fn main() { x = choose([1, 2, 3, 4, 5, 6]) \n record_score(x * 1.0) \n return x * 10 }";
    auto serial = start_src(src, make_session())->step_sampler();
    auto parallel = start_src(src, make_session())->parallel_step_sampler(6, 4);
    REQUIRE(serial.size() == 6);
    REQUIRE(parallel.size() == 6);
    auto values = [](const std::vector<CheckpointPtr>& cps) {
        std::vector<std::int64_t> v;
        for (const auto& c : cps) v.push_back(c->return_value().as_int());
        std::sort(v.begin(), v.end());
        return v;
    };
    CHECK(values(serial) == values(parallel));
}

// ---------------------------------------------------------------------------
// Protect
// ---------------------------------------------------------------------------

namespace {
const char* kProtectCfg2 =
    R"({"ops": {"p": {"mode": "scripted", "responses": [100, 200]}},
        "errors": {"p": {"fail_first_n": 2, "tag": "Boom"}}})";
}

TEST_CASE("protect retries through declared failures and then succeeds") {
    // Provider fails the first 2 calls; 3 retries allowed: call 3 succeeds.
    auto session = make_session(0, kProtectCfg2);
    auto cp = start_src("fn main() { x = protect(perform(\"p\"), \"Boom\", 3) \n return x }",
                        session);
    REQUIRE(cp->status() == Status::RETURNED);
    CHECK(cp->return_value() == Value(100));
    CHECK(session->provider.log_size() == 3);  // exactly 3 invocations
    CHECK(session->provider.log()[0] == "p() -> raise Boom");
    CHECK(session->provider.log()[2] == "p() -> 100");
}

TEST_CASE("protect exhausts after max_retries plus one invocations") {
    auto session = make_session(0, kProtectCfg2);
    try {
        start_src("fn main() { x = protect(perform(\"p\"), \"Boom\", 1) \n return x }", session);
        FAIL("expected ProtectExhausted");
    } catch (const EngineError& e) {
        CHECK(e.kind() == "ProtectExhausted");
    }
    CHECK(session->provider.log_size() == 2);  // exactly 2 invocations
}

TEST_CASE("protect only swallows its declared tag") {
    auto session = make_session(
        0, R"({"ops": {}, "errors": {"p": {"fail_first_n": 1, "tag": "Other"}}})");
    try {
        start_src("fn main() { x = protect(perform(\"p\"), \"Boom\", 3) \n return x }", session);
        FAIL("expected the undeclared tag to propagate");
    } catch (const RuntimeError& e) {
        CHECK(e.tag() == "Other");
    }
    CHECK(session->provider.log_size() == 1);  // no retry for a foreign tag
}

TEST_CASE("protect failures behind a branchpoint replay the same step") {
    const std::string src =
        "fn main() {\n"
        "    x = choose([5, 7])\n"
        "    y = protect(perform(\"p\"), \"Boom\")\n"
        "    return x + y\n"
        "}";
    auto session = make_session(
        0, R"({"ops": {"p": {"mode": "scripted", "responses": [100, 200]}},
               "errors": {"p": {"fail_first_n": 1, "tag": "Boom"}}})");
    auto cp = start_src(src, session);
    auto a = cp->step();  // first element retried with the same choice
    REQUIRE(a->status() == Status::RETURNED);
    CHECK(a->return_value() == Value(105));
    auto b = cp->step();
    CHECK(b->return_value() == Value(207));
    auto log = session->provider.log();
    REQUIRE(log.size() == 3);
    CHECK(log[0] == "p() -> raise Boom");
    CHECK(log[1] == "p() -> 100");
    CHECK(log[2] == "p() -> 200");
}

TEST_CASE("step-level and site-level caps lower the default protect budget") {
    const std::string behind_bp =
        "fn main() { branchpoint() \n x = protect(perform(\"p\"), \"Boom\") \n return x }";
    // Default budget (8) would succeed; a step cap of 1 exhausts after 2 calls.
    auto s1 = make_session(0, kProtectCfg2);
    auto cp1 = start_src(behind_bp, s1);
    CHECK_THROWS_AS(cp1->step(std::nullopt, true, 1), EngineError);
    CHECK(s1->provider.log_size() == 2);

    auto s2 = make_session(0, kProtectCfg2);
    auto cp2 = start_src(
        "fn main() { branchpoint(max_protection=1) \n x = protect(perform(\"p\"), \"Boom\") \n"
        "    return x }",
        s2);
    CHECK_THROWS_AS(cp2->step(), EngineError);
    CHECK(s2->provider.log_size() == 2);

    // Unconstrained: the default budget absorbs both failures.
    auto s3 = make_session(0, kProtectCfg2);
    auto cp3 = start_src(behind_bp, s3);
    CHECK(cp3->step()->return_value() == Value(100));
    CHECK(s3->provider.log_size() == 3);
}

TEST_CASE("sampler shares one protection budget across the stream") {
    // The provider fails every call; a stream budget of 5 admits five retries
    // across the whole stream (the per-site default of 8 never trips), so the
    // sixth invocation exhausts it and the sampler ends cleanly with nothing.
    const std::string src =
        "fn main() {\n"
        "    x = choose([1, 2, 3, 4])\n"
        "    y = protect(perform(\"p\"), \"Boom\")\n"
        "    return x\n"
        "}";
    auto session = make_session(
        0, R"({"ops": {"p": {"mode": "seeded", "candidates": [9]}},
               "errors": {"p": {"fail_first_n": 99, "tag": "Boom"}}})");
    auto out = start_src(src, session)->step_sampler(std::nullopt, 5);
    CHECK(out.empty());
    CHECK(session->provider.log_size() == 6);
}

// ---------------------------------------------------------------------------
// Optional returns, kills, errors
// ---------------------------------------------------------------------------

TEST_CASE("optional returns are provisional and reset at each step") {
    const std::string src =
        "fn main() {\n"
        "    optional_return(1)\n"
        "    branchpoint()\n"
        "    optional_return(2)\n"
        "    branchpoint()\n"
        "    return 9\n"
        "}";
    auto cp = start_src(src, make_session());
    REQUIRE(cp->status() == Status::RUNNING);
    REQUIRE(cp->has_return_value());
    CHECK(cp->return_value() == Value(1));
    auto cp2 = cp->step();
    REQUIRE(cp2->has_return_value());
    CHECK(cp2->return_value() == Value(2));
    auto done = cp2->step();
    CHECK(done->return_value() == Value(9));
}

TEST_CASE("a site without a prior optional_return has no return value") {
    auto cp = start_src("fn main() { branchpoint() \n return 1 }", make_session());
    CHECK_FALSE(cp->has_return_value());
    CHECK_THROWS_AS(cp->return_value(), EngineError);
}

TEST_CASE("killed branches surrender provisional returns") {
    const std::string src =
        "fn main() { optional_return(1) \n branchpoint() \n kill_branch(\", enough\") }";
    auto cp = start_src(src, make_session());
    auto killed = cp->step();
    REQUIRE(killed->status() == Status::KILLED);
    CHECK_FALSE(killed->has_return_value());
    CHECK(killed->kill_payload() == Value(", enough"));
    CHECK_FALSE(killed->error().has_value());
}

TEST_CASE("unprotected runtime errors kill the branch and carry the message") {
    auto cp = start_src("fn main() { branchpoint() \n return 1 / 0 }", make_session());
    auto killed = cp->step();
    REQUIRE(killed->status() == Status::KILLED);
    REQUIRE(killed->error().has_value());
    CHECK(killed->error()->find("DivZero") != std::string::npos);
    // The parent can still step other siblings afterwards.
    CHECK(cp->step()->status() == Status::KILLED);
}

// ---------------------------------------------------------------------------
// Scores and costs
// ---------------------------------------------------------------------------

TEST_CASE("each checkpoint carries the latest score recorded on its path") {
    const std::string src =
        "fn main() {\n"
        "    record_score(3)\n"
        "    branchpoint()\n"
        "    record_score(5)\n"
        "    return 0\n"
        "}";
    auto cp = start_src(src, make_session());
    REQUIRE(cp->score_number() == 3.0);
    auto child = cp->step();
    CHECK(child->score_number() == 5.0);
    CHECK(cp->score_number() == 3.0);  // parent unaffected
}

TEST_CASE("group scores re-evaluate as siblings join the label") {
    // evaluator: score = target / sum of all targets in the group so far.
    const std::string src =
        "fn frac(xs) {\n"
        "    total = 0\n"
        "    for x in xs { total = total + x }\n"
        "    out = []\n"
        "    for x in xs { append(out, x * 100 / total) }\n"
        "    return out\n"
        "}\n"
        "fn main() {\n"
        "    x = choose([1, 3])\n"
        "    record_score(frac, x, label=\"g\")\n"
        "    return x\n"
        "}";
    auto session = make_session();
    auto cp = start_src(src, session);
    auto a = cp->step();
    CHECK(a->score_number() == 100.0);  // alone in the group
    auto b = cp->step();
    CHECK(b->score_number() == 75.0);   // 3 of 4
    CHECK(a->score_number() == 25.0);   // rewritten by the second flush
}

TEST_CASE("transition costs are per step while the session aggregates") {
    const std::string src =
        "fn main() {\n"
        "    record_costs(t=1)\n"
        "    branchpoint()\n"
        "    record_costs(t=2)\n"
        "    return 0\n"
        "}";
    auto session = make_session();
    auto cp = start_src(src, session);
    CHECK(cp->transition_costs() == std::map<std::string, double>{{"t", 1.0}});
    auto a = cp->step();
    CHECK(a->transition_costs() == std::map<std::string, double>{{"t", 2.0}});
    cp->step();
    CHECK(session->aggregate_costs() == std::map<std::string, double>{{"t", 5.0}});
}

// ---------------------------------------------------------------------------
// Counters, ordinals, early stop
// ---------------------------------------------------------------------------

TEST_CASE("named sites count steps; anonymous sites and done markers do not") {
    const std::string src =
        "fn main() {\n"
        "    branchpoint()\n"
        "    x = choose([1, 2], name=\"pick\")\n"
        "    return x\n"
        "}";
    auto session = make_session();
    auto cp = start_src(src, session);
    auto mid = cp->step();  // anonymous branchpoint: not counted
    mid->step();
    mid->step();
    mid->step();  // exhausted: the done marker is not a step at the site
    auto counts = session->branchpoint_step_counts();
    REQUIRE(counts.size() == 1);
    CHECK(counts.at("pick") == 2);
    session->zero_branchpoint_step_counts();
    CHECK(session->branchpoint_step_counts().empty());
}

TEST_CASE("node ids are session step ordinals") {
    auto session = make_session();
    auto cp = start_src("fn main() { x = choose([1, 2]) \n return x }", session);
    CHECK(cp->node_id() == 0);
    auto a = cp->step();
    auto b = cp->step();
    auto done = cp->step();
    CHECK(a->node_id() == 1);
    CHECK(b->node_id() == 2);
    CHECK(done->node_id() == 3);
    CHECK(a->parent_id() == 0);
    CHECK(done->parent_id() == 0);
}

TEST_CASE("early stop raises the session flag and records the step ordinal") {
    const std::string src =
        "fn main() {\n"
        "    branchpoint()\n"
        "    early_stop()\n"
        "    optional_return(7)\n"
        "    branchpoint()\n"
        "    return 9\n"
        "}";
    auto session = make_session();
    auto cp = start_src(src, session);
    CHECK_FALSE(session->should_stop());
    auto mid = cp->step();
    CHECK(session->should_stop());
    CHECK(mid->early_stopped_search());
    CHECK(session->early_stop_step.load() >= 0);
    REQUIRE(mid->has_return_value());
    CHECK(mid->return_value() == Value(7));
    // Samplers refuse to extend a stopped session.
    CHECK(cp->step_sampler().empty());
}

TEST_CASE("trace events record one node per checkpoint creation") {
    auto session = make_session();
    std::vector<TraceEvent> events;
    session->set_trace_hook([&](const TraceEvent& ev) { events.push_back(ev); });
    auto cp = start_src(
        "fn main() { record_score(1) \n x = choose([1, 2]) \n return x }", session);
    cp->step();
    cp->step();
    cp->step();
    REQUIRE(events.size() == 4);  // root + two children + done marker
    CHECK(events[0].node_id == 0);
    CHECK(events[0].parent_id == -1);
    CHECK(events[0].score == 1.0);
    CHECK(events[1].status == "RETURNED");
    CHECK(events[3].status == "DONE_STEPPING");
}
