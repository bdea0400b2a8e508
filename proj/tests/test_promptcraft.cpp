#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "proactive/backends.hpp"
#include "proactive/error.hpp"
#include "proactive/promptcraft.hpp"
#include "support.hpp"

using namespace proactive;
using namespace proactive::promptcraft;
using core::ElementKind;
using core::ProactiveResponse;

namespace {

constexpr auto FQ = ElementKind::kFollowUpQuestion;
constexpr auto AI = ElementKind::kAdditionalInformation;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

std::vector<Demonstration> demos(std::size_t n, ElementKind kind = FQ) {
  std::vector<Demonstration> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_demonstration("demo query " + std::to_string(i),
                                     ProactiveResponse::with_element("Demo answer " + std::to_string(i) + ".",
                                                                     "Demo element " + std::to_string(i) + "?", kind)));
  return out;
}

// Records every prompt it sees; replies by stage marker.
struct StageStub {
  std::vector<std::string> prompts;
  std::map<std::string, std::string> replies;  // marker substring -> reply
  std::shared_ptr<gateway::FunctionGeneration> backend() {
    return std::make_shared<gateway::FunctionGeneration>("test:stages", [this](const gateway::GenerationRequest& r) {
      prompts.push_back(r.prompt);
      for (const auto& [marker, reply] : replies)
        if (r.prompt.find(marker) != std::string::npos) {
          if (reply == "<fail>") throw Error(ErrorCode::kBackendError, "stage stub failure");
          return reply;
        }
      return std::string("unmatched");
    });
  }
};

constexpr const char* kP1Marker = "Only answer the query";
constexpr const char* kP2Marker = "Related information:";
constexpr const char* kP3Marker = "Information: ";

}  // namespace

TEST_CASE("template rendering") {
  auto t = parse_template("---\nname: t\nkind: any\nstage: P1\nversion: 2\nplaceholders: query\n---\nQ: {query}");
  CHECK(t.name == "t");
  CHECK(t.version == 2);
  CHECK_FALSE(t.kind.has_value());
  CHECK(render(t, {{"query", "who won"}}) == "Q: who won");
  try {
    render(t, {});
    FAIL("expected MISSING_PLACEHOLDER");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingPlaceholder);
    CHECK(std::string(e.what()).find("MISSING_PLACEHOLDER(\"query\")") != std::string::npos);
  }
  // Bound values are not re-scanned.
  CHECK(render(t, {{"query", "{query}"}}) == "Q: {query}");
}

TEST_CASE("template validation") {
  auto bad = [](std::string src) { return code_of([&] { parse_template(src); }); };
  CHECK(bad("no front matter") == ErrorCode::kTemplateInvalid);
  CHECK(bad("---\nname: t\nstage: P1\nplaceholders: query\n---\nQ: {query} {answer}") == ErrorCode::kTemplateInvalid);
  CHECK(bad("---\nname: t\nstage: P1\nplaceholders: query, answer\n---\nQ: {query}") == ErrorCode::kTemplateInvalid);
  CHECK(bad("---\nname: t\nstage: P1\nplaceholders: info\n---\n{info}") == ErrorCode::kTemplateInvalid);
  CHECK(bad("---\nname: t\nstage: NOPE\nplaceholders: query\n---\n{query}") == ErrorCode::kTemplateInvalid);
  CHECK(bad("---\nname: t\nstage: P1\nplaceholders: query\n---\n{query} {Bad Brace}") == ErrorCode::kTemplateInvalid);
  CHECK(placeholders_in("{a} and {b_2} and {a}") == std::set<std::string>{"a", "b_2"});
}

TEST_CASE("builtin library is complete and overridable") {
  auto lib = TemplateLibrary::builtin();
  for (auto name : {"direct_fq", "direct_ai", "p1", "p1_dialogue", "p2", "p3_fq", "p3_ai", "three_in_one_fq",
                    "three_in_one_ai", "three_in_one_fq_dialogue", "three_in_one_ai_dialogue", "judge_fq",
                    "judge_ai", "user_sim", "reactive", "sim_user"})
    CHECK(lib.contains(name));
  CHECK(direct_name(AI) == "direct_ai");
  CHECK(three_in_one_name(FQ, true) == "three_in_one_fq_dialogue");
  CHECK(p3_name(AI) == "p3_ai");
  CHECK(judge_name(FQ) == "judge_fq");
  CHECK(code_of([&] { lib.get("nope"); }) == ErrorCode::kConfigError);

  testing::TempDir dir;
  std::ofstream(dir.path / "p1.tmpl") << "---\nname: p1\nkind: any\nstage: P1\nversion: 9\nplaceholders: query\n---\nOVR {query}";
  auto over = TemplateLibrary::with_overrides(dir.path);
  CHECK(over.get("p1").version == 9);
  CHECK(over.get("p2").body == lib.get("p2").body);
  CHECK(code_of([] { TemplateLibrary::with_overrides("/nonexistent/templates"); }) == ErrorCode::kConfigError);
}

TEST_CASE("postprocess") {
  CHECK(postprocess("  Hello\n\n world  ") == "Hello world");
  CHECK(postprocess("A \\\"quote\\\"") == "A \"quote\"");
  CHECK(postprocess("one\\ntwo\\tthree") == "one two three");
  CHECK(postprocess("") == "");
}

TEST_CASE("postprocess is idempotent on random strings") {
  std::mt19937_64 rng(99);
  const std::string alphabet = "ab \t\n\\\"'nrt.?";
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (std::size_t k = 0, n = rng() % 40; k < n; ++k) s += alphabet[rng() % alphabet.size()];
    auto once = postprocess(s);
    CHECK(postprocess(once) == once);
  }
}

TEST_CASE("demonstrations require an element") {
  CHECK(code_of([] { make_demonstration("q", ProactiveResponse::answer_only("a")); }) == ErrorCode::kInvalidArgument);
  auto three = demos(3);
  auto blocks = demonstration_blocks(three, DemoStyle::kDirect, FQ);
  CHECK(count_of(blocks, kDemoBlockHeader) == 3);
  auto p0 = blocks.find("demo query 0"), p1 = blocks.find("demo query 1"), p2 = blocks.find("demo query 2");
  CHECK(p0 < p1);
  CHECK(p1 < p2);
  CHECK(p2 != std::string::npos);
  CHECK(demonstration_block(three[0], DemoStyle::kP3, FQ).find("Demo element 0?") != std::string::npos);
}

TEST_CASE("direct pipeline plumbing") {
  auto lib = TemplateLibrary::builtin();
  auto gw = testing::stub_gateway();
  auto run = run_direct(*gw, lib, "who built it", FQ, {}, 0);
  auto prompt = render(lib.get("direct_fq"), {{"query", "who built it"}, {"demonstrations", ""}});
  CHECK(run.final.full_text() == postprocess(prompt));
  CHECK(run.pipeline == Pipeline::kDirect);

  auto five = demos(5);
  auto three_shot = run_direct(*gw, lib, "who built it", FQ, five, 3);
  const auto& text = three_shot.final.full_text();
  for (int i = 0; i < 3; ++i) CHECK(text.find("Demo answer " + std::to_string(i) + ". Demo element") != std::string::npos);
  CHECK(text.find("demo query 3") == std::string::npos);
  CHECK(count_of(text, kDemoBlockHeader) == 3);

  CHECK(code_of([&] { run_direct(*gw, lib, "q", FQ, demos(3), 5); }) == ErrorCode::kInsufficientDemonstrations);
  CHECK(code_of([&] { run_direct(*gw, lib, "q", FQ, five, 2); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("k-shot prompts contain exactly k demonstration blocks") {
  auto lib = TemplateLibrary::builtin();
  auto pool = demos(5, AI);
  for (int k : {0, 1, 3, 5}) {
    StageStub stub;
    stub.replies = {{"Step 1:", "Final response: X. Y."}};
    auto gw = testing::stub_gateway(stub.backend());
    run_direct(*gw, lib, "q", AI, pool, k);
    run_three_in_one(*gw, lib, "q", AI, pool, k);
    REQUIRE(stub.prompts.size() == 2);
    for (const auto& p : stub.prompts) CHECK(count_of(p, kDemoBlockHeader) == static_cast<std::size_t>(k));
  }
}

TEST_CASE("three-step concatenation contract") {
  auto lib = TemplateLibrary::builtin();
  StageStub stub;
  stub.replies = {{kP3Marker, "ELEM"}, {kP2Marker, "INFO"}, {kP1Marker, "ANS"}};
  auto gw = testing::stub_gateway(stub.backend());
  auto run = run_three_step(*gw, lib, "who built the tower", FQ, {}, 0);
  CHECK(run.final.full_text() == "ANS ELEM");
  CHECK(run.final.answer() == "ANS");
  CHECK(run.final.element() == "ELEM");
  REQUIRE(run.stage_output(Stage::kP1));
  CHECK(*run.stage_output(Stage::kP1) == "ANS");
  CHECK(*run.stage_output(Stage::kP2) == "INFO");
  CHECK(*run.stage_output(Stage::kP3) == "ELEM");
  REQUIRE(stub.prompts.size() == 3);
  CHECK(stub.prompts[1].find("Answer: ANS") != std::string::npos);
  CHECK(stub.prompts[2].find("INFO") != std::string::npos);
}

TEST_CASE("three-step output is P1 prefix and P3 suffix for random stage texts") {
  auto lib = TemplateLibrary::builtin();
  std::mt19937_64 rng(4);
  const std::string alphabet = "abc  \n\\.?";
  auto noisy = [&] {
    std::string s = "x";
    for (std::size_t k = 0, n = rng() % 20; k < n; ++k) s += alphabet[rng() % alphabet.size()];
    return s + "z";
  };
  for (int i = 0; i < 30; ++i) {
    StageStub stub;
    auto p1 = noisy(), p2 = noisy(), p3 = noisy();
    stub.replies = {{kP3Marker, p3}, {kP2Marker, p2}, {kP1Marker, p1}};
    auto gw = testing::stub_gateway(stub.backend());
    auto run = run_three_step(*gw, lib, "query", AI, {}, 0);
    CHECK(run.final.full_text() == postprocess(p1) + " " + postprocess(p3));
    CHECK(stub.prompts[2].find(postprocess(p2)) != std::string::npos);
  }
}

TEST_CASE("three-step stage failures are labelled") {
  auto lib = TemplateLibrary::builtin();
  StageStub stub;
  stub.replies = {{kP3Marker, "ELEM"}, {kP2Marker, "<fail>"}, {kP1Marker, "ANS"}};
  auto gw = testing::stub_gateway(stub.backend());
  try {
    run_three_step(*gw, lib, "q", FQ, {}, 0);
    FAIL("expected STAGE_FAILED");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStageFailed);
    CHECK(e.cause() == ErrorCode::kBackendError);
    CHECK(std::string(e.what()).rfind("STAGE_FAILED(P2)", 0) == 0);
  }
  CHECK(stub.prompts.size() == 2);

  StageStub empty;
  empty.replies = {{kP3Marker, "   "}, {kP2Marker, "INFO"}, {kP1Marker, "ANS"}};
  auto gw2 = testing::stub_gateway(empty.backend());
  CHECK(code_of([&] { run_three_step(*gw2, lib, "q", FQ, {}, 0); }) == ErrorCode::kStageFailed);
}

TEST_CASE("three-in-one marker parsing") {
  CHECK(extract_final_response("Step1: a\nStep2: b\nFinal: X. Y?") == "X. Y?");
  CHECK(extract_final_response("Final response: first\nFINAL RESPONSE: second one") == "second one");
  CHECK_FALSE(extract_final_response("no marker here").has_value());

  auto lib = TemplateLibrary::builtin();
  auto gw = testing::stub_gateway(std::make_shared<gateway::ScriptedGeneration>(
      "test:cot", std::vector<std::string>{"Step1: ...\nStep2: ...\nFinal: X. Y?"}));
  auto run = run_three_in_one(*gw, lib, "q", FQ, {}, 0);
  CHECK(run.final.full_text() == "X. Y?");
  CHECK(run.intermediate.size() == 1);

  auto none = testing::stub_gateway(std::make_shared<gateway::ScriptedGeneration>(
      "test:none", std::vector<std::string>{"I will just answer."}));
  CHECK(code_of([&] { run_three_in_one(*none, lib, "q", FQ, {}, 0); }) == ErrorCode::kParseFailed);

  StageStub stub;
  stub.replies = {{"Step 1:", "Final response: ok."}};
  auto gw1 = testing::stub_gateway(stub.backend());
  auto one = demos(1);
  run_three_in_one(*gw1, lib, "q", FQ, one, 1);
  CHECK(stub.prompts.at(0).find(one[0].response.full_text()) != std::string::npos);
}

TEST_CASE("pipelines are deterministic and serialise losslessly") {
  auto lib = TemplateLibrary::builtin();
  auto pool = demos(3);
  for (auto p : {Pipeline::kDirect, Pipeline::kThreeStep, Pipeline::kThreeInOne}) {
    auto make = [&] {
      auto gw = gateway::build_gateway({{"backends", gateway::offline_backends_config()}});
      GenerationSettings s;
      s.backend_id = "stub:agent";
      return run_pipeline(p, *gw, lib, "who built the tower", FQ, pool, 1, s);
    };
    auto a = make(), b = make();
    CHECK(a.final == b.final);
    CHECK(a.intermediate == b.intermediate);
    auto back = run_from_json(run_to_json(a));
    CHECK(back.final == a.final);
    CHECK(back.intermediate == a.intermediate);
    CHECK(back.pipeline == p);
    CHECK(back.shots == 1);
  }
  CHECK(parse_pipeline("3-step") == Pipeline::kThreeStep);
  CHECK(parse_pipeline("3in1") == Pipeline::kThreeInOne);
  CHECK(code_of([] { parse_pipeline("4step"); }) == ErrorCode::kInvalidArgument);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Demonstration> scored_pool(std::mt19937_64& rng, std::size_t n) {
  std::vector<Demonstration> pool;
  std::uniform_int_distribution<int> coarse(0, 6);  // coarse grid forces ties
  for (std::size_t i = 0; i < n; ++i)
    pool.push_back(make_demonstration("q" + std::to_string(i),
                                      ProactiveResponse::with_element("a", "e?", FQ),
                                      DemoScores{coarse(rng) / 6.0, coarse(rng) / 6.0}));
  return pool;
}

// Exhaustive oracle: enumerate all items, compare pairwise by value then by
// index, and rank each item by how many others precede it.
std::vector<std::string> oracle_select(const std::vector<Demonstration>& pool, std::size_t k,
                                       Criterion c, Direction d) {
  auto value = [&](std::size_t i) {
    const auto& s = *pool[i].scores;
    switch (c) {
      case Criterion::kSemantic: return s.semantic;
      case Criterion::kSentiment: return s.user_sim;
      case Criterion::kSum: return s.semantic + s.user_sim;
    }
    return 0.0;
  };
  std::vector<std::pair<std::size_t, std::size_t>> rank;  // (rank, index)
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::size_t before = 0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (j == i) continue;
      bool better = d == Direction::kTop ? value(j) > value(i) : value(j) < value(i);
      if (better || (value(j) == value(i) && j < i)) ++before;
    }
    rank.emplace_back(before, i);
  }
  std::vector<std::string> out(pool.size());
  for (auto [r, i] : rank) out[r] = pool[i].query;
  out.resize(k);
  return out;
}

std::vector<std::string> queries(const std::vector<Demonstration>& v) {
  std::vector<std::string> out;
  for (const auto& d : v) out.push_back(d.query);
  return out;
}

}  // namespace

TEST_CASE("selection simple cases") {
  std::vector<Demonstration> pool;
  for (double s : {0.2, 0.9, 0.5})
    pool.push_back(make_demonstration("s" + std::to_string(s), ProactiveResponse::with_element("a", "e", AI),
                                      DemoScores{s, 0.0}));
  auto top = select_demonstrations(pool, 1, Criterion::kSemantic, Direction::kTop);
  REQUIRE(top.size() == 1);
  CHECK(top[0].scores->semantic == 0.9);
  CHECK(select_demonstrations(pool, 0, Criterion::kSum, Direction::kTop).empty());
  CHECK(code_of([&] { select_demonstrations(pool, 4, Criterion::kSum, Direction::kTop); }) == ErrorCode::kKTooLarge);
  pool.push_back(make_demonstration("unscored", ProactiveResponse::with_element("a", "e", AI)));
  CHECK(code_of([&] { select_demonstrations(pool, 1, Criterion::kSum, Direction::kTop); }) ==
        ErrorCode::kMissingScores);
  CHECK(parse_criterion("sentiment") == Criterion::kSentiment);
  CHECK(parse_criterion("user-sim") == Criterion::kSentiment);
  CHECK(parse_direction("bottom") == Direction::kBottom);
}

TEST_CASE("selection SUM TOP-2 over hand-scored items") {
  const double sem[] = {0.1, 0.8, 0.4, 0.7, 0.3};
  const double us[] = {0.2, 0.1, 0.6, 0.3, 0.9};  // sums .3 .9 1.0 1.0 1.2
  std::vector<Demonstration> pool;
  for (int i = 0; i < 5; ++i)
    pool.push_back(make_demonstration("h" + std::to_string(i), ProactiveResponse::with_element("a", "e", FQ),
                                      DemoScores{sem[i], us[i]}));
  CHECK(queries(select_demonstrations(pool, 2, Criterion::kSum, Direction::kTop)) ==
        std::vector<std::string>{"h4", "h2"});
  CHECK(queries(select_demonstrations(pool, 2, Criterion::kSum, Direction::kTop)) ==
        oracle_select(pool, 2, Criterion::kSum, Direction::kTop));
}

TEST_CASE("selection matches the brute-force oracle on random pools") {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    auto pool = scored_pool(rng, 1 + rng() % 12);
    for (auto c : {Criterion::kSemantic, Criterion::kSentiment, Criterion::kSum})
      for (auto d : {Direction::kTop, Direction::kBottom}) {
        std::size_t k = rng() % (pool.size() + 1);
        CHECK(queries(select_demonstrations(pool, k, c, d)) == oracle_select(pool, k, c, d));
      }
  }
}

TEST_CASE("TOP-k and BOTTOM-k separate when values are distinct") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Demonstration> pool;
    std::size_t n = 2 + rng() % 14;
    for (std::size_t i = 0; i < n; ++i)
      pool.push_back(make_demonstration("r" + std::to_string(i), ProactiveResponse::with_element("a", "e", FQ),
                                        DemoScores{u(rng), u(rng)}));
    std::size_t k = 1 + rng() % (n / 2);
    for (auto c : {Criterion::kSemantic, Criterion::kSentiment, Criterion::kSum}) {
      auto top = select_demonstrations(pool, k, c, Direction::kTop);
      auto bottom = select_demonstrations(pool, k, c, Direction::kBottom);
      double min_top = 1e9, max_bottom = -1e9;
      for (auto& d : top) min_top = std::min(min_top, criterion_value(*d.scores, c));
      for (auto& d : bottom) max_bottom = std::max(max_bottom, criterion_value(*d.scores, c));
      CHECK(min_top >= max_bottom);
    }
  }
}
