#include <doctest.h>

#include <mutex>
#include <random>

#include <nlohmann/json.hpp>

#include "proactive/backends.hpp"
#include "proactive/error.hpp"
#include "proactive/simulation.hpp"
#include "support.hpp"

using namespace proactive;
using namespace proactive::simulation;
using core::ConversationStatus;
using core::Role;
using nlohmann::json;

namespace {

std::unique_ptr<gateway::Gateway> with_user(std::vector<std::string> script,
                                            std::shared_ptr<gateway::GenerationBackend> agent = nullptr) {
  auto gw = testing::stub_gateway(agent);
  gw->add_generation_backend(std::make_shared<gateway::ScriptedGeneration>("test:user", std::move(script)));
  return gw;
}

EpisodeConfig config(AgentMode mode, int max_turns = 10) {
  EpisodeConfig cfg;
  cfg.mode = mode;
  cfg.max_turns = max_turns;
  cfg.user_backend_id = "test:user";
  return cfg;
}

void check_alternation(const core::Conversation& c) {
  const auto& turns = c.turns();
  REQUIRE_FALSE(turns.empty());
  int users = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    CHECK(turns[i].role == (i % 2 == 0 ? Role::kUser : Role::kAssistant));
    if (turns[i].role == Role::kUser) ++users;
  }
  CHECK(turns.back().role == Role::kAssistant);
  CHECK(c.user_turns() == users);
}

// Agent stub for the 3-step dialogue variant: numbered P1 outputs, fixed
// P2/P3 outputs, every prompt recorded.
struct DialogueAgent {
  std::mutex mu;
  std::vector<std::string> p2_prompts;
  int p1_calls = 0;
  std::shared_ptr<gateway::GenerationBackend> backend() {
    return std::make_shared<gateway::FunctionGeneration>("test:agent", [this](const gateway::GenerationRequest& r) {
      std::lock_guard lock(mu);
      if (r.prompt.find("Only respond to the user's last message") != std::string::npos)
        return "P1-" + std::to_string(++p1_calls) + ".";
      if (r.prompt.find("Related information:") != std::string::npos) {
        p2_prompts.push_back(r.prompt);
        return std::string("Some info.");
      }
      return std::string("Would you like to hear about the info?");
    });
  }
};

}  // namespace

TEST_CASE("termination detector") {
  CHECK(is_terminal("Thanks for the information."));
  CHECK(is_terminal("Thank you."));
  CHECK_FALSE(is_terminal("Yes, I would like to know more."));
  CHECK_FALSE(is_terminal("Interesting?"));
  CHECK_FALSE(is_terminal("Please TELL ME about it"));
  CHECK(is_terminal("Somewhat interesting."));
  auto d = check_termination("Yes, tell me how.", default_cues());
  CHECK_FALSE(d.terminal);
  CHECK_FALSE(d.question_mark);
  CHECK(d.matched_cues == std::vector<std::string>{"tell me", "how", "yes"});
  CHECK(is_terminal("whatever works.", {"what"}));
  CHECK(is_terminal("tell them.", {"tell me"}));
}

TEST_CASE("reactive episode ends naturally on an acknowledgement") {
  auto gw = with_user({"Thank you."});
  auto lib = promptcraft::TemplateLibrary::builtin();
  auto r = run_episode(*gw, lib, "who built the tower", config(AgentMode::kReactive));
  CHECK(r.conversation.status() == ConversationStatus::kEndedNatural);
  CHECK(r.conversation.user_turns() == 1);
  CHECK(r.conversation.closing_user_turn() == "Thank you.");
  check_alternation(r.conversation);
  auto j = episode_to_json(r);
  CHECK(j["status"] == "ended_natural");
  CHECK(j["turns"].size() == 3);
  CHECK(j["turns"][2]["text"] == "Thank you.");
  for (auto key : {"episode_id", "mode", "turns", "status", "user_turns", "repeats_flagged"}) CHECK(j.contains(key));
}

TEST_CASE("a user who keeps asking hits the cap") {
  auto gw = with_user({"Tell me more?"});
  auto lib = promptcraft::TemplateLibrary::builtin();
  for (int cap : {1, 4, 10}) {
    auto r = run_episode(*gw, lib, "who built the tower", config(AgentMode::kReactive, cap));
    CHECK(r.conversation.status() == ConversationStatus::kEndedCap);
    CHECK(r.conversation.user_turns() == cap);
    check_alternation(r.conversation);
  }
  CHECK_THROWS_AS(run_episode(*gw, lib, "q", config(AgentMode::kReactive, 0)), Error);
}

TEST_CASE("proactive FQ agent accumulates P1 outputs") {
  DialogueAgent agent;
  auto gw = with_user({"Yes, tell me more.", "What else?", "Thank you."}, agent.backend());
  auto lib = promptcraft::TemplateLibrary::builtin();
  auto r = run_episode(*gw, lib, "who built the tower", config(AgentMode::kProactiveFq));
  CHECK(r.conversation.user_turns() == 3);
  check_alternation(r.conversation);
  REQUIRE(agent.p2_prompts.size() == 3);
  CHECK(agent.p2_prompts[0].find("Answer: P1-1.\n") != std::string::npos);
  CHECK(agent.p2_prompts[1].find("Answer: P1-1. P1-2.\n") != std::string::npos);
  CHECK(agent.p2_prompts[2].find("Answer: P1-1. P1-2. P1-3.\n") != std::string::npos);
  CHECK(r.conversation.turns()[1].text == "P1-1. Would you like to hear about the info?");
  REQUIRE(r.elements.size() == 3);
  // The same element every turn: the second and third repeat the first.
  CHECK(r.repeats_flagged == 2);
}

TEST_CASE("proactive FQ with echo stubs keeps the transcript structure") {
  auto gw = with_user({"Yes, more.", "Thanks."});
  auto lib = promptcraft::TemplateLibrary::builtin();
  auto r = run_episode(*gw, lib, "who built the tower", config(AgentMode::kProactiveFq));
  check_alternation(r.conversation);
  CHECK(r.conversation.user_turns() == 2);
  const auto& turns = r.conversation.turns();
  // The echoed P1 prompt carries the context seen at that turn.
  CHECK(turns[1].text.find("User: who built the tower") != std::string::npos);
  CHECK(turns[3].text.find("User: Yes, more.") != std::string::npos);
}

TEST_CASE("proactive AI agent parses the final response") {
  auto agent = std::make_shared<gateway::ScriptedGeneration>(
      "test:cot", std::vector<std::string>{"Step 1: a\nFinal response: It is tall. It was built in 1889."});
  auto gw = with_user({"Thanks."}, agent);
  auto lib = promptcraft::TemplateLibrary::builtin();
  auto r = run_episode(*gw, lib, "how tall", config(AgentMode::kProactiveAi));
  CHECK(r.conversation.turns()[1].text == "It is tall. It was built in 1889.");
  CHECK(r.elements == std::vector<std::string>{"It was built in 1889."});
}

TEST_CASE("episode failures carry the partial transcript") {
  int calls = 0;
  auto agent = std::make_shared<gateway::FunctionGeneration>("test:flaky", [&](const gateway::GenerationRequest&) {
    if (++calls > 1) throw Error(ErrorCode::kBackendError, "agent down");
    return std::string("First answer.");
  });
  auto gw = with_user({"Tell me more?"}, agent);
  auto lib = promptcraft::TemplateLibrary::builtin();
  try {
    run_episode(*gw, lib, "q", config(AgentMode::kReactive));
    FAIL("expected EPISODE_FAILED");
  } catch (const EpisodeError& e) {
    CHECK(e.code() == ErrorCode::kEpisodeFailed);
    CHECK(e.cause() == ErrorCode::kBackendError);
    CHECK(e.partial().turns().size() == 3);
    CHECK(e.partial().turns()[1].text == "First answer.");
  }
}

TEST_CASE("batch statistics by hand") {
  auto gw = with_user({"Thank you.", "More?", "Thank you.", "More?", "More?", "Thank you."});
  auto lib = promptcraft::TemplateLibrary::builtin();
  std::vector<json> transcripts;
  BatchOptions opts;
  opts.sink = [&](const EpisodeResult& e) { transcripts.push_back(episode_to_json(e)); };
  auto st = run_batch(*gw, lib, {"q1", "q2", "q3"}, config(AgentMode::kReactive), 7, opts);
  CHECK(st.n_episodes == 3);
  CHECK(st.frac_ended_after_one_turn == doctest::Approx(1.0 / 3.0));
  CHECK(st.avg_user_turns == doctest::Approx(2.0));
  CHECK(transcripts.size() == 3);
  CHECK(transcripts[2]["user_turns"] == 3);

  auto polite = with_user({"Thank you."});
  auto all_one = run_batch(*polite, lib, {"a", "b", "c", "d"}, config(AgentMode::kReactive), std::nullopt);
  CHECK(all_one.frac_ended_after_one_turn == 1.0);
  CHECK(all_one.avg_user_turns == 1.0);
  CHECK_THROWS_AS(run_batch(*polite, lib, {}, config(AgentMode::kReactive), std::nullopt), Error);
}

TEST_CASE("batch continues past failed episodes") {
  auto gw = with_user({"Thank you."});
  auto lib = promptcraft::TemplateLibrary::builtin();
  auto st = run_batch(*gw, lib, {"ok", "  ", "also ok"}, config(AgentMode::kReactive), std::nullopt);
  CHECK(st.n_failed == 1);
  CHECK(st.n_episodes == 2);
  CHECK(st.per_episode.size() == 3);
  CHECK(st.per_episode[1].error.has_value());
  CHECK(st.avg_user_turns == 1.0);
}

TEST_CASE("scripted episodes: alternation, cap and stats recompute") {
  std::mt19937_64 rng(20);
  auto lib = promptcraft::TemplateLibrary::builtin();
  const int cap = 6;
  auto agent = std::make_shared<gateway::RuleGeneration>(
      "test:agent", std::vector<gateway::RuleGeneration::Rule>{}, "Here is an answer. Want more detail?");
  std::vector<EpisodeRecord> records;
  std::size_t expect_one = 0, expect_turns = 0;
  for (int i = 0; i < 20; ++i) {
    int asks = static_cast<int>(rng() % 9);  // non-terminal replies before the acknowledgement
    std::vector<std::string> script(asks, "Tell me more?");
    script.push_back("Thank you.");
    auto gw = with_user(script, agent);
    auto mode = static_cast<AgentMode>(i % 2);
    auto r = run_episode(*gw, lib, "seed " + std::to_string(i), config(mode, cap), "ep" + std::to_string(i));
    check_alternation(r.conversation);
    int turns = r.conversation.user_turns();
    CHECK(turns <= cap);
    if (asks + 1 <= cap) {
      CHECK(r.conversation.status() == ConversationStatus::kEndedNatural);
      CHECK(turns == asks + 1);
    } else {
      CHECK(r.conversation.status() == ConversationStatus::kEndedCap);
      CHECK(turns == cap);
      CHECK_FALSE(is_terminal(*r.conversation.closing_user_turn()));
    }
    // Same script, same outcome.
    auto again = run_episode(*with_user(script, agent), lib, "seed " + std::to_string(i), config(mode, cap));
    CHECK(again.conversation.turns() == r.conversation.turns());
    records.push_back({r.episode_id, turns, r.conversation.status(), std::nullopt});
    expect_turns += static_cast<std::size_t>(turns);
    if (turns == 1) ++expect_one;
  }
  auto st = recompute_stats(AgentMode::kReactive, records);
  CHECK(st.n_episodes == 20);
  CHECK(st.frac_ended_after_one_turn == doctest::Approx(expect_one / 20.0));
  CHECK(st.avg_user_turns == doctest::Approx(expect_turns / 20.0));
  CHECK(st.avg_user_turns >= 1.0);

  // run_batch over the same kind of episodes agrees with recomputation.
  auto gw = with_user({"Tell me more?", "Thank you."}, agent);
  std::vector<std::string> qs;
  for (int i = 0; i < 20; ++i) qs.push_back("query " + std::to_string(i));
  auto batch = run_batch(*gw, lib, qs, config(AgentMode::kReactive, cap), 1);
  auto re = recompute_stats(batch.mode, batch.per_episode);
  CHECK(re.frac_ended_after_one_turn == batch.frac_ended_after_one_turn);
  CHECK(re.avg_user_turns == batch.avg_user_turns);
  CHECK(re.n_episodes == batch.n_episodes);
}

TEST_CASE("stats output formats") {
  std::vector<EpisodeRecord> recs{{"a", 1, ConversationStatus::kEndedNatural, std::nullopt},
                                  {"b", 3, ConversationStatus::kEndedNatural, std::nullopt}};
  auto st = recompute_stats(AgentMode::kProactiveFq, recs);
  auto j = stats_to_json(st);
  CHECK(j["mode"] == "proactive-fq");
  CHECK(j["frac_ended_after_one_turn"] == 0.5);
  CHECK(j["avg_user_turns"] == 2.0);
  CHECK(stats_csv(st).find("proactive-fq,2,0,0.500000,2.000000") != std::string::npos);
  CHECK(stats_table(st).find("50.0%") != std::string::npos);
  CHECK(parse_agent_mode("proactive-ai") == AgentMode::kProactiveAi);
  CHECK_THROWS_AS(parse_agent_mode("chatty"), Error);
}
