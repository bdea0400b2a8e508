#include "proactive/simulation.hpp"

#include <cstdio>
#include <mutex>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "proactive/parallel.hpp"
#include "proactive/scoring.hpp"
#include "proactive/text.hpp"

namespace proactive::simulation {

using core::Conversation;
using core::ConversationStatus;
using nlohmann::json;

std::string_view to_string(AgentMode mode) {
  switch (mode) {
    case AgentMode::kReactive:
      return "reactive";
    case AgentMode::kProactiveFq:
      return "proactive-fq";
    case AgentMode::kProactiveAi:
      return "proactive-ai";
  }
  return "?";
}

AgentMode parse_agent_mode(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  for (auto& c : v)
    if (c == '_') c = '-';
  if (v == "reactive") return AgentMode::kReactive;
  if (v == "proactive-fq" || v == "fq") return AgentMode::kProactiveFq;
  if (v == "proactive-ai" || v == "ai") return AgentMode::kProactiveAi;
  throw Error(ErrorCode::kInvalidArgument, "unknown agent mode '" + std::string(s) + "'");
}

const std::vector<std::string>& default_cues() {
  static const std::vector<std::string> cues = {"tell me", "what", "how", "why", "yes", "please", "more"};
  return cues;
}

TerminationDecision check_termination(std::string_view user_turn, const std::vector<std::string>& cues) {
  TerminationDecision d;
  d.question_mark = user_turn.find('?') != std::string_view::npos;
  const auto words = text::words(user_turn);
  for (const auto& cue : cues) {
    const auto cue_words = text::words(cue);
    if (cue_words.empty() || cue_words.size() > words.size()) continue;
    for (std::size_t i = 0; i + cue_words.size() <= words.size(); ++i) {
      if (std::equal(cue_words.begin(), cue_words.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        d.matched_cues.push_back(cue);
        break;
      }
    }
  }
  d.terminal = !d.question_mark && d.matched_cues.empty();
  spdlog::debug("termination check on '{}': terminal={} question_mark={} cues=[{}]", user_turn, d.terminal,
                d.question_mark, text::join(d.matched_cues, ", "));
  return d;
}

bool is_terminal(std::string_view user_turn, const std::vector<std::string>& cues) {
  return check_termination(user_turn, cues).terminal;
}

void validate(const EpisodeConfig& cfg) {
  if (cfg.max_turns < 1) throw Error(ErrorCode::kInvalidArgument, "max_turns must be >= 1");
  if (!(cfg.repeat_threshold >= 0.0 && cfg.repeat_threshold <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "repeat_threshold must be in [0, 1]");
  if (cfg.max_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
}

namespace {

std::string strip_role(std::string s, std::string_view role) {
  std::string lower = text::to_lower(s.substr(0, role.size() + 1));
  if (lower == std::string(role) + ":") return std::string(text::trim(std::string_view(s).substr(role.size() + 1)));
  return s;
}

class Episode {
 public:
  Episode(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib, const EpisodeConfig& cfg,
          std::string_view query)
      : gw_(gw), lib_(lib), cfg_(cfg), conv_(std::string(query)) {}

  const Conversation& conversation() const { return conv_; }

  EpisodeResult run(std::string id) {
    EpisodeResult r;
    r.episode_id = std::move(id);
    r.mode = cfg_.mode;
    if (gw_.has_embedding()) r.repeats_flagged = 0;
    for (;;) {
      auto [reply, element] = agent_turn();
      if (r.repeats_flagged && !element.empty() && repeats_earlier(element, r.elements)) ++*r.repeats_flagged;
      r.elements.push_back(element);
      conv_.add_assistant(std::move(reply));

      auto user = user_turn();
      if (is_terminal(user, cfg_.cues)) {
        conv_.close(ConversationStatus::kEndedNatural, std::move(user));
        break;
      }
      if (conv_.user_turns() >= cfg_.max_turns) {
        conv_.close(ConversationStatus::kEndedCap, std::move(user));
        break;
      }
      conv_.add_user(std::move(user));
    }
    r.conversation = conv_;
    return r;
  }

 private:
  std::string generate(const std::string& prompt, const std::string& backend) {
    gateway::GenerationRequest req{prompt, cfg_.temperature, cfg_.max_tokens, cfg_.seed};
    std::optional<std::string_view> id;
    if (!backend.empty()) id = backend;
    return promptcraft::postprocess(gw_.generate(req, id));
  }

  std::string agent(const std::string& prompt, std::string_view what) {
    auto out = strip_role(generate(prompt, cfg_.agent_backend_id), "assistant");
    if (out.empty()) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: agent " + std::string(what) + " output is empty");
    return out;
  }

  // (full reply, proactive element); the element is empty for REACTIVE.
  std::pair<std::string, std::string> agent_turn() {
    const auto context = conv_.render_context();
    switch (cfg_.mode) {
      case AgentMode::kReactive:
        return {agent(promptcraft::render(lib_.get("reactive"), {{"context", context}}), "reactive"), ""};
      case AgentMode::kProactiveFq: {
        auto p1 = agent(promptcraft::render(lib_.get("p1_dialogue"), {{"context", context}}), "P1");
        p1_history_.push_back(p1);
        auto p2 = agent(promptcraft::render(lib_.get("p2"), {{"query", context}, {"answer", text::join(p1_history_, " ")}}),
                        "P2");
        auto p3 = agent(promptcraft::render(lib_.get(promptcraft::p3_name(core::ElementKind::kFollowUpQuestion)),
                                            {{"query", context}, {"info", p2}, {"demonstrations", ""}}),
                        "P3");
        return {p1 + " " + p3, p3};
      }
      case AgentMode::kProactiveAi: {
        auto name = promptcraft::three_in_one_name(core::ElementKind::kAdditionalInformation, true);
        auto out = agent(promptcraft::render(lib_.get(name), {{"context", context}, {"demonstrations", ""}}), "3-in-1");
        auto final_text = promptcraft::extract_final_response(out);
        if (!final_text)
          throw Error(ErrorCode::kParseFailed, "PARSE_FAILED: no 'Final response:' marker in 3-in-1 output");
        auto sentences = scoring::split_sentences(*final_text);
        return {*final_text, sentences.size() >= 2 ? sentences.back() : std::string()};
      }
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown agent mode");
  }

  std::string user_turn() {
    auto prompt = promptcraft::render(lib_.get("sim_user"), {{"context", conv_.render_context()}});
    auto out = strip_role(generate(prompt, cfg_.user_backend_id), "user");
    if (out.empty()) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: simulated user reply is empty");
    return out;
  }

  bool repeats_earlier(const std::string& element, const std::vector<std::string>& earlier) {
    for (const auto& e : earlier) {
      if (e.empty()) continue;
      if (scoring::bertscore(gw_, element, e) >= cfg_.repeat_threshold) {
        spdlog::info("agent element repeats an earlier one: '{}'", element);
        return true;
      }
    }
    return false;
  }

  gateway::Gateway& gw_;
  const promptcraft::TemplateLibrary& lib_;
  const EpisodeConfig& cfg_;
  Conversation conv_;
  std::vector<std::string> p1_history_;
};

}  // namespace

EpisodeResult run_episode(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib, std::string_view seed_query,
                          const EpisodeConfig& cfg, std::string episode_id) {
  validate(cfg);
  if (text::is_blank(seed_query)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: seed query is empty");
  Episode ep(gw, lib, cfg, text::trim(seed_query));
  try {
    return ep.run(std::move(episode_id));
  } catch (const Error& e) {
    throw EpisodeError(std::string("EPISODE_FAILED: ") + e.what(), e.code(), ep.conversation());
  } catch (const std::exception& e) {
    throw EpisodeError(std::string("EPISODE_FAILED: ") + e.what(), std::nullopt, ep.conversation());
  }
}

json episode_to_json(const EpisodeResult& ep) {
  json turns = json::array();
  for (const auto& t : ep.conversation.turns())
    turns.push_back({{"role", std::string(core::to_string(t.role))}, {"text", t.text}});
  if (const auto& closing = ep.conversation.closing_user_turn())
    turns.push_back({{"role", "user"}, {"text", *closing}});
  json j{{"episode_id", ep.episode_id},
         {"mode", std::string(to_string(ep.mode))},
         {"turns", turns},
         {"status", ep.error ? std::string("failed") : std::string(core::to_string(ep.conversation.status()))},
         {"user_turns", ep.conversation.user_turns()},
         {"repeats_flagged", ep.repeats_flagged ? json(*ep.repeats_flagged) : json(nullptr)}};
  if (ep.error) j["error"] = *ep.error;
  return j;
}

SimulationStats recompute_stats(AgentMode mode, const std::vector<EpisodeRecord>& per_episode) {
  SimulationStats s;
  s.mode = mode;
  s.per_episode = per_episode;
  std::size_t one = 0, turns = 0;
  for (const auto& e : per_episode) {
    if (e.error) {
      ++s.n_failed;
      continue;
    }
    ++s.n_episodes;
    turns += static_cast<std::size_t>(e.user_turns);
    if (e.user_turns == 1) ++one;
  }
  if (s.n_episodes) {
    s.frac_ended_after_one_turn = static_cast<double>(one) / static_cast<double>(s.n_episodes);
    s.avg_user_turns = static_cast<double>(turns) / static_cast<double>(s.n_episodes);
  }
  return s;
}

json stats_to_json(const SimulationStats& s) {
  json eps = json::array();
  for (const auto& e : s.per_episode) {
    json j{{"episode_id", e.episode_id},
           {"user_turns", e.user_turns},
           {"status", e.error ? std::string("failed") : std::string(core::to_string(e.status))}};
    if (e.error) j["error"] = *e.error;
    eps.push_back(std::move(j));
  }
  return json{{"mode", std::string(to_string(s.mode))},
              {"n_episodes", s.n_episodes},
              {"n_failed", s.n_failed},
              {"frac_ended_after_one_turn", s.frac_ended_after_one_turn},
              {"avg_user_turns", s.avg_user_turns},
              {"per_episode", eps}};
}

std::string stats_csv(const SimulationStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "mode,n_episodes,n_failed,frac_ended_after_one_turn,avg_user_turns\n%s,%zu,%zu,%.6f,%.6f\n",
                std::string(to_string(s.mode)).c_str(), s.n_episodes, s.n_failed, s.frac_ended_after_one_turn,
                s.avg_user_turns);
  return buf;
}

std::string stats_table(const SimulationStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-13s %9s %7s %22s %15s\n%-13s %9zu %7zu %21.1f%% %15.2f\n", "Mode", "Episodes",
                "Failed", "Ended after one turn", "Avg user turns", std::string(to_string(s.mode)).c_str(),
                s.n_episodes, s.n_failed, 100.0 * s.frac_ended_after_one_turn, s.avg_user_turns);
  return buf;
}

SimulationStats run_batch(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib,
                          const std::vector<std::string>& seed_queries, const EpisodeConfig& cfg,
                          std::optional<std::int64_t> seed, const BatchOptions& options) {
  if (seed_queries.empty()) throw Error(ErrorCode::kInvalidArgument, "simulation needs at least one seed query");
  validate(cfg);

  std::vector<EpisodeRecord> records(seed_queries.size());
  std::mutex sink_mutex;
  parallel_for(seed_queries.size(), std::max<std::size_t>(1, options.parallel_episodes), [&](std::size_t i) {
    auto episode_cfg = cfg;
    if (seed) episode_cfg.seed = *seed + static_cast<std::int64_t>(i);
    auto id = "episode-" + std::to_string(i);
    auto& rec = records[i];
    rec.episode_id = id;
    EpisodeResult result;
    try {
      result = run_episode(gw, lib, seed_queries[i], episode_cfg, id);
      rec.user_turns = result.conversation.user_turns();
      rec.status = result.conversation.status();
    } catch (const EpisodeError& e) {
      spdlog::warn("{} failed: {}", id, e.what());
      rec.error = e.what();
      result.episode_id = id;
      result.mode = cfg.mode;
      result.conversation = e.partial();
      result.error = e.what();
      rec.user_turns = result.conversation.user_turns();
    } catch (const std::exception& e) {
      spdlog::warn("{} failed: {}", id, e.what());
      rec.error = e.what();
      result.episode_id = id;
      result.mode = cfg.mode;
      result.conversation = Conversation(seed_queries[i].empty() ? "-" : seed_queries[i]);
      result.error = e.what();
    }
    if (options.sink) {
      std::lock_guard lock(sink_mutex);
      options.sink(result);
    }
  });
  return recompute_stats(cfg.mode, records);
}

}  // namespace proactive::simulation
