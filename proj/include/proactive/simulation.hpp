#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proactive/conversation.hpp"
#include "proactive/error.hpp"
#include "proactive/gateway.hpp"
#include "proactive/promptcraft.hpp"

namespace proactive::simulation {

enum class AgentMode { kReactive, kProactiveFq, kProactiveAi };

// "reactive" / "proactive-fq" / "proactive-ai".
std::string_view to_string(AgentMode mode);
AgentMode parse_agent_mode(std::string_view s);

const std::vector<std::string>& default_cues();

struct TerminationDecision {
  bool terminal = false;
  bool question_mark = false;
  std::vector<std::string> matched_cues;
};

// A user turn ends the conversation when it has no '?' and none of the cues.
// Cues match whole words, case-insensitively; multi-word cues match a
// consecutive word run.
TerminationDecision check_termination(std::string_view user_turn, const std::vector<std::string>& cues);
bool is_terminal(std::string_view user_turn, const std::vector<std::string>& cues = default_cues());

struct EpisodeConfig {
  AgentMode mode = AgentMode::kReactive;
  int max_turns = 10;
  std::string user_backend_id;   // empty: the gateway's default generation backend
  std::string agent_backend_id;  // empty: the gateway's default generation backend
  double temperature = 0.2;
  int max_tokens = 256;
  std::optional<std::int64_t> seed;
  std::vector<std::string> cues = default_cues();
  double repeat_threshold = 0.9;
};

void validate(const EpisodeConfig& cfg);

struct EpisodeResult {
  std::string episode_id;
  AgentMode mode = AgentMode::kReactive;
  core::Conversation conversation{"-"};
  std::vector<std::string> elements;         // proactive element per agent turn
  std::optional<int> repeats_flagged;        // nullopt without an embedding backend
  std::optional<std::string> error;          // set on the partial transcript of a failed episode
};

// Thrown by run_episode; carries the transcript up to the failure.
class EpisodeError : public Error {
 public:
  EpisodeError(const std::string& message, std::optional<ErrorCode> cause, core::Conversation partial)
      : Error(ErrorCode::kEpisodeFailed, message, cause), partial_(std::move(partial)) {}
  const core::Conversation& partial() const { return partial_; }

 private:
  core::Conversation partial_;
};

EpisodeResult run_episode(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib, std::string_view seed_query,
                          const EpisodeConfig& cfg, std::string episode_id = "episode-0");

nlohmann::json episode_to_json(const EpisodeResult& episode);

struct EpisodeRecord {
  std::string episode_id;
  int user_turns = 0;
  core::ConversationStatus status = core::ConversationStatus::kOngoing;
  std::optional<std::string> error;
};

struct SimulationStats {
  AgentMode mode = AgentMode::kReactive;
  std::size_t n_episodes = 0;  // completed episodes, the denominator below
  std::size_t n_failed = 0;
  double frac_ended_after_one_turn = 0.0;
  double avg_user_turns = 0.0;
  std::vector<EpisodeRecord> per_episode;  // all episodes, failed ones included
};

// Aggregates computed from per_episode records alone; failed episodes are
// counted but excluded from the averages.
SimulationStats recompute_stats(AgentMode mode, const std::vector<EpisodeRecord>& per_episode);

nlohmann::json stats_to_json(const SimulationStats& stats);
std::string stats_csv(const SimulationStats& stats);
std::string stats_table(const SimulationStats& stats);

using TranscriptSink = std::function<void(const EpisodeResult&)>;

struct BatchOptions {
  // Scripted stubs hand out replies in call order, so concurrent episodes
  // are only deterministic with real (stateless) backends.
  std::size_t parallel_episodes = 1;
  TranscriptSink sink;
};

// One episode per query. With a seed, episode i generates with seed + i.
SimulationStats run_batch(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib,
                          const std::vector<std::string>& seed_queries, const EpisodeConfig& cfg,
                          std::optional<std::int64_t> seed, const BatchOptions& options = {});

}  // namespace proactive::simulation
