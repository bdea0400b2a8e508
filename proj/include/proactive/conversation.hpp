#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proactive::core {

enum class Role { kUser, kAssistant };
enum class ConversationStatus { kOngoing, kEndedNatural, kEndedCap };

std::string_view to_string(Role role);
std::string_view to_string(ConversationStatus status);

struct Turn {
  Role role;
  std::string text;

  bool operator==(const Turn&) const = default;
};

// Alternating USER/ASSISTANT transcript that always opens with the user.
//
// The user's last generated reply, the one that was not answered because the
// episode stopped, is kept apart in closing_user_turn(): turns() therefore
// holds only complete exchanges and user_turns() counts them.
class Conversation {
 public:
  explicit Conversation(std::string opening_query);

  void add_assistant(std::string text);
  void add_user(std::string text);
  void close(ConversationStatus status, std::optional<std::string> closing_user_turn);

  const std::vector<Turn>& turns() const { return turns_; }
  ConversationStatus status() const { return status_; }
  int user_turns() const { return user_turns_; }
  const std::optional<std::string>& closing_user_turn() const { return closing_; }
  Role next_role() const;

  // "User: ...\nAssistant: ..." one line per turn.
  std::string render_context() const;

 private:
  std::vector<Turn> turns_;
  ConversationStatus status_ = ConversationStatus::kOngoing;
  int user_turns_ = 0;
  std::optional<std::string> closing_;
};

}  // namespace proactive::core
