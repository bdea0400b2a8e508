#include "proactive/conversation.hpp"

#include "proactive/error.hpp"

namespace proactive::core {

std::string_view to_string(Role role) { return role == Role::kUser ? "user" : "assistant"; }

std::string_view to_string(ConversationStatus status) {
  switch (status) {
    case ConversationStatus::kOngoing: return "ongoing";
    case ConversationStatus::kEndedNatural: return "ended_natural";
    case ConversationStatus::kEndedCap: return "ended_cap";
  }
  return "ongoing";
}

Conversation::Conversation(std::string opening_query) { add_user(std::move(opening_query)); }

Role Conversation::next_role() const {
  return turns_.empty() || turns_.back().role == Role::kAssistant ? Role::kUser : Role::kAssistant;
}

void Conversation::add_user(std::string text) {
  if (status_ != ConversationStatus::kOngoing)
    throw Error(ErrorCode::kInvalidArgument, "conversation already closed");
  if (next_role() != Role::kUser)
    throw Error(ErrorCode::kInvalidArgument, "user turn out of order");
  turns_.push_back({Role::kUser, std::move(text)});
  ++user_turns_;
}

void Conversation::add_assistant(std::string text) {
  if (status_ != ConversationStatus::kOngoing)
    throw Error(ErrorCode::kInvalidArgument, "conversation already closed");
  if (next_role() != Role::kAssistant)
    throw Error(ErrorCode::kInvalidArgument, "assistant turn out of order");
  turns_.push_back({Role::kAssistant, std::move(text)});
}

void Conversation::close(ConversationStatus status, std::optional<std::string> closing_user_turn) {
  if (status == ConversationStatus::kOngoing)
    throw Error(ErrorCode::kInvalidArgument, "close() needs a terminal status");
  status_ = status;
  closing_ = std::move(closing_user_turn);
}

std::string Conversation::render_context() const {
  std::string out;
  for (const auto& t : turns_) {
    if (!out.empty()) out.push_back('\n');
    out += t.role == Role::kUser ? "User: " : "Assistant: ";
    out += t.text;
  }
  return out;
}

}  // namespace proactive::core
