#include <algorithm>
#include <numeric>

#include "proactive/error.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/text.hpp"

namespace proactive::promptcraft {

Criterion parse_criterion(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "semantic") return Criterion::kSemantic;
  if (v == "sentiment" || v == "user-sim" || v == "user_sim" || v == "usersim") return Criterion::kSentiment;
  if (v == "sum") return Criterion::kSum;
  throw Error(ErrorCode::kInvalidArgument, "unknown selection criterion '" + std::string(s) + "'");
}

Direction parse_direction(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "top") return Direction::kTop;
  if (v == "bottom") return Direction::kBottom;
  throw Error(ErrorCode::kInvalidArgument, "unknown selection direction '" + std::string(s) + "'");
}

double criterion_value(const DemoScores& s, Criterion c) {
  switch (c) {
    case Criterion::kSemantic:
      return s.semantic;
    case Criterion::kSentiment:
      return s.user_sim;
    case Criterion::kSum:
      return s.semantic + s.user_sim;
  }
  return 0.0;
}

std::vector<Demonstration> select_demonstrations(std::span<const Demonstration> pool, std::size_t k,
                                                 Criterion criterion, Direction direction) {
  if (k > pool.size())
    throw Error(ErrorCode::kKTooLarge, "K_TOO_LARGE: asked for " + std::to_string(k) + " demonstrations from a pool of " +
                                           std::to_string(pool.size()));
  if (k == 0) return {};
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!pool[i].scores)
      throw Error(ErrorCode::kMissingScores, "MISSING_SCORES: pool item " + std::to_string(i) + " ('" + pool[i].query +
                                                 "') carries no scores");

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double va = criterion_value(*pool[a].scores, criterion);
    double vb = criterion_value(*pool[b].scores, criterion);
    return direction == Direction::kTop ? va > vb : va < vb;
  });

  std::vector<Demonstration> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[order[i]]);
  return out;
}

}  // namespace proactive::promptcraft
