#include <cmath>
#include <limits>

#include "proactive/error.hpp"
#include "proactive/scoring.hpp"
#include "proactive/text.hpp"

namespace proactive::scoring {

namespace {

std::vector<std::vector<double>> normalized(const std::vector<std::vector<double>>& vs) {
  std::vector<std::vector<double>> out = vs;
  for (auto& v : out) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
  }
  return out;
}

}  // namespace

BertScore bertscore_from_embeddings(const gateway::TokenEmbeddings& candidate,
                                    const gateway::TokenEmbeddings& reference) {
  if (candidate.vectors.empty() || reference.vectors.empty())
    throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: bertscore needs at least one token per side");
  if (candidate.dim() != reference.dim())
    throw Error(ErrorCode::kBackendProtocol, "bertscore: embedding dimensions differ");
  const auto c = normalized(candidate.vectors);
  const auto r = normalized(reference.vectors);

  std::vector<double> best_for_c(c.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> best_for_r(r.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      double cos = 0;
      for (std::size_t k = 0; k < c[i].size(); ++k) cos += c[i][k] * r[j][k];
      best_for_c[i] = std::max(best_for_c[i], cos);
      best_for_r[j] = std::max(best_for_r[j], cos);
    }
  }
  BertScore s;
  for (double v : best_for_c) s.precision += v;
  for (double v : best_for_r) s.recall += v;
  s.precision /= static_cast<double>(c.size());
  s.recall /= static_cast<double>(r.size());
  double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

BertScore bertscore_full(gateway::Gateway& gw, std::string_view candidate, std::string_view reference) {
  if (text::is_blank(candidate) || text::is_blank(reference))
    throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: bertscore inputs must be non-empty");
  return bertscore_from_embeddings(gw.embed_tokens(candidate), gw.embed_tokens(reference));
}

double bertscore(gateway::Gateway& gw, std::string_view candidate, std::string_view reference) {
  return bertscore_full(gw, candidate, reference).f1;
}

}  // namespace proactive::scoring
