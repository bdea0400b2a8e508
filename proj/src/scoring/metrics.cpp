#include <algorithm>
#include <cmath>
#include <regex>

#include "proactive/error.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/scoring.hpp"
#include "proactive/text.hpp"

namespace proactive::scoring {

std::string_view to_string(Segmenter s) { return s == Segmenter::kStructured ? "structured" : "sentence"; }

Segmenter parse_segmenter(std::string_view s) {
  auto lower = text::to_lower(s);
  if (lower == "structured") return Segmenter::kStructured;
  if (lower == "sentence") return Segmenter::kSentence;
  throw Error(ErrorCode::kInvalidArgument, "unknown segmenter '" + std::string(s) + "'");
}

Segmenter effective_segmenter(const ProactiveResponse& response, const SemanticConfig& cfg) {
  if (cfg.segmenter) return *cfg.segmenter;
  return response.element() ? Segmenter::kStructured : Segmenter::kSentence;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto seg = text::trim(s.substr(start, end - start));
    if (!seg.empty()) out.emplace_back(seg);
    start = end;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i;
    while (j + 1 < s.size() && (s[j + 1] == '.' || s[j + 1] == '!' || s[j + 1] == '?')) ++j;
    // A terminator only ends a sentence before whitespace or end of text, so
    // "3.5" and "e.g" stay whole.
    if (j + 1 == s.size() || std::isspace(static_cast<unsigned char>(s[j + 1]))) emit(j + 1);
    i = j;
  }
  emit(s.size());
  return out;
}

std::vector<std::string> segment_response(const ProactiveResponse& response, Segmenter mode) {
  if (mode == Segmenter::kStructured) {
    std::vector<std::string> out{response.answer()};
    if (response.element()) out.push_back(*response.element());
    return out;
  }
  auto out = split_sentences(response.full_text());
  if (out.empty()) out.push_back(response.full_text());
  return out;
}

double mean_pairwise(std::span<const std::string> segments, const PairSimilarity& sim) {
  if (segments.size() < 2)
    throw Error(ErrorCode::kTooFewSegments,
                "TOO_FEW_SEGMENTS: need at least 2 segments, got " + std::to_string(segments.size()));
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < segments.size(); ++i)
    for (std::size_t j = i + 1; j < segments.size(); ++j) {
      sum += sim(segments[i], segments[j]);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

double mean_pairwise_bs(gateway::Gateway& gw, std::span<const std::string> segments) {
  return mean_pairwise(segments, [&gw](const std::string& a, const std::string& b) { return bertscore(gw, a, b); });
}

double combine_semantic(double bs_query_response, std::optional<double> mean_bs, ElementKind kind, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be in [0, 1]");
  double second = 0.0;
  if (mean_bs) second = kind == ElementKind::kFollowUpQuestion ? *mean_bs : 1.0 - *mean_bs;
  double score = alpha * bs_query_response + (1.0 - alpha) * second;
  return std::clamp(score, 0.0, 1.0);
}

SemanticBreakdown semantic_breakdown(gateway::Gateway& gw, std::string_view query, const ProactiveResponse& response,
                                     ElementKind kind, const SemanticConfig& cfg) {
  if (text::is_blank(query)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: query is empty");
  SemanticBreakdown b;
  auto segments = segment_response(response, effective_segmenter(response, cfg));
  b.n_segments = segments.size();
  b.bs_query_response = bertscore(gw, query, response.full_text());
  if (segments.size() >= 2) b.mean_pairwise = mean_pairwise_bs(gw, segments);
  b.score = combine_semantic(b.bs_query_response, b.mean_pairwise, kind, cfg.alpha);
  return b;
}

double semantic_score(gateway::Gateway& gw, std::string_view query, const ProactiveResponse& response,
                      ElementKind kind, const SemanticConfig& cfg) {
  return semantic_breakdown(gw, query, response, kind, cfg).score;
}

// ---------------------------------------------------------------------------

namespace {

promptcraft::PromptTemplate user_sim_template(const promptcraft::TemplateLibrary& lib, const UserSimConfig& cfg) {
  if (cfg.user_prompt_template.empty()) return lib.get("user_sim");
  promptcraft::PromptTemplate t;
  t.name = "user_sim_custom";
  t.stage = promptcraft::Stage::kUserSim;
  t.body = cfg.user_prompt_template;
  t.placeholders = promptcraft::placeholders_in(t.body);
  const auto& allowed = promptcraft::allowed_placeholders(t.stage);
  for (const auto& p : t.placeholders)
    if (!allowed.count(p))
      throw Error(ErrorCode::kTemplateInvalid, "user-sim template uses unknown placeholder {" + p + "}");
  return t;
}

std::string strip_speaker(std::string s) {
  for (std::string_view prefix : {"User:", "user:", "USER:"})
    if (s.rfind(prefix, 0) == 0) return std::string(text::trim(std::string_view(s).substr(prefix.size())));
  return s;
}

}  // namespace

UserSimResult user_sim_detail(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib,
                              const ProactiveResponse& response, const core::Conversation& context,
                              const UserSimConfig& cfg) {
  if (cfg.n < 1) throw Error(ErrorCode::kInvalidArgument, "user-sim n must be >= 1");
  auto tmpl = user_sim_template(lib, cfg);
  auto prompt = promptcraft::render(tmpl, {{"context", context.render_context()}, {"response", response.full_text()}});

  UserSimResult out;
  double total = 0.0;
  for (int i = 0; i < cfg.n; ++i) {
    gateway::GenerationRequest req{prompt, cfg.temperature, cfg.max_tokens, std::nullopt};
    auto reply = strip_speaker(promptcraft::postprocess(gw.generate(req)));
    if (reply.empty()) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: simulated user reply " + std::to_string(i + 1) + " is empty");
    double pos = gw.sentiment(reply).positive;
    total += pos;
    out.user_turns.push_back(std::move(reply));
    out.positive.push_back(pos);
  }
  out.score = std::clamp(total / cfg.n, 0.0, 1.0);
  return out;
}

double user_sim_score(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib, const ProactiveResponse& response,
                      const core::Conversation& context, const UserSimConfig& cfg) {
  return user_sim_detail(gw, lib, response, context, cfg).score;
}

// ---------------------------------------------------------------------------

double parse_unit_score(std::string_view output) {
  static const std::regex number(R"((\d+(?:\.\d+)?|\.\d+))");
  std::string s(output);
  // The first in-range decimal literal; the first in-range integer otherwise.
  std::optional<double> integer_fallback;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    auto pos = static_cast<std::size_t>(it->position());
    if (pos > 0 && s[pos - 1] == '-') continue;  // negative, out of range
    const auto lit = it->str();
    double v = std::stod(lit);
    if (v < 0.0 || v > 1.0) continue;
    if (lit.find('.') != std::string::npos) return v;
    if (!integer_fallback) integer_fallback = v;
  }
  if (integer_fallback) return *integer_fallback;
  throw Error(ErrorCode::kUnparseableScore,
              "UNPARSEABLE_SCORE: no number in [0, 1] in '" + s.substr(0, 120) + "'");
}

double prompt_based_score(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib, std::string_view query,
                          const ProactiveResponse& response, ElementKind kind, int max_tokens) {
  const auto& tmpl = lib.get(promptcraft::judge_name(kind));
  auto prompt = promptcraft::render(tmpl, {{"query", std::string(query)}, {"response", response.full_text()}});
  return parse_unit_score(gw.generate({prompt, 0.0, max_tokens, std::nullopt}));
}

gateway::ValidityScore classifier_score(gateway::Gateway& gw, const ProactiveResponse& response, ElementKind kind) {
  return gw.classify_validity(response, kind);
}

}  // namespace proactive::scoring
