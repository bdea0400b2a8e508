#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proactive/conversation.hpp"
#include "proactive/core.hpp"
#include "proactive/gateway.hpp"

namespace proactive::promptcraft {
class TemplateLibrary;
}

namespace proactive::scoring {

using core::ElementKind;
using core::ProactiveResponse;

// ---------------------------------------------------------------------------
// BERTScore
// ---------------------------------------------------------------------------

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy cosine matching without IDF weighting. Precision averages, over
// candidate tokens, the best cosine to any reference token; recall is the
// mirror image; F1 is their harmonic mean (0 when P + R = 0).
BertScore bertscore_from_embeddings(const gateway::TokenEmbeddings& candidate,
                                    const gateway::TokenEmbeddings& reference);
BertScore bertscore_full(gateway::Gateway& gw, std::string_view candidate, std::string_view reference);
double bertscore(gateway::Gateway& gw, std::string_view candidate, std::string_view reference);

// ---------------------------------------------------------------------------
// Semantic-similarity metric
// ---------------------------------------------------------------------------

enum class Segmenter { kStructured, kSentence };

std::string_view to_string(Segmenter s);
Segmenter parse_segmenter(std::string_view s);

struct SemanticConfig {
  double alpha = 0.5;
  // nullopt picks STRUCTURED when the response carries an element, else
  // SENTENCE.
  std::optional<Segmenter> segmenter;
};

Segmenter effective_segmenter(const ProactiveResponse& response, const SemanticConfig& cfg);

// Splits on '.', '!' and '?'; each kept segment includes its terminator.
std::vector<std::string> split_sentences(std::string_view text);
std::vector<std::string> segment_response(const ProactiveResponse& response, Segmenter mode);

using PairSimilarity = std::function<double(const std::string&, const std::string&)>;

// Mean of `sim` over unordered pairs i < j.
double mean_pairwise(std::span<const std::string> segments, const PairSimilarity& sim);
double mean_pairwise_bs(gateway::Gateway& gw, std::span<const std::string> segments);

// alpha * bs_query_response + (1 - alpha) * T with T = mean_pairwise for FQ
// and 1 - mean_pairwise for AI. A missing mean (single segment) makes T zero
// for both kinds. Result clamped to [0, 1].
double combine_semantic(double bs_query_response, std::optional<double> mean_pairwise, ElementKind kind,
                        double alpha);

struct SemanticBreakdown {
  double score = 0.0;
  double bs_query_response = 0.0;
  std::optional<double> mean_pairwise;
  std::size_t n_segments = 0;
};

SemanticBreakdown semantic_breakdown(gateway::Gateway& gw, std::string_view query, const ProactiveResponse& response,
                                     ElementKind kind, const SemanticConfig& cfg);
double semantic_score(gateway::Gateway& gw, std::string_view query, const ProactiveResponse& response,
                      ElementKind kind, const SemanticConfig& cfg);

// ---------------------------------------------------------------------------
// User-simulation metric
// ---------------------------------------------------------------------------

struct UserSimConfig {
  int n = 5;
  double temperature = 0.5;
  int max_tokens = 128;
  // Body with {context} and {response}; empty selects the library template.
  std::string user_prompt_template;
};

struct UserSimResult {
  double score = 0.0;
  std::vector<std::string> user_turns;
  std::vector<double> positive;
};

// n simulated user replies to `response` given the dialogue so far, averaged
// positive sentiment. Any failed draw aborts the whole computation.
UserSimResult user_sim_detail(gateway::Gateway& gw, const promptcraft::TemplateLibrary& templates,
                              const ProactiveResponse& response, const core::Conversation& context,
                              const UserSimConfig& cfg);
double user_sim_score(gateway::Gateway& gw, const promptcraft::TemplateLibrary& templates,
                      const ProactiveResponse& response, const core::Conversation& context,
                      const UserSimConfig& cfg);

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

// First decimal literal in the text whose value lies in [0, 1].
double parse_unit_score(std::string_view text);

double prompt_based_score(gateway::Gateway& gw, const promptcraft::TemplateLibrary& templates,
                          std::string_view query, const ProactiveResponse& response, ElementKind kind,
                          int max_tokens = 32);

gateway::ValidityScore classifier_score(gateway::Gateway& gw, const ProactiveResponse& response, ElementKind kind);

// ---------------------------------------------------------------------------
// Metric validation
// ---------------------------------------------------------------------------

// r_pb = (M1 - M0) / s * sqrt(n1 * n0 / n^2), s the population std-dev.
double point_biserial(std::span<const int> labels, std::span<const double> scores);

// ---------------------------------------------------------------------------
// Batch scoring
// ---------------------------------------------------------------------------

enum class Metric : unsigned { kSemantic = 1, kUserSim = 2, kPromptBased = 4, kClassifier = 8 };

struct MetricSet {
  unsigned bits = 0;
  bool has(Metric m) const { return (bits & static_cast<unsigned>(m)) != 0; }
  MetricSet& add(Metric m) {
    bits |= static_cast<unsigned>(m);
    return *this;
  }
  bool empty() const { return bits == 0; }
};

// "semantic", "user-sim", "prompt", "classifier" (comma separated).
MetricSet parse_metrics(std::string_view list);

struct BatchConfig {
  SemanticConfig semantic;
  UserSimConfig user_sim;
  int judge_max_tokens = 32;
};

struct ScoreReport {
  std::string sample_id;
  ElementKind kind = ElementKind::kFollowUpQuestion;
  std::optional<double> semantic;
  std::optional<double> user_sim;
  std::optional<double> prompt_based;
  std::optional<double> classifier_logit;
  std::optional<double> classifier_prob;
  std::size_t n_tokens = 0;
  std::vector<std::string> errors;
  std::string backend_profile_hash;
  std::string config_snapshot;  // JSON object text
};

nlohmann::json report_to_json(const ScoreReport& report);
ScoreReport report_from_json(const nlohmann::json& j);

nlohmann::json batch_config_to_json(const BatchConfig& cfg, const MetricSet& metrics);

// Throws kConfigError up front when a selected metric lacks its backend.
// Per-sample failures land in ScoreReport::errors. Output order = input order.
std::vector<ScoreReport> score_batch(gateway::Gateway& gw, const promptcraft::TemplateLibrary& templates,
                                     const std::vector<core::CorpusSample>& samples, MetricSet metrics,
                                     const BatchConfig& cfg);

struct MetricSummary {
  std::size_t n = 0;
  std::optional<double> classification;  // mean classifier probability
  std::optional<double> user_sim;
  std::optional<double> semantic;
  std::optional<double> prompt_based;
  double num_tokens = 0.0;
  std::size_t n_errors = 0;
};

std::map<ElementKind, MetricSummary> summarize(const std::vector<ScoreReport>& reports);
// Plain-text table with Classification / User Simulation / Semantic
// Similarity / Num Token columns per kind.
std::string summary_table(const std::map<ElementKind, MetricSummary>& summary);
std::string summary_csv(const std::map<ElementKind, MetricSummary>& summary);

struct CorrelationRow {
  std::string metric;
  std::map<ElementKind, std::optional<double>> r;  // nullopt: degenerate / no data
};

// Rows in fixed order: prompt-based, classification-based, user-simulation,
// semantic similarity. Labels are matched to reports by sample id.
std::vector<CorrelationRow> correlate(const std::vector<ScoreReport>& reports,
                                      const std::map<std::string, core::Label>& labels);
std::string correlation_table(const std::vector<CorrelationRow>& rows);
std::string correlation_csv(const std::vector<CorrelationRow>& rows);

}  // namespace proactive::scoring
