#include <array>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "proactive/error.hpp"
#include "proactive/parallel.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/scoring.hpp"
#include "proactive/text.hpp"

namespace proactive::scoring {

using nlohmann::json;

MetricSet parse_metrics(std::string_view list) {
  MetricSet m;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto comma = list.find(',', pos);
    auto item = text::to_lower(text::trim(list.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (!item.empty()) {
      if (item == "semantic") m.add(Metric::kSemantic);
      else if (item == "user-sim" || item == "user_sim" || item == "usersim") m.add(Metric::kUserSim);
      else if (item == "prompt" || item == "prompt-based") m.add(Metric::kPromptBased);
      else if (item == "classifier" || item == "classification") m.add(Metric::kClassifier);
      else if (item == "all") m.bits = 15;
      else throw Error(ErrorCode::kInvalidArgument, "unknown metric '" + item + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return m;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::string describe(const std::exception& e) {
  if (auto* pe = dynamic_cast<const Error*>(&e)) {
    std::string msg = pe->what();
    auto name = std::string(error_code_name(pe->code()));
    return msg.rfind(name, 0) == 0 ? msg : name + ": " + msg;
  }
  return e.what();
}

void check_configured(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib,
                      const std::vector<core::CorpusSample>& samples, MetricSet metrics) {
  if (metrics.empty()) throw Error(ErrorCode::kInvalidArgument, "no metric selected");
  if (metrics.has(Metric::kSemantic) && !gw.has_embedding())
    throw Error(ErrorCode::kConfigError, "semantic metric needs an embedding backend");
  if (metrics.has(Metric::kUserSim) && (!gw.has_generation() || !gw.has_sentiment()))
    throw Error(ErrorCode::kConfigError, "user-sim metric needs generation and sentiment backends");
  if (metrics.has(Metric::kUserSim) && !lib.contains("user_sim"))
    throw Error(ErrorCode::kConfigError, "user-sim metric needs the 'user_sim' template");
  std::set<core::ElementKind> kinds;
  for (const auto& s : samples) kinds.insert(s.kind);
  for (auto k : kinds) {
    if (metrics.has(Metric::kPromptBased)) {
      if (!gw.has_generation()) throw Error(ErrorCode::kConfigError, "prompt-based metric needs a generation backend");
      if (!lib.contains(promptcraft::judge_name(k)))
        throw Error(ErrorCode::kConfigError, "missing template '" + promptcraft::judge_name(k) + "'");
    }
    if (metrics.has(Metric::kClassifier) && !gw.has_classifier(k))
      throw Error(ErrorCode::kClassifierNotConfigured,
                  "CLASSIFIER_NOT_CONFIGURED(" + std::string(core::to_string(k)) + ")");
  }
}

}  // namespace

json report_to_json(const ScoreReport& r) {
  json cfg = r.config_snapshot.empty() ? json::object() : json::parse(r.config_snapshot, nullptr, false);
  if (cfg.is_discarded()) cfg = r.config_snapshot;
  return json{{"sample_id", r.sample_id},
              {"kind", std::string(core::to_string(r.kind))},
              {"semantic", opt(r.semantic)},
              {"user_sim", opt(r.user_sim)},
              {"prompt_based", opt(r.prompt_based)},
              {"classifier_logit", opt(r.classifier_logit)},
              {"classifier_prob", opt(r.classifier_prob)},
              {"n_tokens", r.n_tokens},
              {"errors", r.errors},
              {"backend_profile_hash", r.backend_profile_hash},
              {"config", cfg}};
}

ScoreReport report_from_json(const json& j) {
  try {
    ScoreReport r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.kind = core::parse_element_kind(j.at("kind").get<std::string>());
    r.semantic = opt_from(j, "semantic");
    r.user_sim = opt_from(j, "user_sim");
    r.prompt_based = opt_from(j, "prompt_based");
    r.classifier_logit = opt_from(j, "classifier_logit");
    r.classifier_prob = opt_from(j, "classifier_prob");
    r.n_tokens = j.value("n_tokens", std::size_t{0});
    r.errors = j.value("errors", std::vector<std::string>{});
    r.backend_profile_hash = j.value("backend_profile_hash", "");
    if (auto it = j.find("config"); it != j.end()) r.config_snapshot = it->dump();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("MALFORMED_RECORD: score report: ") + e.what());
  }
}

json batch_config_to_json(const BatchConfig& cfg, const MetricSet& metrics) {
  json m = json::array();
  if (metrics.has(Metric::kSemantic)) m.push_back("semantic");
  if (metrics.has(Metric::kUserSim)) m.push_back("user-sim");
  if (metrics.has(Metric::kPromptBased)) m.push_back("prompt");
  if (metrics.has(Metric::kClassifier)) m.push_back("classifier");
  return json{{"metrics", m},
              {"semantic",
               {{"alpha", cfg.semantic.alpha},
                {"segmenter", cfg.semantic.segmenter ? json(std::string(to_string(*cfg.semantic.segmenter)))
                                                     : json("auto")}}},
              {"user_sim",
               {{"n", cfg.user_sim.n},
                {"temperature", cfg.user_sim.temperature},
                {"max_tokens", cfg.user_sim.max_tokens},
                {"custom_template", !cfg.user_sim.user_prompt_template.empty()}}},
              {"judge_max_tokens", cfg.judge_max_tokens}};
}

std::vector<ScoreReport> score_batch(gateway::Gateway& gw, const promptcraft::TemplateLibrary& lib,
                                     const std::vector<core::CorpusSample>& samples, MetricSet metrics,
                                     const BatchConfig& cfg) {
  check_configured(gw, lib, samples, metrics);
  const auto profile_hash = gw.profile_hash();
  const auto snapshot = batch_config_to_json(cfg, metrics).dump();

  std::vector<ScoreReport> reports(samples.size());
  parallel_for(samples.size(), gw.max_parallel(), [&](std::size_t i) {
    const auto& s = samples[i];
    auto& r = reports[i];
    r.sample_id = s.id;
    r.kind = s.kind;
    r.n_tokens = text::count_tokens(s.response.full_text());
    r.backend_profile_hash = profile_hash;
    r.config_snapshot = snapshot;

    auto attempt = [&](const char* name, auto&& fn) {
      try {
        fn();
      } catch (const std::exception& e) {
        r.errors.push_back(std::string(name) + ": " + describe(e));
      }
    };
    if (metrics.has(Metric::kSemantic))
      attempt("semantic", [&] { r.semantic = semantic_score(gw, s.query, s.response, s.kind, cfg.semantic); });
    if (metrics.has(Metric::kUserSim))
      attempt("user_sim", [&] {
        r.user_sim = user_sim_score(gw, lib, s.response, core::Conversation(s.query), cfg.user_sim);
      });
    if (metrics.has(Metric::kPromptBased))
      attempt("prompt_based", [&] {
        r.prompt_based = prompt_based_score(gw, lib, s.query, s.response, s.kind, cfg.judge_max_tokens);
      });
    if (metrics.has(Metric::kClassifier))
      attempt("classifier", [&] {
        auto v = classifier_score(gw, s.response, s.kind);
        r.classifier_logit = v.positive_logit;
        r.classifier_prob = v.probability;
      });
  });
  return reports;
}

// ---------------------------------------------------------------------------

namespace {

struct Mean {
  double sum = 0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> value() const {
    return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  }
};

std::string cell(const std::optional<double>& v, int prec = 2) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

}  // namespace

std::map<ElementKind, MetricSummary> summarize(const std::vector<ScoreReport>& reports) {
  std::map<ElementKind, MetricSummary> out;
  std::map<ElementKind, std::array<Mean, 4>> means;
  std::map<ElementKind, double> tokens;
  for (const auto& r : reports) {
    auto& s = out[r.kind];
    auto& m = means[r.kind];
    ++s.n;
    if (!r.errors.empty()) ++s.n_errors;
    m[0].add(r.classifier_prob);
    m[1].add(r.user_sim);
    m[2].add(r.semantic);
    m[3].add(r.prompt_based);
    tokens[r.kind] += static_cast<double>(r.n_tokens);
  }
  for (auto& [kind, s] : out) {
    auto& m = means[kind];
    s.classification = m[0].value();
    s.user_sim = m[1].value();
    s.semantic = m[2].value();
    s.prompt_based = m[3].value();
    s.num_tokens = tokens[kind] / static_cast<double>(s.n);
  }
  return out;
}

std::string summary_table(const std::map<ElementKind, MetricSummary>& summary) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-4s %14s %15s %19s %9s %12s %6s %6s\n", "Kind", "Classification",
                "User Simulation", "Semantic Similarity", "Num Token", "Prompt-based", "N", "Errors");
  out += buf;
  for (const auto& [kind, s] : summary) {
    std::snprintf(buf, sizeof buf, "%-4s %14s %15s %19s %9.2f %12s %6zu %6zu\n",
                  std::string(core::to_string(kind)).c_str(), cell(s.classification).c_str(),
                  cell(s.user_sim).c_str(), cell(s.semantic).c_str(), s.num_tokens, cell(s.prompt_based).c_str(),
                  s.n, s.n_errors);
    out += buf;
  }
  return out;
}

std::string summary_csv(const std::map<ElementKind, MetricSummary>& summary) {
  std::string out = "kind,classification,user_simulation,semantic_similarity,num_token,prompt_based,n,errors\n";
  for (const auto& [kind, s] : summary) {
    auto c = [](const std::optional<double>& v) { return v ? cell(v, 6) : std::string(); };
    out += std::string(core::to_string(kind)) + "," + c(s.classification) + "," + c(s.user_sim) + "," +
           c(s.semantic) + "," + cell(s.num_tokens, 6) + "," + c(s.prompt_based) + "," + std::to_string(s.n) +
           "," + std::to_string(s.n_errors) + "\n";
  }
  return out;
}

}  // namespace proactive::scoring
