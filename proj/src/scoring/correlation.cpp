#include <algorithm>
#include <cmath>
#include <cstdio>

#include "proactive/error.hpp"
#include "proactive/scoring.hpp"

namespace proactive::scoring {

double point_biserial(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size())
    throw Error(ErrorCode::kInvalidArgument, "point_biserial: labels and scores differ in length");
  if (labels.size() < 2) throw Error(ErrorCode::kDegenerateInput, "DEGENERATE_INPUT: need at least 2 observations");
  const double n = static_cast<double>(labels.size());
  double n1 = 0, sum1 = 0, sum0 = 0, mean = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw Error(ErrorCode::kInvalidArgument, "point_biserial: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw Error(ErrorCode::kInvalidArgument, "point_biserial: non-finite score");
    mean += scores[i];
    if (labels[i] == 1) {
      ++n1;
      sum1 += scores[i];
    } else {
      sum0 += scores[i];
    }
  }
  const double n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw Error(ErrorCode::kDegenerateInput, "DEGENERATE_INPUT: one label class is absent");
  mean /= n;
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= n;
  // Tolerate rounding noise on constant inputs.
  if (!(var > 1e-24)) throw Error(ErrorCode::kDegenerateInput, "DEGENERATE_INPUT: all scores are equal");
  const double m1 = sum1 / n1, m0 = sum0 / n0;
  double r = (m1 - m0) / std::sqrt(var) * std::sqrt(n1 * n0 / (n * n));
  return std::clamp(r, -1.0, 1.0);
}

namespace {

struct MetricColumn {
  const char* name;
  std::optional<double> ScoreReport::*field;
};

const MetricColumn kCorrelationRows[] = {
    {"Prompt-based", &ScoreReport::prompt_based},
    {"Classification-based", &ScoreReport::classifier_logit},
    {"User Simulation-based", &ScoreReport::user_sim},
    {"Semantic Similarity-based", &ScoreReport::semantic},
};

std::string fmt3(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

std::vector<CorrelationRow> correlate(const std::vector<ScoreReport>& reports,
                                      const std::map<std::string, core::Label>& labels) {
  std::vector<CorrelationRow> rows;
  for (const auto& col : kCorrelationRows) {
    CorrelationRow row{col.name, {}};
    for (auto kind : core::kAllKinds) {
      std::vector<int> ls;
      std::vector<double> ss;
      for (const auto& rep : reports) {
        if (rep.kind != kind) continue;
        auto it = labels.find(rep.sample_id);
        const auto& v = rep.*(col.field);
        if (it == labels.end() || !v) continue;
        ls.push_back(it->second == core::Label::kValid ? 1 : 0);
        ss.push_back(*v);
      }
      try {
        row.r[kind] = point_biserial(ls, ss);
      } catch (const Error&) {
        row.r[kind] = std::nullopt;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string correlation_table(const std::vector<CorrelationRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %8s %8s\n", "", "FQ", "AI");
  out += buf;
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-28s %8s %8s\n", row.metric.c_str(),
                  fmt3(row.r.at(ElementKind::kFollowUpQuestion)).c_str(),
                  fmt3(row.r.at(ElementKind::kAdditionalInformation)).c_str());
    out += buf;
  }
  return out;
}

std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::string out = "metric,FQ,AI\n";
  for (const auto& row : rows) {
    auto cell = [](const std::optional<double>& v) {
      if (!v) return std::string();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return std::string(buf);
    };
    out += row.metric + "," + cell(row.r.at(ElementKind::kFollowUpQuestion)) + "," +
           cell(row.r.at(ElementKind::kAdditionalInformation)) + "\n";
  }
  return out;
}

}  // namespace proactive::scoring
