#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "proactive/backends.hpp"
#include "proactive/core.hpp"
#include "proactive/gateway.hpp"
#include "proactive/text.hpp"

namespace testing {

using namespace proactive;

inline std::unique_ptr<gateway::Gateway> empty_gateway(std::size_t max_parallel = 4) {
  gateway::GatewayOptions opts;
  opts.max_parallel = max_parallel;
  opts.retry.base_delay = std::chrono::milliseconds(1);
  opts.retry.max_delay = std::chrono::milliseconds(2);
  return std::make_unique<gateway::Gateway>(opts);
}

// Every capability backed by a deterministic stub.
inline std::unique_ptr<gateway::Gateway> stub_gateway(std::shared_ptr<gateway::GenerationBackend> gen = nullptr) {
  auto gw = empty_gateway();
  gw->add_generation_backend(gen ? gen : std::make_shared<gateway::EchoGeneration>());
  gw->set_embedding_backend(std::make_shared<gateway::HashEmbedding>(64));
  gw->set_sentiment_backend(std::make_shared<gateway::LexiconSentiment>());
  for (auto k : core::kAllKinds) gw->set_classifier_backend(k, std::make_shared<gateway::ConstantClassifier>(0.0));
  return gw;
}

// Embedding that looks every whitespace token up in a fixed table.
inline std::shared_ptr<gateway::EmbeddingBackend> table_embedding(
    std::map<std::string, std::vector<double>> table) {
  return std::make_shared<gateway::FunctionEmbedding>("test:table", [table](std::string_view text) {
    gateway::TokenEmbeddings e;
    for (auto tok : text::split_whitespace(text)) {
      e.tokens.emplace_back(tok);
      e.vectors.push_back(table.at(std::string(tok)));
    }
    return e;
  });
}

inline std::vector<double> unit(std::size_t dim, std::size_t axis) {
  std::vector<double> v(dim, 0.0);
  v[axis] = 1.0;
  return v;
}

inline core::CorpusSample sample(std::string id, std::string query, core::ElementKind kind, std::string answer = "An answer.",
                                 std::optional<std::string> element = "Would you like to know more about it?") {
  core::CorpusSample s;
  s.id = std::move(id);
  s.query = std::move(query);
  s.kind = kind;
  s.response = element ? core::ProactiveResponse::with_element(std::move(answer), *element, kind)
                       : core::ProactiveResponse::answer_only(std::move(answer));
  return s;
}

// Random corpus with varied lengths; ids unique.
inline std::vector<core::CorpusSample> random_corpus(std::mt19937_64& rng, std::size_t n) {
  static const char* words[] = {"what", "is", "the", "tallest", "tower", "in", "paris", "who", "wrote",
                                "a", "novel", "when", "did", "it", "open", "river", "long", "how"};
  auto phrase = [&](std::size_t lo, std::size_t hi) {
    std::uniform_int_distribution<std::size_t> len(lo, hi), w(0, std::size(words) - 1);
    std::string s;
    for (std::size_t i = 0, k = len(rng); i < k; ++i) {
      if (i) s += ' ';
      s += words[w(rng)];
    }
    return s;
  };
  std::vector<core::CorpusSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto kind = (rng() & 1) ? core::ElementKind::kFollowUpQuestion : core::ElementKind::kAdditionalInformation;
    bool with_element = (rng() % 5) != 0;
    auto s = sample("s" + std::to_string(i), phrase(1, 20), kind, phrase(1, 30),
                    with_element ? std::optional<std::string>(phrase(1, 15)) : std::nullopt);
    if (rng() % 3) s.long_answer = phrase(0, 60);
    if (rng() % 4 == 0) s.label = (rng() & 1) ? core::Label::kValid : core::Label::kInvalid;
    out.push_back(std::move(s));
  }
  return out;
}

// Pearson correlation coefficient, sample (n - 1) form throughout. A second
// route to the point-biserial value, which equals Pearson's r between the
// 0/1 labels and the scores.
inline double pearson_oracle(const std::vector<int>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return (sxy / (n - 1)) / std::sqrt((sxx / (n - 1)) * (syy / (n - 1)));
}

// Direct point-biserial formula with the sample standard deviation:
// r = (M1 - M0) / s_{n-1} * sqrt(n1 n0 / (n (n - 1))).
inline double point_biserial_oracle(const std::vector<int>& labels, const std::vector<double>& scores) {
  double n1 = 0, n0 = 0, s1 = 0, s0 = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      ++n1;
      s1 += scores[i];
    } else {
      ++n0;
      s0 += scores[i];
    }
  }
  const double n = n1 + n0;
  const double mean = (s1 + s0) / n;
  double ss = 0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1));
  return (s1 / n1 - s0 / n0) / sd * std::sqrt(n1 * n0 / (n * (n - 1)));
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("proactive-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
