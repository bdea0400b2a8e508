#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proactive/gateway.hpp"

namespace proactive::gateway {

// ---------------------------------------------------------------------------
// Offline backends. Deterministic, no network; used by tests and --offline.
// ---------------------------------------------------------------------------

class EchoGeneration final : public GenerationBackend {
 public:
  explicit EchoGeneration(std::string id = "stub:echo") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string complete(const GenerationRequest& request) override { return request.prompt; }

 private:
  std::string id_;
};

// Replies in order; the last reply repeats once the script is exhausted.
class ScriptedGeneration final : public GenerationBackend {
 public:
  ScriptedGeneration(std::string id, std::vector<std::string> replies);
  std::string id() const override { return id_; }
  std::string complete(const GenerationRequest& request) override;
  std::size_t calls() const;

 private:
  std::string id_;
  std::vector<std::string> replies_;
  mutable std::mutex mu_;
  std::size_t next_ = 0;
};

// First rule whose needle occurs in the prompt wins; otherwise the fallback.
// A fallback of nullopt echoes the prompt.
class RuleGeneration final : public GenerationBackend {
 public:
  struct Rule {
    std::string contains;
    std::string reply;
  };
  RuleGeneration(std::string id, std::vector<Rule> rules, std::optional<std::string> fallback);
  std::string id() const override { return id_; }
  std::string complete(const GenerationRequest& request) override;

 private:
  std::string id_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
};

class FunctionGeneration final : public GenerationBackend {
 public:
  using Fn = std::function<std::string(const GenerationRequest&)>;
  FunctionGeneration(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  std::string complete(const GenerationRequest& request) override { return fn_(request); }

 private:
  std::string id_;
  Fn fn_;
};

// Bag-of-words embedding: each lowercased word maps to a fixed pseudo-random
// unit vector. Not contextual, but deterministic and lexically meaningful.
class HashEmbedding final : public EmbeddingBackend {
 public:
  explicit HashEmbedding(std::size_t dim = 64, std::string id = "");
  std::string id() const override { return id_; }
  TokenEmbeddings embed(std::string_view text) override;

 private:
  std::size_t dim_;
  std::string id_;
};

class FunctionEmbedding final : public EmbeddingBackend {
 public:
  using Fn = std::function<TokenEmbeddings(std::string_view)>;
  FunctionEmbedding(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  TokenEmbeddings embed(std::string_view text) override { return fn_(text); }

 private:
  std::string id_;
  Fn fn_;
};

// Word-list sentiment: softmax over (positive hits, 1, negative hits).
class LexiconSentiment final : public SentimentBackend {
 public:
  explicit LexiconSentiment(std::string id = "stub:lexicon-sentiment") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  SentimentResult classify(std::string_view text) override;

 private:
  std::string id_;
};

class FunctionSentiment final : public SentimentBackend {
 public:
  using Fn = std::function<SentimentResult(std::string_view)>;
  FunctionSentiment(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  SentimentResult classify(std::string_view text) override { return fn_(text); }

 private:
  std::string id_;
  Fn fn_;
};

class ConstantClassifier final : public ClassifierBackend {
 public:
  ConstantClassifier(double positive_logit, double negative_logit = 0.0, std::string id = "");
  std::string id() const override { return id_; }
  ClassifierLogits logits(std::string_view) override { return logits_; }

 private:
  ClassifierLogits logits_;
  std::string id_;
};

class FunctionClassifier final : public ClassifierBackend {
 public:
  using Fn = std::function<ClassifierLogits(std::string_view)>;
  FunctionClassifier(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  ClassifierLogits logits(std::string_view text) override { return fn_(text); }

 private:
  std::string id_;
  Fn fn_;
};

// ---------------------------------------------------------------------------
// HTTP backends.
// ---------------------------------------------------------------------------

struct HttpEndpoint {
  std::string url;  // scheme://host[:port][/path]
  std::string api_key;
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible server (hosted API, vLLM, TGI). `api` is "chat" for
// /chat/completions or "completions" for raw /completions.
std::shared_ptr<GenerationBackend> make_openai_generation(HttpEndpoint endpoint, std::string model,
                                                          std::string api = "chat", std::string id = "");

// JSON-over-HTTP model servers:
//   embedding:  {"text"} -> {"tokens": [...], "vectors": [[...], ...]}
//   sentiment:  {"text"} -> {"positive", "neutral", "negative"}
//   classifier: {"text"} -> {"positive_logit", "negative_logit"}
std::shared_ptr<EmbeddingBackend> make_http_embedding(HttpEndpoint endpoint, std::string id = "");
std::shared_ptr<SentimentBackend> make_http_sentiment(HttpEndpoint endpoint, std::string id = "");
std::shared_ptr<ClassifierBackend> make_http_classifier(HttpEndpoint endpoint, std::string id = "");

// ---------------------------------------------------------------------------
// Construction from the "backends" section of a run config.
// ---------------------------------------------------------------------------

// Builds a gateway from a JSON config object. See README for the schema.
// API keys are read from the environment variables named by "api_key_env".
std::unique_ptr<Gateway> build_gateway(const nlohmann::json& config);

// The all-stub configuration used by --offline.
nlohmann::json offline_backends_config();

}  // namespace proactive::gateway
