#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "proactive/core.hpp"

namespace proactive::gateway {

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  // Deterministic requests are the only cacheable ones.
  bool deterministic() const { return temperature == 0.0 || seed.has_value(); }
};

struct TokenEmbeddings {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;

  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
  bool operator==(const TokenEmbeddings&) const = default;
};

struct SentimentResult {
  double positive = 0.0;
  double neutral = 0.0;
  double negative = 0.0;
};

// Raw two-class logits as produced by a validity classifier.
struct ClassifierLogits {
  double positive = 0.0;
  double negative = 0.0;
};

struct ValidityScore {
  double positive_logit = 0.0;
  double probability = 0.0;
};

// Softmax over the two classifier logits, i.e. logistic(positive - negative).
ValidityScore to_validity(const ClassifierLogits& logits);

struct BackendProfile {
  std::string generation_id;
  std::vector<std::string> extra_generation_ids;
  std::string embedding_id;
  std::string sentiment_id;
  std::optional<std::string> classifier_fq_id;
  std::optional<std::string> classifier_ai_id;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t max_parallel = 1;
};

std::string profile_to_json(const BackendProfile& profile);

// Backend interfaces. Implementations signal transient failures by throwing
// Error(kBackendUnavailable); the gateway retries only those.

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const GenerationRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string id() const = 0;
  virtual TokenEmbeddings embed(std::string_view text) = 0;
};

class SentimentBackend {
 public:
  virtual ~SentimentBackend() = default;
  virtual std::string id() const = 0;
  virtual SentimentResult classify(std::string_view text) = 0;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string id() const = 0;
  virtual ClassifierLogits logits(std::string_view text) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{200};
  std::chrono::milliseconds max_delay{5000};
  double jitter = 0.2;  // fraction of the delay, applied symmetrically
};

struct GatewayOptions {
  std::size_t max_parallel = 4;
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;
};

// Counting limiter with a runtime bound.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::size_t limit);
  void acquire();
  void release();
  std::size_t limit() const { return limit_; }

  class Guard {
   public:
    explicit Guard(ConcurrencyLimiter& l) : l_(l) { l_.acquire(); }
    ~Guard() { l_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    ConcurrencyLimiter& l_;
  };

 private:
  std::size_t limit_;
  std::size_t in_use_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

// In-memory map with optional write-through to one file per entry under a
// directory, so entries survive restarts. Values are opaque strings.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir);

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  std::filesystem::path file_for(const std::string& key) const;

  std::optional<std::filesystem::path> dir_;
  std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> mem_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

// Single entry point to every model capability.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  // The first generation backend added becomes the default unless another
  // is explicitly marked.
  void add_generation_backend(std::shared_ptr<GenerationBackend> backend, bool make_default = false);
  void set_embedding_backend(std::shared_ptr<EmbeddingBackend> backend);
  void set_sentiment_backend(std::shared_ptr<SentimentBackend> backend);
  void set_classifier_backend(core::ElementKind kind, std::shared_ptr<ClassifierBackend> backend);

  bool has_generation() const { return !generation_.empty(); }
  bool has_generation(std::string_view backend_id) const;
  bool has_embedding() const { return embedding_ != nullptr; }
  bool has_sentiment() const { return sentiment_ != nullptr; }
  bool has_classifier(core::ElementKind kind) const;

  // backend_id selects a non-default generation backend.
  std::string generate(const GenerationRequest& request, std::optional<std::string_view> backend_id = {});
  TokenEmbeddings embed_tokens(std::string_view text);
  SentimentResult sentiment(std::string_view text);
  ValidityScore classify_validity(const core::ProactiveResponse& response, core::ElementKind kind);

  BackendProfile profile() const;
  std::string profile_hash() const;
  std::size_t max_parallel() const { return options_.max_parallel; }
  const GatewayOptions& options() const { return options_; }
  ResponseCache& cache() { return *cache_; }

 private:
  template <typename Backend>
  struct Slot {
    std::shared_ptr<Backend> backend;
    std::shared_ptr<ConcurrencyLimiter> limiter;
  };

  template <typename Fn>
  auto with_retry(ConcurrencyLimiter& limiter, std::string_view what, Fn&& fn) -> decltype(fn());

  Slot<GenerationBackend>& generation_slot(std::optional<std::string_view> backend_id);

  GatewayOptions options_;
  std::unique_ptr<ResponseCache> cache_;
  std::map<std::string, Slot<GenerationBackend>, std::less<>> generation_;
  std::string default_generation_;
  std::shared_ptr<EmbeddingBackend> embedding_;
  std::shared_ptr<ConcurrencyLimiter> embedding_limiter_;
  std::shared_ptr<SentimentBackend> sentiment_;
  std::shared_ptr<ConcurrencyLimiter> sentiment_limiter_;
  std::map<core::ElementKind, Slot<ClassifierBackend>> classifiers_;
};

}  // namespace proactive::gateway
