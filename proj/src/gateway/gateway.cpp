#include "proactive/gateway.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "proactive/error.hpp"
#include "proactive/text.hpp"

namespace proactive::gateway {

using nlohmann::json;

ValidityScore to_validity(const ClassifierLogits& logits) {
  double margin = logits.positive - logits.negative;
  return {logits.positive, 1.0 / (1.0 + std::exp(-margin))};
}

std::string profile_to_json(const BackendProfile& p) {
  json j{{"generation_id", p.generation_id},
         {"extra_generation_ids", p.extra_generation_ids},
         {"embedding_id", p.embedding_id},
         {"sentiment_id", p.sentiment_id},
         {"classifier_fq_id", p.classifier_fq_id ? json(*p.classifier_fq_id) : json(nullptr)},
         {"classifier_ai_id", p.classifier_ai_id ? json(*p.classifier_ai_id) : json(nullptr)},
         {"cache_dir", p.cache_dir ? json(p.cache_dir->string()) : json(nullptr)},
         {"max_parallel", p.max_parallel}};
  return j.dump();
}

// ---------------------------------------------------------------------------

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t limit) : limit_(limit) {
  if (limit_ == 0) throw Error(ErrorCode::kConfigError, "max_parallel must be >= 1");
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return in_use_ < limit_; });
  ++in_use_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create cache dir '" + dir_->string() + "': " + ec.message());
  }
}

std::filesystem::path ResponseCache::file_for(const std::string& key) const {
  return *dir_ / (text::hex64(text::fnv1a64(key)) + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  {
    std::shared_lock lock(mu_);
    if (auto it = mem_.find(key); it != mem_.end()) {
      ++hits_;
      return it->second;
    }
  }
  if (dir_) {
    std::ifstream in(file_for(key), std::ios::binary);
    if (in) {
      std::stringstream buf;
      buf << in.rdbuf();
      auto rec = json::parse(buf.str(), nullptr, false);
      // Hash collisions and torn files fall through to a miss.
      if (rec.is_object() && rec.value("key", "") == key && rec.contains("value") && rec["value"].is_string()) {
        auto value = rec["value"].get<std::string>();
        std::unique_lock lock(mu_);
        mem_.emplace(key, value);
        ++hits_;
        return value;
      }
    }
  }
  ++misses_;
  return std::nullopt;
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  {
    std::unique_lock lock(mu_);
    mem_[key] = value;
  }
  if (!dir_) return;
  auto path = file_for(key);
  std::ostringstream tmp_name;
  tmp_name << path.string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id());
  std::filesystem::path tmp = tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      spdlog::warn("cache: cannot write {}", tmp.string());
      return;
    }
    out << json{{"key", key}, {"value", value}}.dump();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) spdlog::warn("cache: rename failed for {}: {}", path.string(), ec.message());
}

// ---------------------------------------------------------------------------

namespace {

std::string number_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr char kSep = '\x1f';

json embeddings_to_json(const TokenEmbeddings& e) { return {{"tokens", e.tokens}, {"vectors", e.vectors}}; }

TokenEmbeddings embeddings_from_json(const json& j) {
  TokenEmbeddings e;
  e.tokens = j.at("tokens").get<std::vector<std::string>>();
  e.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
  return e;
}

void validate_embeddings(const TokenEmbeddings& e, std::string_view backend) {
  auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::kBackendProtocol, "embedding backend '" + std::string(backend) + "': " + why);
  };
  if (e.tokens.empty()) bad("no tokens returned");
  if (e.tokens.size() != e.vectors.size()) bad("token/vector count mismatch");
  const auto d = e.vectors.front().size();
  if (d == 0) bad("zero-dimensional vectors");
  for (const auto& v : e.vectors) {
    if (v.size() != d) bad("ragged vector dimensions");
    double norm = 0;
    for (double x : v) norm += x * x;
    if (!(norm > 0) || !std::isfinite(norm)) bad("zero or non-finite vector");
  }
}

SentimentResult normalize_sentiment(SentimentResult s, std::string_view backend) {
  double sum = s.positive + s.neutral + s.negative;
  if (s.positive < 0 || s.neutral < 0 || s.negative < 0 || !(sum > 0) || !std::isfinite(sum))
    throw Error(ErrorCode::kBackendProtocol,
                "sentiment backend '" + std::string(backend) + "' returned invalid probabilities");
  if (std::abs(sum - 1.0) > 1e-9) {
    s.positive /= sum;
    s.neutral /= sum;
    s.negative /= sum;
  }
  return s;
}

double jittered_delay_ms(const RetryPolicy& policy, int attempt) {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  double base = static_cast<double>(policy.base_delay.count()) * std::pow(2.0, attempt - 1);
  base = std::min(base, static_cast<double>(policy.max_delay.count()));
  std::uniform_real_distribution<double> u(-policy.jitter, policy.jitter);
  return std::max(0.0, base * (1.0 + u(rng)));
}

}  // namespace

Gateway::Gateway(GatewayOptions options)
    : options_(std::move(options)), cache_(std::make_unique<ResponseCache>(options_.cache_dir)) {
  if (options_.max_parallel == 0) throw Error(ErrorCode::kConfigError, "max_parallel must be >= 1");
  if (options_.retry.max_attempts < 1) throw Error(ErrorCode::kConfigError, "retry.max_attempts must be >= 1");
}

void Gateway::add_generation_backend(std::shared_ptr<GenerationBackend> backend, bool make_default) {
  auto id = backend->id();
  generation_[id] = {std::move(backend), std::make_shared<ConcurrencyLimiter>(options_.max_parallel)};
  if (make_default || default_generation_.empty()) default_generation_ = id;
}

void Gateway::set_embedding_backend(std::shared_ptr<EmbeddingBackend> backend) {
  embedding_ = std::move(backend);
  embedding_limiter_ = std::make_shared<ConcurrencyLimiter>(options_.max_parallel);
}

void Gateway::set_sentiment_backend(std::shared_ptr<SentimentBackend> backend) {
  sentiment_ = std::move(backend);
  sentiment_limiter_ = std::make_shared<ConcurrencyLimiter>(options_.max_parallel);
}

void Gateway::set_classifier_backend(core::ElementKind kind, std::shared_ptr<ClassifierBackend> backend) {
  classifiers_[kind] = {std::move(backend), std::make_shared<ConcurrencyLimiter>(options_.max_parallel)};
}

bool Gateway::has_generation(std::string_view backend_id) const {
  return generation_.find(backend_id) != generation_.end();
}

bool Gateway::has_classifier(core::ElementKind kind) const { return classifiers_.count(kind) > 0; }

template <typename Fn>
auto Gateway::with_retry(ConcurrencyLimiter& limiter, std::string_view what, Fn&& fn) -> decltype(fn()) {
  const auto& policy = options_.retry;
  for (int attempt = 1;; ++attempt) {
    try {
      ConcurrencyLimiter::Guard guard(limiter);
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBackendUnavailable) throw;
      if (attempt >= policy.max_attempts)
        throw Error(ErrorCode::kBackendUnavailable,
                    std::string("BACKEND_UNAVAILABLE: ") + std::string(what) + " failed after " +
                        std::to_string(attempt) + " attempt(s): " + e.what());
      auto delay = jittered_delay_ms(policy, attempt);
      spdlog::warn("{}: attempt {}/{} failed ({}); retrying in {:.0f} ms", what, attempt,
                   policy.max_attempts, e.what(), delay);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
    }
  }
}

Gateway::Slot<GenerationBackend>& Gateway::generation_slot(std::optional<std::string_view> backend_id) {
  if (generation_.empty()) throw Error(ErrorCode::kConfigError, "no generation backend configured");
  std::string_view id = backend_id && !backend_id->empty() ? *backend_id : std::string_view(default_generation_);
  auto it = generation_.find(id);
  if (it == generation_.end())
    throw Error(ErrorCode::kConfigError, "unknown generation backend '" + std::string(id) + "'");
  return it->second;
}

std::string Gateway::generate(const GenerationRequest& req, std::optional<std::string_view> backend_id) {
  if (req.prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "generation prompt is empty");
  if (!(req.temperature >= 0.0 && req.temperature <= 2.0))
    throw Error(ErrorCode::kInvalidArgument, "temperature must be in [0, 2]");
  if (req.max_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");

  auto& slot = generation_slot(backend_id);
  const auto id = slot.backend->id();
  std::string key;
  if (req.deterministic()) {
    key = "generate";
    key += kSep + id + kSep + number_key(req.temperature) + kSep + std::to_string(req.max_tokens) + kSep +
           (req.seed ? std::to_string(*req.seed) : std::string("-")) + kSep + req.prompt;
    if (auto hit = cache_->get(key)) return *hit;
  }
  auto out = with_retry(*slot.limiter, "generate[" + id + "]", [&] { return slot.backend->complete(req); });
  if (req.deterministic()) cache_->put(key, out);
  return out;
}

TokenEmbeddings Gateway::embed_tokens(std::string_view text) {
  if (text::is_blank(text)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: cannot embed empty text");
  if (!embedding_) throw Error(ErrorCode::kConfigError, "no embedding backend configured");
  const auto id = embedding_->id();
  std::string key = "embed";
  key += kSep + id + kSep + std::string(text);
  if (auto hit = cache_->get(key)) return embeddings_from_json(json::parse(*hit));
  auto e = with_retry(*embedding_limiter_, "embed[" + id + "]", [&] { return embedding_->embed(text); });
  validate_embeddings(e, id);
  cache_->put(key, embeddings_to_json(e).dump());
  return e;
}

SentimentResult Gateway::sentiment(std::string_view text) {
  if (text::is_blank(text)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: cannot classify empty text");
  if (!sentiment_) throw Error(ErrorCode::kConfigError, "no sentiment backend configured");
  const auto id = sentiment_->id();
  std::string key = "sentiment";
  key += kSep + id + kSep + std::string(text);
  if (auto hit = cache_->get(key)) {
    auto j = json::parse(*hit);
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
  }
  auto s = with_retry(*sentiment_limiter_, "sentiment[" + id + "]", [&] { return sentiment_->classify(text); });
  s = normalize_sentiment(s, id);
  cache_->put(key, json::array({s.positive, s.neutral, s.negative}).dump());
  return s;
}

ValidityScore Gateway::classify_validity(const core::ProactiveResponse& response, core::ElementKind kind) {
  auto it = classifiers_.find(kind);
  if (it == classifiers_.end())
    throw Error(ErrorCode::kClassifierNotConfigured,
                "CLASSIFIER_NOT_CONFIGURED(" + std::string(core::to_string(kind)) + ")");
  auto& slot = it->second;
  const auto id = slot.backend->id();
  const auto& text = response.full_text();
  std::string key = "classify";
  key += kSep + id + kSep + text;
  if (auto hit = cache_->get(key)) {
    auto j = json::parse(*hit);
    return to_validity({j.at(0).get<double>(), j.at(1).get<double>()});
  }
  auto logits = with_retry(*slot.limiter, "classify[" + id + "]", [&] { return slot.backend->logits(text); });
  if (!std::isfinite(logits.positive) || !std::isfinite(logits.negative))
    throw Error(ErrorCode::kBackendProtocol, "classifier '" + id + "' returned non-finite logits");
  cache_->put(key, json::array({logits.positive, logits.negative}).dump());
  return to_validity(logits);
}

BackendProfile Gateway::profile() const {
  BackendProfile p;
  p.generation_id = default_generation_;
  for (const auto& [id, slot] : generation_)
    if (id != default_generation_) p.extra_generation_ids.push_back(id);
  p.embedding_id = embedding_ ? embedding_->id() : "";
  p.sentiment_id = sentiment_ ? sentiment_->id() : "";
  if (auto it = classifiers_.find(core::ElementKind::kFollowUpQuestion); it != classifiers_.end())
    p.classifier_fq_id = it->second.backend->id();
  if (auto it = classifiers_.find(core::ElementKind::kAdditionalInformation); it != classifiers_.end())
    p.classifier_ai_id = it->second.backend->id();
  p.cache_dir = options_.cache_dir;
  p.max_parallel = options_.max_parallel;
  return p;
}

std::string Gateway::profile_hash() const {
  auto p = profile();
  // cache_dir does not change results
  p.cache_dir.reset();
  return text::hex64(text::fnv1a64(profile_to_json(p)));
}

}  // namespace proactive::gateway
