#ifdef PROACTIVE_HAS_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "proactive/backends.hpp"
#include "proactive/error.hpp"
#include "proactive/text.hpp"

namespace proactive::gateway {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::kConfigError, "endpoint url '" + url + "' lacks a scheme");
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.scheme_host_port = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

bool looks_like_context_overflow(const std::string& body) {
  auto lower = text::to_lower(body);
  return lower.find("context length") != std::string::npos ||
         lower.find("context_length") != std::string::npos ||
         lower.find("maximum context") != std::string::npos || lower.find("too many tokens") != std::string::npos;
}

// POSTs JSON and maps transport/status failures onto the error taxonomy:
// connection errors, 429 and 5xx are transient (retried by the gateway).
json post_json(const HttpEndpoint& ep, const std::string& suffix, const json& payload, std::string_view who) {
  auto url = parse_url(ep.url);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(std::chrono::seconds(30));
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);

  auto res = client.Post(url.path + suffix, headers, payload.dump(), "application/json");
  const std::string tag = std::string(who) + " " + ep.url + suffix;
  if (!res)
    throw Error(ErrorCode::kBackendUnavailable, tag + ": " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw Error(ErrorCode::kBackendUnavailable, tag + ": HTTP " + std::to_string(res->status));
  if (res->status == 413 || (res->status == 400 && looks_like_context_overflow(res->body)))
    throw Error(ErrorCode::kContextOverflow, "CONTEXT_OVERFLOW: " + tag + ": " + res->body.substr(0, 300));
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorCode::kBackendError,
                tag + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  auto body = json::parse(res->body, nullptr, false);
  if (body.is_discarded()) throw Error(ErrorCode::kBackendProtocol, tag + ": response is not JSON");
  return body;
}

template <typename T>
T field(const json& j, const char* key, std::string_view who) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBackendProtocol, std::string(who) + ": bad field '" + key + "': " + e.what());
  }
}

class OpenAIGeneration final : public GenerationBackend {
 public:
  OpenAIGeneration(HttpEndpoint ep, std::string model, std::string api, std::string id)
      : ep_(std::move(ep)), model_(std::move(model)), api_(std::move(api)), id_(std::move(id)) {
    if (api_ != "chat" && api_ != "completions")
      throw Error(ErrorCode::kConfigError, "openai api must be 'chat' or 'completions'");
    if (id_.empty()) id_ = "openai:" + model_ + "@" + ep_.url;
  }

  std::string id() const override { return id_; }

  std::string complete(const GenerationRequest& req) override {
    json payload{{"model", model_}, {"temperature", req.temperature}, {"max_tokens", req.max_tokens}};
    if (req.seed) payload["seed"] = *req.seed;
    if (api_ == "chat") {
      payload["messages"] = json::array({json{{"role", "user"}, {"content", req.prompt}}});
      auto body = post_json(ep_, "/chat/completions", payload, id_);
      try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kBackendProtocol, id_ + ": unexpected chat response: " + e.what());
      }
    }
    payload["prompt"] = req.prompt;
    auto body = post_json(ep_, "/completions", payload, id_);
    try {
      return body.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBackendProtocol, id_ + ": unexpected completion response: " + e.what());
    }
  }

 private:
  HttpEndpoint ep_;
  std::string model_;
  std::string api_;
  std::string id_;
};

class HttpEmbedding final : public EmbeddingBackend {
 public:
  HttpEmbedding(HttpEndpoint ep, std::string id) : ep_(std::move(ep)), id_(std::move(id)) {
    if (id_.empty()) id_ = "http-embedding@" + ep_.url;
  }
  std::string id() const override { return id_; }
  TokenEmbeddings embed(std::string_view text) override {
    auto body = post_json(ep_, "", json{{"text", std::string(text)}}, id_);
    TokenEmbeddings e;
    e.tokens = field<std::vector<std::string>>(body, "tokens", id_);
    e.vectors = field<std::vector<std::vector<double>>>(body, "vectors", id_);
    return e;
  }

 private:
  HttpEndpoint ep_;
  std::string id_;
};

class HttpSentiment final : public SentimentBackend {
 public:
  HttpSentiment(HttpEndpoint ep, std::string id) : ep_(std::move(ep)), id_(std::move(id)) {
    if (id_.empty()) id_ = "http-sentiment@" + ep_.url;
  }
  std::string id() const override { return id_; }
  SentimentResult classify(std::string_view text) override {
    auto body = post_json(ep_, "", json{{"text", std::string(text)}}, id_);
    return {field<double>(body, "positive", id_), field<double>(body, "neutral", id_),
            field<double>(body, "negative", id_)};
  }

 private:
  HttpEndpoint ep_;
  std::string id_;
};

class HttpClassifier final : public ClassifierBackend {
 public:
  HttpClassifier(HttpEndpoint ep, std::string id) : ep_(std::move(ep)), id_(std::move(id)) {
    if (id_.empty()) id_ = "http-classifier@" + ep_.url;
  }
  std::string id() const override { return id_; }
  ClassifierLogits logits(std::string_view text) override {
    auto body = post_json(ep_, "", json{{"text", std::string(text)}}, id_);
    return {field<double>(body, "positive_logit", id_), body.value("negative_logit", 0.0)};
  }

 private:
  HttpEndpoint ep_;
  std::string id_;
};

}  // namespace

std::shared_ptr<GenerationBackend> make_openai_generation(HttpEndpoint endpoint, std::string model,
                                                          std::string api, std::string id) {
  return std::make_shared<OpenAIGeneration>(std::move(endpoint), std::move(model), std::move(api), std::move(id));
}

std::shared_ptr<EmbeddingBackend> make_http_embedding(HttpEndpoint endpoint, std::string id) {
  return std::make_shared<HttpEmbedding>(std::move(endpoint), std::move(id));
}

std::shared_ptr<SentimentBackend> make_http_sentiment(HttpEndpoint endpoint, std::string id) {
  return std::make_shared<HttpSentiment>(std::move(endpoint), std::move(id));
}

std::shared_ptr<ClassifierBackend> make_http_classifier(HttpEndpoint endpoint, std::string id) {
  return std::make_shared<HttpClassifier>(std::move(endpoint), std::move(id));
}

}  // namespace proactive::gateway
