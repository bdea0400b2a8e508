#include <cstdlib>

#include <nlohmann/json.hpp>

#include "proactive/backends.hpp"
#include "proactive/error.hpp"

namespace proactive::gateway {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& why) {
  throw Error(ErrorCode::kConfigError, "config: " + why);
}

std::string str(const json& j, const char* key, const std::string& fallback = "") {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) config_error(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

HttpEndpoint endpoint_from(const json& j, const std::string& what) {
  HttpEndpoint ep;
  ep.url = str(j, "url");
  if (ep.url.empty()) config_error(what + ": 'url' is required for http backends");
  if (auto env = str(j, "api_key_env"); !env.empty()) {
    const char* v = std::getenv(env.c_str());
    if (!v) config_error(what + ": environment variable " + env + " is not set");
    ep.api_key = v;
  }
  ep.timeout = std::chrono::seconds(j.value("timeout_s", 120));
  return ep;
}

std::shared_ptr<GenerationBackend> generation_from(const json& j) {
  auto type = str(j, "type");
  auto id = str(j, "id");
  if (type == "echo") return std::make_shared<EchoGeneration>(id.empty() ? "stub:echo" : id);
  if (type == "script") {
    auto replies = j.value("replies", std::vector<std::string>{});
    return std::make_shared<ScriptedGeneration>(id.empty() ? "stub:script" : id, std::move(replies));
  }
  if (type == "rules") {
    std::vector<RuleGeneration::Rule> rules;
    for (const auto& r : j.value("rules", json::array()))
      rules.push_back({r.at("contains").get<std::string>(), r.at("reply").get<std::string>()});
    std::optional<std::string> fallback;
    if (j.contains("fallback") && j["fallback"].is_string()) fallback = j["fallback"].get<std::string>();
    return std::make_shared<RuleGeneration>(id.empty() ? "stub:rules" : id, std::move(rules), std::move(fallback));
  }
  if (type == "openai") {
    auto model = str(j, "model");
    if (model.empty()) config_error("openai generation backend needs 'model'");
    return make_openai_generation(endpoint_from(j, "generation"), model, str(j, "api", "chat"), id);
  }
  config_error("unknown generation backend type '" + type + "'");
}

std::shared_ptr<EmbeddingBackend> embedding_from(const json& j) {
  auto type = str(j, "type");
  if (type == "hash") return std::make_shared<HashEmbedding>(j.value("dim", 64), str(j, "id"));
  if (type == "http") return make_http_embedding(endpoint_from(j, "embedding"), str(j, "id"));
  config_error("unknown embedding backend type '" + type + "'");
}

std::shared_ptr<SentimentBackend> sentiment_from(const json& j) {
  auto type = str(j, "type");
  if (type == "lexicon") return std::make_shared<LexiconSentiment>(str(j, "id", "stub:lexicon-sentiment"));
  if (type == "http") return make_http_sentiment(endpoint_from(j, "sentiment"), str(j, "id"));
  config_error("unknown sentiment backend type '" + type + "'");
}

std::shared_ptr<ClassifierBackend> classifier_from(const json& j) {
  auto type = str(j, "type");
  if (type == "constant")
    return std::make_shared<ConstantClassifier>(j.value("logit", 0.0), j.value("negative_logit", 0.0), str(j, "id"));
  if (type == "http") return make_http_classifier(endpoint_from(j, "classifier"), str(j, "id"));
  config_error("unknown classifier backend type '" + type + "'");
}

}  // namespace

std::unique_ptr<Gateway> build_gateway(const json& config) {
  try {
    GatewayOptions opts;
    auto mp = config.value("max_parallel", 4);
    if (mp < 1) config_error("max_parallel must be >= 1");
    opts.max_parallel = static_cast<std::size_t>(mp);
    if (auto dir = str(config, "cache_dir"); !dir.empty()) opts.cache_dir = dir;
    if (auto it = config.find("retry"); it != config.end() && it->is_object()) {
      opts.retry.max_attempts = it->value("max_attempts", opts.retry.max_attempts);
      opts.retry.base_delay = std::chrono::milliseconds(it->value("base_delay_ms", 200));
      opts.retry.max_delay = std::chrono::milliseconds(it->value("max_delay_ms", 5000));
      opts.retry.jitter = it->value("jitter", opts.retry.jitter);
    }
    auto gw = std::make_unique<Gateway>(opts);

    const json backends = config.value("backends", json::object());
    if (auto it = backends.find("generation"); it != backends.end()) {
      json list = it->is_array() ? *it : json::array({*it});
      for (const auto& g : list) gw->add_generation_backend(generation_from(g), g.value("default", false));
    }
    if (auto it = backends.find("embedding"); it != backends.end() && !it->is_null())
      gw->set_embedding_backend(embedding_from(*it));
    if (auto it = backends.find("sentiment"); it != backends.end() && !it->is_null())
      gw->set_sentiment_backend(sentiment_from(*it));
    if (auto it = backends.find("classifier_fq"); it != backends.end() && !it->is_null())
      gw->set_classifier_backend(core::ElementKind::kFollowUpQuestion, classifier_from(*it));
    if (auto it = backends.find("classifier_ai"); it != backends.end() && !it->is_null())
      gw->set_classifier_backend(core::ElementKind::kAdditionalInformation, classifier_from(*it));
    return gw;
  } catch (const json::exception& e) {
    config_error(e.what());
  }
}

json offline_backends_config() {
  json agent{{"type", "rules"},
             {"id", "stub:agent"},
             {"rules", json::array({json{{"contains", "Step 1:"},
                                         {"reply", "Step 1: done. Final response: Here is a short answer. It also has "
                                                   "an interesting history."}}})},
             {"fallback", "Here is a short answer. Would you like to hear how it got its name?"}};
  json user{{"type", "script"}, {"id", "stub:user"}, {"replies", json::array({"Yes, tell me more.", "Thank you."})}};
  return json{{"generation", json::array({json{{"type", "echo"}, {"id", "stub:echo"}, {"default", true}}, agent, user})},
              {"embedding", json{{"type", "hash"}, {"dim", 64}}},
              {"sentiment", json{{"type", "lexicon"}}},
              {"classifier_fq", json{{"type", "constant"}, {"logit", 0.0}}},
              {"classifier_ai", json{{"type", "constant"}, {"logit", 0.0}}}};
}

}  // namespace proactive::gateway
