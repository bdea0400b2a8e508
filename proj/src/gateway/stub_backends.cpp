#include <cmath>
#include <set>

#include "proactive/backends.hpp"
#include "proactive/error.hpp"
#include "proactive/text.hpp"

namespace proactive::gateway {

ScriptedGeneration::ScriptedGeneration(std::string id, std::vector<std::string> replies)
    : id_(std::move(id)), replies_(std::move(replies)) {
  if (replies_.empty()) throw Error(ErrorCode::kConfigError, "scripted backend needs at least one reply");
}

std::string ScriptedGeneration::complete(const GenerationRequest&) {
  std::lock_guard lock(mu_);
  auto i = std::min(next_, replies_.size() - 1);
  ++next_;
  return replies_[i];
}

std::size_t ScriptedGeneration::calls() const {
  std::lock_guard lock(mu_);
  return next_;
}

RuleGeneration::RuleGeneration(std::string id, std::vector<Rule> rules, std::optional<std::string> fallback)
    : id_(std::move(id)), rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::string RuleGeneration::complete(const GenerationRequest& request) {
  for (const auto& r : rules_)
    if (request.prompt.find(r.contains) != std::string::npos) return r.reply;
  return fallback_ ? *fallback_ : request.prompt;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

HashEmbedding::HashEmbedding(std::size_t dim, std::string id) : dim_(dim), id_(std::move(id)) {
  if (dim_ == 0) throw Error(ErrorCode::kConfigError, "hash embedding dimension must be >= 1");
  if (id_.empty()) id_ = "stub:hash-embedding-" + std::to_string(dim_);
}

TokenEmbeddings HashEmbedding::embed(std::string_view input) {
  TokenEmbeddings out;
  out.tokens = text::words(input);
  if (out.tokens.empty())
    for (auto t : text::split_whitespace(input)) out.tokens.emplace_back(t);
  for (const auto& tok : out.tokens) {
    std::uint64_t state = text::fnv1a64(tok);
    std::vector<double> v(dim_);
    double norm = 0;
    for (auto& x : v) {
      // uniform in [-1, 1)
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    out.vectors.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& positive_words() {
  static const std::set<std::string> w{
      "thanks", "thank", "great", "interesting", "wow", "yes", "love", "wonderful", "awesome",
      "good", "helpful", "sure", "amazing", "fascinating", "nice", "cool", "appreciate", "glad",
      "excellent", "perfect", "fantastic", "happy", "like", "enjoy", "definitely", "absolutely"};
  return w;
}

const std::set<std::string>& negative_words() {
  static const std::set<std::string> w{
      "no",       "not",   "wrong",     "bad",    "irrelevant", "don't", "didn't",  "confused",
      "unhelpful", "incorrect", "useless", "never", "hate",      "boring", "annoying", "doesn't",
      "isn't",    "unclear", "disappointed", "terrible", "awful", "nonsense"};
  return w;
}

}  // namespace

SentimentResult LexiconSentiment::classify(std::string_view input) {
  double pos = 0, neg = 0;
  for (const auto& w : text::words(input)) {
    if (positive_words().count(w)) ++pos;
    if (negative_words().count(w)) ++neg;
  }
  if (input.find('!') != std::string_view::npos && pos > 0) pos += 0.5;
  double lp = 1.5 * pos, ln = 1.5 * neg, lu = 1.0;
  double m = std::max({lp, ln, lu});
  double ep = std::exp(lp - m), en = std::exp(ln - m), eu = std::exp(lu - m);
  double z = ep + en + eu;
  return {ep / z, eu / z, en / z};
}

ConstantClassifier::ConstantClassifier(double positive_logit, double negative_logit, std::string id)
    : logits_{positive_logit, negative_logit}, id_(std::move(id)) {
  if (id_.empty()) id_ = "stub:constant-classifier";
}

}  // namespace proactive::gateway
