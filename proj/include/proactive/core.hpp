#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace proactive::core {

enum class ElementKind { kFollowUpQuestion, kAdditionalInformation };

inline constexpr ElementKind kAllKinds[] = {ElementKind::kFollowUpQuestion,
                                            ElementKind::kAdditionalInformation};

// "FQ" / "AI".
std::string_view to_string(ElementKind kind);
// Accepts "FQ", "AI" in any case; throws kInvalidArgument otherwise.
ElementKind parse_element_kind(std::string_view s);

// An answer span plus an optional proactive element. The kind travels with
// the element: both are present or both absent.
class ProactiveResponse {
 public:
  static ProactiveResponse answer_only(std::string answer);
  static ProactiveResponse with_element(std::string answer, std::string element, ElementKind kind);

  const std::string& answer() const { return answer_; }
  const std::optional<std::string>& element() const { return element_; }
  std::optional<ElementKind> element_kind() const { return element_kind_; }
  const std::string& full_text() const { return full_text_; }

  bool operator==(const ProactiveResponse&) const = default;

 private:
  ProactiveResponse() = default;

  std::string answer_;
  std::optional<std::string> element_;
  std::optional<ElementKind> element_kind_;
  std::string full_text_;
};

enum class Split { kTrain, kTest, kUnsplit };
enum class Label { kValid, kInvalid };

std::string_view to_string(Split split);
Split parse_split(std::string_view s);
std::string_view to_string(Label label);
Label parse_label(std::string_view s);

struct CorpusSample {
  std::string id;
  std::string query;
  // Always set. Mirrors response.element_kind() when the element is present;
  // validation negatives may lack the element but still belong to one kind.
  ElementKind kind = ElementKind::kFollowUpQuestion;
  ProactiveResponse response = ProactiveResponse::answer_only("-");
  std::optional<std::string> long_answer;
  Split split = Split::kUnsplit;
  std::optional<Label> label;

  bool operator==(const CorpusSample&) const = default;
};

struct TokenAverages {
  std::size_t n_samples = 0;
  double avg_query_tokens = 0.0;
  double avg_response_tokens = 0.0;
  double avg_element_tokens = 0.0;
};

struct CorpusStats {
  std::size_t n_samples = 0;
  double avg_query_tokens = 0.0;
  double avg_response_tokens = 0.0;
  double avg_element_tokens = 0.0;
  std::map<ElementKind, TokenAverages> per_kind;
};

// JSONL record <-> sample. `line` is 1-based and only used in error messages.
CorpusSample sample_from_json(const nlohmann::json& record, std::size_t line);
nlohmann::json sample_to_json(const CorpusSample& sample);

std::vector<CorpusSample> parse_corpus(std::string_view jsonl);
std::vector<CorpusSample> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<CorpusSample>& samples, const std::filesystem::path& path);
std::string corpus_to_jsonl(const std::vector<CorpusSample>& samples);

std::vector<CorpusSample> filter_corpus(const std::vector<CorpusSample>& samples,
                                        std::size_t min_query_tokens, std::size_t max_query_tokens,
                                        std::size_t min_long_answer_tokens);

// Per kind, the train_per_kind samples with the smallest seeded hash of their
// id become TRAIN and the rest TEST. Input order is preserved.
std::vector<CorpusSample> split_corpus(const std::vector<CorpusSample>& samples,
                                       std::size_t train_per_kind, std::int64_t seed);

CorpusStats corpus_stats(const std::vector<CorpusSample>& samples);
nlohmann::json stats_to_json(const CorpusStats& stats);

using InstructionRenderer = std::function<std::string(const CorpusSample&)>;

// Writes {"instruction", "response", "kind", "id"} per sample. Every sample
// must be TRAIN. Returns the number of records written.
std::size_t export_sft(const std::vector<CorpusSample>& samples, const InstructionRenderer& render,
                       const std::filesystem::path& path);
// Same, with `{query}` substituted into a fixed instruction template.
std::size_t export_sft(const std::vector<CorpusSample>& samples,
                       std::string_view instruction_template, const std::filesystem::path& path);

}  // namespace proactive::core
