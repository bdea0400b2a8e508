#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proactive/core.hpp"
#include "proactive/gateway.hpp"

namespace proactive::promptcraft {

using core::ElementKind;
using core::ProactiveResponse;

// Generation stages plus the auxiliary prompts used by the metrics and the
// simulator.
enum class Stage { kDirect, kP1, kP2, kP3, kThreeInOne, kJudge, kUserSim, kReactive, kSimUser };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view s);

// Placeholders a template of the given stage may use.
const std::set<std::string>& allowed_placeholders(Stage stage);

struct PromptTemplate {
  std::string name;
  std::optional<ElementKind> kind;  // nullopt: shared by both kinds
  Stage stage = Stage::kDirect;
  int version = 1;
  std::set<std::string> placeholders;
  std::string body;
};

// Parses "---\nkey: value\n...\n---\nbody". Validates that the body uses
// exactly the declared placeholders and that those are allowed for the stage.
PromptTemplate parse_template(std::string_view source, std::string_view fallback_name = "");
std::set<std::string> placeholders_in(std::string_view body);

using Bindings = std::map<std::string, std::string>;

// Single pass over the body; bound values are never re-scanned.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

class TemplateLibrary {
 public:
  // The templates shipped in assets/templates, compiled in.
  static TemplateLibrary builtin();
  // Builtins overlaid with every *.tmpl in dir (matched by name).
  static TemplateLibrary with_overrides(const std::filesystem::path& dir);

  void put(PromptTemplate tmpl);
  const PromptTemplate& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

// Canonical asset names.
std::string direct_name(ElementKind kind);
std::string three_in_one_name(ElementKind kind, bool dialogue = false);
std::string p3_name(ElementKind kind);
std::string judge_name(ElementKind kind);

// ---------------------------------------------------------------------------

// Rule-based cleanup of model output: literal escape sequences (\n \t \r \"
// \' \\) are resolved, whitespace runs collapse to one space, ends trimmed.
// Applied to a fixed point, so postprocess(postprocess(x)) == postprocess(x).
std::string postprocess(std::string_view raw);

struct DemoScores {
  double semantic = 0.0;
  double user_sim = 0.0;
};

struct Demonstration {
  std::string query;
  ProactiveResponse response;
  std::optional<DemoScores> scores;
};

Demonstration make_demonstration(std::string query, ProactiveResponse response,
                                 std::optional<DemoScores> scores = std::nullopt);

inline constexpr std::string_view kDemoBlockHeader = "### Example";

enum class DemoStyle { kDirect, kThreeInOne, kP3 };

std::string demonstration_block(const Demonstration& demo, DemoStyle style, ElementKind kind);
std::string demonstration_blocks(std::span<const Demonstration> demos, DemoStyle style, ElementKind kind);

enum class Pipeline { kDirect, kThreeStep, kThreeInOne };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view s);

struct GenerationSettings {
  double temperature = 0.2;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
  std::optional<std::string> backend_id;
};

struct GenerationRun {
  Pipeline pipeline = Pipeline::kDirect;
  int shots = 0;
  ElementKind kind = ElementKind::kFollowUpQuestion;
  std::string query;
  std::optional<std::string> sample_id;
  std::vector<std::pair<Stage, std::string>> intermediate;  // stage order
  ProactiveResponse final = ProactiveResponse::answer_only("-");

  const std::string* stage_output(Stage s) const;
};

nlohmann::json run_to_json(const GenerationRun& run);
GenerationRun run_from_json(const nlohmann::json& j);

bool valid_shot_count(int shots);

GenerationRun run_direct(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query, ElementKind kind,
                         std::span<const Demonstration> demos, int shots, const GenerationSettings& settings = {});

GenerationRun run_three_step(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                             ElementKind kind, std::span<const Demonstration> demos_p3, int shots,
                             const GenerationSettings& settings = {});

// Text after the last "Final response:" (or "Final:") marker, trimmed.
std::optional<std::string> extract_final_response(std::string_view output);

GenerationRun run_three_in_one(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                               ElementKind kind, std::span<const Demonstration> demos, int shots,
                               const GenerationSettings& settings = {});

GenerationRun run_pipeline(Pipeline p, gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                           ElementKind kind, std::span<const Demonstration> demos, int shots,
                           const GenerationSettings& settings = {});

// ---------------------------------------------------------------------------

enum class Criterion { kSemantic, kSentiment, kSum };
enum class Direction { kTop, kBottom };

Criterion parse_criterion(std::string_view s);
Direction parse_direction(std::string_view s);

double criterion_value(const DemoScores& s, Criterion c);

// Sorted by criterion (descending for TOP, ascending for BOTTOM), ties by
// pool position; the first k are returned in that order.
std::vector<Demonstration> select_demonstrations(std::span<const Demonstration> pool, std::size_t k,
                                                 Criterion criterion, Direction direction);

}  // namespace proactive::promptcraft
