#include <algorithm>
#include <regex>

#include <nlohmann/json.hpp>

#include "proactive/error.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/text.hpp"

namespace proactive::promptcraft {

using nlohmann::json;

Demonstration make_demonstration(std::string query, ProactiveResponse response, std::optional<DemoScores> scores) {
  if (text::is_blank(query)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: demonstration query is empty");
  if (!response.element())
    throw Error(ErrorCode::kInvalidArgument, "demonstration response for '" + query + "' has no proactive element");
  return Demonstration{std::move(query), std::move(response), scores};
}

std::string demonstration_block(const Demonstration& demo, DemoStyle style, ElementKind kind) {
  std::string out(kDemoBlockHeader);
  out += "\nQuery: " + demo.query + "\n";
  switch (style) {
    case DemoStyle::kDirect:
      out += "Response: " + demo.response.full_text();
      break;
    case DemoStyle::kThreeInOne:
      out += "Final response: " + demo.response.full_text();
      break;
    case DemoStyle::kP3:
      out += kind == ElementKind::kFollowUpQuestion ? "Follow-up question: " : "Additional information: ";
      out += demo.response.element().value_or("");
      break;
  }
  return out;
}

std::string demonstration_blocks(std::span<const Demonstration> demos, DemoStyle style, ElementKind kind) {
  std::string out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i) out += "\n\n";
    out += demonstration_block(demos[i], style, kind);
  }
  return out;
}

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::kDirect:
      return "direct";
    case Pipeline::kThreeStep:
      return "3step";
    case Pipeline::kThreeInOne:
      return "3in1";
  }
  return "?";
}

Pipeline parse_pipeline(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  v.erase(std::remove_if(v.begin(), v.end(), [](char c) { return c == '-' || c == '_' || c == ' '; }), v.end());
  if (v == "direct") return Pipeline::kDirect;
  if (v == "3step" || v == "threestep" || v == "3stepcot") return Pipeline::kThreeStep;
  if (v == "3in1" || v == "threeinone" || v == "3in1cot") return Pipeline::kThreeInOne;
  throw Error(ErrorCode::kInvalidArgument, "unknown pipeline '" + std::string(s) + "'");
}

const std::string* GenerationRun::stage_output(Stage s) const {
  for (const auto& [stage, out] : intermediate)
    if (stage == s) return &out;
  return nullptr;
}

json run_to_json(const GenerationRun& run) {
  json inter = json::object();
  for (const auto& [stage, out] : run.intermediate) inter[std::string(to_string(stage))] = out;
  const auto& f = run.final;
  return json{{"pipeline", std::string(to_string(run.pipeline))},
              {"shots", run.shots},
              {"kind", std::string(core::to_string(run.kind))},
              {"sample_id", run.sample_id ? json(*run.sample_id) : json(nullptr)},
              {"query", run.query},
              {"intermediate", inter},
              {"final",
               {{"answer", f.answer()},
                {"element", f.element() ? json(*f.element()) : json(nullptr)},
                {"full_text", f.full_text()}}}};
}

GenerationRun run_from_json(const json& j) {
  try {
    GenerationRun run;
    run.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
    run.shots = j.at("shots").get<int>();
    run.kind = core::parse_element_kind(j.at("kind").get<std::string>());
    if (auto it = j.find("sample_id"); it != j.end() && !it->is_null()) run.sample_id = it->get<std::string>();
    run.query = j.at("query").get<std::string>();
    for (const auto& [k, v] : j.at("intermediate").items()) run.intermediate.emplace_back(parse_stage(k), v.get<std::string>());
    std::sort(run.intermediate.begin(), run.intermediate.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& f = j.at("final");
    auto answer = f.at("answer").get<std::string>();
    if (auto it = f.find("element"); it != f.end() && !it->is_null())
      run.final = ProactiveResponse::with_element(std::move(answer), it->get<std::string>(), run.kind);
    else
      run.final = ProactiveResponse::answer_only(std::move(answer));
    return run;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("MALFORMED_RECORD: generation run: ") + e.what());
  }
}

bool valid_shot_count(int shots) { return shots == 0 || shots == 1 || shots == 3 || shots == 5; }

namespace {

void check_shots(std::span<const Demonstration> demos, int shots) {
  if (!valid_shot_count(shots))
    throw Error(ErrorCode::kInvalidArgument, "shots must be one of 0, 1, 3, 5 (got " + std::to_string(shots) + ")");
  if (demos.size() < static_cast<std::size_t>(shots))
    throw Error(ErrorCode::kInsufficientDemonstrations, "INSUFFICIENT_DEMONSTRATIONS: " + std::to_string(shots) +
                                                            "-shot prompt needs " + std::to_string(shots) +
                                                            " demonstrations, got " + std::to_string(demos.size()));
}

std::string call(gateway::Gateway& gw, const std::string& prompt, const GenerationSettings& s) {
  gateway::GenerationRequest req{prompt, s.temperature, s.max_tokens, s.seed};
  std::optional<std::string_view> backend;
  if (s.backend_id) backend = *s.backend_id;
  return postprocess(gw.generate(req, backend));
}

GenerationRun start(Pipeline p, std::string_view query, ElementKind kind, int shots) {
  if (text::is_blank(query)) throw Error(ErrorCode::kEmptyText, "EMPTY_TEXT: query is empty");
  GenerationRun run;
  run.pipeline = p;
  run.shots = shots;
  run.kind = kind;
  run.query = std::string(query);
  return run;
}

// Runs one stage of the 3-step chain; any failure becomes STAGE_FAILED with
// the underlying code kept as the cause.
std::string stage(Stage st, gateway::Gateway& gw, const std::string& prompt, const GenerationSettings& s) {
  const std::string tag = "STAGE_FAILED(" + std::string(to_string(st)) + "): ";
  std::string out;
  try {
    out = call(gw, prompt, s);
  } catch (const Error& e) {
    throw Error(ErrorCode::kStageFailed, tag + e.what(), e.code());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kStageFailed, tag + e.what(), ErrorCode::kBackendError);
  }
  if (out.empty()) throw Error(ErrorCode::kStageFailed, tag + "empty output", ErrorCode::kEmptyText);
  return out;
}

}  // namespace

GenerationRun run_direct(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query, ElementKind kind,
                         std::span<const Demonstration> demos, int shots, const GenerationSettings& settings) {
  check_shots(demos, shots);
  auto run = start(Pipeline::kDirect, query, kind, shots);
  auto prompt = render(lib.get(direct_name(kind)),
                       {{"query", run.query},
                        {"demonstrations", demonstration_blocks(demos.first(shots), DemoStyle::kDirect, kind)}});
  auto out = call(gw, prompt, settings);
  run.intermediate.emplace_back(Stage::kDirect, out);
  run.final = ProactiveResponse::answer_only(out);
  return run;
}

GenerationRun run_three_step(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                             ElementKind kind, std::span<const Demonstration> demos_p3, int shots,
                             const GenerationSettings& settings) {
  check_shots(demos_p3, shots);
  auto run = start(Pipeline::kThreeStep, query, kind, shots);

  auto p1 = stage(Stage::kP1, gw, render(lib.get("p1"), {{"query", run.query}}), settings);
  auto p2 = stage(Stage::kP2, gw, render(lib.get("p2"), {{"query", run.query}, {"answer", p1}}), settings);
  auto p3 = stage(Stage::kP3, gw,
                  render(lib.get(p3_name(kind)),
                         {{"query", run.query},
                          {"info", p2},
                          {"demonstrations", demonstration_blocks(demos_p3.first(shots), DemoStyle::kP3, kind)}}),
                  settings);

  run.intermediate = {{Stage::kP1, p1}, {Stage::kP2, p2}, {Stage::kP3, p3}};
  run.final = ProactiveResponse::with_element(std::move(p1), std::move(p3), kind);
  return run;
}

std::optional<std::string> extract_final_response(std::string_view output) {
  static const std::regex marker(R"(final(?:\s+response)?\s*:)", std::regex::icase);
  std::string s(output);
  std::optional<std::size_t> after;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator(); ++it)
    after = static_cast<std::size_t>(it->position() + it->length());
  if (!after) return std::nullopt;
  auto rest = text::trim(std::string_view(s).substr(*after));
  if (rest.empty()) return std::nullopt;
  return std::string(rest);
}

GenerationRun run_three_in_one(gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                               ElementKind kind, std::span<const Demonstration> demos, int shots,
                               const GenerationSettings& settings) {
  check_shots(demos, shots);
  auto run = start(Pipeline::kThreeInOne, query, kind, shots);
  auto prompt = render(lib.get(three_in_one_name(kind)),
                       {{"query", run.query},
                        {"demonstrations", demonstration_blocks(demos.first(shots), DemoStyle::kThreeInOne, kind)}});
  auto out = call(gw, prompt, settings);
  run.intermediate.emplace_back(Stage::kThreeInOne, out);
  auto final_text = extract_final_response(out);
  if (!final_text)
    throw Error(ErrorCode::kParseFailed, "PARSE_FAILED: no 'Final response:' marker in 3-in-1 output");
  run.final = ProactiveResponse::answer_only(std::move(*final_text));
  return run;
}

GenerationRun run_pipeline(Pipeline p, gateway::Gateway& gw, const TemplateLibrary& lib, std::string_view query,
                           ElementKind kind, std::span<const Demonstration> demos, int shots,
                           const GenerationSettings& settings) {
  switch (p) {
    case Pipeline::kDirect:
      return run_direct(gw, lib, query, kind, demos, shots, settings);
    case Pipeline::kThreeStep:
      return run_three_step(gw, lib, query, kind, demos, shots, settings);
    case Pipeline::kThreeInOne:
      return run_three_in_one(gw, lib, query, kind, demos, shots, settings);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown pipeline");
}

}  // namespace proactive::promptcraft
