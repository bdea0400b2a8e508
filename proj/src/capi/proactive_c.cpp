#include "proactive/proactive.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>

#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "proactive/backends.hpp"
#include "proactive/conversation.hpp"
#include "proactive/core.hpp"
#include "proactive/error.hpp"
#include "proactive/gateway.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/scoring.hpp"
#include "proactive/simulation.hpp"

using nlohmann::json;
using namespace proactive;

struct pro_context {
  std::unique_ptr<gateway::Gateway> gw;
  promptcraft::TemplateLibrary lib;
  json config;
};

struct pro_corpus {
  std::vector<core::CorpusSample> samples;
};

namespace {

thread_local std::string g_last_error;
thread_local pro_status g_last_cause = PRO_OK;

pro_status to_status(ErrorCode c) { return static_cast<pro_status>(static_cast<int>(c)); }

pro_status fail(pro_status s, const std::string& msg, pro_status cause = PRO_OK) {
  g_last_error = msg;
  g_last_cause = cause;
  return s;
}

void ensure_logging();

// Runs fn, translating every exception into a status plus thread-local message.
template <typename Fn>
pro_status guarded(Fn&& fn) noexcept {
  try {
    ensure_logging();
    fn();
    return PRO_OK;
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what(), e.cause() ? to_status(*e.cause()) : PRO_OK);
  } catch (const json::exception& e) {
    return fail(PRO_INVALID_ARGUMENT, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(PRO_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PRO_INTERNAL, e.what());
  } catch (...) {
    return fail(PRO_INTERNAL, "unknown error");
  }
}

void ensure_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_color_mt("proactive");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("PROACTIVE_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(env));
  });
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

json parse_json(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is not valid JSON");
  return j;
}

core::ProactiveResponse make_response(const char* answer, const char* element, core::ElementKind kind) {
  require(answer, "answer");
  if (element && *element) return core::ProactiveResponse::with_element(answer, element, kind);
  return core::ProactiveResponse::answer_only(answer);
}

core::ElementKind kind_of(const char* kind) {
  require(kind, "kind");
  return core::parse_element_kind(kind);
}

promptcraft::Demonstration demo_from_json(const json& j) {
  auto kind = core::parse_element_kind(j.value("kind", std::string("FQ")));
  auto response = core::ProactiveResponse::with_element(j.at("answer").get<std::string>(),
                                                        j.at("element").get<std::string>(), kind);
  std::optional<promptcraft::DemoScores> scores;
  if (auto it = j.find("scores"); it != j.end() && it->is_object())
    scores = promptcraft::DemoScores{it->value("semantic", 0.0), it->value("user_sim", 0.0)};
  return promptcraft::make_demonstration(j.at("query").get<std::string>(), std::move(response), scores);
}

json demo_to_json(const promptcraft::Demonstration& d) {
  json j{{"query", d.query},
         {"answer", d.response.answer()},
         {"element", d.response.element().value_or("")},
         {"kind", std::string(core::to_string(d.response.element_kind().value_or(core::ElementKind::kFollowUpQuestion)))}};
  if (d.scores) j["scores"] = {{"semantic", d.scores->semantic}, {"user_sim", d.scores->user_sim}};
  return j;
}

std::vector<promptcraft::Demonstration> demos_from(const json& arr) {
  std::vector<promptcraft::Demonstration> out;
  if (arr.is_null()) return out;
  for (const auto& d : arr) out.push_back(demo_from_json(d));
  return out;
}

std::vector<scoring::ScoreReport> reports_from(const char* reports_json) {
  auto j = parse_json(reports_json, "reports_json");
  if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "reports_json must be an array");
  std::vector<scoring::ScoreReport> out;
  for (const auto& r : j) out.push_back(scoring::report_from_json(r));
  return out;
}

simulation::EpisodeConfig episode_from(const json& j) {
  simulation::EpisodeConfig cfg;
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "episode config must be an object");
  if (auto it = j.find("mode"); it != j.end()) cfg.mode = simulation::parse_agent_mode(it->get<std::string>());
  cfg.max_turns = j.value("max_turns", cfg.max_turns);
  cfg.user_backend_id = j.value("user_backend", cfg.user_backend_id);
  cfg.agent_backend_id = j.value("agent_backend", cfg.agent_backend_id);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) cfg.seed = it->get<std::int64_t>();
  if (auto it = j.find("cues"); it != j.end() && !it->is_null()) cfg.cues = it->get<std::vector<std::string>>();
  cfg.repeat_threshold = j.value("repeat_threshold", cfg.repeat_threshold);
  return cfg;
}

}  // namespace

extern "C" {

const char* pro_version(void) { return PROACTIVE_VERSION; }

const char* pro_status_name(pro_status status) {
  if (status == PRO_OK) return "OK";
  if (status == PRO_INTERNAL) return "INTERNAL";
  static thread_local std::string name;
  name = std::string(error_code_name(static_cast<ErrorCode>(static_cast<int>(status))));
  return name.c_str();
}

const char* pro_last_error(void) { return g_last_error.c_str(); }
pro_status pro_last_error_cause(void) { return g_last_cause; }
void pro_free_string(char* s) { std::free(s); }

pro_status pro_set_log_level(const char* level) {
  return guarded([&] {
    require(level, "level");
    auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && std::string_view(level) != "off")
      throw Error(ErrorCode::kInvalidArgument, std::string("unknown log level '") + level + "'");
    spdlog::set_level(lvl);
  });
}

// ---- context ---------------------------------------------------------------

pro_status pro_context_create(const char* config_json, pro_context** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto cfg = parse_json(config_json, "config_json");
    if (!cfg.is_object()) throw Error(ErrorCode::kConfigError, "config must be a JSON object");
    if (cfg.value("backends", json::object()).empty()) cfg["backends"] = gateway::offline_backends_config();
    auto ctx = std::make_unique<pro_context>(pro_context{gateway::build_gateway(cfg), {}, cfg});
    if (auto dir = cfg.value("templates_dir", std::string()); !dir.empty())
      ctx->lib = promptcraft::TemplateLibrary::with_overrides(dir);
    else
      ctx->lib = promptcraft::TemplateLibrary::builtin();
    *out = ctx.release();
  });
}

void pro_context_destroy(pro_context* ctx) { delete ctx; }

pro_status pro_context_profile_hash(pro_context* ctx, char** out) {
  return guarded([&] {
    require(ctx, "ctx");
    require(out, "out");
    *out = dup(ctx->gw->profile_hash());
  });
}

pro_status pro_context_describe(pro_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(out_json, "out_json");
    auto names = ctx->lib.names();
    json templates = json::array();
    for (const auto& n : names) templates.push_back({{"name", n}, {"version", ctx->lib.get(n).version}});
    json j{{"profile", json::parse(gateway::profile_to_json(ctx->gw->profile()))},
           {"profile_hash", ctx->gw->profile_hash()},
           {"templates", templates},
           {"cache", {{"hits", ctx->gw->cache().hits()}, {"misses", ctx->gw->cache().misses()}}}};
    *out_json = dup(j.dump());
  });
}

// ---- corpus ----------------------------------------------------------------

pro_status pro_corpus_load(const char* path, pro_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new pro_corpus{core::load_corpus(path)};
  });
}

pro_status pro_corpus_parse(const char* jsonl, pro_corpus** out) {
  return guarded([&] {
    require(jsonl, "jsonl");
    require(out, "out");
    *out = new pro_corpus{core::parse_corpus(jsonl)};
  });
}

void pro_corpus_destroy(pro_corpus* corpus) { delete corpus; }

size_t pro_corpus_size(const pro_corpus* corpus) { return corpus ? corpus->samples.size() : 0; }

pro_status pro_corpus_save(const pro_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    core::save_corpus(corpus->samples, path);
  });
}

pro_status pro_corpus_to_jsonl(const pro_corpus* corpus, char** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = dup(core::corpus_to_jsonl(corpus->samples));
  });
}

pro_status pro_corpus_filter(const pro_corpus* corpus, size_t min_query_tokens, size_t max_query_tokens,
                             size_t min_long_answer_tokens, pro_corpus** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = new pro_corpus{
        core::filter_corpus(corpus->samples, min_query_tokens, max_query_tokens, min_long_answer_tokens)};
  });
}

pro_status pro_corpus_split(const pro_corpus* corpus, size_t train_per_kind, int64_t seed, pro_corpus** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = new pro_corpus{core::split_corpus(corpus->samples, train_per_kind, seed)};
  });
}

pro_status pro_corpus_subset(const pro_corpus* corpus, const char* split, const char* kind, size_t limit,
                             pro_corpus** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    std::optional<core::Split> want_split;
    std::optional<core::ElementKind> want_kind;
    if (split && *split) want_split = core::parse_split(split);
    if (kind && *kind) want_kind = core::parse_element_kind(kind);
    auto sub = std::make_unique<pro_corpus>();
    for (const auto& s : corpus->samples) {
      if (want_split && s.split != *want_split) continue;
      if (want_kind && s.kind != *want_kind) continue;
      sub->samples.push_back(s);
      if (limit && sub->samples.size() == limit) break;
    }
    *out = sub.release();
  });
}

pro_status pro_corpus_stats(const pro_corpus* corpus, char** out_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_json, "out_json");
    *out_json = dup(core::stats_to_json(core::corpus_stats(corpus->samples)).dump());
  });
}

pro_status pro_corpus_export_sft(const pro_corpus* corpus, const char* instruction_template, const char* path,
                                 size_t* out_count) {
  return guarded([&] {
    require(corpus, "corpus");
    require(instruction_template, "instruction_template");
    require(path, "path");
    auto n = core::export_sft(corpus->samples, std::string_view(instruction_template), path);
    if (out_count) *out_count = n;
  });
}

// ---- prompting -------------------------------------------------------------

pro_status pro_postprocess(const char* raw, char** out) {
  return guarded([&] {
    require(raw, "raw");
    require(out, "out");
    *out = dup(promptcraft::postprocess(raw));
  });
}

pro_status pro_select_demonstrations(const char* request_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    auto req = parse_json(request_json, "request_json");
    auto pool = demos_from(req.value("pool", json::array()));
    auto k = req.value("k", std::size_t{0});
    auto criterion = promptcraft::parse_criterion(req.value("criterion", std::string("sum")));
    auto direction = promptcraft::parse_direction(req.value("direction", std::string("top")));
    json arr = json::array();
    for (const auto& d : promptcraft::select_demonstrations(pool, k, criterion, direction))
      arr.push_back(demo_to_json(d));
    *out_json = dup(arr.dump());
  });
}

pro_status pro_generate(pro_context* ctx, const char* request_json, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(out_json, "out_json");
    auto req = parse_json(request_json, "request_json");
    auto pipeline = promptcraft::parse_pipeline(req.value("pipeline", std::string("direct")));
    auto kind = core::parse_element_kind(req.value("kind", std::string("FQ")));
    auto query = req.at("query").get<std::string>();
    auto shots = req.value("shots", 0);
    auto demos = demos_from(req.value("demonstrations", json::array()));
    promptcraft::GenerationSettings settings;
    settings.temperature = req.value("temperature", settings.temperature);
    settings.max_tokens = req.value("max_tokens", settings.max_tokens);
    if (auto it = req.find("seed"); it != req.end() && !it->is_null()) settings.seed = it->get<std::int64_t>();
    if (auto b = req.value("backend", std::string()); !b.empty()) settings.backend_id = b;
    auto run = promptcraft::run_pipeline(pipeline, *ctx->gw, ctx->lib, query, kind, demos, shots, settings);
    if (auto it = req.find("sample_id"); it != req.end() && it->is_string()) run.sample_id = it->get<std::string>();
    *out_json = dup(promptcraft::run_to_json(run).dump());
  });
}

// ---- scoring ---------------------------------------------------------------

pro_status pro_bertscore(pro_context* ctx, const char* candidate, const char* reference, double* precision,
                         double* recall, double* f1) {
  return guarded([&] {
    require(ctx, "ctx");
    require(candidate, "candidate");
    require(reference, "reference");
    auto s = scoring::bertscore_full(*ctx->gw, candidate, reference);
    if (precision) *precision = s.precision;
    if (recall) *recall = s.recall;
    if (f1) *f1 = s.f1;
  });
}

pro_status pro_semantic_score(pro_context* ctx, const char* query, const char* answer, const char* element,
                              const char* kind, double alpha, const char* segmenter, double* out) {
  return guarded([&] {
    require(ctx, "ctx");
    require(query, "query");
    require(out, "out");
    auto k = kind_of(kind);
    scoring::SemanticConfig cfg;
    cfg.alpha = alpha;
    if (segmenter && *segmenter && std::string_view(segmenter) != "auto")
      cfg.segmenter = scoring::parse_segmenter(segmenter);
    *out = scoring::semantic_score(*ctx->gw, query, make_response(answer, element, k), k, cfg);
  });
}

pro_status pro_user_sim_score(pro_context* ctx, const char* query, const char* answer, const char* element, int n,
                              double temperature, double* out) {
  return guarded([&] {
    require(ctx, "ctx");
    require(query, "query");
    require(out, "out");
    scoring::UserSimConfig cfg;
    cfg.n = n;
    cfg.temperature = temperature;
    auto response = make_response(answer, element, core::ElementKind::kFollowUpQuestion);
    *out = scoring::user_sim_score(*ctx->gw, ctx->lib, response, core::Conversation(query), cfg);
  });
}

pro_status pro_prompt_based_score(pro_context* ctx, const char* query, const char* answer, const char* element,
                                  const char* kind, double* out) {
  return guarded([&] {
    require(ctx, "ctx");
    require(query, "query");
    require(out, "out");
    auto k = kind_of(kind);
    *out = scoring::prompt_based_score(*ctx->gw, ctx->lib, query, make_response(answer, element, k), k);
  });
}

pro_status pro_classifier_score(pro_context* ctx, const char* answer, const char* element, const char* kind,
                                double* logit, double* probability) {
  return guarded([&] {
    require(ctx, "ctx");
    auto k = kind_of(kind);
    auto v = scoring::classifier_score(*ctx->gw, make_response(answer, element, k), k);
    if (logit) *logit = v.positive_logit;
    if (probability) *probability = v.probability;
  });
}

pro_status pro_point_biserial(const int* labels, const double* scores, size_t n, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) {
      require(labels, "labels");
      require(scores, "scores");
    }
    *out = scoring::point_biserial(std::span<const int>(labels, n), std::span<const double>(scores, n));
  });
}

pro_status pro_score_batch(pro_context* ctx, const pro_corpus* corpus, const char* options_json, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(corpus, "corpus");
    require(out_json, "out_json");
    auto opt = parse_json(options_json, "options_json");
    auto metrics = scoring::parse_metrics(opt.value("metrics", std::string("semantic")));
    scoring::BatchConfig cfg;
    cfg.semantic.alpha = opt.value("alpha", cfg.semantic.alpha);
    if (auto seg = opt.value("segmenter", std::string("auto")); seg != "auto")
      cfg.semantic.segmenter = scoring::parse_segmenter(seg);
    cfg.user_sim.n = opt.value("user_sim_n", cfg.user_sim.n);
    cfg.user_sim.temperature = opt.value("user_sim_temperature", cfg.user_sim.temperature);
    cfg.user_sim.max_tokens = opt.value("user_sim_max_tokens", cfg.user_sim.max_tokens);
    cfg.user_sim.user_prompt_template = opt.value("user_sim_template", std::string());
    cfg.judge_max_tokens = opt.value("judge_max_tokens", cfg.judge_max_tokens);
    json arr = json::array();
    for (const auto& r : scoring::score_batch(*ctx->gw, ctx->lib, corpus->samples, metrics, cfg))
      arr.push_back(scoring::report_to_json(r));
    *out_json = dup(arr.dump());
  });
}

pro_status pro_summarize_reports(const char* reports_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    auto summary = scoring::summarize(reports_from(reports_json));
    json per_kind = json::object();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& [kind, s] : summary)
      per_kind[std::string(core::to_string(kind))] = {{"n", s.n},
                                                      {"classification", opt(s.classification)},
                                                      {"user_simulation", opt(s.user_sim)},
                                                      {"semantic_similarity", opt(s.semantic)},
                                                      {"prompt_based", opt(s.prompt_based)},
                                                      {"num_token", s.num_tokens},
                                                      {"n_errors", s.n_errors}};
    json j{{"summary", per_kind},
           {"table", scoring::summary_table(summary)},
           {"csv", scoring::summary_csv(summary)}};
    *out_json = dup(j.dump());
  });
}

pro_status pro_correlate(const char* reports_json, const char* labels_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    auto reports = reports_from(reports_json);
    auto lj = parse_json(labels_json, "labels_json");
    if (!lj.is_object()) throw Error(ErrorCode::kInvalidArgument, "labels_json must be an object of id -> label");
    std::map<std::string, core::Label> labels;
    for (const auto& [id, v] : lj.items()) labels.emplace(id, core::parse_label(v.get<std::string>()));
    for (const auto& r : reports)
      if (!labels.count(r.sample_id))
        throw Error(ErrorCode::kInvalidArgument, "no label for sample '" + r.sample_id + "'");
    auto rows = scoring::correlate(reports, labels);
    json jr = json::array();
    for (const auto& row : rows) {
      json r{{"metric", row.metric}};
      for (const auto& [kind, v] : row.r) r[std::string(core::to_string(kind))] = v ? json(*v) : json(nullptr);
      jr.push_back(std::move(r));
    }
    json j{{"rows", jr}, {"table", scoring::correlation_table(rows)}, {"csv", scoring::correlation_csv(rows)}};
    *out_json = dup(j.dump());
  });
}

// ---- simulation ------------------------------------------------------------

int pro_is_terminal(const char* user_turn, const char* cues_json) {
  int result = -1;
  auto st = guarded([&] {
    require(user_turn, "user_turn");
    if (cues_json && *cues_json) {
      auto cues = parse_json(cues_json, "cues_json").get<std::vector<std::string>>();
      result = simulation::is_terminal(user_turn, cues) ? 1 : 0;
    } else {
      result = simulation::is_terminal(user_turn) ? 1 : 0;
    }
  });
  return st == PRO_OK ? result : -1;
}

pro_status pro_simulate_episode(pro_context* ctx, const char* seed_query, const char* episode_json, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(seed_query, "seed_query");
    require(out_json, "out_json");
    auto cfg = episode_from(parse_json(episode_json, "episode_json"));
    auto ep = simulation::run_episode(*ctx->gw, ctx->lib, seed_query, cfg);
    *out_json = dup(simulation::episode_to_json(ep).dump());
  });
}

pro_status pro_simulate_batch(pro_context* ctx, const char* queries_json, const char* episode_json,
                              int64_t seed_or_negative, size_t parallel_episodes, const char* transcripts_path,
                              char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(out_json, "out_json");
    auto queries = parse_json(queries_json, "queries_json");
    if (!queries.is_array()) throw Error(ErrorCode::kInvalidArgument, "queries_json must be an array of strings");
    auto cfg = episode_from(parse_json(episode_json, "episode_json"));
    std::optional<std::int64_t> seed;
    if (seed_or_negative >= 0) seed = seed_or_negative;

    simulation::BatchOptions opts;
    opts.parallel_episodes = parallel_episodes ? parallel_episodes : 1;
    std::ofstream transcripts;
    if (transcripts_path && *transcripts_path) {
      transcripts.open(transcripts_path, std::ios::binary | std::ios::trunc);
      if (!transcripts)
        throw Error(ErrorCode::kIoError, std::string("cannot write transcripts to '") + transcripts_path + "'");
      opts.sink = [&](const simulation::EpisodeResult& ep) {
        transcripts << simulation::episode_to_json(ep).dump() << '\n';
      };
    }
    auto stats = simulation::run_batch(*ctx->gw, ctx->lib, queries.get<std::vector<std::string>>(), cfg, seed, opts);
    json j{{"stats", simulation::stats_to_json(stats)},
           {"table", simulation::stats_table(stats)},
           {"csv", simulation::stats_csv(stats)}};
    *out_json = dup(j.dump());
  });
}

}  // extern "C"
