// proactive: command-line front end over the C API in proactive.h.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "proactive/proactive.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure : std::runtime_error {
  Failure(pro_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  pro_status status;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string message_for(pro_status st) {
  std::string msg = pro_last_error();
  std::string name = pro_status_name(st);
  return msg.rfind(name, 0) == 0 ? msg : name + ": " + msg;
}

void check(pro_status st) {
  if (st != PRO_OK) throw Failure(st, message_for(st));
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pro_free_string(s);
  return out;
}

int exit_code_for(pro_status st) {
  switch (st) {
    case PRO_INVALID_ARGUMENT:
    case PRO_CONFIG_ERROR:
    case PRO_INVALID_BOUNDS:
    case PRO_TEMPLATE_INVALID:
    case PRO_MISSING_PLACEHOLDER:
    case PRO_INSUFFICIENT_DEMONSTRATIONS:
    case PRO_K_TOO_LARGE:
    case PRO_MISSING_SCORES:
    case PRO_CLASSIFIER_NOT_CONFIGURED:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

struct ContextDeleter {
  void operator()(pro_context* c) const { pro_context_destroy(c); }
};
struct CorpusDeleter {
  void operator()(pro_corpus* c) const { pro_corpus_destroy(c); }
};
using Context = std::unique_ptr<pro_context, ContextDeleter>;
using Corpus = std::unique_ptr<pro_corpus, CorpusDeleter>;

Corpus load_corpus(const std::string& path) {
  pro_corpus* c = nullptr;
  check(pro_corpus_load(path.c_str(), &c));
  return Corpus(c);
}

std::vector<json> corpus_records(const pro_corpus* c) {
  char* out = nullptr;
  check(pro_corpus_to_jsonl(c, &out));
  std::istringstream in(take(out));
  std::vector<json> records;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) records.push_back(json::parse(line));
  return records;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure(PRO_IO_ERROR, "IO_ERROR: cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure(PRO_IO_ERROR, "IO_ERROR: cannot write '" + p.string() + "'");
  out << body;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<json> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Failure(PRO_MALFORMED_RECORD, "MALFORMED_RECORD(" + std::to_string(line_no) + "): " + p.string());
    out.push_back(std::move(j));
  }
  return out;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------

json default_config() {
  return json{
      {"backends", json::object()},
      {"max_parallel", 4},
      {"cache_dir", ""},
      {"templates_dir", ""},
      {"seed", 0},
      {"generation", {{"temperature", 0.2}, {"max_tokens", 512}}},
      {"semantic", {{"alpha", 0.5}, {"segmenter", "auto"}}},
      {"user_sim", {{"n", 5}, {"temperature", 0.5}, {"max_tokens", 128}, {"template", ""}}},
      {"judge", {{"max_tokens", 32}}},
      {"simulation",
       {{"max_turns", 10},
        {"temperature", 0.2},
        {"max_tokens", 256},
        {"user_backend", ""},
        {"agent_backend", ""},
        {"repeat_threshold", 0.9}}},
  };
}

struct Globals {
  std::string config_path;
  std::string out_dir = "runs";
  std::string run_dir;
  std::optional<std::int64_t> seed;
  bool offline = false;
  std::optional<double> alpha;
  std::optional<int> user_sim_n;
  std::optional<double> temperature;
  std::string templates;
  std::string cache_dir;
  std::optional<int> max_parallel;
  std::string log_level;
};

// Defaults, then the config file, then command-line flags (merge patches).
json layered_config(const Globals& g) {
  json cfg = default_config();
  if (!g.config_path.empty()) {
    auto file = json::parse(read_file(g.config_path), nullptr, false, true);
    if (file.is_discarded() || !file.is_object())
      throw Failure(PRO_CONFIG_ERROR, "CONFIG_ERROR: '" + g.config_path + "' is not a JSON object");
    cfg.merge_patch(file);
  }
  json flags = json::object();
  if (g.seed) flags["seed"] = *g.seed;
  if (g.alpha) flags["semantic"]["alpha"] = *g.alpha;
  if (g.user_sim_n) flags["user_sim"]["n"] = *g.user_sim_n;
  if (g.temperature) flags["generation"]["temperature"] = *g.temperature;
  if (!g.templates.empty()) flags["templates_dir"] = g.templates;
  if (!g.cache_dir.empty()) flags["cache_dir"] = g.cache_dir;
  if (g.max_parallel) flags["max_parallel"] = *g.max_parallel;
  cfg.merge_patch(flags);
  if (g.offline) cfg["backends"] = json::object();
  return cfg;
}

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d%02d%02d-%02d%02d%02d-%03d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One run: its directory, config, backend context and manifest.
class Run {
 public:
  Run(const Globals& g, std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), config_(layered_config(g)) {
    std::string slug = command_;
    for (auto& c : slug)
      if (c == ' ') c = '-';
    dir_ = g.run_dir.empty() ? fs::path(g.out_dir) / (timestamp() + "-" + slug + "-" + std::to_string(getpid()))
                             : fs::path(g.run_dir);
    fs::create_directories(dir_);
    manifest_ = json{{"command", command_},
                     {"argv", argv},
                     {"started_at", iso_now()},
                     {"code_version", pro_version()},
                     {"seed", config_.value("seed", 0)},
                     {"config", config_},
                     {"outputs", json::array()},
                     {"status", "running"}};
    write_manifest();
  }

  pro_context* context() {
    if (!ctx_) {
      pro_context* c = nullptr;
      check(pro_context_create(config_.dump().c_str(), &c));
      ctx_.reset(c);
      char* hash = nullptr;
      check(pro_context_profile_hash(c, &hash));
      char* desc = nullptr;
      check(pro_context_describe(c, &desc));
      auto d = json::parse(take(desc));
      manifest_["backend_profile_hash"] = take(hash);
      manifest_["backend_profile"] = d["profile"];
      manifest_["templates"] = d["templates"];
      write_manifest();
    }
    return ctx_.get();
  }

  const json& config() const { return config_; }
  std::int64_t seed() const { return config_.value("seed", std::int64_t{0}); }
  const fs::path& dir() const { return dir_; }

  fs::path output(const std::string& name, const std::string& body) {
    auto p = dir_ / name;
    write_file(p, body);
    manifest_["outputs"].push_back(name);
    return p;
  }

  void note(const std::string& key, json value) { manifest_[key] = std::move(value); }

  void finish(int exit_code, const std::string& error = "") {
    manifest_["finished_at"] = iso_now();
    manifest_["exit_code"] = exit_code;
    manifest_["status"] = exit_code == 0 ? "ok" : "error";
    if (!error.empty()) {
      manifest_["error"] = error;
      write_file(dir_ / "error.json", json{{"error", error}, {"exit_code", exit_code}}.dump(2) + "\n");
    }
    write_manifest();
  }

 private:
  void write_manifest() { write_file(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  std::string command_;
  json config_;
  fs::path dir_;
  json manifest_;
  Context ctx_;
};

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

void cmd_corpus_stats(Run& run, const std::string& corpus_path) {
  auto corpus = load_corpus(corpus_path);
  char* out = nullptr;
  check(pro_corpus_stats(corpus.get(), &out));
  auto stats = json::parse(take(out));
  run.output("stats.json", stats.dump(2) + "\n");

  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %12s %15s %14s\n", "Kind", "Samples", "Query tok", "Response tok",
                "Element tok");
  std::string table = line;
  auto row = [&](const std::string& name, const json& a) {
    std::snprintf(line, sizeof line, "%-8s %8zu %12.3f %15.3f %14.3f\n", name.c_str(),
                  a.at("n_samples").get<std::size_t>(), a.at("avg_query_tokens").get<double>(),
                  a.at("avg_response_tokens").get<double>(), a.at("avg_element_tokens").get<double>());
    table += line;
  };
  for (const auto& [kind, a] : stats.at("per_kind").items()) row(kind, a);
  row("all", stats);
  run.output("stats.txt", table);
  std::cout << table;
}

void cmd_corpus_split(Run& run, const std::string& corpus_path, std::size_t train_per_kind, const std::string& out_path) {
  auto corpus = load_corpus(corpus_path);
  pro_corpus* split = nullptr;
  check(pro_corpus_split(corpus.get(), train_per_kind, run.seed(), &split));
  Corpus tagged(split);
  char* body = nullptr;
  check(pro_corpus_to_jsonl(tagged.get(), &body));
  auto text = take(body);
  run.output("split.jsonl", text);
  if (!out_path.empty()) write_file(out_path, text);

  json counts = json::object();
  for (const auto& r : corpus_records(tagged.get())) {
    auto& cell = counts[r.at("element_kind").get<std::string>()][r.at("split").get<std::string>()];
    cell = cell.is_null() ? 1 : cell.get<int>() + 1;
  }
  json report{{"train_per_kind", train_per_kind}, {"seed", run.seed()}, {"counts", counts}};
  run.output("split_report.json", report.dump(2) + "\n");
  std::cout << "split " << pro_corpus_size(tagged.get()) << " samples (seed " << run.seed() << "): " << counts.dump()
            << "\n";
}

void cmd_corpus_filter(Run& run, const std::string& corpus_path, std::size_t min_q, std::size_t max_q,
                       std::size_t min_long, const std::string& out_path) {
  auto corpus = load_corpus(corpus_path);
  pro_corpus* kept = nullptr;
  check(pro_corpus_filter(corpus.get(), min_q, max_q, min_long, &kept));
  Corpus filtered(kept);
  char* body = nullptr;
  check(pro_corpus_to_jsonl(filtered.get(), &body));
  auto text = take(body);
  run.output("filtered.jsonl", text);
  if (!out_path.empty()) write_file(out_path, text);
  json report{{"input", pro_corpus_size(corpus.get())},
              {"kept", pro_corpus_size(filtered.get())},
              {"min_query_tokens", min_q},
              {"max_query_tokens", max_q},
              {"min_long_answer_tokens", min_long}};
  run.output("filter_report.json", report.dump(2) + "\n");
  std::cout << "kept " << pro_corpus_size(filtered.get()) << " of " << pro_corpus_size(corpus.get()) << " samples\n";
}

void cmd_corpus_export_sft(Run& run, const std::string& corpus_path, const std::string& instruction,
                           const std::string& out_path) {
  auto corpus = load_corpus(corpus_path);
  pro_corpus* sub = nullptr;
  check(pro_corpus_subset(corpus.get(), "train", nullptr, 0, &sub));
  Corpus train(sub);
  if (pro_corpus_size(train.get()) == 0)
    throw Failure(PRO_EMPTY_CORPUS, "EMPTY_CORPUS: no TRAIN samples in '" + corpus_path + "'; run `corpus split` first");
  auto path = out_path.empty() ? (run.dir() / "sft.jsonl").string() : out_path;
  std::size_t n = 0;
  check(pro_corpus_export_sft(train.get(), instruction.c_str(), path.c_str(), &n));
  run.note("sft_path", path);
  run.output("export_report.json", json{{"records", n}, {"path", path}, {"instruction_template", instruction}}.dump(2) + "\n");
  std::cout << "wrote " << n << " SFT records to " << path << "\n";
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string corpus;
  std::string pipeline = "direct";
  std::string kind = "all";
  int shots = 0;
  std::string select;
  std::string demos;
  std::string demo_scores;
  std::string split = "any";
  std::size_t limit = 0;
};

json demo_json(const json& rec, const std::map<std::string, json>& scores, bool need_scores) {
  json d{{"query", rec.at("query")},
         {"answer", rec.at("answer")},
         {"element", rec.at("element")},
         {"kind", rec.at("element_kind")}};
  if (need_scores) {
    auto it = scores.find(rec.at("id").get<std::string>());
    if (it != scores.end()) {
      const auto& r = it->second;
      if (!r.value("semantic", json()).is_null() && !r.value("user_sim", json()).is_null())
        d["scores"] = {{"semantic", r["semantic"]}, {"user_sim", r["user_sim"]}};
    }
  }
  return d;
}

void cmd_generate(Run& run, const GenerateArgs& a) {
  std::optional<std::pair<std::string, std::string>> selection;
  if (!a.select.empty()) {
    auto dash = a.select.rfind('-');
    if (dash == std::string::npos) throw UsageError("--select must look like <criterion>-<top|bottom>, e.g. sum-top");
    selection = std::make_pair(a.select.substr(0, dash), a.select.substr(dash + 1));
  }
  auto corpus = load_corpus(a.corpus);
  const char* split = a.split == "any" ? nullptr : a.split.c_str();
  const char* kind = a.kind == "all" ? nullptr : a.kind.c_str();
  pro_corpus* sub = nullptr;
  check(pro_corpus_subset(corpus.get(), split, kind, a.limit, &sub));
  Corpus targets(sub);
  auto records = corpus_records(targets.get());
  if (records.empty()) throw Failure(PRO_EMPTY_CORPUS, "EMPTY_CORPUS: no samples match --split/--kind");

  // Demonstration pool per kind: --demos, else the corpus TRAIN split.
  std::map<std::string, json> scores;
  if (!a.demo_scores.empty())
    for (auto& r : read_jsonl(a.demo_scores)) scores[r.at("sample_id").get<std::string>()] = r;
  std::map<std::string, json> demos_by_kind;
  if (a.shots > 0) {
    Corpus pool_src;
    if (!a.demos.empty()) {
      pool_src = load_corpus(a.demos);
    } else {
      pro_corpus* train = nullptr;
      check(pro_corpus_subset(corpus.get(), "train", nullptr, 0, &train));
      pool_src.reset(train);
    }
    std::map<std::string, json> pools;
    for (const auto& r : corpus_records(pool_src.get())) {
      if (r.at("element").is_null()) continue;
      auto k = r.at("element_kind").get<std::string>();
      if (!pools.count(k)) pools[k] = json::array();
      pools[k].push_back(demo_json(r, scores, selection.has_value()));
    }
    for (auto& [k, pool] : pools) {
      if (selection) {
        json req{{"pool", pool}, {"k", std::min<std::size_t>(pool.size(), a.shots)}, {"criterion", selection->first},
                 {"direction", selection->second}};
        char* out = nullptr;
        check(pro_select_demonstrations(req.dump().c_str(), &out));
        demos_by_kind[k] = json::parse(take(out));
      } else {
        json first = json::array();
        for (std::size_t i = 0; i < pool.size() && i < static_cast<std::size_t>(a.shots); ++i) first.push_back(pool[i]);
        demos_by_kind[k] = first;
      }
    }
    run.note("demonstrations", demos_by_kind);
  }

  const auto& gen = run.config().at("generation");
  auto* ctx = run.context();
  std::vector<json> runs(records.size()), responses(records.size());
  std::vector<std::string> errors(records.size());
  std::vector<pro_status> statuses(records.size(), PRO_OK);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < records.size();) {
      const auto& rec = records[i];
      auto k = rec.at("element_kind").get<std::string>();
      json req{{"pipeline", a.pipeline},
               {"kind", k},
               {"query", rec.at("query")},
               {"sample_id", rec.at("id")},
               {"shots", a.shots},
               {"demonstrations", demos_by_kind.count(k) ? demos_by_kind[k] : json::array()},
               {"temperature", gen.value("temperature", 0.2)},
               {"max_tokens", gen.value("max_tokens", 512)}};
      if (gen.contains("seed")) req["seed"] = gen["seed"];
      if (gen.contains("backend")) req["backend"] = gen["backend"];
      char* out = nullptr;
      auto st = pro_generate(ctx, req.dump().c_str(), &out);
      if (st != PRO_OK) {
        statuses[i] = st;
        errors[i] = message_for(st);
        continue;
      }
      runs[i] = json::parse(take(out));
      const auto& fin = runs[i].at("final");
      responses[i] = json{{"id", rec.at("id")},
                          {"query", rec.at("query")},
                          {"answer", fin.at("answer")},
                          {"element", fin.at("element")},
                          {"element_kind", k},
                          {"split", rec.value("split", "unsplit")}};
    }
  };
  std::size_t n_workers = std::max(1, run.config().value("max_parallel", 4));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(n_workers, records.size()); ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<json> ok_runs, ok_responses, failures;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (statuses[i] != PRO_OK) {
      if (exit_code_for(statuses[i]) == kExitUsage) throw Failure(statuses[i], errors[i]);
      failures.push_back({{"sample_id", records[i].at("id")}, {"error", errors[i]}});
      continue;
    }
    ok_runs.push_back(runs[i]);
    ok_responses.push_back(responses[i]);
  }
  run.output("generations.jsonl", jsonl(ok_runs));
  run.output("responses.jsonl", jsonl(ok_responses));
  run.output("generate_report.json", json{{"pipeline", a.pipeline},
                                          {"shots", a.shots},
                                          {"select", a.select},
                                          {"requested", records.size()},
                                          {"generated", ok_runs.size()},
                                          {"failures", failures}}
                                         .dump(2) + "\n");
  std::cout << "generated " << ok_runs.size() << " of " << records.size() << " responses (" << a.pipeline << ", "
            << a.shots << "-shot) -> " << (run.dir() / "responses.jsonl").string() << "\n";
  if (ok_runs.empty()) throw Failure(PRO_BACKEND_ERROR, "every generation failed; first error: " + errors.front());
}

// ---------------------------------------------------------------------------
// evaluate / correlate
// ---------------------------------------------------------------------------

void cmd_evaluate(Run& run, const std::string& responses_path, const std::string& metrics,
                  const std::optional<std::string>& segmenter) {
  if (metrics.find_first_not_of(" ,") == std::string::npos) throw UsageError("--metrics selects no metric");
  auto corpus = load_corpus(responses_path);
  const auto& cfg = run.config();
  json opts{{"metrics", metrics},
            {"alpha", cfg["semantic"].value("alpha", 0.5)},
            {"segmenter", segmenter.value_or(cfg["semantic"].value("segmenter", "auto"))},
            {"user_sim_n", cfg["user_sim"].value("n", 5)},
            {"user_sim_temperature", cfg["user_sim"].value("temperature", 0.5)},
            {"user_sim_max_tokens", cfg["user_sim"].value("max_tokens", 128)},
            {"user_sim_template", cfg["user_sim"].value("template", "")},
            {"judge_max_tokens", cfg["judge"].value("max_tokens", 32)}};
  char* out = nullptr;
  check(pro_score_batch(run.context(), corpus.get(), opts.dump().c_str(), &out));
  auto reports_text = take(out);
  auto reports = json::parse(reports_text);
  std::vector<json> rows(reports.begin(), reports.end());
  run.output("reports.jsonl", jsonl(rows));

  char* sum = nullptr;
  check(pro_summarize_reports(reports_text.c_str(), &sum));
  auto summary = json::parse(take(sum));
  run.output("summary.json", summary["summary"].dump(2) + "\n");
  run.output("summary.csv", summary["csv"].get<std::string>());
  run.output("summary.txt", summary["table"].get<std::string>());
  std::cout << summary["table"].get<std::string>();

  std::size_t with_errors = 0;
  for (const auto& r : rows)
    if (!r["errors"].empty()) {
      if (with_errors++ < 3) std::cerr << "warning: " << r["sample_id"].get<std::string>() << ": " << r["errors"][0] << "\n";
    }
  if (with_errors) std::cerr << "warning: " << with_errors << " of " << rows.size() << " samples had metric errors\n";
  if (!rows.empty() && with_errors == rows.size())
    throw Failure(PRO_BACKEND_ERROR, "every sample failed to score");
}

json load_labels(const std::string& path) {
  auto text = read_file(path);
  auto whole = json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_object() && !whole.contains("id")) return whole;
  json labels = json::object();
  for (const auto& r : read_jsonl(path))
    if (r.contains("id") && r.contains("label") && r["label"].is_string()) labels[r["id"].get<std::string>()] = r["label"];
  if (labels.empty()) throw Failure(PRO_INVALID_ARGUMENT, "INVALID_ARGUMENT: no labels found in '" + path + "'");
  return labels;
}

void cmd_correlate(Run& run, const std::string& reports_path, const std::string& labels_path) {
  auto reports = read_jsonl(reports_path);
  auto labels = load_labels(labels_path);
  char* out = nullptr;
  check(pro_correlate(json(reports).dump().c_str(), labels.dump().c_str(), &out));
  auto res = json::parse(take(out));
  run.output("correlation.json", res["rows"].dump(2) + "\n");
  run.output("correlation.csv", res["csv"].get<std::string>());
  run.output("correlation.txt", res["table"].get<std::string>());
  std::cout << res["table"].get<std::string>();
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

std::vector<std::string> load_queries(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    if (line[start] == '{') {
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("query"))
        throw Failure(PRO_MALFORMED_RECORD, "MALFORMED_RECORD: query line without a \"query\" field in '" + path + "'");
      out.push_back(j["query"].get<std::string>());
    } else {
      auto end = line.find_last_not_of(" \t\r");
      out.push_back(line.substr(start, end - start + 1));
    }
  }
  return out;
}

void cmd_simulate(Run& run, const std::string& queries_path, const std::string& mode, std::size_t episodes,
                  std::optional<int> max_turns, bool offline, std::size_t parallel) {
  auto queries = load_queries(queries_path);
  if (queries.empty()) throw Failure(PRO_EMPTY_CORPUS, "EMPTY_CORPUS: no queries in '" + queries_path + "'");
  if (episodes && episodes < queries.size()) queries.resize(episodes);
  if (episodes > queries.size())
    std::cerr << "warning: only " << queries.size() << " queries available for " << episodes << " episodes\n";

  json sim = run.config().at("simulation");
  sim["mode"] = mode;
  if (max_turns) sim["max_turns"] = *max_turns;
  if (offline) {
    if (sim.value("user_backend", "").empty()) sim["user_backend"] = "stub:user";
    if (sim.value("agent_backend", "").empty()) sim["agent_backend"] = "stub:agent";
  }
  run.note("episode_config", sim);
  auto transcripts = (run.dir() / "transcripts.jsonl").string();
  char* out = nullptr;
  check(pro_simulate_batch(run.context(), json(queries).dump().c_str(), sim.dump().c_str(), run.seed(), parallel,
                           transcripts.c_str(), &out));
  auto res = json::parse(take(out));
  run.note("outputs_transcripts", "transcripts.jsonl");
  run.output("stats.json", res["stats"].dump(2) + "\n");
  run.output("stats.csv", res["csv"].get<std::string>());
  run.output("stats.txt", res["table"].get<std::string>());
  std::cout << res["table"].get<std::string>();
  if (res["stats"]["n_episodes"].get<std::size_t>() == 0)
    throw Failure(PRO_EPISODE_FAILED, "EPISODE_FAILED: every episode failed; see transcripts.jsonl");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate, score and simulate proactive responses in information-seeking dialogue."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(pro_version()));

  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "Parent directory for per-run output directories");
  app.add_option("--run-dir", g.run_dir, "Exact output directory for this run");
  app.add_option("--seed", g.seed, "Seed for splitting, simulation and seeded generation");
  app.add_flag("--offline", g.offline, "Use the built-in stub backends (no network)");
  app.add_option("--alpha", g.alpha, "Semantic-score weight alpha in [0, 1]");
  app.add_option("--user-sim-n", g.user_sim_n, "Simulated replies per user-sim score");
  app.add_option("--temperature", g.temperature, "Generation temperature");
  app.add_option("--templates", g.templates, "Directory of *.tmpl overrides")->check(CLI::ExistingDirectory);
  app.add_option("--cache-dir", g.cache_dir, "Persistent response cache directory");
  app.add_option("--max-parallel", g.max_parallel, "Concurrent requests per backend");
  app.add_option("--log-level", g.log_level, "trace | debug | info | warn | error | off");

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Corpus statistics, splitting, filtering and SFT export");
  corpus->require_subcommand(1);
  corpus->fallthrough();
  std::string corpus_path, out_path, instruction = "{query}";
  std::size_t train_per_kind = 500, min_q = 0, max_q = 1000000, min_long = 0;
  auto* c_stats = corpus->add_subcommand("stats", "Average token counts per element kind");
  c_stats->add_option("corpus", corpus_path, "Corpus JSONL")->required();
  auto* c_split = corpus->add_subcommand("split", "Deterministic train/test split per kind");
  c_split->add_option("corpus", corpus_path, "Corpus JSONL")->required();
  c_split->add_option("--train-per-kind", train_per_kind, "TRAIN samples per kind")->capture_default_str();
  c_split->add_option("--output", out_path, "Also write the tagged corpus here");
  auto* c_filter = corpus->add_subcommand("filter", "Keep samples within query-length bounds");
  c_filter->add_option("corpus", corpus_path, "Corpus JSONL")->required();
  c_filter->add_option("--min-query-tokens", min_q)->capture_default_str();
  c_filter->add_option("--max-query-tokens", max_q)->capture_default_str();
  c_filter->add_option("--min-long-answer-tokens", min_long)->capture_default_str();
  c_filter->add_option("--output", out_path, "Also write the filtered corpus here");
  auto* c_sft = corpus->add_subcommand("export-sft", "Export TRAIN samples as instruction/response pairs");
  c_sft->add_option("corpus", corpus_path, "Corpus JSONL")->required();
  c_sft->add_option("--instruction", instruction, "Instruction template with {query}")->capture_default_str();
  c_sft->add_option("--output", out_path, "SFT JSONL path (default: in the run directory)");

  // generate
  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate proactive responses with a prompting pipeline");
  gen->add_option("--corpus", ga.corpus, "Corpus JSONL with the queries")->required()->check(CLI::ExistingFile);
  gen->add_option("--pipeline", ga.pipeline, "direct | 3step | 3in1")->capture_default_str();
  gen->add_option("--kind", ga.kind, "fq | ai | all")->capture_default_str();
  gen->add_option("--shots", ga.shots, "0, 1, 3 or 5 demonstrations")->capture_default_str();
  gen->add_option("--select", ga.select, "Demonstration selection, e.g. sum-top, semantic-bottom");
  gen->add_option("--demos", ga.demos, "Demonstration pool (corpus JSONL; default: the corpus TRAIN split)");
  gen->add_option("--demo-scores", ga.demo_scores, "Score reports JSONL for the demonstration pool");
  gen->add_option("--split", ga.split, "train | test | unsplit | any")->capture_default_str();
  gen->add_option("--limit", ga.limit, "Generate for at most N samples (0: all)");

  // evaluate
  std::string responses, metrics = "semantic";
  std::optional<std::string> segmenter;
  auto* eval = app.add_subcommand("evaluate", "Score responses with the selected metrics");
  eval->add_option("--responses", responses, "Responses in corpus JSONL form")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metrics, "Comma list: semantic, user-sim, prompt, classifier, all")->capture_default_str();
  eval->add_option("--segmenter", segmenter, "auto | structured | sentence");

  // correlate
  std::string reports, labels;
  auto* corr = app.add_subcommand("correlate", "Point-biserial correlation of metrics with validity labels");
  corr->add_option("--reports", reports, "Score reports JSONL")->required()->check(CLI::ExistingFile);
  corr->add_option("--labels", labels, "JSONL of {id, label} (a labelled corpus works) or a JSON id->label map")
      ->required()
      ->check(CLI::ExistingFile);

  // simulate
  std::string queries, mode = "reactive";
  std::size_t episodes = 0, parallel = 1;
  std::optional<int> max_turns;
  auto* sim = app.add_subcommand("simulate", "Multi-turn episodes between a simulated user and an agent");
  sim->add_option("--queries", queries, "Seed queries: one per line, or JSONL with a query field")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--mode", mode, "reactive | proactive-fq | proactive-ai")->capture_default_str();
  sim->add_option("--episodes", episodes, "Number of episodes (0: one per query)");
  sim->add_option("--max-turns", max_turns, "User-turn cap per episode");
  sim->add_option("--parallel-episodes", parallel, "Episodes run concurrently")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::string command;
  for (const auto* sub : app.get_subcommands()) {
    command = sub->get_name();
    for (const auto* inner : sub->get_subcommands()) command += " " + inner->get_name();
  }
  std::vector<std::string> args(argv, argv + argc);

  std::unique_ptr<Run> run;
  try {
    if (!g.log_level.empty()) check(pro_set_log_level(g.log_level.c_str()));
    run = std::make_unique<Run>(g, command, args);
    if (c_stats->parsed()) cmd_corpus_stats(*run, corpus_path);
    else if (c_split->parsed()) cmd_corpus_split(*run, corpus_path, train_per_kind, out_path);
    else if (c_filter->parsed()) cmd_corpus_filter(*run, corpus_path, min_q, max_q, min_long, out_path);
    else if (c_sft->parsed()) cmd_corpus_export_sft(*run, corpus_path, instruction, out_path);
    else if (gen->parsed()) cmd_generate(*run, ga);
    else if (eval->parsed()) cmd_evaluate(*run, responses, metrics, segmenter);
    else if (corr->parsed()) cmd_correlate(*run, reports, labels);
    else if (sim->parsed()) cmd_simulate(*run, queries, mode, episodes, max_turns, g.offline, parallel);
    run->finish(kExitOk);
    std::cerr << "run directory: " << run->dir().string() << "\n";
    return kExitOk;
  } catch (const Failure& e) {
    int code = exit_code_for(e.status);
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->finish(code, e.what());
    return code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->finish(kExitUsage, e.what());
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    if (run) run->finish(kExitUsage, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->finish(kExitRuntime, e.what());
    return kExitRuntime;
  }
}
