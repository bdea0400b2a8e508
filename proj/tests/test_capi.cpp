// Exercises the shared library through its C header only.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "proactive/proactive.h"

using nlohmann::json;

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { pro_free_string(p); }
  json parse() const { return json::parse(p); }
  std::string str() const { return p ? p : ""; }
};

struct Context {
  pro_context* ctx = nullptr;
  explicit Context(const char* cfg = nullptr) { REQUIRE(pro_context_create(cfg, &ctx) == PRO_OK); }
  ~Context() { pro_context_destroy(ctx); }
};

struct Corpus {
  pro_corpus* c = nullptr;
  ~Corpus() { pro_corpus_destroy(c); }
};

const char* kTwoSamples =
    R"({"id":"a","query":"who built the tower","answer":"Eiffel's company.","element":"Want to know when?","element_kind":"FQ"})"
    "\n"
    R"({"id":"b","query":"how tall is it","answer":"About 330 metres.","element":"It grew with a new antenna.","element_kind":"AI"})"
    "\n";

}  // namespace

TEST_CASE("library metadata and status names") {
  CHECK(std::strlen(pro_version()) > 0);
  CHECK(std::string(pro_status_name(PRO_OK)) == "OK");
  CHECK(std::string(pro_status_name(PRO_INVALID_BOUNDS)) == "INVALID_BOUNDS");
  CHECK(std::string(pro_status_name(PRO_EPISODE_FAILED)) == "EPISODE_FAILED");
  CHECK(pro_set_log_level("error") == PRO_OK);
  CHECK(pro_set_log_level("loud") == PRO_INVALID_ARGUMENT);
}

TEST_CASE("null arguments are rejected with a message") {
  CHECK(pro_context_create(nullptr, nullptr) == PRO_INVALID_ARGUMENT);
  CHECK(std::strlen(pro_last_error()) > 0);
  double f1;
  CHECK(pro_bertscore(nullptr, "a", "b", nullptr, nullptr, &f1) == PRO_INVALID_ARGUMENT);
  CHECK(pro_corpus_size(nullptr) == 0);
  pro_context_destroy(nullptr);
  pro_corpus_destroy(nullptr);
  pro_free_string(nullptr);
}

TEST_CASE("context creation and description") {
  Context ctx;
  Owned hash, desc;
  REQUIRE(pro_context_profile_hash(ctx.ctx, &hash.p) == PRO_OK);
  CHECK(hash.str().size() == 16);
  REQUIRE(pro_context_describe(ctx.ctx, &desc.p) == PRO_OK);
  auto d = desc.parse();
  CHECK(d["profile"]["generation_id"] == "stub:echo");
  CHECK(d["profile_hash"] == hash.str());
  CHECK(d["templates"].size() == 16);

  pro_context* bad = nullptr;
  CHECK(pro_context_create("{not json", &bad) != PRO_OK);
  CHECK(bad == nullptr);
  CHECK(pro_context_create(R"({"templates_dir":"/nonexistent"})", &bad) == PRO_CONFIG_ERROR);
}

TEST_CASE("corpus round trip, filter, split and stats") {
  Corpus c;
  REQUIRE(pro_corpus_parse(kTwoSamples, &c.c) == PRO_OK);
  CHECK(pro_corpus_size(c.c) == 2);
  Owned jsonl;
  REQUIRE(pro_corpus_to_jsonl(c.c, &jsonl.p) == PRO_OK);
  Corpus again;
  REQUIRE(pro_corpus_parse(jsonl.p, &again.c) == PRO_OK);
  Owned jsonl2;
  REQUIRE(pro_corpus_to_jsonl(again.c, &jsonl2.p) == PRO_OK);
  CHECK(jsonl.str() == jsonl2.str());

  Corpus filtered;
  CHECK(pro_corpus_filter(c.c, 5, 2, 0, &filtered.c) == PRO_INVALID_BOUNDS);
  CHECK(std::string(pro_last_error()).find("INVALID_BOUNDS") != std::string::npos);
  REQUIRE(pro_corpus_filter(c.c, 4, 20, 0, &filtered.c) == PRO_OK);
  CHECK(pro_corpus_size(filtered.c) == 2);

  Corpus split, train;
  REQUIRE(pro_corpus_split(c.c, 1, 7, &split.c) == PRO_OK);
  REQUIRE(pro_corpus_subset(split.c, "train", "FQ", 0, &train.c) == PRO_OK);
  CHECK(pro_corpus_size(train.c) == 1);

  Owned stats;
  REQUIRE(pro_corpus_stats(c.c, &stats.p) == PRO_OK);
  auto s = stats.parse();
  CHECK(s["n_samples"] == 2);
  CHECK(s["avg_query_tokens"].get<double>() == doctest::Approx(4.0));

  Corpus bad;
  CHECK(pro_corpus_parse(R"({"id":"x"})", &bad.c) == PRO_MALFORMED_RECORD);
  CHECK(pro_corpus_load("/nonexistent.jsonl", &bad.c) == PRO_IO_ERROR);
}

TEST_CASE("scoring through the C API") {
  Context ctx;
  double p, r, f1;
  REQUIRE(pro_bertscore(ctx.ctx, "the same text", "the same text", &p, &r, &f1) == PRO_OK);
  CHECK(std::abs(f1 - 1.0) < 1e-6);
  CHECK(pro_bertscore(ctx.ctx, "", "x", &p, &r, &f1) == PRO_EMPTY_TEXT);

  double sem;
  REQUIRE(pro_semantic_score(ctx.ctx, "who built it", "A company did.", "Want the year?", "FQ", 0.5, nullptr, &sem) ==
          PRO_OK);
  CHECK(sem >= 0.0);
  CHECK(sem <= 1.0);
  CHECK(pro_semantic_score(ctx.ctx, "q", "a", nullptr, "ZZ", 0.5, nullptr, &sem) == PRO_INVALID_ARGUMENT);

  double logit, prob;
  REQUIRE(pro_classifier_score(ctx.ctx, "A.", "B?", "FQ", &logit, &prob) == PRO_OK);
  CHECK(prob == 0.5);

  const int labels[] = {1, 1, 0, 0};
  const double scores[] = {1.0, 0.9, 0.1, 0.0};
  double rpb;
  REQUIRE(pro_point_biserial(labels, scores, 4, &rpb) == PRO_OK);
  CHECK(rpb == doctest::Approx(0.9939).epsilon(1e-4));
  const double flat[] = {0.3, 0.3, 0.3, 0.3};
  CHECK(pro_point_biserial(labels, flat, 4, &rpb) == PRO_DEGENERATE_INPUT);

  Corpus c;
  REQUIRE(pro_corpus_parse(kTwoSamples, &c.c) == PRO_OK);
  Owned reports, summary, corr;
  REQUIRE(pro_score_batch(ctx.ctx, c.c, R"({"metrics":"semantic,classifier"})", &reports.p) == PRO_OK);
  auto reps = reports.parse();
  REQUIRE(reps.size() == 2);
  CHECK(reps[0]["sample_id"] == "a");
  REQUIRE(pro_summarize_reports(reports.p, &summary.p) == PRO_OK);
  CHECK(summary.parse()["table"].get<std::string>().find("Semantic Similarity") != std::string::npos);
  CHECK(pro_score_batch(ctx.ctx, c.c, R"({"metrics":""})", &reports.p) == PRO_INVALID_ARGUMENT);
  REQUIRE(pro_correlate(reports.p, R"({"a":"valid","b":"invalid"})", &corr.p) == PRO_OK);
  CHECK(corr.parse()["rows"].size() == 4);
  Owned missing;
  CHECK(pro_correlate(reports.p, R"({"a":"valid"})", &missing.p) == PRO_INVALID_ARGUMENT);
}

TEST_CASE("prompting through the C API") {
  Owned clean;
  REQUIRE(pro_postprocess("  Hello\n\n world  ", &clean.p) == PRO_OK);
  CHECK(clean.str() == "Hello world");

  Owned selected;
  const char* req = R"({"pool":[
      {"query":"a","answer":"x","element":"y?","kind":"FQ","scores":{"semantic":0.2,"user_sim":0.1}},
      {"query":"b","answer":"x","element":"y?","kind":"FQ","scores":{"semantic":0.9,"user_sim":0.9}},
      {"query":"c","answer":"x","element":"y?","kind":"FQ","scores":{"semantic":0.5,"user_sim":0.6}}],
      "k":2,"criterion":"sum","direction":"top"})";
  REQUIRE(pro_select_demonstrations(req, &selected.p) == PRO_OK);
  auto sel = selected.parse();
  REQUIRE(sel.size() == 2);
  CHECK(sel[0]["query"] == "b");
  CHECK(sel[1]["query"] == "c");
  Owned too_many;
  CHECK(pro_select_demonstrations(R"({"pool":[],"k":1,"criterion":"sum","direction":"top"})", &too_many.p) ==
        PRO_K_TOO_LARGE);

  Context ctx;
  Owned run;
  REQUIRE(pro_generate(ctx.ctx, R"({"pipeline":"3step","kind":"FQ","query":"who built it","backend":"stub:agent"})",
                       &run.p) == PRO_OK);
  auto j = run.parse();
  CHECK(j["pipeline"] == "3step");
  CHECK(j["intermediate"].contains("P2"));
  Owned bad;
  CHECK(pro_generate(ctx.ctx, R"({"pipeline":"nope","kind":"FQ","query":"q"})", &bad.p) == PRO_INVALID_ARGUMENT);
  CHECK(pro_generate(ctx.ctx, R"({"pipeline":"3in1","kind":"FQ","query":"q","backend":"stub:user"})", &bad.p) ==
        PRO_PARSE_FAILED);
}

TEST_CASE("simulation through the C API") {
  CHECK(pro_is_terminal("Thank you.", nullptr) == 1);
  CHECK(pro_is_terminal("Yes, I would like to know more.", nullptr) == 0);
  CHECK(pro_is_terminal("fine", R"(["fine"])") == 0);
  CHECK(pro_is_terminal(nullptr, nullptr) == -1);

  Context ctx;
  Owned ep;
  REQUIRE(pro_simulate_episode(ctx.ctx, "who built it",
                               R"({"mode":"reactive","user_backend":"stub:user","agent_backend":"stub:agent"})",
                               &ep.p) == PRO_OK);
  auto e = ep.parse();
  CHECK(e["user_turns"] == 2);
  CHECK(e["status"] == "ended_natural");

  auto path = std::filesystem::temp_directory_path() / ("capi-transcripts-" + std::to_string(::getpid()) + ".jsonl");
  Owned batch;
  Context fresh;
  REQUIRE(pro_simulate_batch(fresh.ctx, R"(["q1","q2","q3"])",
                             R"({"mode":"proactive-fq","user_backend":"stub:user","agent_backend":"stub:agent"})", 7,
                             1, path.c_str(), &batch.p) == PRO_OK);
  auto st = batch.parse()["stats"];
  CHECK(st["n_episodes"] == 3);
  std::ifstream in(path);
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 3);
  std::filesystem::remove(path);

  Owned none;
  CHECK(pro_simulate_batch(fresh.ctx, "[]", "{}", -1, 1, nullptr, &none.p) == PRO_INVALID_ARGUMENT);
  CHECK(pro_simulate_episode(fresh.ctx, "q", R"({"mode":"reactive","max_turns":0})", &none.p) ==
        PRO_INVALID_ARGUMENT);
}
