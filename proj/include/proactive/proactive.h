/*
 * C interface to the proactive-response toolkit.
 *
 * Objects are opaque handles created by pro_*_create / pro_*_load and freed by
 * the matching pro_*_destroy. Every fallible call returns a pro_status; on
 * failure the message for the calling thread is available from
 * pro_last_error() until the next failing call on that thread. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with pro_free_string().
 *
 * Structured inputs and outputs are JSON text (UTF-8).
 */
#ifndef PROACTIVE_PROACTIVE_H
#define PROACTIVE_PROACTIVE_H

#include <stddef.h>
#include <stdint.h>

#if defined(PROACTIVE_BUILDING_LIBRARY)
#define PRO_API __attribute__((visibility("default")))
#else
#define PRO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pro_status {
  PRO_OK = 0,
  PRO_INVALID_ARGUMENT = 1,
  PRO_CONFIG_ERROR,
  PRO_IO_ERROR,
  PRO_MALFORMED_RECORD,
  PRO_DUPLICATE_ID,
  PRO_INVALID_BOUNDS,
  PRO_INSUFFICIENT_SAMPLES,
  PRO_EMPTY_CORPUS,
  PRO_NON_TRAIN_SAMPLE,
  PRO_BACKEND_UNAVAILABLE,
  PRO_BACKEND_ERROR,
  PRO_BACKEND_PROTOCOL,
  PRO_CONTEXT_OVERFLOW,
  PRO_EMPTY_TEXT,
  PRO_CLASSIFIER_NOT_CONFIGURED,
  PRO_TOO_FEW_SEGMENTS,
  PRO_UNPARSEABLE_SCORE,
  PRO_DEGENERATE_INPUT,
  PRO_MISSING_PLACEHOLDER,
  PRO_TEMPLATE_INVALID,
  PRO_INSUFFICIENT_DEMONSTRATIONS,
  PRO_STAGE_FAILED,
  PRO_PARSE_FAILED,
  PRO_MISSING_SCORES,
  PRO_K_TOO_LARGE,
  PRO_EPISODE_FAILED,
  PRO_INTERNAL = 99
} pro_status;

typedef struct pro_context pro_context;
typedef struct pro_corpus pro_corpus;

/* ---- library ----------------------------------------------------------- */

PRO_API const char* pro_version(void);
PRO_API const char* pro_status_name(pro_status status);
PRO_API const char* pro_last_error(void);
/* Underlying code of the last STAGE_FAILED / EPISODE_FAILED, else PRO_OK. */
PRO_API pro_status pro_last_error_cause(void);
PRO_API void pro_free_string(char* s);
/* Diagnostics go to stderr. level: trace, debug, info, warn, error, off.
 * The PROACTIVE_LOG_LEVEL environment variable sets the initial level. */
PRO_API pro_status pro_set_log_level(const char* level);

/* ---- context: backends + templates -------------------------------------- */

/*
 * config_json: {"backends": {...}, "max_parallel": 4, "cache_dir": "...",
 *               "retry": {...}, "templates_dir": "..."}
 * NULL or "{}" means the built-in all-stub offline backends.
 */
PRO_API pro_status pro_context_create(const char* config_json, pro_context** out);
PRO_API void pro_context_destroy(pro_context* ctx);
PRO_API pro_status pro_context_profile_hash(pro_context* ctx, char** out);
/* {"profile": {...}, "templates": [...], "cache": {"hits", "misses"}} */
PRO_API pro_status pro_context_describe(pro_context* ctx, char** out_json);

/* ---- corpus -------------------------------------------------------------- */

PRO_API pro_status pro_corpus_load(const char* path, pro_corpus** out);
PRO_API pro_status pro_corpus_parse(const char* jsonl, pro_corpus** out);
PRO_API void pro_corpus_destroy(pro_corpus* corpus);
PRO_API size_t pro_corpus_size(const pro_corpus* corpus);
PRO_API pro_status pro_corpus_save(const pro_corpus* corpus, const char* path);
PRO_API pro_status pro_corpus_to_jsonl(const pro_corpus* corpus, char** out);
PRO_API pro_status pro_corpus_filter(const pro_corpus* corpus, size_t min_query_tokens, size_t max_query_tokens,
                                     size_t min_long_answer_tokens, pro_corpus** out);
PRO_API pro_status pro_corpus_split(const pro_corpus* corpus, size_t train_per_kind, int64_t seed,
                                    pro_corpus** out);
/* split: "train" | "test" | "unsplit" | NULL (any); kind: "FQ" | "AI" | NULL;
 * limit: 0 for no limit. */
PRO_API pro_status pro_corpus_subset(const pro_corpus* corpus, const char* split, const char* kind, size_t limit,
                                     pro_corpus** out);
PRO_API pro_status pro_corpus_stats(const pro_corpus* corpus, char** out_json);
PRO_API pro_status pro_corpus_export_sft(const pro_corpus* corpus, const char* instruction_template,
                                         const char* path, size_t* out_count);

/* ---- prompting ----------------------------------------------------------- */

PRO_API pro_status pro_postprocess(const char* raw, char** out);

/*
 * request_json: {"pool": [demo...], "k": 3, "criterion": "sum",
 *                "direction": "top"}
 * demo: {"query", "answer", "element", "kind", "scores": {"semantic", "user_sim"}}
 * Result: JSON array of the selected demos, in selection order.
 */
PRO_API pro_status pro_select_demonstrations(const char* request_json, char** out_json);

/*
 * request_json: {"pipeline": "direct"|"3step"|"3in1", "kind": "FQ"|"AI",
 *                "query": "...", "sample_id": "...", "shots": 0,
 *                "demonstrations": [demo...], "temperature": 0.2,
 *                "max_tokens": 512, "seed": 7, "backend": "id"}
 * Result: one generation-run JSON object.
 */
PRO_API pro_status pro_generate(pro_context* ctx, const char* request_json, char** out_json);

/* ---- scoring ------------------------------------------------------------- */

PRO_API pro_status pro_bertscore(pro_context* ctx, const char* candidate, const char* reference,
                                 double* precision, double* recall, double* f1);

/* element may be NULL; kind is "FQ" or "AI"; segmenter NULL selects auto. */
PRO_API pro_status pro_semantic_score(pro_context* ctx, const char* query, const char* answer,
                                      const char* element, const char* kind, double alpha, const char* segmenter,
                                      double* out);
PRO_API pro_status pro_user_sim_score(pro_context* ctx, const char* query, const char* answer, const char* element,
                                      int n, double temperature, double* out);
PRO_API pro_status pro_prompt_based_score(pro_context* ctx, const char* query, const char* answer,
                                          const char* element, const char* kind, double* out);
PRO_API pro_status pro_classifier_score(pro_context* ctx, const char* answer, const char* element, const char* kind,
                                        double* logit, double* probability);
PRO_API pro_status pro_point_biserial(const int* labels, const double* scores, size_t n, double* out);

/*
 * options_json: {"metrics": "semantic,user-sim", "alpha": 0.5,
 *                "segmenter": "auto"|"structured"|"sentence",
 *                "user_sim_n": 5, "user_sim_temperature": 0.5,
 *                "user_sim_template": "...", "judge_max_tokens": 32}
 * Result: JSON array of score reports in corpus order.
 */
PRO_API pro_status pro_score_batch(pro_context* ctx, const pro_corpus* corpus, const char* options_json,
                                   char** out_json);
/* reports_json: array of score reports. Result: {"summary", "table", "csv"}. */
PRO_API pro_status pro_summarize_reports(const char* reports_json, char** out_json);
/* labels_json: {"<sample id>": "valid"|"invalid", ...}.
 * Result: {"rows": [...], "table", "csv"}. */
PRO_API pro_status pro_correlate(const char* reports_json, const char* labels_json, char** out_json);

/* ---- simulation ---------------------------------------------------------- */

/* 1 terminal, 0 not terminal, -1 on error. cues_json: array of strings or NULL. */
PRO_API int pro_is_terminal(const char* user_turn, const char* cues_json);

/*
 * episode_json: {"mode": "reactive"|"proactive-fq"|"proactive-ai",
 *                "max_turns": 10, "user_backend": "", "agent_backend": "",
 *                "temperature": 0.2, "max_tokens": 256, "seed": 7,
 *                "cues": [...], "repeat_threshold": 0.9}
 */
PRO_API pro_status pro_simulate_episode(pro_context* ctx, const char* seed_query, const char* episode_json,
                                        char** out_json);
/* queries_json: array of seed queries. transcripts_path: JSONL file written
 * with one transcript per episode, or NULL. seed_or_negative: < 0 for none.
 * Result: {"stats", "table", "csv"}. */
PRO_API pro_status pro_simulate_batch(pro_context* ctx, const char* queries_json, const char* episode_json,
                                      int64_t seed_or_negative, size_t parallel_episodes,
                                      const char* transcripts_path, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* PROACTIVE_PROACTIVE_H */
