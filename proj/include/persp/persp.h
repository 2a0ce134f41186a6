/* C interface to the persp library.
 *
 * Every fallible call returns a persp_status. On failure a message for the
 * calling thread is available from persp_last_error() until the next call on
 * that thread. Strings returned through char** are heap allocated and must be
 * released with persp_string_free(). Handles are released with their *_free
 * function; passing NULL to any *_free is a no-op.
 */
#ifndef PERSP_H
#define PERSP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PERSP_API __declspec(dllexport)
#else
#define PERSP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum persp_status {
    PERSP_OK = 0,
    PERSP_INVALID_ARGUMENT = 1,
    PERSP_IO = 2,
    PERSP_MISSING_FIELD = 3,
    PERSP_EMPTY_CORPUS = 4,
    PERSP_MALFORMED_LINE = 5,
    PERSP_INVALID_SPLIT = 6,
    PERSP_MARKER_COLLISION = 7,
    PERSP_BACKEND_UNAVAILABLE = 8,
    PERSP_NON_FINITE_LOSS = 9,
    PERSP_EMPTY_GENERATION = 10,
    PERSP_FIELD_EXTRACTION_FAILED = 11,
    PERSP_PARSE_FAILED = 12,
    PERSP_NO_NEW_CONTENT = 13,
    PERSP_PRECONDITION = 14,
    PERSP_ENCODER_FAILURE = 15,
    PERSP_EMPTY_TEXT = 16,
    PERSP_LENGTH_MISMATCH = 17,
    PERSP_DEGENERATE_VOCABULARY = 18,
    PERSP_GATE_MISMATCH = 19,
    PERSP_SESSION_ENDED = 20,
    PERSP_NO_UTTERANCE_PENDING = 21,
    PERSP_DELIVERY_FAILED = 22,
    PERSP_ZERO_VARIANCE = 23,
    PERSP_TOO_FEW_POINTS = 24,
    PERSP_INCOMPLETE_RESPONSES = 25,
    PERSP_NOT_FOUND = 26,
    PERSP_INTERNAL = 27
} persp_status;

PERSP_API const char* persp_version(void);
/* "GateMismatch", "EmptyCorpus", ... */
PERSP_API const char* persp_status_name(persp_status status);
PERSP_API const char* persp_last_error(void);
PERSP_API void persp_string_free(char* s);

/* ---- corpus ---------------------------------------------------------- */

typedef struct persp_corpus persp_corpus;

/* JSONL with context, question, answerA/B/C (or option_a/b/c), optional label. */
PERSP_API persp_status persp_corpus_load(const char* path, persp_corpus** out);
PERSP_API persp_status persp_corpus_save(const persp_corpus* corpus, const char* path);
PERSP_API size_t persp_corpus_size(const persp_corpus* corpus);
PERSP_API persp_status persp_corpus_split(const persp_corpus* corpus, double train_fraction, double eval_fraction,
                                          double test_fraction, uint64_t seed, persp_corpus** train,
                                          persp_corpus** eval, persp_corpus** test);
PERSP_API void persp_corpus_free(persp_corpus* corpus);

/* ---- training and generation ----------------------------------------- */

typedef struct persp_model persp_model;

typedef enum persp_model_kind { PERSP_MODEL_CONTEXT = 0, PERSP_MODEL_QA = 1 } persp_model_kind;

typedef void (*persp_epoch_fn)(size_t epoch, double train_loss, double eval_loss, void* user);

/* `pipeline` is "staged" or "control" for QA models and ignored for context
 * models. `config` holds "key = value" lines (NULL for defaults). The report
 * is JSON: initial/final losses and per-epoch history. */
PERSP_API persp_status persp_train(persp_model_kind kind, const char* pipeline, const persp_corpus* train,
                                   const persp_corpus* eval, const char* config, persp_epoch_fn on_epoch,
                                   void* user, persp_model** model, char** report_json);
PERSP_API persp_status persp_model_save(const persp_model* model, const char* dir);
PERSP_API persp_status persp_model_load(const char* dir, persp_model** out);
/* JSON: kind, pipeline, vocabulary size, train config. */
PERSP_API persp_status persp_model_info(const persp_model* model, char** info_json);
PERSP_API void persp_model_free(persp_model* model);

/* `decode_config` holds "decode.*" lines or NULL; `seed` overrides its seed. */
PERSP_API persp_status persp_generate_context(const persp_model* context_model, const char* decode_config,
                                              uint64_t seed, char** text);
PERSP_API persp_status persp_generate_qa(const persp_model* qa_model, const char* context,
                                         const char* decode_config, uint64_t seed, char** candidate_json);
/* `count` attempts with seeds derived from `seed`; every attempt that parses
 * into a complete candidate is written to `out_path` as JSONL. The summary
 * counts attempts, parsed candidates and failures by error name. */
PERSP_API persp_status persp_generate_batch(const persp_model* context_model, const persp_model* qa_model,
                                            size_t count, uint64_t seed, const char* decode_config,
                                            const char* out_path, char** summary_json);

/* Question and options for every context of `corpus`, as the QA model would
 * produce them at evaluation time. Attempts that fail to parse are skipped
 * and counted in the summary. */
PERSP_API persp_status persp_generate_for_corpus(const persp_model* qa_model, const persp_corpus* corpus,
                                                 uint64_t seed, const char* decode_config, const char* out_path,
                                                 char** summary_json);

/* ---- evaluation ------------------------------------------------------ */

/* Encoder ids: "toy-hash", "distilbert-base-uncased", "roberta-base",
 * "microsoft/deberta-xlarge-mnli". Result JSON has per-pair and mean scores. */
PERSP_API persp_status persp_bertscore(const char* const* candidates, const char* const* references, size_t n,
                                       const char* encoder_id, char** result_json);
/* Scores generated candidates (JSONL) against the test records that share
 * their context, for every encoder in the comma-separated list and every
 * slice. */
PERSP_API persp_status persp_slice_eval(const persp_corpus* test, const char* generated_path,
                                        const char* encoder_ids, char** reports_json);
/* TF-IDF, t-SNE and an RBF SVM on a stratified 80/20 split. The report
 * includes the 2-D embedding. */
PERSP_API persp_status persp_discriminability(const char* const* generated, size_t n_generated,
                                              const char* const* held_out, size_t n_held_out, uint64_t seed,
                                              char** report_json);

/* ---- survey statistics ------------------------------------------------ */

/* `instrument` is "nasa_tlx", "godspeed" or "appropriateness". `table` may be
 * NULL; otherwise it receives a plain-text table. */
PERSP_API persp_status persp_survey_analyze(const char* csv_path, const char* instrument, double alpha,
                                            char** report_json, char** table);
PERSP_API persp_status persp_paired_t(const double* x, const double* y, size_t n, double alpha,
                                      char** result_json);
PERSP_API persp_status persp_ryan_joiner(const double* sample, size_t n, double alpha, char** result_json);
PERSP_API persp_status persp_power_paired_t(size_t n, double mean_diff, double sd_diff, double alpha,
                                            double* power);

/* ---- sessions -------------------------------------------------------- */

typedef struct persp_session persp_session;

/* An in-process session over a fixture file (candidate JSONL). Utterances are
 * collected silently and show up in the event list. */
PERSP_API persp_status persp_session_create(const char* fixture_path, uint64_t seed, persp_session** out);
/* `gate` is "UI1".."UI4"; `value` is yes, no, correct, incorrect or no_response. */
PERSP_API persp_status persp_session_submit(persp_session* session, const char* gate, const char* value,
                                            char** state_json);
PERSP_API persp_status persp_session_state(const persp_session* session, char** state_json);
/* JSON array of events with seq >= from. */
PERSP_API persp_status persp_session_events(const persp_session* session, uint64_t from, char** events_json);
PERSP_API void persp_session_free(persp_session* session);

/* ---- gateway --------------------------------------------------------- */

typedef struct persp_server persp_server;

typedef struct persp_server_options {
    const char* host;          /* default "127.0.0.1" */
    int port;                  /* 0 picks a free port */
    const char* fixture_path;  /* exactly one of fixture_path / models_dir */
    const char* models_dir;    /* holds context/ and qa/ model dirs */
    const char* data_dir;      /* session logs; NULL keeps them in memory */
    uint64_t seed;
    size_t rejection_cap;      /* consecutive UI2=no before returning to UI1 */
    int echo_utterances;       /* nonzero prints utterances to stdout */
} persp_server_options;

PERSP_API void persp_server_options_init(persp_server_options* options);
PERSP_API persp_status persp_server_start(const persp_server_options* options, persp_server** out);
PERSP_API int persp_server_port(const persp_server* server);
PERSP_API void persp_server_stop(persp_server* server);
PERSP_API void persp_server_free(persp_server* server);

#ifdef __cplusplus
}
#endif

#endif /* PERSP_H */
