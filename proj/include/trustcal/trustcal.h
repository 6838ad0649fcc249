/*
 * trustcal C API.
 *
 * Every function returns a tc_status. On failure the thread-local message
 * from tc_last_error() describes the cause. Strings returned through char**
 * out-parameters are owned by the caller and released with tc_string_free.
 * Handles are opaque and released with their matching *_free function.
 */
#ifndef TRUSTCAL_TRUSTCAL_H
#define TRUSTCAL_TRUSTCAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(TRUSTCAL_BUILDING)
#define TC_API __declspec(dllexport)
#else
#define TC_API __declspec(dllimport)
#endif
#else
#define TC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tc_status {
  TC_OK = 0,
  TC_ERR_INVALID_ARGUMENT,
  TC_ERR_PARSE,
  TC_ERR_IO,
  TC_ERR_SCHEMA_MISMATCH,
  TC_ERR_EMPTY_SEQUENCE,
  TC_ERR_EMPTY_DATASET,
  TC_ERR_EMPTY_FIXATIONS,
  TC_ERR_UNSORTED_FIXATIONS,
  TC_ERR_NON_FINITE,
  TC_ERR_EMPTY_WINDOW,
  TC_ERR_EMPTY_SPEC,
  TC_ERR_ZERO_LIKELIHOOD,
  TC_ERR_AMBIGUOUS_LABEL,
  TC_ERR_ALL_RESTARTS_FAILED,
  TC_ERR_STRATIFICATION_IMPOSSIBLE,
  TC_ERR_NON_CONVERGENCE,
  TC_ERR_HORIZON_TOO_LARGE,
  TC_ERR_UNKNOWN_SESSION,
  TC_ERR_INTERNAL
} tc_status;

/* Action dimension bits for structure masks. */
#define TC_DIM_TRANSPARENCY 1u
#define TC_DIM_RELIABILITY 2u
#define TC_DIM_TRAFFIC 4u
#define TC_DIM_PEDESTRIANS 8u

typedef struct tc_model tc_model;
typedef struct tc_dataset tc_dataset;
typedef struct tc_policy tc_policy;
typedef struct tc_service tc_service;

typedef struct tc_structure {
  unsigned trust_dims;
  unsigned workload_dims;
} tc_structure;

TC_API const char* tc_version(void);
TC_API const char* tc_last_error(void);
TC_API const char* tc_status_name(tc_status status);
/* 1 if the status denotes bad input (files, documents, arguments). */
TC_API int tc_status_is_input_error(tc_status status);
TC_API void tc_string_free(char* s);

/* Structures */
TC_API tc_structure tc_structure_paper(void);
/* "transparency+reliability", "reliability,pedestrians", "none". */
TC_API tc_status tc_parse_dims(const char* text, unsigned* out_dims);
TC_API tc_status tc_structure_to_string(tc_structure s, char** out);
TC_API int tc_count_parameters(tc_structure s);

/* Models */
TC_API tc_status tc_model_parse(const char* document, tc_model** out);
TC_API tc_status tc_model_load(const char* path, tc_model** out);
/* Hand-set illustrative model with the paper structure. */
TC_API tc_status tc_model_reference(tc_model** out);
TC_API tc_status tc_model_to_string(const tc_model* model, const char* generator, char** out);
TC_API tc_status tc_model_structure(const tc_model* model, tc_structure* out);
TC_API void tc_model_free(tc_model* model);

/* Datasets */
TC_API tc_status tc_dataset_parse_csv(const char* text, tc_dataset** out);
TC_API tc_status tc_dataset_load_csv(const char* path, tc_dataset** out);
TC_API tc_status tc_dataset_to_csv(const tc_dataset* data, const char* generator, char** out);
TC_API tc_status tc_dataset_counts(const tc_dataset* data, size_t* sequences, size_t* steps);
TC_API void tc_dataset_free(tc_dataset* data);

typedef struct tc_study_options {
  int participants;
  int intersections_per_condition;
  int frames_per_episode;
  uint64_t seed;
} tc_study_options;
TC_API tc_study_options tc_study_options_default(void);
TC_API tc_status tc_dataset_synthetic(const tc_model* model, const tc_study_options* options,
                                      tc_dataset** out);

/* Estimation */
typedef struct tc_fit_options {
  double tol;
  int max_iter;
  int n_restarts;
  uint64_t seed;
  double prob_floor;
  int jobs;
} tc_fit_options;
TC_API tc_fit_options tc_fit_options_default(void);
/* out_report may be NULL. */
TC_API tc_status tc_estimate(const tc_dataset* data, tc_structure structure,
                             const tc_fit_options* options, const char* generator,
                             tc_model** out_model, char** out_report);
TC_API tc_status tc_log_likelihood(const tc_model* model, const tc_dataset* data, double* out);

/* Structure selection */
typedef struct tc_select_options {
  int k_folds;
  int n_repeats;
  int restarts_per_fit;
  uint64_t seed;
  int stratify; /* 1: one episode per participant/condition in every fold */
  double tol;
  int max_iter;
  int jobs;
} tc_select_options;
TC_API tc_select_options tc_select_options_default(void);
TC_API tc_status tc_select(const tc_dataset* data, const tc_select_options* options,
                           const char* generator, char** out_report_csv,
                           tc_structure* out_chosen);

/* Policy synthesis. reward is 6 values, rows T_low, T_high, columns
 * Rel_low, Rel_mid, Rel_high; NULL selects the default table. */
typedef struct tc_solve_options {
  double gamma;
  double vi_tol;
} tc_solve_options;
TC_API tc_solve_options tc_solve_options_default(void);
TC_API tc_status tc_reward_default(double out[6]);
TC_API tc_status tc_reward_parse_csv(const char* text, double out[6]);
TC_API tc_status tc_solve(const tc_model* model, const double* reward,
                          const tc_solve_options* options, tc_policy** out);
TC_API tc_status tc_policy_parse(const char* document, tc_policy** out);
TC_API tc_status tc_policy_load(const char* path, tc_policy** out);
TC_API tc_status tc_policy_to_string(const tc_policy* policy, const char* generator, char** out);
TC_API tc_status tc_policy_grid_csv(const tc_policy* policy, int resolution,
                                    const char* generator, char** out);
/* Context as "Rel_low+Traffic_low+Peds_absent"; out_action is 0 (off) or 1. */
TC_API tc_status tc_policy_action(const tc_policy* policy, const double belief[4],
                                  const char* context, int* out_action);
TC_API void tc_policy_free(tc_policy* policy);

/* Step response; actions as "AR_on+Rel_low+Traffic_low+Peds_absent". */
TC_API tc_status tc_step_response_csv(const tc_model* model, const char* const* actions,
                                      size_t n_actions, int horizon, const char* generator,
                                      char** out);

/* Closed-loop simulation. scenario_csv may be NULL, in which case
 * n_episodes random contexts of frames_per_episode frames are drawn. */
typedef struct tc_simulate_options {
  uint64_t seed;
  int min_dwell;
  int carry_belief;
  int n_episodes;
  int frames_per_episode;
} tc_simulate_options;
TC_API tc_simulate_options tc_simulate_options_default(void);
TC_API tc_status tc_simulate(const tc_model* true_model, const tc_model* belief_model,
                             const tc_policy* policy, const char* scenario_csv,
                             const tc_simulate_options* options, const char* generator,
                             char** out_metrics_json, char** out_trace_csv);

/* Interaction service */
typedef struct tc_service_options {
  uint64_t seed;
  int min_dwell;
  const char* journal_dir;   /* NULL disables journaling */
  const char* model_document;  /* defaults for sessions created without documents */
  const char* policy_document;
  int recover;               /* replay journals found in journal_dir */
} tc_service_options;
TC_API tc_service_options tc_service_options_default(void);
TC_API tc_status tc_service_create(const tc_service_options* options, tc_service** out);
/* port 0 picks a free port. */
TC_API tc_status tc_service_bind(tc_service* service, const char* host, int port, int* out_port);
/* Blocks until tc_service_stop is called from another thread. */
TC_API tc_status tc_service_run(tc_service* service);
TC_API void tc_service_stop(tc_service* service);
TC_API void tc_service_free(tc_service* service);

#ifdef __cplusplus
}
#endif

#endif /* TRUSTCAL_TRUSTCAL_H */
