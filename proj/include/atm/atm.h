#ifndef ATM_ATM_H
#define ATM_ATM_H

#include <stddef.h>
#include <stdint.h>

#if defined(ATM_BUILDING_LIBRARY)
#define ATM_API __attribute__((visibility("default")))
#else
#define ATM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; on failure the message is available
 * from atm_last_error() on the calling thread until its next failing call.
 * Strings returned through char** are owned by the caller: atm_string_free.
 * Level indices are 1-based; settings are arrays of p ints. */
typedef enum atm_status {
  ATM_OK = 0,
  ATM_E_INVALID_ARGUMENT = 1,
  ATM_E_CAPACITY = 2,
  ATM_E_EMPTY_SLICE = 3,
  ATM_E_UNSUPPORTED_PROFILE = 4,
  ATM_E_PROTOCOL = 5,
  ATM_E_NUMERICAL = 6,
  ATM_E_IO = 7,
  ATM_E_PARSE = 8,
  ATM_E_DIMENSION_MISMATCH = 9,
  ATM_E_INTERNAL = 100
} atm_status;

ATM_API const char* atm_version(void);
ATM_API const char* atm_status_name(atm_status status);
ATM_API const char* atm_last_error(void);
ATM_API void atm_string_free(char* s);

/* Parses level profiles such as "4^9", "2^1 3^7" or "6,3,6". Writes up to
 * cap entries to out (may be NULL when cap is 0) and the full count to *p. */
ATM_API atm_status atm_parse_profile(const char* text, int* out, size_t cap, size_t* p);

/* Designs */
typedef struct atm_design atm_design;

/* Smallest strength-t OA for the profile; max_runs 0 means unbounded.
 * With randomize != 0 the array gets level and row permutations from seed. */
ATM_API atm_status atm_oa_generate(const int* levels, size_t p, int strength, uint64_t max_runs, int randomize,
                                   uint64_t seed, atm_design** out);
ATM_API atm_status atm_design_from_cells(size_t runs, size_t p, const int* cells, atm_design** out);
ATM_API atm_status atm_design_read_csv(const char* path, atm_design** out);
ATM_API size_t atm_design_runs(const atm_design* d);
ATM_API size_t atm_design_factors(const atm_design* d);
/* Row-major runs x factors; valid until the design is freed. */
ATM_API const int* atm_design_cells(const atm_design* d);
ATM_API const char* atm_design_provenance(const atm_design* d);
ATM_API atm_status atm_design_to_csv(const atm_design* d, char** out);
/* levels may be NULL (largest observed level per column). */
ATM_API atm_status atm_oa_verify(const atm_design* d, int strength, const int* levels, int* ok, double* worst_deviation);
ATM_API void atm_design_free(atm_design* d);

/* Observations: a design plus one response per run */
typedef struct atm_obs atm_obs;

ATM_API atm_status atm_obs_create(const atm_design* d, const double* y, size_t n, atm_obs** out);
/* CSV with header f1..fp,y */
ATM_API atm_status atm_obs_read_csv(const char* path, atm_obs** out);
ATM_API size_t atm_obs_size(const atm_obs* o);
ATM_API size_t atm_obs_factors(const atm_obs* o);
ATM_API void atm_obs_free(atm_obs* o);

/* Marginal statistics and predictors */
ATM_API atm_status atm_tail_mean(const double* values, size_t m, double alpha, double* out);
/* method: "am", "pw" or "atm" (alphas required, one per factor). levels may be NULL. */
ATM_API atm_status atm_predict(const atm_obs* o, const char* method, const double* alphas, const int* levels,
                               int* setting_out);

/* Alpha tuning; report_json (may be NULL) receives the surrogate and candidate summary. */
ATM_API atm_status atm_tune_alpha(const atm_obs* o, const int* levels, uint64_t seed, size_t candidate_count,
                                  double* alphas_out, char** report_json);

/* Test objectives over mid-interval level grids */
typedef struct atm_objective atm_objective;

ATM_API atm_status atm_objective_builtin(const char* name, size_t p, int levels, atm_objective** out);
ATM_API atm_status atm_objective_set_noise(atm_objective* f, double sd, uint64_t seed);
ATM_API size_t atm_objective_factors(const atm_objective* f);
/* noiseless != 0 skips noise and the evaluation counter. */
ATM_API atm_status atm_objective_evaluate(atm_objective* f, const int* setting, int noiseless, double* out);
ATM_API uint64_t atm_objective_eval_count(const atm_objective* f);
/* table_csv may be NULL; otherwise receives f1..fp,y for every setting. */
ATM_API atm_status atm_oracle(const atm_objective* f, int* argmin_out, double* min_out, char** table_csv);
ATM_API atm_status atm_check_mc(const atm_objective* f, int* holds, size_t* violations, char** report_json);
ATM_API void atm_objective_free(atm_objective* f);

/* Sequential-elimination ask/tell sessions */
typedef struct atm_session atm_session;

/* method: "atm", "mean" or "min" (a "sel." prefix is accepted). multipliers may be NULL. */
ATM_API atm_status atm_session_create(const int* levels, size_t p, const char* method, uint64_t seed,
                                      const int* multipliers, size_t n_multipliers, int exclude_dead_runs,
                                      atm_session** out);
ATM_API atm_status atm_session_load(const char* path, atm_session** out);
ATM_API atm_status atm_session_save(const atm_session* s, const char* path);
ATM_API atm_status atm_session_to_json(const atm_session* s, char** out);
ATM_API size_t atm_session_factors(const atm_session* s);
ATM_API int atm_session_stage(const atm_session* s);
/* "ready", "pending" or "absorbed" */
ATM_API const char* atm_session_phase(const atm_session* s);
ATM_API atm_status atm_session_suggest(atm_session* s, atm_design** batch);
ATM_API atm_status atm_session_observe(atm_session* s, const double* y, size_t n);
/* Same, after checking that the observation rows match the pending batch. */
ATM_API atm_status atm_session_observe_obs(atm_session* s, const atm_obs* o);
/* eliminated_out (may be NULL) receives p entries: the removed level per factor, 0 if skipped. */
ATM_API atm_status atm_session_eliminate(atm_session* s, int* eliminated_out);
/* alphas_out may be NULL; *has_value is set when the setting was observed. */
ATM_API atm_status atm_session_predict(atm_session* s, int* setting_out, double* alphas_out, int* has_value,
                                       double* value_out);
ATM_API void atm_session_free(atm_session* s);

/* Benchmarks: runs a spec file; output_prefix (may be NULL) overrides the
 * spec's output. summary_csv may be NULL. */
ATM_API atm_status atm_bench_run(const char* spec_path, const char* output_prefix, char** summary_csv,
                                 size_t* failures);

#ifdef __cplusplus
}
#endif

#endif
