/* biodiscover.h - C API for the biodiscover imaging/classification pipeline.
 *
 * All objects are opaque handles created and destroyed through these
 * functions. Calls return bd_status; on failure bd_last_error() holds a
 * thread-local message. Strings returned through char** outputs are owned by
 * the caller and must be released with bd_string_free().
 */
#ifndef BIODISCOVER_H
#define BIODISCOVER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BD_API __declspec(dllexport)
#else
#define BD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bd_status {
  BD_OK = 0,
  BD_ERR_ARG = 1,      /* null/invalid argument */
  BD_ERR_CONFIG = 2,   /* configuration rejected */
  BD_ERR_DATA = 3,     /* data invalid or missing */
  BD_ERR_INTERNAL = 4  /* unexpected failure */
} bd_status;

BD_API const char* bd_version(void);

/* Thread-local message for the most recent failing call. */
BD_API const char* bd_last_error(void);

BD_API void bd_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct bd_dataset bd_dataset;

/* Loads a dataset manifest (manifest.json + PNG tree). load_pixels = 0 keeps
 * only per-frame metadata. */
BD_API bd_status bd_dataset_open(const char* manifest_path, int load_pixels,
                                 bd_dataset** out);

/* Generates a synthetic ground-truthed cohort from a config JSON document
 * (the same schema the CLI's generate subcommand consumes). */
BD_API bd_status bd_dataset_generate(const char* config_json, bd_dataset** out);

BD_API void bd_dataset_close(bd_dataset* ds);

BD_API int bd_dataset_species_count(const bd_dataset* ds);
BD_API int bd_dataset_specimen_count(const bd_dataset* ds);

/* JSON array of invariant violations; empty array means the dataset is valid. */
BD_API bd_status bd_dataset_validate(const bd_dataset* ds, char** violations_json);

/* JSON array of per-species {species, specimens, images}. */
BD_API bd_status bd_dataset_statistics(const bd_dataset* ds, char** stats_json);

/* 3-sigma outlier screen; JSON report of flagged specimens. */
BD_API bd_status bd_dataset_outlier_screen(const bd_dataset* ds, char** report_json);

/* ---- splits ------------------------------------------------------------ */

typedef struct bd_splits bd_splits;

/* Specimen-level stratified 70/10/20 plans, n_reps repetitions. */
BD_API bd_status bd_splits_make(const bd_dataset* ds, int n_reps, uint64_t seed,
                                bd_splits** out);
BD_API void bd_splits_close(bd_splits* sp);
BD_API bd_status bd_splits_to_json(const bd_splits* sp, char** json);

/* ---- evaluation -------------------------------------------------------- */

/* Runs the full repeated-split evaluation of the built-in baseline
 * classifier. options_json: {"rule": "majority"|"weighted", "seed": N,
 * "nmax": N, "schedule": {...}} (all fields optional). */
BD_API bd_status bd_evaluate(const bd_dataset* ds, const bd_splits* sp,
                             const char* options_json, char** report_json);

/* ---- biomass ----------------------------------------------------------- */

/* Per-species log-log dry-weight regressions; JSON {fits: [...], skipped: [...]}. */
BD_API bd_status bd_biomass_fit(const bd_dataset* ds, char** report_json);

/* ---- pipeline driver --------------------------------------------------- */

/* Executes one pipeline subcommand (generate, ingest, calibrate, process,
 * screen, train, evaluate, grid, ablate-cameras, sweep-nmax, biomass-fit,
 * simulate) against a config JSON document. Artifacts are written under the
 * config's output_dir. Returns the subcommand's report JSON and maps the
 * pipeline exit code onto bd_status. dry_run validates without writing.
 *
 * overrides_json (may be NULL): flat object of dotted-path keys to values,
 * e.g. {"seed": 7, "paths.output_dir": "run1"}. Precedence is config file <
 * BIODISCOVER_* environment < overrides. */
BD_API bd_status bd_run(const char* subcommand, const char* config_json,
                        const char* overrides_json, int dry_run, char** report_json);

/* Names of the available subcommands as a JSON array. */
BD_API const char* bd_subcommands(void);

#ifdef __cplusplus
}
#endif

#endif /* BIODISCOVER_H */
