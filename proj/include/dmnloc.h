/*
 * Copyright 2026 The dmnloc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the mapping-and-localization toolkit. Configuration is an
 * opaque key=value table; commands are coarse operations that read and write
 * the documented file formats. All functions return DMNLOC_OK (0) on
 * success; on failure dmnloc_last_error() describes the problem for the
 * calling thread.
 */

#ifndef DMNLOC_H
#define DMNLOC_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  DMNLOC_OK = 0,
  DMNLOC_ERR_RUNTIME = 1,
  DMNLOC_ERR_USAGE = 2
} dmnloc_status;

typedef struct dmnloc_config dmnloc_config;

dmnloc_config* dmnloc_config_create(void);
void dmnloc_config_destroy(dmnloc_config* cfg);

/* Rejects unknown keys with DMNLOC_ERR_USAGE. */
dmnloc_status dmnloc_config_set(dmnloc_config* cfg, const char* key, const char* value);
/* Loads "key=value" lines; '#' starts a comment. */
dmnloc_status dmnloc_config_load(dmnloc_config* cfg, const char* path);
/* Returns the value or NULL for unknown keys; pointer valid until the next
 * mutation of the config. */
const char* dmnloc_config_get(const dmnloc_config* cfg, const char* key);

/* Writes `count` procedurally generated episodes to a dataset file. */
dmnloc_status dmnloc_run_gen(const dmnloc_config* cfg, const char* out_path);

/* Trains the configured variant; writes the best-validation checkpoint and a
 * CSV of training curves (curves_path may be NULL). */
dmnloc_status dmnloc_run_train(const dmnloc_config* cfg, const char* ckpt_path,
                               const char* curves_path);

/* Evaluates a checkpoint (or a reference baseline when the configured
 * variant needs no parameters) and writes a metrics report. */
dmnloc_status dmnloc_run_eval(const dmnloc_config* cfg, const char* ckpt_path,
                              const char* report_path);

/* Full-pipeline finite-difference gradient validation at a tiny scale.
 * Returns DMNLOC_ERR_RUNTIME when any parameter exceeds the tolerance. */
dmnloc_status dmnloc_run_gradcheck(const dmnloc_config* cfg, const char* report_path);

/* Runs an experiment sweep; kind is one of data-efficiency, context-count,
 * time-curve, particle-count, classification, large-env. */
dmnloc_status dmnloc_run_sweep(const dmnloc_config* cfg, const char* kind, const char* out_dir);

/* Validates the header and structure of a toolkit output file. */
dmnloc_status dmnloc_check_file(const char* path);

/* Thread-local message for the most recent failure. */
const char* dmnloc_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* DMNLOC_H */
