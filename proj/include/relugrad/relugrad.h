/*
 * Copyright 2026 The relugrad Authors
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
#ifndef RELUGRAD_RELUGRAD_H
#define RELUGRAD_RELUGRAD_H

/* Stable C interface to librelugrad.
 *
 * Every fallible call returns an rg_status. On failure, rg_last_error()
 * returns a message for the calling thread, valid until that thread's next
 * call into the library. Objects are opaque handles released with the
 * matching *_free function; passing NULL to a free function is a no-op.
 * Layer and node indices are 0-based here. */

#include <stddef.h>
#include <stdint.h>

#if defined(RELUGRAD_BUILDING)
#define RG_API __attribute__((visibility("default")))
#else
#define RG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rg_status {
  RG_OK = 0,
  RG_ERR_INVALID_ARGUMENT = 1,
  RG_ERR_SHAPE_MISMATCH = 2,
  RG_ERR_MALFORMED_FILE = 3,
  RG_ERR_IO = 4,
  RG_ERR_NUMERIC = 5,
  RG_ERR_CAP_EXCEEDED = 6,
  RG_ERR_INTERNAL = 7
} rg_status;

typedef enum rg_dist { RG_DIST_TRUNCATED_GAUSSIAN = 0, RG_DIST_UNIFORM = 1 } rg_dist;

typedef enum rg_direction { RG_OFF_TO_ON = 0, RG_ON_TO_OFF = 1 } rg_direction;

typedef struct rg_network rg_network;
typedef struct rg_trace rg_trace;
typedef struct rg_report rg_report;

RG_API const char* rg_version(void);
RG_API const char* rg_last_error(void);
/* "invalid_argument", "shape_mismatch", ... */
RG_API const char* rg_status_name(rg_status status);
RG_API void rg_string_free(char* text);

/* ---- networks ---------------------------------------------------------- */

/* dims = {p, n_1, ..., n_L}; dim_count = L + 1. */
RG_API rg_status rg_network_generate(const size_t* dims, size_t dim_count, size_t outputs,
                                     rg_dist dist, double tau, double variance, uint64_t seed,
                                     rg_network** out);
RG_API rg_status rg_network_load(const char* path, rg_network** out);
RG_API rg_status rg_network_from_json(const char* text, rg_network** out);
RG_API rg_status rg_network_save(const rg_network* net, const char* path);
/* Weight-file JSON; release with rg_string_free. */
RG_API rg_status rg_network_to_json(const rg_network* net, char** out);
RG_API void rg_network_free(rg_network* net);

RG_API rg_status rg_network_input_dim(const rg_network* net, size_t* out);
RG_API rg_status rg_network_depth(const rg_network* net, size_t* out);
RG_API rg_status rg_network_width(const rg_network* net, size_t layer, size_t* out);
RG_API rg_status rg_network_output_count(const rg_network* net, size_t* out);

/* All K outputs at x (length p). */
RG_API rg_status rg_network_forward(const rg_network* net, const double* x, size_t x_len,
                                    double* out, size_t out_len);
/* Gradient of output `output` on the linear region containing x. */
RG_API rg_status rg_network_gradient(const rg_network* net, const double* x, size_t x_len,
                                     size_t output, double* grad, size_t grad_len);

/* ---- path traces ------------------------------------------------------- */

typedef struct rg_trace_options {
  double t_merge;
  double slope_floor;
  double step_nudge;
  size_t max_events;
  size_t output;
  int use_minus; /* nonzero: trace f_output - f_minus */
  size_t minus;
  int jump_vectors;
} rg_trace_options;

typedef struct rg_event {
  double t;
  size_t layer;
  size_t node;
  rg_direction direction;
  double jump_scalar;
  double jump_vector_norm; /* NaN when jump vectors were not computed */
  double normalized_scalar;
  int multi_flip;
  size_t flip_count;
} rg_event;

RG_API void rg_trace_options_default(rg_trace_options* options);
/* options may be NULL for the defaults. */
RG_API rg_status rg_trace_compute(const rg_network* net, const double* x1, const double* x2,
                                  size_t len, const rg_trace_options* options, rg_trace** out);
RG_API size_t rg_trace_event_count(const rg_trace* trace);
RG_API size_t rg_trace_segment_count(const rg_trace* trace);
RG_API size_t rg_trace_uncertified_segments(const rg_trace* trace);
RG_API rg_status rg_trace_event(const rg_trace* trace, size_t index, rg_event* out);
RG_API rg_status rg_trace_jump_vector(const rg_trace* trace, size_t index, double* out,
                                      size_t len);
/* g(t) from the traced affine pieces. */
RG_API rg_status rg_trace_eval(const rg_trace* trace, double t, double* out);
/* Header plus one row per event; release with rg_string_free. */
RG_API rg_status rg_trace_csv(const rg_trace* trace, size_t replicate_id, char** out);
RG_API rg_status rg_trace_write_csv(const rg_trace* trace, size_t replicate_id, const char* path);
RG_API void rg_trace_free(rg_trace* trace);

/* ---- commands ---------------------------------------------------------- */

/* Space separated list of command names. */
RG_API const char* rg_command_names(void);
/* Defaults merged into config_json (may be NULL), validated; release with
 * rg_string_free. */
RG_API rg_status rg_resolve_config(const char* command, const char* config_json, char** out);
RG_API rg_status rg_run_command(const char* command, const char* config_json, rg_report** out);
RG_API const char* rg_report_summary(const rg_report* report);
RG_API size_t rg_report_artifact_count(const rg_report* report);
RG_API const char* rg_report_artifact_name(const rg_report* report, size_t index);
RG_API const char* rg_report_artifact_data(const rg_report* report, size_t index);
RG_API size_t rg_report_artifact_size(const rg_report* report, size_t index);
RG_API void rg_report_free(rg_report* report);

#ifdef __cplusplus
}
#endif

#endif /* RELUGRAD_RELUGRAD_H */
