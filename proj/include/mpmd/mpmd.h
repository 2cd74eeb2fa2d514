/* Copyright 2026 The mpmdpp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to the planner, simulator and executor. Every function that can
 * fail returns an mpmd_status; on failure mpmd_last_error() describes the
 * error for the calling thread. Strings returned through char** are owned by
 * the caller and released with mpmd_string_free. */

#ifndef MPMD_MPMD_H_
#define MPMD_MPMD_H_

#if defined(_WIN32)
#define MPMD_API __declspec(dllexport)
#else
#define MPMD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* The first four values match the command-line exit codes. */
typedef enum mpmd_status {
  MPMD_OK = 0,
  MPMD_ERR_VALIDATION = 1,
  MPMD_ERR_DEADLOCK = 2, /* deadlock or liveness fault */
  MPMD_ERR_MISMATCH = 3,
  MPMD_ERR_INVALID_ARGUMENT = 4,
  MPMD_ERR_INTERNAL = 5
} mpmd_status;

typedef struct mpmd_config mpmd_config;
typedef struct mpmd_plan mpmd_plan;

MPMD_API const char* mpmd_version(void);
MPMD_API const char* mpmd_status_name(mpmd_status status);
/* Empty string when the last call on this thread succeeded. */
MPMD_API const char* mpmd_last_error(void);

MPMD_API mpmd_status mpmd_config_default(mpmd_config** out);
MPMD_API mpmd_status mpmd_config_parse(const char* json, mpmd_config** out);
MPMD_API mpmd_status mpmd_config_load(const char* path, mpmd_config** out);
/* Keys: out, schedule_file, seed, timeout_s, max_delay_us, drop_recv_actor. */
MPMD_API mpmd_status mpmd_config_set(mpmd_config* config, const char* key, const char* value);
MPMD_API mpmd_status mpmd_config_to_json(const mpmd_config* config, char** out);
MPMD_API void mpmd_config_free(mpmd_config* config);

MPMD_API mpmd_status mpmd_plan_build(const mpmd_config* config, mpmd_plan** out);
MPMD_API void mpmd_plan_free(mpmd_plan* plan);
MPMD_API int mpmd_plan_num_actors(const mpmd_plan* plan);
MPMD_API int mpmd_plan_num_stages(const mpmd_plan* plan);
MPMD_API int mpmd_plan_num_tasks(const mpmd_plan* plan);
MPMD_API int mpmd_plan_num_buffers(const mpmd_plan* plan);
MPMD_API int mpmd_plan_num_transfers(const mpmd_plan* plan);
MPMD_API int mpmd_plan_driver_messages(const mpmd_plan* plan);
/* what: "schedule", "taskgraph" or "commplan". */
MPMD_API mpmd_status mpmd_plan_to_json(const mpmd_plan* plan, const char* what, char** out);

/* Uses the cost section of `config`. */
MPMD_API mpmd_status mpmd_simulate(const mpmd_plan* plan, const mpmd_config* config,
                                   char** report_json);

/* Runs "plan", "simulate", "verify" or "sweep". The return value is the
 * command's exit code; summary and files (newline separated) are optional. */
MPMD_API mpmd_status mpmd_run_command(const char* command, const mpmd_config* config,
                                      char** summary, char** files);

MPMD_API void mpmd_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* MPMD_MPMD_H_ */
