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

/* Compiled as C to keep the public header C-clean. */

#include <stdio.h>

#include "mpmd/mpmd.h"

int main(void) {
  mpmd_config* config = NULL;
  mpmd_plan* plan = NULL;
  if (mpmd_config_default(&config) != MPMD_OK) return 1;
  if (mpmd_plan_build(config, &plan) != MPMD_OK) {
    fprintf(stderr, "%s\n", mpmd_last_error());
    return 1;
  }
  int ok = mpmd_plan_num_actors(plan) == 2;
  mpmd_plan_free(plan);
  mpmd_config_free(config);
  return ok ? 0 : 1;
}
