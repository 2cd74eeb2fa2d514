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

#ifndef MPMD_ERRORS_H_
#define MPMD_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mpmd {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad model or run configuration, invalid schedule, parse
// failure, memory capacity exceeded.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A program cannot make progress: no linear extension of the task graph, a
// cycle in the blocking-wait graph, or a watchdog timeout at runtime.
// An actor's simulated peak memory exceeds the configured capacity.
class MemoryCapacityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DeadlockError : public Error {
 public:
  using Error::Error;
};

// A worker tried to read a buffer that is not in its object store, or a
// channel delivered a message that does not match the posted receive.
class LivenessFault : public Error {
 public:
  using Error::Error;
};

class NumericalMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace mpmd

#endif  // MPMD_ERRORS_H_
