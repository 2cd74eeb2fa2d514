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

#ifndef MPMD_IDS_H_
#define MPMD_IDS_H_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>

namespace mpmd {

// Dense integer identifier tagged with the entity it names. A default
// constructed id is invalid.
template <typename Tag>
class Id {
 public:
  constexpr Id() = default;
  constexpr explicit Id(int32_t value) : value_(value) {}

  constexpr int32_t value() const { return value_; }
  constexpr bool valid() const { return value_ >= 0; }
  constexpr size_t index() const { return static_cast<size_t>(value_); }

  auto operator<=>(const Id&) const = default;

 private:
  int32_t value_ = -1;
};

template <typename Tag>
std::ostream& operator<<(std::ostream& os, Id<Tag> id) {
  return os << id.value();
}

using ValueId = Id<struct ValueTag>;
using OpId = Id<struct OpTag>;
using BufferId = Id<struct BufferTag>;
using TaskRef = Id<struct TaskTag>;

}  // namespace mpmd

template <typename Tag>
struct std::hash<mpmd::Id<Tag>> {
  size_t operator()(mpmd::Id<Tag> id) const noexcept { return std::hash<int32_t>()(id.value()); }
};

#endif  // MPMD_IDS_H_
