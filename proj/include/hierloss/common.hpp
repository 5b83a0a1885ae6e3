/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace hierloss {

// Index of a node inside one Taxonomy. Ids are assigned in pre-order, so the
// root is always 0.
using NodeId = std::size_t;

// Index of a sample inside one Dataset (position in the sample vector).
using SampleIndex = std::size_t;

// All library failures surface as this exception; the message carries the
// offending name/id.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  throw Error(oss.str());
}

template <typename... Args>
void require(bool condition, Args&&... args) {
  if (!condition) fail(std::forward<Args>(args)...);
}

}  // namespace detail
}  // namespace hierloss
