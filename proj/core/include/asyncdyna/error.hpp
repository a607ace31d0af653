// Copyright 2026 The asyncdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ASYNCDYNA_ERROR_HPP_
#define ASYNCDYNA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace asyncdyna {

// Raised when a computation produces or receives non-finite values
// (exploding gradients, NaN actions, diverged model predictions).
// Workers catch this, discard the offending step and keep running.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace asyncdyna

#endif  // ASYNCDYNA_ERROR_HPP_
