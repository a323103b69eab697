// Copyright 2026 tmsynce contributors
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

#ifndef TMSYNCE_ERRORS_HPP
#define TMSYNCE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tmsynce {

/// Invalid configuration (bad dimensions, non-SPD covariance, schema violations).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite or out-of-contract input to a numerical routine.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Map inversion could not bracket/refine a root.
class InversionError : public std::runtime_error {
 public:
  explicit InversionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Map training diverged or was fed unusable samples.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tmsynce

#endif  // TMSYNCE_ERRORS_HPP
