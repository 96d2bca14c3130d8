// Copyright 2026 The Taggant Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAGGANT_ERROR_H_
#define TAGGANT_ERROR_H_

#include <stdexcept>
#include <string>

namespace taggant {

// Process exit codes used by the CLI. Every library error maps onto one.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kDataIntegrity = 3,
  kNumerical = 4,
  kDetectionInfrastructure = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// Bad parameters, shape mismatches, violated preconditions.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, what) {}
};

class DataIntegrityError : public Error {
 public:
  explicit DataIntegrityError(const std::string& what)
      : Error(ExitCode::kDataIntegrity, what) {}
};

class ChecksumError : public DataIntegrityError {
 public:
  using DataIntegrityError::DataIntegrityError;
};

class VersionError : public DataIntegrityError {
 public:
  using DataIntegrityError::DataIntegrityError;
};

// Non-finite values, divergence, degenerate objectives.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::kNumerical, what) {}
};

// Endpoint failures during probing.
class DetectionError : public Error {
 public:
  explicit DetectionError(const std::string& what)
      : Error(ExitCode::kDetectionInfrastructure, what) {}
};

}  // namespace taggant

#endif  // TAGGANT_ERROR_H_
