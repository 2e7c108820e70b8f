// Copyright 2026 The nmt-recycle Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace recycle {

// Base for every error the library raises. category() is a stable
// machine-readable tag; the CLI prints it as the first field of its
// one-line error report.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error("data", what) {}
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number of the offending input line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct LoadError : Error {
  explicit LoadError(const std::string& what) : Error("load", what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct TransferError : Error {
  explicit TransferError(const std::string& what) : Error("transfer", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace recycle
