/* Copyright 2026 The gmaxsim Authors. All Rights Reserved.

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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace gmax {

enum class Errc {
  kInvalidLength,
  kInvalidSlo,
  kInvalidStageGraph,
  kMissingStageGraph,
  kUnexpectedStageGraph,
  kInvalidArgument,
  kInsufficientData,
  kNotFitted,
  kOversizedPattern,
  kNoMatch,
  kTooFewGraphs,
  kExpiredSlo,
  kEmptyQueue,
  kTooLarge,
  kInvalidTrace,
  kConfigError,
  kUnknownKind,
  kSchemaMismatch,
  kIoError,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

// Value-or-error for operations whose failure is an expected outcome
// (NoMatch, ExpiredSlo) and would be too hot to signal by throwing.
template <typename T>
class Expected {
 public:
  Expected(T value) : data_(std::move(value)) {}
  Expected(Error error) : data_(std::move(error)) {}

  bool has_value() const { return data_.index() == 0; }
  explicit operator bool() const { return has_value(); }

  const T& value() const& {
    if (!has_value()) throw std::get<1>(data_);
    return std::get<0>(data_);
  }
  T& value() & {
    if (!has_value()) throw std::get<1>(data_);
    return std::get<0>(data_);
  }
  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<1>(data_); }

 private:
  std::variant<T, Error> data_;
};

}  // namespace gmax
