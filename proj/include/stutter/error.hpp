// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stutter {

enum class ErrorCode {
  InvalidArgument,
  MalformedHeader,
  UnsupportedEncoding,
  SegmentTooShort,
  BadBand,
  IndexOutOfRange,
  ShapeMismatch,
  NaNDetected,
  EmptyDataset,
  EmptyClass,
  CorruptModel,
  NoSegments,
  OutOfRange,
  SingleClass,
  NoConvergence,
  NotTrained,
  IoFailure,
  OutOfOrderTimestamp,
  InsufficientHistory,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for errors caused by bad input (files, flags, data) rather than a
/// fault inside the toolkit. The CLI maps these to exit status 1.
bool is_user_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stutter
