// SPDX-License-Identifier: Apache-2.0
#include "stutter/error.hpp"

namespace stutter {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::BadBand: return "BadBand";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NaNDetected: return "NaNDetected";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::NoSegments: return "NoSegments";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotTrained: return "NotTrained";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::OutOfOrderTimestamp: return "OutOfOrderTimestamp";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
  }
  return "Unknown";
}

bool is_user_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NaNDetected:
    case ErrorCode::NoConvergence:
      return false;
    default:
      return true;
  }
}

}  // namespace stutter
