// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stutter {

struct SessionRecord {
  std::string patient_id;
  std::int64_t timestamp = 0;  // UTC seconds
  double prolongation = 0.0;   // severity, percent
  double repetition = 0.0;
  std::string report_path;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

/// Append-only JSON-lines history, one object per session. Lines that fail
/// to parse (for instance a torn final write) are skipped and reported in
/// `warnings()`.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  const std::vector<SessionRecord>& records() const { return records_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Sessions of one patient in timestamp order.
  std::vector<SessionRecord> sessions(const std::string& patient_id) const;

  /// Throws OutOfOrderTimestamp unless the timestamp is later than the
  /// patient's last one, OutOfRange for severities outside [0, 100],
  /// IoFailure when the write fails.
  void append(const SessionRecord& record);

 private:
  std::filesystem::path path_;
  std::vector<SessionRecord> records_;
  std::vector<std::string> warnings_;
};

struct ImprovementInputs {
  double initial_prolongation = 0.0;
  double current_prolongation = 0.0;
  double initial_repetition = 0.0;
  double current_repetition = 0.0;
};

/// First session against latest. Throws InsufficientHistory with fewer than
/// two sessions.
ImprovementInputs improvement_inputs(const SessionStore& store, const std::string& patient_id);

/// Same, but "current" is the mean of the last `window` sessions (at most
/// all sessions after the first).
ImprovementInputs improvement_inputs_windowed(const SessionStore& store, const std::string& patient_id,
                                              std::size_t window);

}  // namespace stutter
