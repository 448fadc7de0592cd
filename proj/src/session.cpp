// SPDX-License-Identifier: Apache-2.0
#include "stutter/session.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stutter/error.hpp"

namespace stutter {
namespace {

nlohmann::json to_line(const SessionRecord& r) {
  return {{"patient_id", r.patient_id},
          {"ts", r.timestamp},
          {"prolongation", r.prolongation},
          {"repetition", r.repetition},
          {"report_path", r.report_path}};
}

SessionRecord from_line(const nlohmann::json& j) {
  SessionRecord r;
  j.at("patient_id").get_to(r.patient_id);
  j.at("ts").get_to(r.timestamp);
  j.at("prolongation").get_to(r.prolongation);
  j.at("repetition").get_to(r.repetition);
  j.at("report_path").get_to(r.report_path);
  return r;
}

bool severity_ok(double v) { return v >= 0.0 && v <= 100.0; }

}  // namespace

SessionStore::SessionStore(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read session store " + path_.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      SessionRecord r = from_line(nlohmann::json::parse(line));
      if (!severity_ok(r.prolongation) || !severity_ok(r.repetition))
        throw std::invalid_argument("severity out of range");
      records_.push_back(std::move(r));
    } catch (const std::exception&) {
      warnings_.push_back(path_.string() + ":" + std::to_string(line_no) + ": skipped unreadable record");
    }
  }
}

std::vector<SessionRecord> SessionStore::sessions(const std::string& patient_id) const {
  std::vector<SessionRecord> out;
  for (const auto& r : records_) {
    if (r.patient_id == patient_id) out.push_back(r);
  }
  return out;
}

void SessionStore::append(const SessionRecord& record) {
  if (!severity_ok(record.prolongation) || !severity_ok(record.repetition))
    throw Error(ErrorCode::OutOfRange, "severity must lie in [0, 100]");
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->patient_id != record.patient_id) continue;
    if (record.timestamp <= it->timestamp) {
      throw Error(ErrorCode::OutOfOrderTimestamp, "session at " + std::to_string(record.timestamp) +
                                                      " is not after " + std::to_string(it->timestamp) +
                                                      " for patient " + record.patient_id);
    }
    break;
  }

  // A torn last line must not swallow the new record.
  bool need_newline = false;
  std::error_code ec;
  if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > 0) {
    std::ifstream in(path_, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    need_newline = last != '\n';
  }
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open session store " + path_.string());
  if (need_newline) out << '\n';
  out << to_line(record).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path_.string());
  records_.push_back(record);
}

ImprovementInputs improvement_inputs(const SessionStore& store, const std::string& patient_id) {
  return improvement_inputs_windowed(store, patient_id, 1);
}

ImprovementInputs improvement_inputs_windowed(const SessionStore& store, const std::string& patient_id,
                                              std::size_t window) {
  if (window == 0) throw Error(ErrorCode::InvalidArgument, "window must be at least 1");
  auto s = store.sessions(patient_id);
  if (s.size() < 2) {
    throw Error(ErrorCode::InsufficientHistory, "insufficient history for patient " + patient_id + ": " +
                                                    std::to_string(s.size()) + " session(s), need 2");
  }
  window = std::min(window, s.size() - 1);
  ImprovementInputs in;
  in.initial_prolongation = s.front().prolongation;
  in.initial_repetition = s.front().repetition;
  for (std::size_t i = s.size() - window; i < s.size(); ++i) {
    in.current_prolongation += s[i].prolongation;
    in.current_repetition += s[i].repetition;
  }
  in.current_prolongation /= static_cast<double>(window);
  in.current_repetition /= static_cast<double>(window);
  return in;
}

}  // namespace stutter
