// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <functional>

#include "stutter/assessment.hpp"
#include "stutter/error.hpp"
#include "stutter/session.hpp"
#include "test_support.hpp"

using namespace stutter;
using testing_support::TempDir;

namespace {

SessionRecord rec(const std::string& id, std::int64_t ts, double p, double r) {
  return {id, ts, p, r, "reports/" + id + "_" + std::to_string(ts) + ".json"};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Session, AppendAndReload) {
  TempDir dir("sess");
  auto path = dir / "s.jsonl";
  {
    SessionStore s(path);
    EXPECT_TRUE(s.records().empty());
    s.append(rec("p1", 100, 80, 60));
    s.append(rec("p2", 50, 10, 10));
    s.append(rec("p1", 200, 20, 20));
  }
  SessionStore s(path);
  ASSERT_EQ(s.records().size(), 3u);
  EXPECT_EQ(s.records()[0], rec("p1", 100, 80, 60));
  auto p1 = s.sessions("p1");
  ASSERT_EQ(p1.size(), 2u);
  EXPECT_EQ(p1[1], rec("p1", 200, 20, 20));
  EXPECT_TRUE(s.sessions("nobody").empty());
  EXPECT_TRUE(s.warnings().empty());
}

TEST(Session, RejectsOutOfOrderAndBadSeverity) {
  TempDir dir("sess");
  SessionStore s(dir / "s.jsonl");
  s.append(rec("p", 10, 1, 1));
  EXPECT_EQ(code_of([&] { s.append(rec("p", 10, 1, 1)); }), ErrorCode::OutOfOrderTimestamp);
  EXPECT_EQ(code_of([&] { s.append(rec("p", 5, 1, 1)); }), ErrorCode::OutOfOrderTimestamp);
  EXPECT_EQ(code_of([&] { s.append(rec("p", 20, 101, 1)); }), ErrorCode::OutOfRange);
  EXPECT_EQ(code_of([&] { s.append(rec("p", 20, 1, -1)); }), ErrorCode::OutOfRange);
  // another patient has its own clock
  s.append(rec("q", 5, 1, 1));
  EXPECT_EQ(SessionStore(dir / "s.jsonl").records().size(), 2u);
}

TEST(Session, ThousandAppends) {
  TempDir dir("sess");
  auto path = dir / "s.jsonl";
  SessionStore s(path);
  for (int i = 0; i < 1000; ++i) s.append(rec("p" + std::to_string(i % 7), 1000 + i, i % 101, (3 * i) % 101));
  SessionStore back(path);
  ASSERT_EQ(back.records().size(), 1000u);
  EXPECT_EQ(back.records(), s.records());
  std::size_t total = 0;
  for (int k = 0; k < 7; ++k) {
    auto ss = back.sessions("p" + std::to_string(k));
    for (std::size_t i = 1; i < ss.size(); ++i) EXPECT_LT(ss[i - 1].timestamp, ss[i].timestamp);
    total += ss.size();
  }
  EXPECT_EQ(total, 1000u);
}

TEST(Session, FirstAgainstLatest) {
  TempDir dir("sess");
  SessionStore s(dir / "s.jsonl");
  s.append(rec("p", 1, 80, 60));
  EXPECT_EQ(code_of([&] { improvement_inputs(s, "p"); }), ErrorCode::InsufficientHistory);
  EXPECT_EQ(code_of([&] { improvement_inputs(s, "missing"); }), ErrorCode::InsufficientHistory);
  s.append(rec("p", 2, 20, 20));
  auto in = improvement_inputs(s, "p");
  EXPECT_EQ(in.initial_prolongation, 80);
  EXPECT_EQ(in.current_prolongation, 20);
  EXPECT_EQ(in.initial_repetition, 60);
  EXPECT_EQ(in.current_repetition, 20);
  EXPECT_EQ(improvement_bucket(in.initial_prolongation, in.current_prolongation, in.initial_repetition,
                               in.current_repetition)
                .level,
            2);
}

TEST(Session, InsufficientHistoryNamesPatient) {
  TempDir dir("sess");
  SessionStore s(dir / "s.jsonl");
  s.append(rec("alice", 1, 5, 5));
  try {
    improvement_inputs(s, "alice");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient history for patient alice"), std::string::npos);
  }
}

TEST(Session, MiddleSessionsDoNotMatter) {
  TempDir dir("sess");
  SessionStore a(dir / "a.jsonl"), b(dir / "b.jsonl");
  a.append(rec("p", 1, 70, 50));
  a.append(rec("p", 9, 30, 10));
  b.append(rec("p", 1, 70, 50));
  b.append(rec("p", 3, 99, 0));
  b.append(rec("p", 5, 0, 99));
  b.append(rec("p", 9, 30, 10));
  auto x = improvement_inputs(a, "p"), y = improvement_inputs(b, "p");
  EXPECT_EQ(x.current_prolongation, y.current_prolongation);
  EXPECT_EQ(x.current_repetition, y.current_repetition);
  EXPECT_EQ(x.initial_prolongation, y.initial_prolongation);
}

TEST(Session, WindowedMean) {
  TempDir dir("sess");
  SessionStore s(dir / "s.jsonl");
  s.append(rec("p", 1, 90, 90));
  s.append(rec("p", 2, 60, 30));
  s.append(rec("p", 3, 40, 10));
  auto w2 = improvement_inputs_windowed(s, "p", 2);
  EXPECT_EQ(w2.initial_prolongation, 90);
  EXPECT_EQ(w2.current_prolongation, 50);
  EXPECT_EQ(w2.current_repetition, 20);
  // the window never reaches back to the first session
  auto wide = improvement_inputs_windowed(s, "p", 10);
  EXPECT_EQ(wide.current_prolongation, 50);
  auto w1 = improvement_inputs_windowed(s, "p", 1);
  EXPECT_EQ(w1.current_prolongation, 40);
  EXPECT_EQ(code_of([&] { improvement_inputs_windowed(s, "p", 0); }), ErrorCode::InvalidArgument);
}

TEST(Session, TornLastLineIsSkipped) {
  TempDir dir("sess");
  auto path = dir / "s.jsonl";
  {
    SessionStore s(path);
    s.append(rec("p", 1, 10, 10));
    s.append(rec("p", 2, 20, 20));
  }
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"patient_id":"p","ts":3,"prolo)";
  }
  SessionStore s(path);
  EXPECT_EQ(s.records().size(), 2u);
  EXPECT_EQ(s.warnings().size(), 1u);
  s.append(rec("p", 4, 40, 40));
  SessionStore again(path);
  ASSERT_EQ(again.records().size(), 3u);
  EXPECT_EQ(again.records().back(), rec("p", 4, 40, 40));
  EXPECT_EQ(again.warnings().size(), 1u);
}
