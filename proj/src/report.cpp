// Copyright 2026 The quantkit Authors.
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

#include <quantkit/analyzer.hpp>
#include <quantkit/report.hpp>
#include <quantkit/types.hpp>

#include <charconv>
#include <cmath>
#include <sstream>

namespace quantkit {

EvalSummary aggregate_accuracy(std::span<const TaskResult> tasks) {
  if (tasks.empty()) throw ValidationError("aggregate_accuracy needs at least one task");
  double sum = 0.0;
  double correct = 0.0;
  double questions = 0.0;
  for (const auto& t : tasks) {
    if (!(t.accuracy >= 0.0 && t.accuracy <= 1.0)) {
      throw ValidationError("task '" + t.name + "' accuracy must be in [0, 1]");
    }
    if (t.question_count < 1) throw ValidationError("task '" + t.name + "' needs a positive question count");
    sum += t.accuracy;
    correct += t.accuracy * static_cast<double>(t.question_count);
    questions += static_cast<double>(t.question_count);
  }
  EvalSummary s;
  s.tasks.assign(tasks.begin(), tasks.end());
  s.avg = sum / static_cast<double>(tasks.size());
  s.wt_avg = correct / questions;
  return s;
}

std::vector<TaskResult> tasks_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<TaskResult> out;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "task,accuracy,count") throw ValidationError("task CSV header must be 'task,accuracy,count'");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw ValidationError("task CSV line " + std::to_string(line_no) + " needs exactly three fields");
    }
    TaskResult t;
    t.name = line.substr(0, c1);
    const char* a = line.data() + c1 + 1;
    const char* a_end = line.data() + c2;
    const char* n = line.data() + c2 + 1;
    const char* n_end = line.data() + line.size();
    const auto ra = std::from_chars(a, a_end, t.accuracy);
    const auto rn = std::from_chars(n, n_end, t.question_count);
    if (ra.ec != std::errc() || ra.ptr != a_end || rn.ec != std::errc() || rn.ptr != n_end) {
      throw ValidationError("task CSV line " + std::to_string(line_no) + " has a malformed number");
    }
    out.push_back(std::move(t));
  }
  if (header) throw ValidationError("task CSV is empty");
  return out;
}

std::string summary_to_csv(const EvalSummary& summary) {
  return "metric,value\navg," + format_number(summary.avg) + "\nwt_avg," + format_number(summary.wt_avg) + "\n";
}

}  // namespace quantkit
