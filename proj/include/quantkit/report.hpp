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

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quantkit {

struct TaskResult {
  std::string name;
  double accuracy = 0.0;
  long long question_count = 1;
};

struct EvalSummary {
  std::vector<TaskResult> tasks;
  double avg = 0.0;     // mean of per-task accuracies
  double wt_avg = 0.0;  // total correct / total questions
};

EvalSummary aggregate_accuracy(std::span<const TaskResult> tasks);

/// Reads `task,accuracy,count` rows (header required).
std::vector<TaskResult> tasks_from_csv(std::string_view text);

/// metric,value rows for avg and wt_avg.
std::string summary_to_csv(const EvalSummary& summary);

}  // namespace quantkit
