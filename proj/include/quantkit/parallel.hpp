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

#include <cstddef>
#include <functional>

namespace quantkit {

/// Worker count: QUANTKIT_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t thread_budget();

/// Runs fn(0..n-1) across up to thread_budget() threads. Each index is handled
/// exactly once; the first exception thrown by any task is rethrown here.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace quantkit
