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

#include <quantkit/quantizer.hpp>

namespace quantkit {

QuantParams::QuantParams(int n) : bits(n) {
  if (n < 2 || n > 8) throw ValidationError("bits must be in [2, 8], got " + std::to_string(n));
}

GroupingScheme GroupingScheme::per_group(Index g) {
  if (g < 1) throw ValidationError("group size must be positive, got " + std::to_string(g));
  return {Mode::PerGroup, g};
}

void GroupingScheme::validate(Index m) const {
  if (!is_per_group()) return;
  if (group_size < 1) throw ValidationError("group size must be positive");
  if (m % group_size != 0) {
    throw ValidationError("group size " + std::to_string(group_size) + " does not divide dimension " +
                          std::to_string(m));
  }
}

std::string GroupingScheme::to_string() const {
  return is_per_group() ? "per_group(" + std::to_string(group_size) + ")" : "per_channel";
}

Index largest_divisor_at_most(Index m, Index g) {
  if (m < 1 || g < 1) throw ValidationError("largest_divisor_at_most needs positive arguments");
  for (Index d = std::min(m, g); d > 1; --d) {
    if (m % d == 0) return d;
  }
  return 1;
}

float scale_factor(float max_abs, const QuantParams& params) {
  if (std::isnan(max_abs) || max_abs < 0.0f) throw ValidationError("max_abs must be non-negative");
  if (std::isinf(max_abs)) detail::throw_non_finite("scale_factor");
  if (max_abs == 0.0f) return 1.0f;
  return max_abs / static_cast<float>(params.qmax());
}

void detail::throw_non_finite(const char* where) {
  throw ValidationError(std::string(where) + ": input contains NaN or Inf");
}

void QuantizedTensor::validate() const {
  const int qmax = params.qmax();
  if (values.size() > 0 && values.cast<int>().cwiseAbs().maxCoeff() > qmax) {
    throw ValidationError("quantized value outside [-qmax, qmax]");
  }
  if (scales.size() > 0 && !(scales.array() > 0.0f).all()) throw ValidationError("non-positive scale");
  if (axis == Axis::Rows) {
    grouping.validate(cols());
    const Index groups = cols() / grouping.effective_group_size(cols());
    if (scales.rows() != rows() || scales.cols() != groups) throw ValidationError("scale shape mismatch");
  } else if (scales.rows() != 1 || scales.cols() != cols()) {
    throw ValidationError("scale shape mismatch");
  }
}

MatrixF dequantize(const QuantizedTensor& q) { return dequantize_as<float>(q); }

}  // namespace quantkit
