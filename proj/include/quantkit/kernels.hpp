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

// Quantized W * A. The integer core accumulates exactly; scales are applied
// afterwards, either as the outer product s_w * s_a^T (per-channel) or per
// weight group on the partial sums (per-group).

#include <quantkit/quantizer.hpp>
#include <quantkit/types.hpp>

namespace quantkit {

/// True when M * qmax^2 fits a signed 32-bit accumulator.
bool fits_int32_accumulator(Index inner, const QuantParams& params);

/// Weights per-channel (N x M, row scales), activations per-column (M x P).
MatrixF matmul_per_channel(const QuantizedTensor& weights, const QuantizedTensor& activations);

/// Weights per-group (N x M, N x M/g scales), activations per-column. Group
/// contributions are combined in fp64 in ascending group order.
MatrixF matmul_per_group(const QuantizedTensor& weights, const QuantizedTensor& activations);

/// fp64 W * A with a fixed i-j-k loop order.
template <typename DW, typename DA>
MatrixD reference_matmul_fp(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DA>& a) {
  if (w.cols() != a.rows()) throw ValidationError("reference_matmul_fp: inner dimensions differ");
  MatrixD out(w.rows(), a.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < w.cols(); ++k) acc += static_cast<double>(w(i, k)) * static_cast<double>(a(k, j));
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace quantkit
