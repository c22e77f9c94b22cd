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

#include <quantkit/kernels.hpp>

#include <limits>

namespace quantkit {

namespace {

void check_operands(const QuantizedTensor& w, const QuantizedTensor& a) {
  if (w.axis != Axis::Rows) throw ValidationError("weights must be quantized row-wise");
  if (a.axis != Axis::Columns) throw ValidationError("activations must be quantized column-wise");
  if (w.cols() != a.rows()) {
    throw ValidationError("inner dimensions differ: weights have " + std::to_string(w.cols()) +
                          " columns, activations " + std::to_string(a.rows()) + " rows");
  }
}

// Integer W_block * A_block in Acc, exact.
template <typename Acc>
Matrix<Acc> integer_product(const QuantizedTensor& w, const QuantizedTensor& a, Index first, Index count) {
  return w.values.middleCols(first, count).template cast<Acc>() * a.values.middleRows(first, count).template cast<Acc>();
}

template <typename Acc>
MatrixF grouped_product(const QuantizedTensor& w, const QuantizedTensor& a) {
  const Index n = w.rows();
  const Index p = a.cols();
  const Index g = w.group_size();
  MatrixD acc = MatrixD::Zero(n, p);
  for (Index k = 0; k < w.groups_per_row(); ++k) {
    const Matrix<Acc> partial = integer_product<Acc>(w, a, k * g, g);
    for (Index i = 0; i < n; ++i) {
      const double s = static_cast<double>(w.scales(i, k));
      for (Index j = 0; j < p; ++j) acc(i, j) += static_cast<double>(partial(i, j)) * s;
    }
  }
  MatrixF out(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) out(i, j) = static_cast<float>(acc(i, j) * static_cast<double>(a.scales(0, j)));
  }
  return out;
}

}  // namespace

bool fits_int32_accumulator(Index inner, const QuantParams& params) {
  const auto q = static_cast<long double>(params.qmax());
  return static_cast<long double>(inner) * q * q <= static_cast<long double>(std::numeric_limits<std::int32_t>::max());
}

MatrixF matmul_per_channel(const QuantizedTensor& weights, const QuantizedTensor& activations) {
  check_operands(weights, activations);
  if (weights.groups_per_row() != 1) throw ValidationError("matmul_per_channel needs per-channel weights");
  const QuantParams params(std::max(weights.params.bits, activations.params.bits));
  const Index m = weights.cols();
  const MatrixD acc = fits_int32_accumulator(m, params)
                          ? integer_product<std::int32_t>(weights, activations, 0, m).cast<double>().eval()
                          : integer_product<std::int64_t>(weights, activations, 0, m).cast<double>().eval();
  // Outer-product epilogue: out(i, j) = acc(i, j) * s_w[i] * s_a[j].
  MatrixF out(acc.rows(), acc.cols());
  for (Index i = 0; i < acc.rows(); ++i) {
    const double sw = static_cast<double>(weights.scales(i, 0));
    for (Index j = 0; j < acc.cols(); ++j) {
      out(i, j) = static_cast<float>(acc(i, j) * sw * static_cast<double>(activations.scales(0, j)));
    }
  }
  return out;
}

MatrixF matmul_per_group(const QuantizedTensor& weights, const QuantizedTensor& activations) {
  check_operands(weights, activations);
  const QuantParams params(std::max(weights.params.bits, activations.params.bits));
  if (fits_int32_accumulator(weights.cols(), params)) return grouped_product<std::int32_t>(weights, activations);
  return grouped_product<std::int64_t>(weights, activations);
}

}  // namespace quantkit
