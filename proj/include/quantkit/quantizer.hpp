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

// Symmetric n-bit integer quantization with per-channel and per-group scale
// sharing. Zero-point is always 0. Rounding is half-away-from-zero followed by
// a clamp to [-qmax, qmax].

#include <quantkit/types.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace quantkit {

struct QuantParams {
  int bits = 8;

  explicit QuantParams(int n = 8);

  /// 2^(bits-1) - 1, e.g. 127 for 8 bits.
  int qmax() const { return (1 << (bits - 1)) - 1; }
};

struct GroupingScheme {
  enum class Mode { PerChannel, PerGroup };

  Mode mode = Mode::PerChannel;
  Index group_size = 0;  // PerGroup only

  static GroupingScheme per_channel() { return {}; }
  static GroupingScheme per_group(Index g);

  bool is_per_group() const { return mode == Mode::PerGroup; }

  /// Number of values sharing one scale along a dimension of length `m`.
  Index effective_group_size(Index m) const { return is_per_group() ? group_size : m; }

  /// Throws ValidationError unless the scheme can partition a dimension of
  /// length `m` into whole groups.
  void validate(Index m) const;

  /// "per_channel" or "per_group(g)".
  std::string to_string() const;

  friend bool operator==(const GroupingScheme&, const GroupingScheme&) = default;
};

/// Largest divisor of `m` that does not exceed `g`.
Index largest_divisor_at_most(Index m, Index g);

enum class Axis { Rows, Columns };

/// Integer values plus the scales needed to recover them.
///
/// For Axis::Rows (weights, N x M) `scales` is N x (M / g); per-channel is the
/// g = M case with a single scale column. For Axis::Columns (activations,
/// M x P) `scales` is 1 x P.
struct QuantizedTensor {
  MatrixI8 values;
  MatrixF scales;
  GroupingScheme grouping;
  QuantParams params;
  Axis axis = Axis::Rows;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  Index groups_per_row() const { return axis == Axis::Rows ? scales.cols() : 1; }
  Index group_size() const {
    return axis == Axis::Rows ? values.cols() / std::max<Index>(scales.cols(), 1) : values.rows();
  }

  /// Scale that applies to element (i, j).
  float scale_at(Index i, Index j) const {
    return axis == Axis::Rows ? scales(i, j / group_size()) : scales(0, j);
  }

  /// Throws ValidationError if the range, scale positivity or scale-shape
  /// invariants do not hold.
  void validate() const;
};

/// max_abs / qmax, or 1 for an all-zero group.
float scale_factor(float max_abs, const QuantParams& params);

namespace detail {

void throw_non_finite(const char* where);

inline std::int8_t quantize_value(float x, float scale, int qmax) {
  const double r = std::round(static_cast<double>(x) / static_cast<double>(scale));
  return static_cast<std::int8_t>(std::clamp(r, -static_cast<double>(qmax), static_cast<double>(qmax)));
}

// Quantizes `in` (any dense 1-D block) into `out` using one shared scale.
template <typename In, typename Out>
float quantize_block(const In& in, Out&& out, const QuantParams& params) {
  if (!in.allFinite()) throw_non_finite("quantize");
  const float max_abs = in.size() == 0 ? 0.0f : static_cast<float>(in.cwiseAbs().maxCoeff());
  const float s = scale_factor(max_abs, params);
  const int qmax = params.qmax();
  for (Index k = 0; k < in.size(); ++k) out(k) = quantize_value(static_cast<float>(in(k)), s, qmax);
  return s;
}

}  // namespace detail

/// Quantizes one group of values with a single shared scale.
template <typename Derived>
std::pair<Vector<std::int8_t>, float> quantize_group(const Eigen::MatrixBase<Derived>& values,
                                                     const QuantParams& params) {
  const auto flat = values.derived().reshaped();
  Vector<std::int8_t> q(flat.size());
  const float s = detail::quantize_block(flat, q, params);
  return {std::move(q), s};
}

/// Quantizes an N x M weight row-wise. Groups are contiguous runs of g input
/// columns; per-channel uses the whole row.
template <typename Derived>
QuantizedTensor quantize_weight(const Eigen::MatrixBase<Derived>& w, const GroupingScheme& grouping,
                                const QuantParams& params) {
  const Index n = w.rows();
  const Index m = w.cols();
  grouping.validate(m);
  const Index g = grouping.effective_group_size(m);
  const Index groups = m / g;

  QuantizedTensor out{MatrixI8(n, m), MatrixF(n, groups), grouping, params, Axis::Rows};
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < groups; ++k) {
      auto dst = out.values.row(i).segment(k * g, g);
      out.scales(i, k) = detail::quantize_block(w.row(i).segment(k * g, g), dst, params);
    }
  }
  return out;
}

/// Quantizes an M x P activation with one scale per column.
template <typename Derived>
QuantizedTensor quantize_activation(const Eigen::MatrixBase<Derived>& a, const QuantParams& params) {
  const Index m = a.rows();
  const Index p = a.cols();
  QuantizedTensor out{MatrixI8(m, p), MatrixF(1, p), GroupingScheme::per_channel(), params, Axis::Columns};
  for (Index j = 0; j < p; ++j) {
    auto dst = out.values.col(j);
    out.scales(0, j) = detail::quantize_block(a.col(j), dst, params);
  }
  return out;
}

/// Element-wise q * scale evaluated in Scalar. With double the product is
/// exact; float output adds one rounding of the reconstructed value.
template <typename Scalar>
Matrix<Scalar> dequantize_as(const QuantizedTensor& q) {
  Matrix<Scalar> out(q.rows(), q.cols());
  if (q.axis == Axis::Columns) {
    out = q.values.cast<Scalar>() * q.scales.row(0).cast<Scalar>().asDiagonal();
    return out;
  }
  const Index g = q.group_size();
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index k = 0; k < q.scales.cols(); ++k) {
      out.row(i).segment(k * g, g) = q.values.row(i).segment(k * g, g).cast<Scalar>() * static_cast<Scalar>(q.scales(i, k));
    }
  }
  return out;
}

/// Element-wise q * scale in fp32.
MatrixF dequantize(const QuantizedTensor& q);

}  // namespace quantkit
