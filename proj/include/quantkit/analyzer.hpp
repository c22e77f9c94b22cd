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

// Per-layer weight profiling: max_abs, quantization RMSE and outlier "walls"
// (input columns whose entries dwarf the rest of the matrix).

#include <quantkit/model_store.hpp>
#include <quantkit/quantizer.hpp>
#include <quantkit/types.hpp>

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace quantkit {

struct WallDetectorConfig {
  enum class Mode { Relative, Absolute };

  Mode mode = Mode::Relative;
  double threshold = 20.0;     // kappa (Relative) or theta (Absolute)
  double row_fraction = 0.01;  // rho

  static WallDetectorConfig relative(double kappa, double rho = 0.01) { return {Mode::Relative, kappa, rho}; }
  static WallDetectorConfig absolute(double theta, double rho = 0.01) { return {Mode::Absolute, theta, rho}; }

  void validate() const;
};

struct LayerMetrics {
  int layer_index = 0;
  std::string name;
  Index rows = 0;
  Index cols = 0;
  double max_abs = 0.0;
  double rmse = 0.0;  // under `grouping`
  GroupingScheme grouping;
  int bits = 8;
  std::vector<Index> wall_columns;
  // Additional per-group RMSE columns keyed by the requested group size.
  std::vector<std::pair<Index, double>> rmse_by_group;

  int block() const { return LayerId::from_index(layer_index).block; }
  LayerKind kind() const { return LayerId::from_index(layer_index).kind; }
};

namespace detail {
void check_finite(bool finite, const char* where);
}

template <typename Derived>
double layer_max_abs(const Eigen::MatrixBase<Derived>& w) {
  detail::check_finite(w.allFinite(), "layer_max_abs");
  return w.size() == 0 ? 0.0 : static_cast<double>(w.cwiseAbs().maxCoeff());
}

/// sqrt(mean((w - dequantize(quantize(w)))^2)) over every element, in fp64.
template <typename Derived>
double layer_rmse(const Eigen::MatrixBase<Derived>& w, const GroupingScheme& grouping, const QuantParams& params) {
  if (w.size() == 0) return 0.0;
  const MatrixF restored = dequantize(quantize_weight(w, grouping, params));
  const double sum_sq = (w.template cast<double>() - restored.cast<double>()).squaredNorm();
  return std::sqrt(sum_sq / static_cast<double>(w.size()));
}

/// Scale of the bulk of the weights: median(|w|) / 0.6745, which equals the
/// RMS for a zero-mean Gaussian but ignores a minority of huge columns. Falls
/// back to the plain RMS when more than half the entries are zero.
double robust_rms(const MatrixF& w);

/// Columns j with at least rho * N entries |W(i, j)| > theta, ascending.
std::vector<Index> detect_walls(const MatrixF& w, const WallDetectorConfig& cfg = {});

/// One entry per non-aux layer in layer-index order. `extra_group_sizes`
/// adds rmse_by_group columns; a size that does not divide a layer's input
/// dimension is replaced by its largest divisor below it.
std::vector<LayerMetrics> profile_model(const Model& model, const GroupingScheme& grouping,
                                        const QuantParams& params, const WallDetectorConfig& cfg = {},
                                        std::span<const Index> extra_group_sizes = {});

/// CSV: layer_index,name,block,kind,max_abs,rmse_pc|rmse_g{g},rmse_g{g}...,wall_count,rows,cols
std::string metrics_to_csv(std::span<const LayerMetrics> metrics);
std::vector<LayerMetrics> metrics_from_csv(std::string_view text);

/// Plot data: {"x": [layer_index...], "names": [...], "series": {"max_abs": [...], "rmse_pc": [...], ...}}
std::string metrics_to_plot_json(std::span<const LayerMetrics> metrics);

/// Shortest round-trip decimal text, locale independent.
std::string format_number(double v);
std::string format_number(float v);

}  // namespace quantkit
