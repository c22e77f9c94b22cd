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

// Mixed per-channel / per-group plans: outlier-bearing layers get per-group
// scales, everything else stays per-channel.

#include <quantkit/analyzer.hpp>
#include <quantkit/model_store.hpp>
#include <quantkit/quantizer.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quantkit {

struct PlanConfig {
  enum class Selection { MaxAbsThreshold, TopK, Explicit };

  Selection selection = Selection::MaxAbsThreshold;
  double max_abs_threshold = 2.0;
  std::size_t top_k = 0;
  std::vector<std::string> explicit_layers;
  Index group_size = 1024;
  int bits = 8;

  static PlanConfig threshold(double tau, Index g = 1024, int bits = 8);
  static PlanConfig top(std::size_t k, Index g = 1024, int bits = 8);
  static PlanConfig named(std::vector<std::string> layers, Index g = 1024, int bits = 8);

  void validate() const;

  friend bool operator==(const PlanConfig&, const PlanConfig&) = default;
};

struct LayerAssignment {
  GroupingScheme grouping;
  // Set when the configured group size did not divide the layer's input
  // dimension and a smaller divisor was substituted.
  std::optional<Index> requested_group_size;

  friend bool operator==(const LayerAssignment&, const LayerAssignment&) = default;
};

struct QuantPlan {
  PlanConfig config;
  std::map<std::string, LayerAssignment, std::less<>> assignments;
  double per_group_fraction = 0.0;

  std::size_t per_group_count() const;
  /// Per-group layer names, sorted by name.
  std::vector<std::string> per_group_layers() const;

  friend bool operator==(const QuantPlan&, const QuantPlan&) = default;
};

/// Positions in `metrics` chosen by the config's selection rule, ascending.
/// MaxAbsThreshold keeps max_abs > tau; TopK takes the highest RMSE with ties
/// going to the lower layer index.
std::vector<std::size_t> select_layers(std::span<const LayerMetrics> metrics, const PlanConfig& cfg);

QuantPlan build_plan(std::span<const LayerMetrics> metrics, const PlanConfig& cfg);

/// Quantizes every layer under its assignment. Aux tensors pass through.
QuantizedModel apply_plan(const Model& model, const QuantPlan& plan);

std::string plan_to_json(const QuantPlan& plan);
QuantPlan plan_from_json(std::string_view text);

struct SweepRow {
  Index group_size = 0;
  std::vector<std::pair<std::string, double>> layer_rmse;
  double aggregate_rmse = 0.0;  // pooled over every element of the selected layers
};

/// One row per distinct size (first occurrence order) over the same layer set.
std::vector<SweepRow> sweep_group_size(const Model& model, std::span<const std::string> layers,
                                       std::span<const Index> sizes, const QuantParams& params);

/// group_size,aggregate_rmse,<layer>...
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace quantkit
