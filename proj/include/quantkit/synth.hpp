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

// Deterministic synthetic transformer weights: Gaussian base matrices with
// outlier walls (whole input columns of large magnitude) written into chosen
// kinds of chosen blocks.

#include <quantkit/model_store.hpp>
#include <quantkit/types.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace quantkit {

struct SynthConfig {
  int blocks = 80;
  Index dim = 64;
  Index kv_dim = 0;   // k/v output rows; 0 means dim
  Index ffn_dim = 0;  // up/gate rows and down columns; 0 means dim
  double base_std = 0.02;
  std::vector<int> wall_blocks = {0, 1, 3};
  std::vector<LayerKind> wall_kinds = {LayerKind::Q, LayerKind::K, LayerKind::V, LayerKind::Up, LayerKind::Gate};
  Index wall_columns = 4;
  double wall_lo = 50.0;
  double wall_hi = 100.0;
  // Same wall columns for every wall kind within a block.
  bool shared_wall_columns = true;
  std::uint64_t seed = 0;

  void validate() const;

  /// (rows, cols) of a layer of the given kind.
  std::pair<Index, Index> shape(LayerKind kind) const;
};

/// Overwrites the listed columns of `w` with sign * U(lo, hi) entries drawn
/// from `seed`; everything else is copied unchanged.
MatrixF inject_walls(const MatrixF& w, std::span<const Index> columns, double lo, double hi, std::uint64_t seed);

/// `count` distinct columns in [0, m), ascending.
std::vector<Index> choose_wall_columns(Index m, Index count, std::uint64_t seed);

/// Wall columns the generator uses for one layer (empty for clean layers).
std::vector<Index> planned_wall_columns(const SynthConfig& cfg, LayerId layer);

Model generate(const SynthConfig& cfg);

}  // namespace quantkit
