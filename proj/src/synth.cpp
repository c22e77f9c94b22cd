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

#include <quantkit/parallel.hpp>
#include <quantkit/rng.hpp>
#include <quantkit/synth.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace quantkit {

void SynthConfig::validate() const {
  if (blocks < 1) throw ValidationError("blocks must be positive");
  if (dim < 1 || kv_dim < 0 || ffn_dim < 0) throw ValidationError("dimensions must be positive");
  if (!(base_std >= 0.0) || !std::isfinite(base_std)) throw ValidationError("base_std must be non-negative");
  if (!(wall_lo <= wall_hi) || !std::isfinite(wall_lo) || !std::isfinite(wall_hi) || wall_lo < 0.0) {
    throw ValidationError("wall magnitude range must satisfy 0 <= lo <= hi");
  }
  for (const int b : wall_blocks) {
    if (b < 0 || b >= blocks) throw ValidationError("wall block " + std::to_string(b) + " outside [0, blocks)");
  }
  for (const auto k : wall_kinds) {
    if (k == LayerKind::O || k == LayerKind::Down) {
      throw ValidationError("walls are only injected into q, k, v, up and gate");
    }
  }
  if (!wall_blocks.empty() && !wall_kinds.empty() && (wall_columns < 0 || wall_columns >= dim)) {
    throw ValidationError("wall column count must be in [0, dim)");
  }
}

std::pair<Index, Index> SynthConfig::shape(LayerKind kind) const {
  const Index kv = kv_dim > 0 ? kv_dim : dim;
  const Index ffn = ffn_dim > 0 ? ffn_dim : dim;
  switch (kind) {
    case LayerKind::K:
    case LayerKind::V:
      return {kv, dim};
    case LayerKind::Up:
    case LayerKind::Gate:
      return {ffn, dim};
    case LayerKind::Down:
      return {dim, ffn};
    default:
      return {dim, dim};
  }
}

std::vector<Index> choose_wall_columns(Index m, Index count, std::uint64_t seed) {
  if (count < 0 || count > m) throw ValidationError("cannot choose that many wall columns");
  std::vector<Index> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), Index{0});
  SeededStream rng(seed);
  // Partial Fisher-Yates.
  for (Index i = 0; i < count; ++i) {
    const auto j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(m - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

MatrixF inject_walls(const MatrixF& w, std::span<const Index> columns, double lo, double hi, std::uint64_t seed) {
  if (lo > hi) throw ValidationError("wall magnitude range must satisfy lo <= hi");
  std::vector<Index> sorted(columns.begin(), columns.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ValidationError("wall columns repeat");
  for (const Index c : sorted) {
    if (c < 0 || c >= w.cols()) throw ValidationError("wall column " + std::to_string(c) + " out of range");
  }
  MatrixF out = w;
  SeededStream rng(seed);
  for (const Index c : columns) {
    for (Index i = 0; i < out.rows(); ++i) {
      const double mag = rng.uniform(lo, hi);
      out(i, c) = static_cast<float>(rng.coin() ? mag : -mag);
    }
  }
  return out;
}

std::vector<Index> planned_wall_columns(const SynthConfig& cfg, LayerId layer) {
  const bool block_hit = std::find(cfg.wall_blocks.begin(), cfg.wall_blocks.end(), layer.block) != cfg.wall_blocks.end();
  const bool kind_hit = std::find(cfg.wall_kinds.begin(), cfg.wall_kinds.end(), layer.kind) != cfg.wall_kinds.end();
  if (!block_hit || !kind_hit) return {};
  const Index m = cfg.shape(layer.kind).second;
  const std::string key = cfg.shared_wall_columns ? "blocks." + std::to_string(layer.block) + ".wall_columns"
                                                  : layer.name() + ".wall_columns";
  return choose_wall_columns(m, cfg.wall_columns, stream_seed(cfg.seed, key));
}

Model generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t count = static_cast<std::size_t>(cfg.blocks) * kKindsPerBlock;
  std::vector<Tensor> tensors(count);
  parallel_for(count, [&](std::size_t idx) {
    const LayerId id = LayerId::from_index(static_cast<int>(idx));
    const auto [rows, cols] = cfg.shape(id.kind);
    Tensor& t = tensors[idx];
    t.name = id.name();
    t.values.resize(rows, cols);
    SeededStream rng(cfg.seed, t.name);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) t.values(i, j) = static_cast<float>(cfg.base_std * rng.normal());
    }
    const auto walls = planned_wall_columns(cfg, id);
    if (!walls.empty()) {
      t.values = inject_walls(t.values, walls, cfg.wall_lo, cfg.wall_hi, stream_seed(cfg.seed, t.name + ".wall_values"));
    }
  });
  Model model;
  model.manifest = make_manifest(cfg.blocks, tensors);
  model.tensors = std::move(tensors);
  return model;
}

}  // namespace quantkit
