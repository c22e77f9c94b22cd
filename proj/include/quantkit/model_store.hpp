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

// On-disk model container: `<path>.manifest.json` describing every record and
// `<path>.bin` holding the little-endian, row-major values back to back in
// manifest order.

#include <quantkit/quantizer.hpp>
#include <quantkit/types.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quantkit {

// Transformer block layout. The order fixes the layer axis used everywhere:
// layer_index = 7 * block + position of kind.
enum class LayerKind { Q, K, V, O, Up, Gate, Down };

inline constexpr int kKindsPerBlock = 7;
inline constexpr std::array<LayerKind, kKindsPerBlock> kLayerOrder = {
    LayerKind::Q, LayerKind::K, LayerKind::V, LayerKind::O, LayerKind::Up, LayerKind::Gate, LayerKind::Down};

std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> parse_kind(std::string_view name);

struct LayerId {
  int block = 0;
  LayerKind kind = LayerKind::Q;

  int index() const { return kKindsPerBlock * block + static_cast<int>(kind); }
  std::string name() const;

  static LayerId from_index(int layer_index);
};

inline int layer_index(int block, LayerKind kind) { return LayerId{block, kind}.index(); }

/// "blocks.{b}.{kind}" -> LayerId; nullopt for anything else.
std::optional<LayerId> parse_layer_name(std::string_view name);

enum class DType { F32, I8 };

std::string_view dtype_name(DType d);
std::size_t dtype_size(DType d);

struct TensorRecord {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  DType dtype = DType::F32;
  std::uint64_t byte_offset = 0;
  std::optional<std::string> scale_ref;
  bool aux = false;
  // Quantized (int8) records only.
  std::optional<GroupingScheme> grouping;
  std::optional<int> bits;

  std::uint64_t byte_size() const {
    return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * dtype_size(dtype);
  }
};

struct ModelManifest {
  int blocks = 0;
  std::vector<TensorRecord> records;

  const TensorRecord* find(std::string_view name) const;

  /// Non-aux records that name a layer, ordered by layer index.
  std::vector<const TensorRecord*> layer_records() const;

  /// Structural checks shared by FP and quantized manifests: positive shapes,
  /// unique names, non-overlapping byte ranges within `blob_size`, and a
  /// bijection between layer records and [0, 7 * blocks).
  void validate(std::uint64_t blob_size) const;

  /// Total bytes covered when records are packed in manifest order.
  std::uint64_t packed_size() const;
};

/// Manifest for `tensors` packed contiguously in the given order. Records
/// whose names are in `aux_names` are flagged aux.
ModelManifest make_manifest(int blocks, std::span<const Tensor> tensors,
                            std::span<const std::string> aux_names = {});

struct Model {
  ModelManifest manifest;
  std::vector<Tensor> tensors;  // manifest order

  const Tensor& tensor(std::string_view name) const;

  /// Non-aux layer tensors in layer-index order.
  std::vector<const Tensor*> layers() const;
};

std::filesystem::path manifest_path(const std::filesystem::path& base);
std::filesystem::path blob_path(const std::filesystem::path& base);

/// Writes `data` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

void write_model(const ModelManifest& manifest, std::span<const Tensor> tensors,
                 const std::filesystem::path& path);
inline void write_model(const Model& model, const std::filesystem::path& path) {
  write_model(model.manifest, model.tensors, path);
}
Model read_model(const std::filesystem::path& path);

struct QuantizedLayer {
  std::string name;
  QuantizedTensor tensor;
};

/// Weights quantized row-wise; each int8 record is paired with an fp32
/// `<name>.scales` record. Aux tensors are carried through unquantized.
struct QuantizedModel {
  int blocks = 0;
  std::vector<QuantizedLayer> layers;  // layer-index order
  std::vector<Tensor> aux;

  const QuantizedLayer& layer(std::string_view name) const;
};

void write_quantized_model(const QuantizedModel& model, const std::filesystem::path& path);
QuantizedModel read_quantized_model(const std::filesystem::path& path);

/// Manifest JSON text exactly as written to disk.
std::string manifest_to_json(const ModelManifest& manifest);
ModelManifest manifest_from_json(std::string_view text);

}  // namespace quantkit
