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

#include <quantkit/model_store.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace quantkit {

static_assert(std::endian::native == std::endian::little, "blob layout assumes a little-endian host");

namespace {

using json = nlohmann::json;

constexpr std::string_view kKindNames[kKindsPerBlock] = {"q", "k", "v", "o", "up", "gate", "down"};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return data;
}

json grouping_to_json(const GroupingScheme& g) {
  json j;
  j["mode"] = g.is_per_group() ? "per_group" : "per_channel";
  if (g.is_per_group()) j["group_size"] = g.group_size;
  return j;
}

GroupingScheme grouping_from_json(const json& j) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "per_channel") return GroupingScheme::per_channel();
  if (mode == "per_group") return GroupingScheme::per_group(j.at("group_size").get<Index>());
  throw ValidationError("unknown grouping mode '" + mode + "'");
}

template <typename Scalar>
void copy_into_blob(std::string& blob, const TensorRecord& rec, const Matrix<Scalar>& m) {
  std::memcpy(blob.data() + rec.byte_offset, m.data(), rec.byte_size());
}

template <typename Scalar>
Matrix<Scalar> copy_from_blob(const std::string& blob, const TensorRecord& rec) {
  Matrix<Scalar> m(rec.rows, rec.cols);
  std::memcpy(m.data(), blob.data() + rec.byte_offset, rec.byte_size());
  return m;
}

void check_packed(const ModelManifest& manifest) {
  std::uint64_t offset = 0;
  for (const auto& r : manifest.records) {
    if (r.byte_offset != offset) {
      throw ValidationError("record '" + r.name + "' is not packed in manifest order (offset " +
                            std::to_string(r.byte_offset) + ", expected " + std::to_string(offset) + ")");
    }
    offset += r.byte_size();
  }
}

void write_pair(const ModelManifest& manifest, const std::string& blob, const std::filesystem::path& path) {
  write_file_atomic(blob_path(path), blob);
  write_file_atomic(manifest_path(path), manifest_to_json(manifest));
}

std::pair<ModelManifest, std::string> read_pair(const std::filesystem::path& path) {
  const auto mpath = manifest_path(path);
  const auto bpath = blob_path(path);
  if (!std::filesystem::exists(mpath)) throw IoError(mpath.string(), "manifest not found");
  if (!std::filesystem::exists(bpath)) throw IoError(bpath.string(), "blob not found");
  ModelManifest manifest = manifest_from_json(read_file(mpath));
  std::string blob = read_file(bpath);
  manifest.validate(blob.size());
  return {std::move(manifest), std::move(blob)};
}

}  // namespace

std::string_view kind_name(LayerKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<LayerKind> parse_kind(std::string_view name) {
  for (int i = 0; i < kKindsPerBlock; ++i) {
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  }
  return std::nullopt;
}

std::string LayerId::name() const { return "blocks." + std::to_string(block) + "." + std::string(kind_name(kind)); }

LayerId LayerId::from_index(int layer_index) {
  if (layer_index < 0) throw ValidationError("negative layer index");
  return {layer_index / kKindsPerBlock, kLayerOrder[layer_index % kKindsPerBlock]};
}

std::optional<LayerId> parse_layer_name(std::string_view name) {
  constexpr std::string_view prefix = "blocks.";
  if (!name.starts_with(prefix)) return std::nullopt;
  name.remove_prefix(prefix.size());
  const auto dot = name.find('.');
  if (dot == std::string_view::npos || dot == 0) return std::nullopt;
  const auto digits = name.substr(0, dot);
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  if (digits.size() > 1 && digits.front() == '0') return std::nullopt;
  if (digits.size() > 9) return std::nullopt;
  const auto kind = parse_kind(name.substr(dot + 1));
  if (!kind) return std::nullopt;
  return LayerId{std::stoi(std::string(digits)), *kind};
}

std::string_view dtype_name(DType d) { return d == DType::F32 ? "fp32" : "int8"; }

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 1; }

const TensorRecord* ModelManifest::find(std::string_view name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<const TensorRecord*> ModelManifest::layer_records() const {
  std::vector<std::pair<int, const TensorRecord*>> keyed;
  for (const auto& r : records) {
    if (r.aux) continue;
    if (const auto id = parse_layer_name(r.name)) keyed.emplace_back(id->index(), &r);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<const TensorRecord*> out;
  out.reserve(keyed.size());
  for (const auto& [idx, r] : keyed) out.push_back(r);
  return out;
}

std::uint64_t ModelManifest::packed_size() const {
  std::uint64_t total = 0;
  for (const auto& r : records) total += r.byte_size();
  return total;
}

void ModelManifest::validate(std::uint64_t blob_size) const {
  if (blocks < 1) throw ValidationError("manifest must declare at least one block");

  std::set<std::string, std::less<>> names;
  std::set<std::string, std::less<>> scale_refs;
  for (const auto& r : records) {
    if (r.rows < 1 || r.cols < 1) throw ValidationError("record '" + r.name + "' has a non-positive shape");
    if (!names.insert(r.name).second) throw ValidationError("duplicate record name '" + r.name + "'");
    if (r.scale_ref) scale_refs.insert(*r.scale_ref);
  }

  std::vector<const TensorRecord*> by_offset;
  for (const auto& r : records) by_offset.push_back(&r);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const auto* a, const auto* b) { return a->byte_offset < b->byte_offset; });
  std::uint64_t end = 0;
  const TensorRecord* prev = nullptr;
  for (const auto* r : by_offset) {
    if (prev && r->byte_offset < end) {
      throw ValidationError("records '" + prev->name + "' and '" + r->name + "' overlap");
    }
    end = r->byte_offset + r->byte_size();
    if (end > blob_size) {
      throw ValidationError("blob underrun: record '" + r->name + "' needs bytes up to " + std::to_string(end) +
                            " but blob has " + std::to_string(blob_size));
    }
    prev = r;
  }

  // Layer records must cover [0, 7 * blocks) exactly once.
  std::vector<bool> seen(static_cast<std::size_t>(kKindsPerBlock) * blocks, false);
  std::size_t layer_count = 0;
  for (const auto& r : records) {
    if (r.aux) continue;
    const auto id = parse_layer_name(r.name);
    if (!id) {
      if (!scale_refs.contains(r.name)) {
        throw ValidationError("record '" + r.name + "' is neither a layer, a scale record, nor aux");
      }
      continue;
    }
    if (id->block >= blocks) {
      throw ValidationError("record '" + r.name + "' refers to block beyond " + std::to_string(blocks));
    }
    seen[id->index()] = true;
    ++layer_count;
  }
  if (layer_count != seen.size() || !std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw ValidationError("expected " + std::to_string(seen.size()) + " layer records for " +
                          std::to_string(blocks) + " blocks, found " + std::to_string(layer_count));
  }

  for (const auto& ref : scale_refs) {
    const auto* target = find(ref);
    if (!target) throw ValidationError("scale_ref '" + ref + "' names no record");
    if (target->dtype != DType::F32) throw ValidationError("scale record '" + ref + "' must be fp32");
  }
}

ModelManifest make_manifest(int blocks, std::span<const Tensor> tensors, std::span<const std::string> aux_names) {
  ModelManifest m;
  m.blocks = blocks;
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    TensorRecord r;
    r.name = t.name;
    r.rows = t.rows();
    r.cols = t.cols();
    r.dtype = DType::F32;
    r.byte_offset = offset;
    r.aux = std::find(aux_names.begin(), aux_names.end(), t.name) != aux_names.end();
    offset += r.byte_size();
    m.records.push_back(std::move(r));
  }
  return m;
}

const Tensor& Model::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ValidationError("no tensor named '" + std::string(name) + "'");
}

std::vector<const Tensor*> Model::layers() const {
  std::vector<const Tensor*> out;
  for (const auto* r : manifest.layer_records()) out.push_back(&tensor(r->name));
  return out;
}

const QuantizedLayer& QuantizedModel::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw ValidationError("no quantized layer named '" + std::string(name) + "'");
}

std::filesystem::path manifest_path(const std::filesystem::path& base) {
  return std::filesystem::path(base.string() + ".manifest.json");
}

std::filesystem::path blob_path(const std::filesystem::path& base) { return std::filesystem::path(base.string() + ".bin"); }

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IoError(tmp.string(), "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError(path.string(), "rename failed: " + ec.message());
  }
}

std::string manifest_to_json(const ModelManifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records) {
    json j;
    j["name"] = r.name;
    j["shape"] = {r.rows, r.cols};
    j["dtype"] = dtype_name(r.dtype);
    j["byte_offset"] = r.byte_offset;
    if (r.scale_ref) j["scale_ref"] = *r.scale_ref;
    if (r.aux) j["aux"] = true;
    if (r.grouping) j["grouping"] = grouping_to_json(*r.grouping);
    if (r.bits) j["bits"] = *r.bits;
    records.push_back(std::move(j));
  }
  json doc;
  doc["version"] = 1;
  doc["blocks"] = manifest.blocks;
  doc["records"] = std::move(records);
  return doc.dump(2) + "\n";
}

ModelManifest manifest_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed manifest JSON: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported manifest version");
    ModelManifest m;
    m.blocks = doc.at("blocks").get<int>();
    for (const auto& j : doc.at("records")) {
      TensorRecord r;
      r.name = j.at("name").get<std::string>();
      const auto& shape = j.at("shape");
      if (!shape.is_array() || shape.size() != 2) throw ValidationError("record '" + r.name + "' shape must be [N, M]");
      r.rows = shape[0].get<Index>();
      r.cols = shape[1].get<Index>();
      const auto dtype = j.at("dtype").get<std::string>();
      if (dtype == "fp32") {
        r.dtype = DType::F32;
      } else if (dtype == "int8") {
        r.dtype = DType::I8;
      } else {
        throw ValidationError("record '" + r.name + "' has unknown dtype '" + dtype + "'");
      }
      r.byte_offset = j.at("byte_offset").get<std::uint64_t>();
      if (j.contains("scale_ref")) r.scale_ref = j["scale_ref"].get<std::string>();
      r.aux = j.value("aux", false);
      if (j.contains("grouping")) r.grouping = grouping_from_json(j["grouping"]);
      if (j.contains("bits")) r.bits = j["bits"].get<int>();
      m.records.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

void write_model(const ModelManifest& manifest, std::span<const Tensor> tensors, const std::filesystem::path& path) {
  check_packed(manifest);
  manifest.validate(manifest.packed_size());
  std::map<std::string_view, const Tensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) throw ValidationError("duplicate tensor name '" + t.name + "'");
  }

  std::string blob(manifest.packed_size(), '\0');
  for (const auto& r : manifest.records) {
    const auto it = by_name.find(r.name);
    if (it == by_name.end()) throw ValidationError("manifest record '" + r.name + "' has no matching tensor");
    const Tensor& t = *it->second;
    if (r.dtype != DType::F32) throw ValidationError("record '" + r.name + "' is not fp32");
    if (t.rows() != r.rows || t.cols() != r.cols) {
      throw ValidationError("tensor '" + r.name + "' shape does not match its manifest record");
    }
    copy_into_blob(blob, r, t.values);
  }
  if (tensors.size() != manifest.records.size()) {
    throw ValidationError("manifest has " + std::to_string(manifest.records.size()) + " records but " +
                          std::to_string(tensors.size()) + " tensors were given");
  }
  write_pair(manifest, blob, path);
}

Model read_model(const std::filesystem::path& path) {
  auto [manifest, blob] = read_pair(path);
  Model model;
  for (const auto& r : manifest.records) {
    if (r.dtype != DType::F32) {
      throw ValidationError("record '" + r.name + "' is " + std::string(dtype_name(r.dtype)) +
                            "; use read_quantized_model");
    }
    model.tensors.push_back({r.name, copy_from_blob<float>(blob, r)});
  }
  model.manifest = std::move(manifest);
  return model;
}

void write_quantized_model(const QuantizedModel& model, const std::filesystem::path& path) {
  ModelManifest manifest;
  manifest.blocks = model.blocks;
  std::uint64_t offset = 0;
  auto add = [&](TensorRecord r) {
    r.byte_offset = offset;
    offset += r.byte_size();
    manifest.records.push_back(std::move(r));
  };
  for (const auto& l : model.layers) {
    l.tensor.validate();
    if (l.tensor.axis != Axis::Rows) throw ValidationError("layer '" + l.name + "' is not row-wise quantized");
    TensorRecord q;
    q.name = l.name;
    q.rows = l.tensor.rows();
    q.cols = l.tensor.cols();
    q.dtype = DType::I8;
    q.scale_ref = l.name + ".scales";
    q.grouping = l.tensor.grouping;
    q.bits = l.tensor.params.bits;
    add(std::move(q));
    TensorRecord s;
    s.name = l.name + ".scales";
    s.rows = l.tensor.scales.rows();
    s.cols = l.tensor.scales.cols();
    add(std::move(s));
  }
  for (const auto& t : model.aux) {
    TensorRecord r;
    r.name = t.name;
    r.rows = t.rows();
    r.cols = t.cols();
    r.aux = true;
    add(std::move(r));
  }
  manifest.validate(offset);

  std::string blob(offset, '\0');
  std::size_t rec = 0;
  for (const auto& l : model.layers) {
    copy_into_blob(blob, manifest.records[rec++], l.tensor.values);
    copy_into_blob(blob, manifest.records[rec++], l.tensor.scales);
  }
  for (const auto& t : model.aux) copy_into_blob(blob, manifest.records[rec++], t.values);
  write_pair(manifest, blob, path);
}

QuantizedModel read_quantized_model(const std::filesystem::path& path) {
  auto [manifest, blob] = read_pair(path);
  QuantizedModel model;
  model.blocks = manifest.blocks;
  for (const auto* r : manifest.layer_records()) {
    if (r->dtype != DType::I8) throw ValidationError("layer record '" + r->name + "' is not int8");
    if (!r->scale_ref || !r->grouping || !r->bits) {
      throw ValidationError("int8 record '" + r->name + "' lacks scale_ref, grouping or bits");
    }
    const auto* s = manifest.find(*r->scale_ref);
    QuantizedTensor q{copy_from_blob<std::int8_t>(blob, *r), copy_from_blob<float>(blob, *s), *r->grouping,
                      QuantParams(*r->bits), Axis::Rows};
    q.validate();
    model.layers.push_back({r->name, std::move(q)});
  }
  for (const auto& r : manifest.records) {
    if (r.aux) {
      if (r.dtype != DType::F32) throw ValidationError("aux record '" + r.name + "' must be fp32");
      model.aux.push_back({r.name, copy_from_blob<float>(blob, r)});
    }
  }
  return model;
}

}  // namespace quantkit
