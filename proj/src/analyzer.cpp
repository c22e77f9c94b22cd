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

#include <quantkit/analyzer.hpp>
#include <quantkit/parallel.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

namespace quantkit {

namespace {

std::string group_column(Index g) { return "rmse_g" + std::to_string(g); }

std::string primary_column(const GroupingScheme& g) {
  return g.is_per_group() ? group_column(g.group_size) : "rmse_pc";
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view s, std::string_view column) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("CSV column '" + std::string(column) + "': cannot parse '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void detail::check_finite(bool finite, const char* where) {
  if (!finite) throw ValidationError(std::string(where) + ": input contains NaN or Inf");
}

void WallDetectorConfig::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) throw ValidationError("wall threshold must be positive");
  if (!(row_fraction > 0.0 && row_fraction <= 1.0)) throw ValidationError("wall row fraction must be in (0, 1]");
}

double robust_rms(const MatrixF& w) {
  if (w.size() == 0) return 0.0;
  std::vector<float> mags(w.data(), w.data() + w.size());
  for (auto& m : mags) m = std::abs(m);
  const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  double median = *mid;
  if (mags.size() % 2 == 0) {
    median = 0.5 * (median + static_cast<double>(*std::max_element(mags.begin(), mid)));
  }
  if (median > 0.0) return median / 0.6744897501960817;
  return std::sqrt(w.cast<double>().squaredNorm() / static_cast<double>(w.size()));
}

std::vector<Index> detect_walls(const MatrixF& w, const WallDetectorConfig& cfg) {
  cfg.validate();
  detail::check_finite(w.allFinite(), "detect_walls");
  const double theta = cfg.mode == WallDetectorConfig::Mode::Absolute ? cfg.threshold : cfg.threshold * robust_rms(w);
  const double needed = cfg.row_fraction * static_cast<double>(w.rows());

  std::vector<Index> walls;
  for (Index j = 0; j < w.cols(); ++j) {
    const auto count = (w.col(j).cast<double>().cwiseAbs().array() > theta).count();
    if (count > 0 && static_cast<double>(count) >= needed) walls.push_back(j);
  }
  return walls;
}

std::vector<LayerMetrics> profile_model(const Model& model, const GroupingScheme& grouping,
                                        const QuantParams& params, const WallDetectorConfig& cfg,
                                        std::span<const Index> extra_group_sizes) {
  cfg.validate();
  const auto layers = model.layers();
  std::vector<LayerMetrics> out(layers.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    const Tensor& t = *layers[i];
    LayerMetrics& m = out[i];
    m.layer_index = parse_layer_name(t.name)->index();
    m.name = t.name;
    m.rows = t.rows();
    m.cols = t.cols();
    m.max_abs = layer_max_abs(t.values);
    m.rmse = layer_rmse(t.values, grouping, params);
    m.grouping = grouping;
    m.bits = params.bits;
    m.wall_columns = detect_walls(t.values, cfg);
    for (const Index g : extra_group_sizes) {
      const auto scheme = GroupingScheme::per_group(largest_divisor_at_most(t.cols(), g));
      m.rmse_by_group.emplace_back(g, layer_rmse(t.values, scheme, params));
    }
  });
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_number(float v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_to_csv(std::span<const LayerMetrics> metrics) {
  std::string out = "layer_index,name,block,kind,max_abs,";
  const GroupingScheme primary = metrics.empty() ? GroupingScheme::per_channel() : metrics.front().grouping;
  out += primary_column(primary);
  if (!metrics.empty()) {
    for (const auto& [g, _] : metrics.front().rmse_by_group) out += "," + group_column(g);
  }
  out += ",wall_count,rows,cols\n";

  for (const auto& m : metrics) {
    out += std::to_string(m.layer_index) + "," + m.name + "," + std::to_string(m.block()) + "," +
           std::string(kind_name(m.kind())) + "," + format_number(static_cast<float>(m.max_abs)) + "," +
           format_number(m.rmse);
    for (const auto& [g, r] : m.rmse_by_group) out += "," + format_number(r);
    out += "," + std::to_string(m.wall_columns.size()) + "," + std::to_string(m.rows) + "," + std::to_string(m.cols) +
           "\n";
  }
  return out;
}

std::vector<LayerMetrics> metrics_from_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ValidationError("metrics CSV is empty");

  const auto header = split(lines.front(), ',');
  std::map<std::string_view, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto require = [&](std::string_view name) {
    const auto it = col.find(name);
    if (it == col.end()) throw ValidationError("metrics CSV lacks column '" + std::string(name) + "'");
    return it->second;
  };
  const auto c_index = require("layer_index");
  const auto c_name = require("name");
  const auto c_max = require("max_abs");
  const auto c_rows = require("rows");
  const auto c_cols = require("cols");
  // The primary RMSE column is the one right after max_abs.
  const auto c_rmse = c_max + 1;
  if (c_rmse >= header.size()) throw ValidationError("metrics CSV lacks an RMSE column");
  GroupingScheme primary;
  if (header[c_rmse] != "rmse_pc") {
    if (!header[c_rmse].starts_with("rmse_g")) throw ValidationError("unexpected column after max_abs");
    primary = GroupingScheme::per_group(parse_field<Index>(header[c_rmse].substr(6), header[c_rmse]));
  }

  std::vector<LayerMetrics> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = split(lines[li], ',');
    if (f.size() != header.size()) {
      throw ValidationError("metrics CSV line " + std::to_string(li + 1) + " has " + std::to_string(f.size()) +
                            " fields, expected " + std::to_string(header.size()));
    }
    LayerMetrics m;
    m.layer_index = parse_field<int>(f[c_index], "layer_index");
    m.name = std::string(f[c_name]);
    m.max_abs = parse_field<float>(f[c_max], "max_abs");
    m.rmse = parse_field<double>(f[c_rmse], header[c_rmse]);
    m.rows = parse_field<Index>(f[c_rows], "rows");
    m.cols = parse_field<Index>(f[c_cols], "cols");
    m.grouping = primary;
    for (std::size_t c = c_rmse + 1; c < header.size(); ++c) {
      if (header[c].starts_with("rmse_g")) {
        m.rmse_by_group.emplace_back(parse_field<Index>(header[c].substr(6), header[c]),
                                     parse_field<double>(f[c], header[c]));
      }
    }
    const auto id = parse_layer_name(m.name);
    if (!id || id->index() != m.layer_index) {
      throw ValidationError("metrics CSV row '" + m.name + "' has inconsistent layer_index");
    }
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.layer_index < b.layer_index; });
  return out;
}

std::string metrics_to_plot_json(std::span<const LayerMetrics> metrics) {
  using json = nlohmann::json;
  json x = json::array(), names = json::array(), max_abs = json::array(), rmse = json::array();
  std::map<Index, json> groups;
  for (const auto& m : metrics) {
    x.push_back(m.layer_index);
    names.push_back(m.name);
    max_abs.push_back(m.max_abs);
    rmse.push_back(m.rmse);
    for (const auto& [g, r] : m.rmse_by_group) groups[g].push_back(r);
  }
  json series;
  series["max_abs"] = std::move(max_abs);
  series[metrics.empty() ? "rmse_pc" : primary_column(metrics.front().grouping)] = std::move(rmse);
  for (auto& [g, values] : groups) series[group_column(g)] = std::move(values);
  json doc;
  doc["x"] = std::move(x);
  doc["names"] = std::move(names);
  doc["series"] = std::move(series);
  return doc.dump(2) + "\n";
}

}  // namespace quantkit
