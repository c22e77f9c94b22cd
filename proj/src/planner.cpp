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
#include <quantkit/planner.hpp>

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <set>

namespace quantkit {

namespace {

using json = nlohmann::json;

// Sum of squared round-trip errors, fp64.
double squared_error(const MatrixF& w, const GroupingScheme& grouping, const QuantParams& params) {
  const MatrixF restored = dequantize(quantize_weight(w, grouping, params));
  return (w.cast<double>() - restored.cast<double>()).squaredNorm();
}

LayerAssignment per_group_assignment(Index g, Index cols) {
  if (cols <= 0) return {GroupingScheme::per_group(g), std::nullopt};
  const Index effective = largest_divisor_at_most(cols, g);
  if (effective == g) return {GroupingScheme::per_group(g), std::nullopt};
  return {GroupingScheme::per_group(effective), g};
}

}  // namespace

PlanConfig PlanConfig::threshold(double tau, Index g, int bits) {
  PlanConfig c;
  c.selection = Selection::MaxAbsThreshold;
  c.max_abs_threshold = tau;
  c.group_size = g;
  c.bits = bits;
  return c;
}

PlanConfig PlanConfig::top(std::size_t k, Index g, int bits) {
  PlanConfig c;
  c.selection = Selection::TopK;
  c.top_k = k;
  c.group_size = g;
  c.bits = bits;
  return c;
}

PlanConfig PlanConfig::named(std::vector<std::string> layers, Index g, int bits) {
  PlanConfig c;
  c.selection = Selection::Explicit;
  c.explicit_layers = std::move(layers);
  c.group_size = g;
  c.bits = bits;
  return c;
}

void PlanConfig::validate() const {
  if (group_size < 1) throw ValidationError("group size must be >= 1");
  QuantParams{bits};
  if (selection == Selection::MaxAbsThreshold && !std::isfinite(max_abs_threshold)) {
    throw ValidationError("max_abs threshold must be finite");
  }
}

std::size_t QuantPlan::per_group_count() const {
  return static_cast<std::size_t>(std::count_if(assignments.begin(), assignments.end(),
                                                [](const auto& kv) { return kv.second.grouping.is_per_group(); }));
}

std::vector<std::string> QuantPlan::per_group_layers() const {
  std::vector<std::string> out;
  for (const auto& [name, a] : assignments) {
    if (a.grouping.is_per_group()) out.push_back(name);
  }
  return out;
}

std::vector<std::size_t> select_layers(std::span<const LayerMetrics> metrics, const PlanConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> chosen;
  switch (cfg.selection) {
    case PlanConfig::Selection::MaxAbsThreshold:
      for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (metrics[i].max_abs > cfg.max_abs_threshold) chosen.push_back(i);
      }
      break;
    case PlanConfig::Selection::TopK: {
      std::vector<std::size_t> order(metrics.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (metrics[a].rmse != metrics[b].rmse) return metrics[a].rmse > metrics[b].rmse;
        return metrics[a].layer_index < metrics[b].layer_index;
      });
      order.resize(std::min(cfg.top_k, order.size()));
      chosen = std::move(order);
      std::sort(chosen.begin(), chosen.end());
      break;
    }
    case PlanConfig::Selection::Explicit:
      for (const auto& name : cfg.explicit_layers) {
        const auto it = std::find_if(metrics.begin(), metrics.end(), [&](const auto& m) { return m.name == name; });
        if (it == metrics.end()) throw ValidationError("explicit layer '" + name + "' is not in the model");
        chosen.push_back(static_cast<std::size_t>(it - metrics.begin()));
      }
      std::sort(chosen.begin(), chosen.end());
      chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
      break;
  }
  return chosen;
}

QuantPlan build_plan(std::span<const LayerMetrics> metrics, const PlanConfig& cfg) {
  if (metrics.empty()) throw ValidationError("build_plan needs at least one layer");
  const auto chosen = select_layers(metrics, cfg);

  QuantPlan plan;
  plan.config = cfg;
  for (const auto& m : metrics) {
    if (!plan.assignments.emplace(m.name, LayerAssignment{}).second) {
      throw ValidationError("duplicate layer '" + m.name + "' in metrics");
    }
  }
  for (const auto i : chosen) {
    plan.assignments[metrics[i].name] = per_group_assignment(cfg.group_size, metrics[i].cols);
  }
  plan.per_group_fraction = static_cast<double>(plan.per_group_count()) / static_cast<double>(metrics.size());
  return plan;
}

QuantizedModel apply_plan(const Model& model, const QuantPlan& plan) {
  const QuantParams params(plan.config.bits);
  const auto layers = model.layers();

  std::set<std::string, std::less<>> model_names;
  for (const auto* t : layers) model_names.insert(t->name);
  std::vector<std::string> missing, extra;
  for (const auto& n : model_names) {
    if (!plan.assignments.contains(n)) missing.push_back(n);
  }
  for (const auto& [n, _] : plan.assignments) {
    if (!model_names.contains(n)) extra.push_back(n);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "plan does not match model layers;";
    if (!missing.empty()) {
      msg += " missing from plan:";
      for (const auto& n : missing) msg += " " + n;
    }
    if (!extra.empty()) {
      msg += (missing.empty() ? "" : ";");
      msg += " not in model:";
      for (const auto& n : extra) msg += " " + n;
    }
    throw ValidationError(msg);
  }

  QuantizedModel out;
  out.blocks = model.manifest.blocks;
  out.layers.resize(layers.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    const Tensor& t = *layers[i];
    const auto& grouping = plan.assignments.find(t.name)->second.grouping;
    out.layers[i] = {t.name, quantize_weight(t.values, grouping, params)};
  });
  for (const auto& r : model.manifest.records) {
    if (r.aux) out.aux.push_back(model.tensor(r.name));
  }
  return out;
}

std::string plan_to_json(const QuantPlan& plan) {
  json assignments = json::object();
  for (const auto& [name, a] : plan.assignments) {
    json j;
    j["mode"] = a.grouping.is_per_group() ? "per_group" : "per_channel";
    if (a.grouping.is_per_group()) j["group_size"] = a.grouping.group_size;
    if (a.requested_group_size) j["requested_group_size"] = *a.requested_group_size;
    assignments[name] = std::move(j);
  }
  json selection;
  switch (plan.config.selection) {
    case PlanConfig::Selection::MaxAbsThreshold:
      selection["mode"] = "max_abs_threshold";
      selection["value"] = plan.config.max_abs_threshold;
      break;
    case PlanConfig::Selection::TopK:
      selection["mode"] = "top_k";
      selection["value"] = plan.config.top_k;
      break;
    case PlanConfig::Selection::Explicit:
      selection["mode"] = "explicit";
      selection["layers"] = plan.config.explicit_layers;
      break;
  }
  json doc;
  doc["version"] = 1;
  doc["group_size"] = plan.config.group_size;
  doc["bits"] = plan.config.bits;
  doc["selection"] = std::move(selection);
  doc["assignments"] = std::move(assignments);
  doc["per_group_fraction"] = plan.per_group_fraction;
  return doc.dump(2) + "\n";
}

QuantPlan plan_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed plan JSON: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported plan version");
    QuantPlan plan;
    plan.config.group_size = doc.at("group_size").get<Index>();
    plan.config.bits = doc.at("bits").get<int>();
    if (doc.contains("selection")) {
      const auto& s = doc["selection"];
      const auto mode = s.at("mode").get<std::string>();
      if (mode == "max_abs_threshold") {
        plan.config.selection = PlanConfig::Selection::MaxAbsThreshold;
        plan.config.max_abs_threshold = s.at("value").get<double>();
      } else if (mode == "top_k") {
        plan.config.selection = PlanConfig::Selection::TopK;
        plan.config.top_k = s.at("value").get<std::size_t>();
      } else if (mode == "explicit") {
        plan.config.selection = PlanConfig::Selection::Explicit;
        plan.config.explicit_layers = s.at("layers").get<std::vector<std::string>>();
      } else {
        throw ValidationError("unknown selection mode '" + mode + "'");
      }
    }
    plan.config.validate();
    for (const auto& [name, j] : doc.at("assignments").items()) {
      LayerAssignment a;
      const auto mode = j.at("mode").get<std::string>();
      if (mode == "per_group") {
        a.grouping = GroupingScheme::per_group(j.at("group_size").get<Index>());
      } else if (mode != "per_channel") {
        throw ValidationError("layer '" + name + "' has unknown mode '" + mode + "'");
      }
      if (j.contains("requested_group_size")) a.requested_group_size = j["requested_group_size"].get<Index>();
      plan.assignments.emplace(name, a);
    }
    if (plan.assignments.empty()) throw ValidationError("plan has no assignments");
    plan.per_group_fraction =
        static_cast<double>(plan.per_group_count()) / static_cast<double>(plan.assignments.size());
    if (doc.contains("per_group_fraction") &&
        std::abs(doc["per_group_fraction"].get<double>() - plan.per_group_fraction) > 1e-12) {
      throw ValidationError("plan per_group_fraction disagrees with its assignments");
    }
    return plan;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed plan: ") + e.what());
  }
}

std::vector<SweepRow> sweep_group_size(const Model& model, std::span<const std::string> layers,
                                       std::span<const Index> sizes, const QuantParams& params) {
  if (sizes.empty()) throw ValidationError("sweep needs at least one group size");
  std::vector<Index> distinct;
  for (const Index g : sizes) {
    if (g < 1) throw ValidationError("group sizes must be positive");
    if (std::find(distinct.begin(), distinct.end(), g) == distinct.end()) distinct.push_back(g);
  }
  std::vector<const Tensor*> tensors;
  for (const auto& name : layers) tensors.push_back(&model.tensor(name));

  std::vector<SweepRow> rows(distinct.size());
  for (std::size_t r = 0; r < distinct.size(); ++r) {
    SweepRow& row = rows[r];
    row.group_size = distinct[r];
    std::vector<double> sq(tensors.size());
    parallel_for(tensors.size(), [&](std::size_t i) {
      const MatrixF& w = tensors[i]->values;
      const auto scheme = GroupingScheme::per_group(largest_divisor_at_most(w.cols(), row.group_size));
      sq[i] = squared_error(w, scheme, params);
    });
    double total_sq = 0.0;
    double total_n = 0.0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const double n = static_cast<double>(tensors[i]->values.size());
      row.layer_rmse.emplace_back(tensors[i]->name, std::sqrt(sq[i] / n));
      total_sq += sq[i];
      total_n += n;
    }
    row.aggregate_rmse = total_n > 0.0 ? std::sqrt(total_sq / total_n) : 0.0;
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "group_size,aggregate_rmse";
  if (!rows.empty()) {
    for (const auto& [name, _] : rows.front().layer_rmse) out += "," + name;
  }
  out += "\n";
  for (const auto& row : rows) {
    out += std::to_string(row.group_size) + "," + format_number(row.aggregate_rmse);
    for (const auto& [_, r] : row.layer_rmse) out += "," + format_number(r);
    out += "\n";
  }
  return out;
}

}  // namespace quantkit
