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

#include "commands.hpp"

#include <quantkit/quantkit.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace quantkit::cli {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

std::vector<LayerKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<LayerKind> kinds;
  for (const auto& n : names) {
    const auto k = parse_kind(n);
    if (!k) throw ValidationError("unknown layer kind '" + n + "'");
    kinds.push_back(*k);
  }
  return kinds;
}

SynthConfig synth_config_from_json(const std::string& text) {
  using json = nlohmann::json;
  SynthConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.kv_dim = j.value("kv_dim", cfg.kv_dim);
    cfg.ffn_dim = j.value("ffn_dim", cfg.ffn_dim);
    cfg.base_std = j.value("base_std", cfg.base_std);
    cfg.wall_blocks = j.value("wall_blocks", cfg.wall_blocks);
    if (j.contains("wall_kinds")) cfg.wall_kinds = parse_kinds(j["wall_kinds"].get<std::vector<std::string>>());
    cfg.wall_columns = j.value("wall_columns", cfg.wall_columns);
    if (j.contains("wall_magnitude")) {
      const auto range = j["wall_magnitude"].get<std::vector<double>>();
      if (range.size() != 2) throw ValidationError("wall_magnitude must be [lo, hi]");
      cfg.wall_lo = range[0];
      cfg.wall_hi = range[1];
    }
    cfg.shared_wall_columns = j.value("shared_wall_columns", cfg.shared_wall_columns);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
  return cfg;
}

// Selection flags shared by `plan` and `sweep`.
struct SelectionFlags {
  double max_abs_threshold = 2.0;
  std::size_t top_k = 0;
  std::vector<std::string> layers;
  CLI::Option* threshold_opt = nullptr;
  CLI::Option* top_k_opt = nullptr;
  CLI::Option* layers_opt = nullptr;

  void add_to(CLI::App& app) {
    threshold_opt = app.add_option("--max-abs-threshold", max_abs_threshold,
                                   "Select layers whose max_abs exceeds this value (default 2.0)");
    top_k_opt = app.add_option("--top-k", top_k, "Select the k layers with the highest per-channel RMSE");
    layers_opt = app.add_option("--layers", layers, "Select these layer names")->delimiter(',');
    threshold_opt->excludes(top_k_opt)->excludes(layers_opt);
    top_k_opt->excludes(layers_opt);
  }

  PlanConfig config(Index group_size, int bits) const {
    if (top_k_opt->count() > 0) return PlanConfig::top(top_k, group_size, bits);
    if (layers_opt->count() > 0) return PlanConfig::named(layers, group_size, bits);
    return PlanConfig::threshold(max_abs_threshold, group_size, bits);
  }
};

struct WallFlags {
  double kappa = 20.0;
  double theta = 0.0;
  double rho = 0.01;
  CLI::Option* theta_opt = nullptr;

  void add_to(CLI::App& app) {
    auto* kappa_opt = app.add_option("--wall-kappa", kappa, "Wall threshold as a multiple of the bulk RMS");
    theta_opt = app.add_option("--wall-theta", theta, "Absolute wall threshold");
    kappa_opt->excludes(theta_opt);
    app.add_option("--wall-rho", rho, "Fraction of rows that must exceed the threshold");
  }

  WallDetectorConfig config() const {
    return theta_opt->count() > 0 ? WallDetectorConfig::absolute(theta, rho) : WallDetectorConfig::relative(kappa, rho);
  }
};

double relative_frobenius(const MatrixF& got, const MatrixD& want) {
  const double diff = (got.cast<double>() - want).norm();
  const double base = want.norm();
  return base > 0.0 ? diff / base : diff;
}

// Random operands checked against the fp64 product of their dequantized
// values. Returns the largest relative deviation seen.
double check_matmul(std::uint64_t seed, int instances, const QuantParams& params, bool verbose) {
  SeededStream rng(seed, "check-matmul");
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index n = 1 + static_cast<Index>(rng.uniform_index(64));
    const Index m = 1 + static_cast<Index>(rng.uniform_index(128));
    const Index p = 1 + static_cast<Index>(rng.uniform_index(32));
    MatrixF w(n, m), a(m, p);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal());
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<float>(rng.normal());

    std::vector<Index> divisors;
    for (Index d = 1; d <= m; ++d) {
      if (m % d == 0) divisors.push_back(d);
    }
    const Index g = divisors[rng.uniform_index(divisors.size())];

    const auto aq = quantize_activation(a, params);
    const auto wpc = quantize_weight(w, GroupingScheme::per_channel(), params);
    const auto wpg = quantize_weight(w, GroupingScheme::per_group(g), params);
    const double dev_pc = relative_frobenius(matmul_per_channel(wpc, aq), reference_matmul_fp(dequantize(wpc), dequantize(aq)));
    const double dev_pg = relative_frobenius(matmul_per_group(wpg, aq), reference_matmul_fp(dequantize(wpg), dequantize(aq)));
    if (verbose) {
      std::cout << "instance " << t << " " << n << "x" << m << "x" << p << " g=" << g
                << " per_channel=" << format_number(dev_pc) << " per_group=" << format_number(dev_pg) << "\n";
    }
    worst = std::max({worst, dev_pc, dev_pg});
  }
  return worst;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"quantkit: symmetric integer quantization and weight-outlier profiling"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic wall-injected model");
  SynthConfig synth_cfg;
  std::string synth_config_path, synth_out;
  std::vector<int> wall_blocks;
  std::vector<std::string> wall_kinds;
  double wall_lo = 0, wall_hi = 0;
  bool no_shared = false;
  synth->add_option("--config", synth_config_path, "JSON config; flags override its fields");
  auto* o_blocks = synth->add_option("--blocks", synth_cfg.blocks, "Transformer blocks");
  auto* o_dim = synth->add_option("--dim", synth_cfg.dim, "Model dimension");
  auto* o_kv = synth->add_option("--kv-dim", synth_cfg.kv_dim, "Output rows of k/v (0 = dim)");
  auto* o_ffn = synth->add_option("--ffn-dim", synth_cfg.ffn_dim, "Rows of up/gate, columns of down (0 = dim)");
  auto* o_std = synth->add_option("--base-std", synth_cfg.base_std, "Standard deviation of base weights");
  auto* o_wb = synth->add_option("--wall-blocks", wall_blocks, "Blocks receiving walls")->delimiter(',');
  auto* o_wk = synth->add_option("--wall-kinds", wall_kinds, "Kinds receiving walls (q,k,v,up,gate)")->delimiter(',');
  auto* o_wc = synth->add_option("--wall-columns", synth_cfg.wall_columns, "Wall columns per layer");
  auto* o_lo = synth->add_option("--wall-lo", wall_lo, "Smallest wall magnitude");
  auto* o_hi = synth->add_option("--wall-hi", wall_hi, "Largest wall magnitude");
  synth->add_flag("--independent-walls", no_shared, "Draw wall columns per layer instead of per block");
  auto* o_seed = synth->add_option("--seed", synth_cfg.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output model path (writes <out>.manifest.json and <out>.bin)")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Profile max_abs, RMSE and walls per layer");
  std::string analyze_model, analyze_out, analyze_plot;
  int analyze_bits = 8;
  std::vector<Index> analyze_groups;
  WallFlags analyze_walls;
  analyze->add_option("model", analyze_model, "Model path")->required();
  analyze->add_option("--out", analyze_out, "Metrics CSV (stdout when omitted)");
  analyze->add_option("--plot", analyze_plot, "Plot-data JSON");
  analyze->add_option("--bits", analyze_bits, "Bit width");
  analyze->add_option("--group-size", analyze_groups, "Extra per-group RMSE columns")->delimiter(',');
  analyze_walls.add_to(*analyze);

  // plan
  auto* plan = app.add_subcommand("plan", "Build a mixed per-channel/per-group plan from metrics");
  std::string plan_metrics, plan_out;
  Index plan_group = 16;
  int plan_bits = 8;
  SelectionFlags plan_sel;
  plan->add_option("metrics", plan_metrics, "Metrics CSV from `analyze`")->required();
  plan->add_option("--group-size", plan_group, "Group size for selected layers (default 16)");
  plan->add_option("--bits", plan_bits, "Bit width");
  plan->add_option("--out", plan_out, "Plan JSON (stdout when omitted)");
  plan_sel.add_to(*plan);

  // quantize
  auto* quantize = app.add_subcommand("quantize", "Quantize a model under a plan");
  std::string quant_model, quant_plan, quant_out;
  quantize->add_option("model", quant_model, "Model path")->required();
  quantize->add_option("--plan", quant_plan, "Plan JSON")->required();
  quantize->add_option("--out", quant_out, "Output quantized model path")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "RMSE of the selected layers across group sizes");
  std::string sweep_model, sweep_out;
  std::vector<Index> sweep_sizes;
  int sweep_bits = 8;
  SelectionFlags sweep_sel;
  sweep->add_option("model", sweep_model, "Model path")->required();
  sweep->add_option("--sizes", sweep_sizes, "Group sizes")->delimiter(',')->required();
  sweep->add_option("--bits", sweep_bits, "Bit width");
  sweep->add_option("--out", sweep_out, "Sweep CSV (stdout when omitted)");
  sweep_sel.add_to(*sweep);

  // check-matmul
  auto* check = app.add_subcommand("check-matmul", "Compare quantized kernels against the fp64 reference");
  std::uint64_t check_seed = 0;
  int check_instances = 200;
  int check_bits = 8;
  bool check_verbose = false;
  check->add_option("--seed", check_seed, "Seed");
  check->add_option("--instances", check_instances, "Random instances")->check(CLI::PositiveNumber);
  check->add_option("--bits", check_bits, "Bit width");
  check->add_flag("--verbose", check_verbose, "Print every instance");

  // report
  auto* report = app.add_subcommand("report", "Plain and weighted average accuracy from task results");
  std::string report_in, report_out;
  report->add_option("tasks", report_in, "CSV with header task,accuracy,count")->required();
  report->add_option("--out", report_out, "Summary CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      SynthConfig cfg = synth_config_path.empty() ? SynthConfig{} : synth_config_from_json(read_text(synth_config_path));
      if (o_blocks->count()) cfg.blocks = synth_cfg.blocks;
      if (o_dim->count()) cfg.dim = synth_cfg.dim;
      if (o_kv->count()) cfg.kv_dim = synth_cfg.kv_dim;
      if (o_ffn->count()) cfg.ffn_dim = synth_cfg.ffn_dim;
      if (o_std->count()) cfg.base_std = synth_cfg.base_std;
      if (o_wb->count()) cfg.wall_blocks = wall_blocks;
      if (o_wk->count()) cfg.wall_kinds = parse_kinds(wall_kinds);
      if (o_wc->count()) cfg.wall_columns = synth_cfg.wall_columns;
      if (o_lo->count()) cfg.wall_lo = wall_lo;
      if (o_hi->count()) cfg.wall_hi = wall_hi;
      if (no_shared) cfg.shared_wall_columns = false;
      if (o_seed->count()) cfg.seed = synth_cfg.seed;
      const Model model = generate(cfg);
      write_model(model, synth_out);
      std::cout << "wrote " << model.tensors.size() << " tensors (" << cfg.blocks << " blocks) to " << synth_out << "\n";
    } else if (analyze->parsed()) {
      const Model model = read_model(analyze_model);
      const auto metrics = profile_model(model, GroupingScheme::per_channel(), QuantParams(analyze_bits),
                                         analyze_walls.config(), analyze_groups);
      emit(analyze_out, metrics_to_csv(metrics));
      if (!analyze_plot.empty()) write_file_atomic(analyze_plot, metrics_to_plot_json(metrics));
      if (!analyze_out.empty()) std::cout << "profiled " << metrics.size() << " layers\n";
    } else if (plan->parsed()) {
      const auto metrics = metrics_from_csv(read_text(plan_metrics));
      const QuantPlan p = build_plan(metrics, plan_sel.config(plan_group, plan_bits));
      emit(plan_out, plan_to_json(p));
      if (!plan_out.empty()) {
        char frac[32];
        std::snprintf(frac, sizeof(frac), "%.4f", p.per_group_fraction);
        std::cout << "per-group layers: " << p.per_group_count() << "/" << p.assignments.size()
                  << " (per_group_fraction " << frac << ")\n";
      }
    } else if (quantize->parsed()) {
      const Model model = read_model(quant_model);
      const QuantPlan p = plan_from_json(read_text(quant_plan));
      const QuantizedModel q = apply_plan(model, p);
      write_quantized_model(q, quant_out);
      std::cout << "quantized " << q.layers.size() << " layers (" << p.per_group_count() << " per-group) to "
                << quant_out << "\n";
    } else if (sweep->parsed()) {
      const Model model = read_model(sweep_model);
      const QuantParams params(sweep_bits);
      const auto metrics = profile_model(model, GroupingScheme::per_channel(), params);
      std::vector<std::string> names;
      for (const auto i : select_layers(metrics, sweep_sel.config(1, sweep_bits))) names.push_back(metrics[i].name);
      emit(sweep_out, sweep_to_csv(sweep_group_size(model, names, sweep_sizes, params)));
    } else if (check->parsed()) {
      const double worst = check_matmul(check_seed, check_instances, QuantParams(check_bits), check_verbose);
      constexpr double kTolerance = 1e-5;
      std::cout << "max relative deviation: " << format_number(worst) << " over " << check_instances
                << " instances (tolerance " << format_number(kTolerance) << ")\n";
      if (worst > kTolerance) {
        std::cerr << "check-matmul: deviation exceeds tolerance\n";
        return 1;
      }
    } else if (report->parsed()) {
      const auto summary = aggregate_accuracy(tasks_from_csv(read_text(report_in)));
      emit(report_out, summary_to_csv(summary));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace quantkit::cli
