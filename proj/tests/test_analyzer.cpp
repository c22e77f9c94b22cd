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
#include <quantkit/synth.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

namespace quantkit {
namespace {

TEST(LayerMaxAbs, ConstantTensor) {
  const MatrixF w = MatrixF::Constant(3, 5, -0.07f);
  EXPECT_EQ(layer_max_abs(w), static_cast<double>(0.07f));
}

TEST(LayerMaxAbs, InjectedWallMagnitude) {
  SynthConfig cfg;
  cfg.blocks = 2;
  cfg.dim = 32;
  cfg.wall_blocks = {0};
  cfg.wall_lo = cfg.wall_hi = 93.0;
  const Model m = generate(cfg);
  EXPECT_EQ(layer_max_abs(m.tensor("blocks.0.v").values), 93.0);
}

TEST(LayerMaxAbs, MatchesScanAndScalesWithConstant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatrixF w = oracle::gaussian(13, 17, 2.0, seed);
    EXPECT_EQ(layer_max_abs(w), oracle::max_abs_scan(w));
    EXPECT_EQ(layer_max_abs(MatrixF(-4.0f * w)), 4.0 * layer_max_abs(w));
  }
}

TEST(LayerMaxAbs, RejectsNaN) {
  MatrixF w = MatrixF::Zero(2, 2);
  w(1, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(layer_max_abs(w), ValidationError);
}

TEST(LayerRmse, ExactlyRepresentableIsZero) {
  MatrixF w(2, 4);
  w << 0.0f, 3.0f, 0.0f, -3.0f, 0.0f, 0.0f, 3.0f, 3.0f;
  EXPECT_EQ(layer_rmse(w, GroupingScheme::per_channel(), QuantParams(8)), 0.0);
}

TEST(LayerRmse, OutlierRowHandValue) {
  MatrixF w(1, 8);
  w << 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 10.0f;
  // The 0.01 entries round to zero; the outlier is recovered exactly.
  EXPECT_NEAR(layer_rmse(w, GroupingScheme::per_channel(), QuantParams(8)), std::sqrt(7 * 0.01 * 0.01 / 8), 1e-8);
  // With g=4 only the three small entries sharing the outlier's group are lost.
  EXPECT_NEAR(layer_rmse(w, GroupingScheme::per_group(4), QuantParams(8)), std::sqrt(3 * 0.01 * 0.01 / 8), 1e-8);
}

TEST(LayerRmse, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MatrixF w = oracle::gaussian(64, 64, 0.02, seed);
    for (const Index g : {Index{8}, Index{64}}) {
      for (const int bits : {4, 8}) {
        const double got = layer_rmse(w, GroupingScheme::per_group(g), QuantParams(bits));
        const double want = oracle::rmse(w, g, bits);
        EXPECT_NEAR(got, want, 1e-12 * want);
      }
    }
  }
}

TEST(LayerRmse, WholeRowGroupEqualsPerChannel) {
  const MatrixF w = oracle::gaussian(16, 32, 1.0, 3);
  EXPECT_EQ(layer_rmse(w, GroupingScheme::per_group(32), QuantParams(8)),
            layer_rmse(w, GroupingScheme::per_channel(), QuantParams(8)));
}

TEST(DetectWalls, GaussianHasNone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_TRUE(detect_walls(oracle::gaussian(64, 64, 0.02, seed)).empty());
  }
}

TEST(DetectWalls, AmplifiedColumnsAreFound) {
  MatrixF w = oracle::gaussian(64, 64, 0.02, 8);
  const std::vector<Index> cols = {3, 17, 40, 63};
  for (const Index c : cols) w.col(c) *= 1000.0f;
  EXPECT_EQ(detect_walls(w), cols);
}

TEST(DetectWalls, SinglePointIsNotAWall) {
  MatrixF w = oracle::gaussian(256, 64, 0.02, 9);
  w(10, 20) = 500.0f;
  EXPECT_TRUE(detect_walls(w).empty());
}

TEST(DetectWalls, ZeroTensorAndAbsoluteMode) {
  EXPECT_TRUE(detect_walls(MatrixF::Zero(8, 8)).empty());
  MatrixF w = MatrixF::Zero(10, 6);
  w.col(2).setConstant(5.0f);
  w(0, 4) = 5.0f;
  EXPECT_EQ(detect_walls(w, WallDetectorConfig::absolute(1.0, 0.5)), std::vector<Index>{2});
  EXPECT_EQ(detect_walls(w, WallDetectorConfig::absolute(1.0, 0.1)), (std::vector<Index>{2, 4}));
  EXPECT_THROW(detect_walls(w, WallDetectorConfig::absolute(1.0, 0.0)), ValidationError);
  EXPECT_THROW(detect_walls(w, WallDetectorConfig::relative(-1.0)), ValidationError);
}

TEST(DetectWalls, InjectedColumnsRoundTrip) {
  const std::vector<Index> cols = {1, 5, 30};
  const MatrixF w = inject_walls(oracle::gaussian(64, 48, 0.02, 4), cols, 50.0, 100.0, 12);
  EXPECT_EQ(detect_walls(w), cols);
}

TEST(DetectWalls, PermutationBehaviour) {
  MatrixF w = oracle::gaussian(40, 24, 0.02, 21);
  for (const Index c : {2, 9, 15}) w.col(c) *= 500.0f;
  const auto base = detect_walls(w);
  ASSERT_EQ(base.size(), 3u);

  SeededStream rng(5);
  Eigen::PermutationMatrix<Eigen::Dynamic> rows(w.rows()), cols(w.cols());
  rows.setIdentity();
  cols.setIdentity();
  for (Index i = w.rows() - 1; i > 0; --i) std::swap(rows.indices()(i), rows.indices()(rng.uniform_index(i + 1)));
  for (Index i = w.cols() - 1; i > 0; --i) std::swap(cols.indices()(i), cols.indices()(rng.uniform_index(i + 1)));

  EXPECT_EQ(detect_walls(MatrixF(rows * w)), base);
  // Column j of w moves to column perm(j) of w * P^T.
  const MatrixF permuted = w * cols.transpose();
  std::vector<Index> expected;
  for (const Index c : base) expected.push_back(cols.indices()(c));
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(detect_walls(permuted), expected);
}

SynthConfig small_wall_config() {
  SynthConfig cfg;
  cfg.blocks = 6;
  cfg.dim = 32;
  cfg.wall_blocks = {0, 1, 3};
  cfg.seed = 5;
  return cfg;
}

TEST(ProfileModel, OneBlockGivesSevenOrderedEntries) {
  SynthConfig cfg;
  cfg.blocks = 1;
  cfg.dim = 16;
  cfg.wall_blocks = {};
  const auto metrics = profile_model(generate(cfg), GroupingScheme::per_channel(), QuantParams(8));
  ASSERT_EQ(metrics.size(), 7u);
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(metrics[i].layer_index, i);
    EXPECT_EQ(metrics[i].name, LayerId::from_index(i).name());
  }
}

TEST(ProfileModel, CleanModelStaysBelowOne) {
  SynthConfig cfg = small_wall_config();
  cfg.wall_blocks = {};
  const auto metrics = profile_model(generate(cfg), GroupingScheme::per_channel(), QuantParams(8));
  for (const auto& m : metrics) {
    EXPECT_LT(m.max_abs, 1.0);
    EXPECT_TRUE(m.wall_columns.empty());
  }
}

TEST(ProfileModel, WallLayersStandOut) {
  const SynthConfig cfg = small_wall_config();
  const Model model = generate(cfg);
  const std::vector<Index> extra = {8, 32};
  const auto metrics = profile_model(model, GroupingScheme::per_channel(), QuantParams(8), {}, extra);
  double worst_clean = 0.0, best_wall = std::numeric_limits<double>::max();
  for (const auto& m : metrics) {
    const auto planned = planned_wall_columns(cfg, LayerId::from_index(m.layer_index));
    EXPECT_EQ(m.wall_columns, planned) << m.name;
    if (planned.empty()) {
      worst_clean = std::max(worst_clean, m.rmse);
    } else {
      best_wall = std::min(best_wall, m.rmse);
    }
    ASSERT_EQ(m.rmse_by_group.size(), 2u);
    EXPECT_EQ(m.rmse_by_group[1].second, m.rmse);  // g = M
    EXPECT_NEAR(m.rmse_by_group[0].second, oracle::rmse(model.tensor(m.name).values, 8, 8), 1e-12);
  }
  EXPECT_GT(best_wall, 10.0 * worst_clean);
}

TEST(ProfileModel, IsDeterministic) {
  const Model model = generate(small_wall_config());
  const auto a = metrics_to_csv(profile_model(model, GroupingScheme::per_channel(), QuantParams(8)));
  const auto b = metrics_to_csv(profile_model(model, GroupingScheme::per_channel(), QuantParams(8)));
  EXPECT_EQ(a, b);
}

TEST(MetricsCsv, HeaderAndRoundTrip) {
  const auto metrics =
      profile_model(generate(small_wall_config()), GroupingScheme::per_channel(), QuantParams(8), {}, std::vector<Index>{16});
  const std::string csv = metrics_to_csv(metrics);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer_index,name,block,kind,max_abs,rmse_pc,rmse_g16,wall_count,rows,cols");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 43);

  const auto back = metrics_from_csv(csv);
  ASSERT_EQ(back.size(), metrics.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].name, metrics[i].name);
    EXPECT_EQ(back[i].layer_index, metrics[i].layer_index);
    EXPECT_EQ(back[i].rmse, metrics[i].rmse);
    EXPECT_EQ(back[i].max_abs, metrics[i].max_abs);
    EXPECT_EQ(back[i].cols, metrics[i].cols);
    EXPECT_EQ(back[i].rmse_by_group, metrics[i].rmse_by_group);
  }
  EXPECT_THROW(metrics_from_csv("layer_index,name\n0,blocks.0.q\n"), ValidationError);
}

TEST(MetricsPlot, DualSeriesOverLayerAxis) {
  const auto metrics = profile_model(generate(small_wall_config()), GroupingScheme::per_channel(), QuantParams(8));
  const auto doc = nlohmann::json::parse(metrics_to_plot_json(metrics));
  ASSERT_EQ(doc["x"].size(), 42u);
  EXPECT_EQ(doc["x"][41], 41);
  EXPECT_EQ(doc["series"]["max_abs"].size(), 42u);
  EXPECT_EQ(doc["series"]["rmse_pc"].size(), 42u);
  EXPECT_EQ(doc["names"][0], "blocks.0.q");
}

}  // namespace
}  // namespace quantkit
