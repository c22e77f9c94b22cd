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

#include <quantkit/quantizer.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <limits>

namespace quantkit {
namespace {

TEST(QuantParams, QmaxFollowsBitWidth) {
  EXPECT_EQ(QuantParams(8).qmax(), 127);
  EXPECT_EQ(QuantParams(4).qmax(), 7);
  EXPECT_EQ(QuantParams(2).qmax(), 1);
  EXPECT_THROW(QuantParams(1), ValidationError);
  EXPECT_THROW(QuantParams(9), ValidationError);
}

TEST(ScaleFactor, MatchesMaxAbsOverQmax) {
  const QuantParams p8(8);
  EXPECT_NEAR(scale_factor(93.0f, p8), 0.732283, 1e-6);
  EXPECT_EQ(scale_factor(127.0f, p8), 1.0f);
  EXPECT_EQ(scale_factor(0.0f, p8), 1.0f);
  EXPECT_THROW(scale_factor(-1.0f, p8), ValidationError);
  EXPECT_THROW(scale_factor(std::numeric_limits<float>::quiet_NaN(), p8), ValidationError);
}

TEST(QuantizeGroup, WorkedExampleRoundsHalfAwayFromZero) {
  Eigen::VectorXf v(3);
  v << -1.0f, 0.0f, 0.5f;
  const auto [q, s] = quantize_group(v, QuantParams(8));
  EXPECT_EQ(s, 1.0f / 127.0f);
  EXPECT_EQ(q(0), -127);
  EXPECT_EQ(q(1), 0);
  EXPECT_EQ(q(2), 64);
}

TEST(QuantizeGroup, ExactTieRoundsAwayFromZero) {
  // Scale 1 (max_abs = qmax) makes +-2.5 an exact tie.
  Eigen::VectorXf v(3);
  v << 2.5f, -2.5f, 7.0f;
  const auto [q, s] = quantize_group(v, QuantParams(4));
  EXPECT_EQ(s, 1.0f);
  EXPECT_EQ(q(0), 3);
  EXPECT_EQ(q(1), -3);
  EXPECT_EQ(q(2), 7);
}

TEST(QuantizeGroup, AllZerosGiveZerosAndUnitScale) {
  const auto [q, s] = quantize_group(Eigen::VectorXf::Zero(5), QuantParams(8));
  EXPECT_EQ(s, 1.0f);
  EXPECT_TRUE((q.array() == 0).all());
}

TEST(QuantizeGroup, MaxAbsMapsToQmax) {
  Eigen::VectorXf v(1);
  v << 3.75f;
  const auto [q, s] = quantize_group(v, QuantParams(8));
  EXPECT_EQ(q(0), 127);
  EXPECT_FLOAT_EQ(static_cast<float>(q(0)) * s, 3.75f);
}

TEST(QuantizeGroup, RejectsNonFinite) {
  Eigen::VectorXf v(2);
  v << 1.0f, std::numeric_limits<float>::infinity();
  EXPECT_THROW(quantize_group(v, QuantParams(8)), ValidationError);
  v(1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(quantize_group(v, QuantParams(8)), ValidationError);
}

MatrixF outlier_row() {
  MatrixF w(1, 8);
  w << 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 0.01f, 10.0f;
  return w;
}

TEST(QuantizeWeight, OutlierRowPerChannelZeroesSmallEntries) {
  const auto q = quantize_weight(outlier_row(), GroupingScheme::per_channel(), QuantParams(8));
  ASSERT_EQ(q.scales.rows(), 1);
  ASSERT_EQ(q.scales.cols(), 1);
  EXPECT_EQ(q.scales(0, 0), 10.0f / 127.0f);
  for (Index j = 0; j < 7; ++j) EXPECT_EQ(q.values(0, j), 0);
  EXPECT_EQ(q.values(0, 7), 127);
  const MatrixF back = dequantize(q);
  for (Index j = 0; j < 7; ++j) EXPECT_FLOAT_EQ(outlier_row()(0, j) - back(0, j), 0.01f);
}

TEST(QuantizeWeight, OutlierRowPerGroupRecoversSmallEntries) {
  const MatrixF w = outlier_row();
  const auto pc = quantize_weight(w, GroupingScheme::per_channel(), QuantParams(8));
  const auto pg = quantize_weight(w, GroupingScheme::per_group(4), QuantParams(8));
  ASSERT_EQ(pg.scales.cols(), 2);
  const float s0 = pg.scales(0, 0);
  EXPECT_EQ(s0, 0.01f / 127.0f);
  const MatrixF back_pg = dequantize(pg);
  const MatrixF back_pc = dequantize(pc);
  for (Index j = 0; j < 4; ++j) EXPECT_LE(std::abs(w(0, j) - back_pg(0, j)), s0 / 2);
  EXPECT_LT(s0 / 2, 4e-5f);
  // The group holding the outlier keeps the channel's scale and its error.
  EXPECT_EQ(pg.scales(0, 1), pc.scales(0, 0));
  for (Index j = 4; j < 8; ++j) EXPECT_EQ(back_pg(0, j), back_pc(0, j));
}

TEST(QuantizeWeight, GroupMustDivideRow) {
  const MatrixF w = MatrixF::Ones(2, 6);
  EXPECT_THROW(quantize_weight(w, GroupingScheme::per_group(4), QuantParams(8)), ValidationError);
  EXPECT_THROW(GroupingScheme::per_group(0), ValidationError);
}

TEST(QuantizeWeight, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MatrixF w = oracle::gaussian(7, 24, 0.5, seed);
    for (const Index g : {Index{3}, Index{8}, Index{24}}) {
      const auto q = quantize_weight(w, GroupingScheme::per_group(g), QuantParams(8));
      for (Index i = 0; i < w.rows(); ++i) {
        for (Index k = 0; k < 24 / g; ++k) {
          std::vector<float> group(w.data() + i * 24 + k * g, w.data() + i * 24 + (k + 1) * g);
          const auto ref = oracle::quantize(group, 8);
          EXPECT_EQ(q.scales(i, k), ref.scale);
          for (Index j = 0; j < g; ++j) EXPECT_EQ(q.values(i, k * g + j), ref.q[j]);
        }
      }
    }
  }
}

TEST(QuantizeActivation, UnitColumn) {
  MatrixF a = MatrixF::Zero(5, 1);
  a(2, 0) = 1.0f;
  const auto q = quantize_activation(a, QuantParams(8));
  EXPECT_EQ(q.axis, Axis::Columns);
  EXPECT_EQ(q.scales(0, 0), 1.0f / 127.0f);
  EXPECT_EQ(q.values.cast<int>().sum(), 127);
  EXPECT_EQ(q.values(2, 0), 127);
}

TEST(QuantizeActivation, TransposeOfWeightSharesScales) {
  const MatrixF w = oracle::gaussian(6, 10, 1.0, 11);
  const auto qw = quantize_weight(w, GroupingScheme::per_channel(), QuantParams(8));
  const auto qa = quantize_activation(MatrixF(w.transpose()), QuantParams(8));
  EXPECT_EQ(qa.scales.transpose(), qw.scales);
  EXPECT_EQ(qa.values.transpose(), qw.values);
}

TEST(QuantizeActivation, ScalesMatchBruteForceColumnMax) {
  const MatrixF a = oracle::gaussian(8, 3, 1.0, 42);
  const auto q = quantize_activation(a, QuantParams(8));
  for (Index j = 0; j < 3; ++j) {
    float m = 0.0f;
    for (Index i = 0; i < 8; ++i) m = std::max(m, std::fabs(a(i, j)));
    EXPECT_EQ(q.scales(0, j), m / 127.0f);
  }
}

TEST(Dequantize, ZeroTensor) {
  const auto q = quantize_weight(MatrixF::Zero(3, 4), GroupingScheme::per_channel(), QuantParams(8));
  EXPECT_TRUE(dequantize(q).isZero(0.0f));
}

TEST(Dequantize, TwoByTwoHandExample) {
  MatrixF w(2, 2);
  w << 1.0f, -0.5f, 0.25f, 0.0f;
  const auto q = quantize_weight(w, GroupingScheme::per_channel(), QuantParams(8));
  // Row 0: s = 1/127, -0.5 / s = -63.5000002 -> -64. Row 1: s = 0.25/127.
  EXPECT_EQ(q.values(0, 0), 127);
  EXPECT_EQ(q.values(0, 1), -64);
  EXPECT_EQ(q.values(1, 0), 127);
  EXPECT_EQ(q.values(1, 1), 0);
  const MatrixF back = dequantize(q);
  EXPECT_FLOAT_EQ(back(0, 0), 1.0f);
  EXPECT_FLOAT_EQ(back(0, 1), -64.0f / 127.0f);
  EXPECT_FLOAT_EQ(back(1, 0), 0.25f);
  EXPECT_EQ(back(1, 1), 0.0f);
}

// Property-style checks over seeded random shapes, bit widths and groupings.
class QuantizerProperties : public ::testing::TestWithParam<int> {};

TEST_P(QuantizerProperties, RoundTripRangeAndRefinement) {
  const int bits = GetParam();
  const QuantParams params(bits);
  SeededStream rng(1000 + bits);
  for (int trial = 0; trial < 60; ++trial) {
    const Index rows = 1 + static_cast<Index>(rng.uniform_index(12));
    const Index g = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index cols = g * (1 + static_cast<Index>(rng.uniform_index(6)));
    const MatrixF w = oracle::gaussian(rows, cols, rng.uniform(1e-3, 50.0), rng.next_u64());

    const auto pc = quantize_weight(w, GroupingScheme::per_channel(), params);
    const auto pg = quantize_weight(w, GroupingScheme::per_group(g), params);
    for (const auto* q : {&pc, &pg}) {
      q->validate();
      const MatrixD back = dequantize_as<double>(*q);
      EXPECT_EQ(dequantize_as<float>(*q), dequantize(*q));
      for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
          const float s = q->scale_at(i, j);
          EXPECT_LE(std::abs(static_cast<double>(w(i, j)) - back(i, j)), s / 2.0 + 1e-6 * s);
          EXPECT_LE(std::abs(q->values(i, j)), params.qmax());
        }
      }
    }
    for (Index i = 0; i < rows; ++i) {
      EXPECT_LE(pg.scales.row(i).maxCoeff(), pc.scales(i, 0));
    }
  }
}

TEST_P(QuantizerProperties, WholeRowGroupEqualsPerChannel) {
  const QuantParams params(GetParam());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatrixF w = oracle::gaussian(5, 16, 2.0, seed);
    const auto pc = quantize_weight(w, GroupingScheme::per_channel(), params);
    const auto pg = quantize_weight(w, GroupingScheme::per_group(16), params);
    EXPECT_EQ(pc.values, pg.values);
    EXPECT_EQ(pc.scales, pg.scales);
  }
}

TEST_P(QuantizerProperties, PowerOfTwoScalingIsEquivariant) {
  const QuantParams params(GetParam());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatrixF w = oracle::gaussian(4, 12, 1.0, seed);
    const auto base = quantize_weight(w, GroupingScheme::per_group(4), params);
    for (const float c : {0.25f, 2.0f, 8.0f}) {
      const auto scaled = quantize_weight(MatrixF(c * w), GroupingScheme::per_group(4), params);
      EXPECT_EQ(scaled.values, base.values);
      EXPECT_EQ(scaled.scales, MatrixF(c * base.scales));
    }
  }
}

TEST_P(QuantizerProperties, GeneralScalingKeepsScalesProportional) {
  const QuantParams params(GetParam());
  const MatrixF w = oracle::gaussian(6, 20, 1.0, 77);
  const auto base = quantize_weight(w, GroupingScheme::per_channel(), params);
  const auto scaled = quantize_weight(MatrixF(3.0f * w), GroupingScheme::per_channel(), params);
  for (Index i = 0; i < w.rows(); ++i) EXPECT_NEAR(scaled.scales(i, 0), 3.0f * base.scales(i, 0), 1e-6 * scaled.scales(i, 0));
  // Integer codes agree except where FP rounding moves a value across a tie.
  const auto mismatches = (scaled.values.array() != base.values.array()).count();
  EXPECT_LE(mismatches, 2);
}

INSTANTIATE_TEST_SUITE_P(AllBitWidths, QuantizerProperties, ::testing::Range(2, 9));

TEST(LargestDivisor, FallsBackBelowRequested) {
  EXPECT_EQ(largest_divisor_at_most(64, 16), 16);
  EXPECT_EQ(largest_divisor_at_most(48, 32), 24);
  EXPECT_EQ(largest_divisor_at_most(64, 1024), 64);
  EXPECT_EQ(largest_divisor_at_most(7, 5), 1);
}

}  // namespace
}  // namespace quantkit
