/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace {

using namespace hierloss;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

TEST(Synth, DefaultProfile) {
  const SynthConfig c;
  const auto d = generate(c);
  EXPECT_EQ(d.taxonomy.height(), 4u);
  for (auto leaf : d.taxonomy.leaves()) EXPECT_EQ(d.taxonomy.depth(leaf), 4u);
  EXPECT_GE(d.taxonomy.leaves().size(), 24u);
  EXPECT_LE(d.taxonomy.leaves().size(), 72u);
  const auto counts = leaf_counts(d.taxonomy, d.samples);
  for (auto leaf : d.taxonomy.leaves()) {
    EXPECT_GE(counts[leaf], 20u);
    EXPECT_LE(counts[leaf], 40u);
  }
  EXPECT_EQ(d.samples.front().features.size(), 32u);
  EXPECT_EQ(d.samples.front().id, "s000000");
}

TEST(Synth, SameSeedSameData) {
  SynthConfig c;
  c.seed = 17;
  const auto a = generate(c), b = generate(c);
  EXPECT_EQ(a.taxonomy, b.taxonomy);
  EXPECT_EQ(a.samples, b.samples);
  c.seed = 18;
  EXPECT_NE(generate(c).samples, a.samples);
}

TEST(Synth, NoiseFreeSamplesSitOnTheLeafMean) {
  SynthConfig c;
  c.leaf_noise = 0.0;
  const auto d = generate(c);
  const auto leaf = resolve_leaves(d.taxonomy, d.samples);
  for (std::size_t i = 0; i < d.samples.size(); ++i) EXPECT_EQ(d.samples[i].features, d.node_means[leaf[i]]);
}

TEST(Synth, VanishingDecayMakesCousinsIndistinguishable) {
  SynthConfig c;
  c.decay = 1e-9;
  const auto d = generate(c);
  const auto& t = d.taxonomy;
  const auto c0 = t.id_of("c0");
  for (auto leaf : t.leaves()) {
    if (t.is_ancestor_or_self(c0, leaf)) EXPECT_LT(sq_dist(d.node_means[leaf], d.node_means[c0]), 1e-12);
  }
}

TEST(Synth, RejectsImpossibleConfigs) {
  SynthConfig c;
  c.branching = {{3, 2}, {2, 3}, {2, 3}, {2, 2}};
  EXPECT_THROW(generate(c), Error);
  c = SynthConfig{};
  c.branching.pop_back();
  EXPECT_THROW(generate(c), Error);
  c = SynthConfig{};
  c.feature_dim = 1;
  EXPECT_THROW(generate(c), Error);
  c = SynthConfig{};
  c.decay = 0.0;
  EXPECT_THROW(generate(c), Error);
}

TEST(Synth, MeanDistanceMatchesClosedForm) {
  // Two-level binary tree; compare the mean squared distance between leaf
  // means, by LCA depth, to the sum of offset variances.
  SynthConfig c;
  c.depth = 2;
  c.branching = {{2, 2}, {2, 2}};
  c.samples_per_leaf = {1, 1};
  c.feature_dim = 8;
  c.offset_scale = 1.3;
  c.decay = 0.6;
  double sibling = 0.0, cousin = 0.0;
  constexpr int kDraws = 10000;
  for (int s = 0; s < kDraws; ++s) {
    c.seed = static_cast<std::uint64_t>(s);
    const auto d = generate(c);
    const auto& t = d.taxonomy;
    sibling += sq_dist(d.node_means[t.id_of("c0.0")], d.node_means[t.id_of("c0.1")]);
    cousin += sq_dist(d.node_means[t.id_of("c0.0")], d.node_means[t.id_of("c1.0")]);
  }
  sibling /= kDraws;
  cousin /= kDraws;
  // Independent arithmetic: 2 * D * sum of variances below the LCA.
  const double v1 = 1.3 * 1.3, v2 = (1.3 * 0.6) * (1.3 * 0.6);
  EXPECT_NEAR(expected_mean_sq_distance(c, 1, 2), 2 * 8 * v2, 1e-12);
  EXPECT_NEAR(expected_mean_sq_distance(c, 0, 2), 2 * 8 * (v1 + v2), 1e-12);
  EXPECT_NEAR(sibling / (2 * 8 * v2), 1.0, 0.05);
  EXPECT_NEAR(cousin / (2 * 8 * (v1 + v2)), 1.0, 0.05);
  EXPECT_GT(cousin, sibling);
}

}  // namespace
