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

#include <sstream>

#include "harness.hpp"

namespace {

using namespace hierloss;

TEST(Model, OutputShapes) {
  ModelShape s;
  s.input_dim = 16;
  s.hidden = {32};
  s.embedding_dim = 8;
  s.leaf_classes = 5;
  s.level_classes = {2, 3};
  s.binary_nodes = 7;
  const EmbeddingModel m(s, 1);
  const auto out = m.forward(std::vector<double>(16, 0.5));
  EXPECT_EQ(out.embedding.size(), 8u);
  EXPECT_EQ(out.leaf.size(), 5u);
  ASSERT_EQ(out.levels.size(), 2u);
  EXPECT_EQ(out.levels[1].size(), 3u);
  EXPECT_EQ(out.binary.size(), 7u);
  EXPECT_EQ(m.num_parameters(), (16 * 32 + 32) + (32 * 8 + 8) + (8 * 5 + 5) + (8 * 2 + 2) + (8 * 3 + 3) + (8 * 7 + 7));
  EXPECT_THROW(m.forward(std::vector<double>(15, 0.5)), Error);
}

TEST(Model, HeadsFollowShape) {
  ModelShape s;
  s.input_dim = 4;
  const EmbeddingModel t_only(s, 0);
  EXPECT_FALSE(t_only.has_leaf_head());
  EXPECT_FALSE(t_only.has_level_heads());
  EXPECT_FALSE(t_only.has_binary_head());
  EXPECT_TRUE(t_only.forward(std::vector<double>(4, 1.0)).leaf.empty());
}

TEST(Model, ZeroWeightsGiveBiasOnlyEmbedding) {
  ModelShape s;
  s.input_dim = 3;
  s.hidden = {4};
  s.embedding_dim = 2;
  EmbeddingModel m(s, 0);
  auto p = m.mutable_parameters();
  std::fill(p.begin(), p.end(), 0.0);
  // Last layer bias sits right after its 2x4 weight block.
  const std::size_t bias = (3 * 4 + 4) + 2 * 4;
  p[bias] = 0.25;
  p[bias + 1] = -1.5;
  for (const auto& x : {std::vector<double>{1, 2, 3}, std::vector<double>{-7, 0, 9}}) {
    EXPECT_EQ(m.forward(x).embedding, (std::vector<double>{0.25, -1.5}));
  }
}

TEST(Model, DeterministicInitAndJsonRoundTrip) {
  ModelShape s;
  s.input_dim = 6;
  s.level_classes = {3};
  const EmbeddingModel a(s, 42), b(s, 42), c(s, 43);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  const auto back = EmbeddingModel::from_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(back.shape(), a.shape());
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), back.parameters().begin()));
  auto broken = a.to_json();
  broken["tensors"].erase(0);
  EXPECT_THROW(EmbeddingModel::from_json(broken), Error);
}

class ModelGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(ModelGradient, MatchesFiniteDifferences) {
  const auto losses = LossSet::parse(GetParam());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = harness::check_model_gradient(seed, losses);
    ASSERT_GT(r.triplets, 0u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllLosses, ModelGradient,
                         ::testing::Values("T", "L", "PL", "B", "L+T", "PL+T", "PL+B", "PL+B+T", "L+PL+B+T"),
                         [](const auto& info) {
                           std::string s = info.param;
                           std::replace(s.begin(), s.end(), '+', '_');
                           return s;
                         });

TEST(Training, FlatTreePerLevelEqualsLeafLoss) {
  const auto l = harness::flat_tree_step_losses(4, LossSet{LossKind::kLeaf}, 5, 10);
  const auto pl = harness::flat_tree_step_losses(4, LossSet{LossKind::kPerLevel}, 5, 10);
  EXPECT_EQ(l, pl);
}

// Three-leaf problem with all leaves seen; reused below.
struct Fixture {
  Taxonomy t = oracle::t0();
  Dataset data = oracle::make_dataset(t, {20, 20, 20}, 6, 3);
  SplitAssignment split = harness::all_seen(t, data, 1);
};

TEST(Training, LossDecreasesOnSeparableData) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet::parse("PL+T"), 0.3});
  TrainState state;
  state.model = EmbeddingModel(problem.model_shape(ModelConfig{{16}, 8}), 0);
  state.optimiser = Adam(state.model.num_parameters(), AdamOptions{0.01});
  std::vector<TripletInstance> batch;
  for (std::uint64_t s = 0; s < 6; ++s) {
    auto more = instantiate_triplets(problem.pruned().tree, problem.train_members(), problem.node_triples(), s);
    batch.insert(batch.end(), more.begin(), more.end());
  }
  std::vector<double> losses;
  for (int i = 0; i < 5; ++i) losses.push_back(train_step(state, problem, batch).total);
  for (int i = 1; i < 5; ++i) EXPECT_LT(losses[i], losses[i - 1]);
}

TEST(Training, TripletOnlyWithSatisfiedMarginIsZero) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet{LossKind::kTriplet}, 0.3});
  const EmbeddingModel model(problem.model_shape(ModelConfig{{8}, 4}), 0);
  const auto all = instantiate_triplets(problem.pruned().tree, problem.train_members(), problem.node_triples(), 0);
  std::vector<TripletInstance> easy;
  for (const auto& x : all) {
    // With positive == anchor, d_ap = -1 and the hinge is off once d_an > -0.7.
    TripletInstance y = x;
    y.positive = y.anchor;
    const auto a = model.forward(f.data[y.anchor].features).embedding;
    const auto n = model.forward(f.data[y.negative].features).embedding;
    if (-1.0 - cosine_distance(a, n) + 0.3 < 0.0) easy.push_back(y);
  }
  ASSERT_FALSE(easy.empty());
  const auto obj = batch_objective(model, problem, easy);
  EXPECT_EQ(obj.loss.total, 0.0);
  for (double g : obj.grad) EXPECT_EQ(g, 0.0);
}

TEST(Training, NonFiniteLossAborts) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet{LossKind::kLeaf}, 0.3});
  TrainState state;
  state.model = EmbeddingModel(problem.model_shape(ModelConfig{{8}, 4}), 0);
  state.optimiser = Adam(state.model.num_parameters(), AdamOptions{});
  auto p = state.model.mutable_parameters();
  p[0] = std::numeric_limits<double>::quiet_NaN();
  const auto batch = instantiate_triplets(problem.pruned().tree, problem.train_members(), problem.node_triples(), 0);
  EXPECT_THROW(train_step(state, problem, batch), Error);
}

TEST(Training, HeadLayoutOfPrunedTree) {
  Fixture f;
  FoldLeaves leaves{{f.t.id_of("a1"), f.t.id_of("b1")}, {f.t.id_of("a2")}};
  const auto split = make_split(f.t, f.data, leaves, 0, 0);
  const TrainingProblem problem(f.t, f.data, split, LossConfig{LossSet::parse("L+PL+B"), 0.3});
  const auto& tree = problem.pruned().tree;
  EXPECT_EQ(problem.layout().leaf_classes, (std::vector<NodeId>{tree.id_of("a1"), tree.id_of("b1")}));
  ASSERT_EQ(problem.layout().levels.size(), 2u);
  EXPECT_EQ(problem.layout().binary_nodes.size(), tree.size() - 1);
  const auto shape = problem.model_shape(ModelConfig{});
  EXPECT_EQ(shape.leaf_classes, 2u);
  EXPECT_EQ(shape.level_classes, (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(shape.binary_nodes, 4u);
}

TEST(Fit, ZeroEpochsReturnsInitialModel) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet::parse("PL+T"), 0.3});
  FitOptions o;
  o.epochs = 0;
  o.seed = 9;
  const auto r = fit(problem, ModelConfig{{8}, 4}, o);
  const EmbeddingModel init(problem.model_shape(ModelConfig{{8}, 4}), 9);
  EXPECT_TRUE(std::equal(init.parameters().begin(), init.parameters().end(), r.model.parameters().begin()));
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Fit, DeterministicAndKeepsBestSnapshot) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet::parse("PL+B+T"), 0.3});
  FitOptions o;
  o.epochs = 6;
  o.batch_size = 2;
  o.seed = 4;
  const auto a = fit(problem, ModelConfig{{8}, 4}, o);
  const auto b = fit(problem, ModelConfig{{8}, 4}, o);
  EXPECT_TRUE(std::equal(a.model.parameters().begin(), a.model.parameters().end(), b.model.parameters().begin()));
  EXPECT_EQ(a.log.entries, b.log.entries);

  double last_valid = 0.0;
  for (const auto& e : a.log.entries) {
    if (e.component == "valid.total" && e.epoch == o.epochs) last_valid = e.value;
  }
  EXPECT_LE(a.best_validation, last_valid);
  const auto recomputed = validation_loss(a.model, problem, validation_triplets(problem, o.seed));
  EXPECT_EQ(recomputed.total, a.best_validation);

  std::ostringstream csv;
  a.log.write_csv(csv);
  EXPECT_EQ(csv.str().rfind("epoch,component,value\n0,valid.PL,", 0), 0u);
}

TEST(EmbedAll, Shapes) {
  Fixture f;
  const TrainingProblem problem(f.t, f.data, f.split, LossConfig{LossSet{LossKind::kTriplet}, 0.3});
  const EmbeddingModel m(problem.model_shape(ModelConfig{{8}, 4}), 0);
  const std::vector<SampleIndex> idx{0, 1, 0};
  const auto e = embed_all(m, f.data, idx);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].size(), 4u);
  EXPECT_EQ(e[0], e[2]);
  EXPECT_TRUE(embed_all(m, f.data, std::vector<SampleIndex>{}).empty());
}

}  // namespace
