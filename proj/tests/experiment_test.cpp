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

#include <filesystem>
#include <sstream>

#include "oracles.hpp"

namespace {

using namespace hierloss;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hierloss_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small enough to train every combination in a few seconds.
ExperimentConfig tiny_config() {
  std::istringstream in(R"(
    # tiny profile
    folds = 3
    run_folds = 1
    epochs = 2
    hidden = 8
    embedding_dim = 4
    seed = 7
    synth.depth = 2
    synth.branching = 3-3, 2-3
    synth.samples_per_leaf = 12-20
    synth.feature_dim = 6
  )");
  ExperimentConfig c;
  c.apply(parse_key_values(in));
  return c;
}

TEST(Config, ParsesKeysAndDefaults) {
  const auto c = tiny_config();
  EXPECT_EQ(c.folds, 3u);
  EXPECT_EQ(c.folds_to_run(), 1u);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{8}));
  EXPECT_EQ(c.synth.branching, (std::vector<IntRange>{{3, 3}, {2, 3}}));
  EXPECT_EQ(c.synth.seed, 7u);
  EXPECT_EQ(c.combinations.size(), 6u);
  EXPECT_EQ(c.margin, 0.3);
  EXPECT_EQ(c.fit_options(2).seed, 9u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(c.apply({{"colour", "blue"}}), Error);
  EXPECT_THROW(c.apply({{"epochs", "many"}}), Error);
  EXPECT_THROW(c.apply({{"epochs", "-3"}}), Error);
  ExperimentConfig d;
  d.apply({{"combinations", "PL,B"}});
  EXPECT_THROW(d.validate(), Error);
  ExperimentConfig e;
  e.apply({{"taxonomy", "/nonexistent/t.json"}, {"dataset", "/nonexistent/d.jsonl"}});
  EXPECT_THROW(e.validate(), Error);
  std::istringstream bad("epochs 3\n");
  EXPECT_THROW(parse_key_values(bad), Error);
}

TEST(MeanSem, Values) {
  const auto m = mean_sem({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.sem, 1.0 / std::sqrt(3.0));
  EXPECT_EQ(mean_sem({0.5}).sem, 0.0);
}

TEST(Stages, SampleTripletsOnToyTree) {
  const auto t = oracle::t0();
  const auto data = oracle::make_dataset(t, {10, 10, 10}, 2, 0);
  const auto split = make_split(t, data, FoldLeaves{t.leaves(), {}}, 0, 0);
  std::ostringstream out;
  EXPECT_EQ(sample_triplets_stage(t, data, split, 0, out), 5u);
  std::istringstream lines(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("anchor") && j.contains("positive") && j.contains("negative"));
    ++n;
  }
  EXPECT_EQ(n, 5u);
}

TEST(Stages, CheckpointRoundTripAndEvaluation) {
  const auto dir = scratch("ckpt");
  const auto c = tiny_config();
  const auto data = gen_data_stage(c.synth, dir / "data");
  const auto splits = split_stage(data.taxonomy, data.samples, c.folds, c.seed, dir / "splits");
  ASSERT_EQ(splits.size(), 3u);
  EXPECT_TRUE(fs::exists(split_path(dir / "splits", 2)));

  const auto ckpt = train_stage(data.taxonomy, data.samples, splits[0], c.loss_config(LossSet{LossKind::kLeaf}),
                                c.model, c.fit_options(0), dir / "L", "data.jsonl");
  const auto back = Checkpoint::from_json(read_json(dir / "L" / "checkpoint.json"));
  EXPECT_EQ(back.taxonomy, ckpt.taxonomy);
  EXPECT_EQ(back.loss.active, ckpt.loss.active);
  EXPECT_EQ(back.dataset_path, std::optional<std::string>("data.jsonl"));
  EXPECT_TRUE(std::equal(back.model.parameters().begin(), back.model.parameters().end(),
                         ckpt.model.parameters().begin()));
  EXPECT_EQ(read_text(dir / "L" / "log.csv").rfind("epoch,component,value\n", 0), 0u);

  const auto test = evaluate_stage(back, data.samples, splits[0], Subset::kTest, dir / "L" / "test.json");
  EXPECT_TRUE(test.leaf_f1 && test.mnr && test.ndcg_sum && test.ndcg_max) << to_json(test).dump();
  // RP@5 needs more than five samples in the pool.
  EXPECT_EQ(test.leaf_rp_at_5.has_value(), test.samples > 5);
  const auto pred = evaluate_stage(back, data.samples, splits[0], Subset::kPrediction, std::nullopt);
  EXPECT_TRUE(pred.acc_blind.has_value());
  EXPECT_FALSE(pred.acc_aware.has_value());
  EXPECT_FALSE(pred.ratio_blind_aware.has_value());
  EXPECT_EQ(metrics_from_json(read_json(dir / "L" / "test.json")), test);

  auto broken = read_json(dir / "L" / "checkpoint.json");
  broken["format"] = "other";
  EXPECT_THROW(Checkpoint::from_json(broken), Error);
}

TEST(RunExperiment, LayoutReportAndDeterminism) {
  const auto a = scratch("run_a"), b = scratch("run_b");
  const auto c = tiny_config();
  const auto report = run_experiment(c, a);
  run_experiment(c, b);
  EXPECT_EQ(read_text(a / "aggregate.csv"), read_text(b / "aggregate.csv"));

  for (const char* f : {"checkpoint.json", "log.csv", "test.json", "prediction.json"}) {
    EXPECT_TRUE(fs::exists(a / "fold_0" / "PL+B+T" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(a / "fold_1"));

  ASSERT_EQ(report.rows.size(), 6u);
  EXPECT_EQ(report.rows[0].first, "L");
  EXPECT_EQ(report.rows[5].first, "PL+B+T");
  EXPECT_FALSE(report.cell("L", "pred_acc_aware").has_value());
  EXPECT_FALSE(report.cell("L+T", "pred_acc_aware").has_value());
  EXPECT_TRUE(report.cell("PL", "pred_acc_aware").has_value());
  EXPECT_TRUE(report.cell("L", "test_mnr").has_value());

  const auto csv = read_text(a / "aggregate.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "combination,test_leaf_f1,test_leaf_rp@5,test_mnr,test_ndcg_sum,test_ndcg_max,pred_acc_blind,"
            "pred_acc_aware,pred_blind/aware,pred_ndcg_sum,pred_ndcg_max");
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  EXPECT_EQ(line.rfind("L,", 0), 0u);
  EXPECT_NE(line.find(",-,"), std::string::npos);
}

TEST(RunExperiment, ReportsStageContext) {
  auto c = tiny_config();
  c.combinations = {LossSet{LossKind::kLeaf}};
  c.synth.samples_per_leaf = {3, 5};  // no leaf can be seen
  try {
    run_experiment(c, scratch("run_err"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("split"), std::string::npos) << e.what();
  }
}

}  // namespace
