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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "harness.hpp"

namespace {

using namespace hierloss;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Model gradients against central differences.
Outcome gradients() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0, empty = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const char* combo : {"T", "L", "PL", "B", "L+T", "PL+T", "PL+B", "PL+B+T"}) {
      const auto r = harness::check_model_gradient(seed, LossSet::parse(combo));
      if (r.triplets == 0) ++empty;
      worst = std::max(worst, r.max_rel_error);
      ++checks;
    }
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = worst < 1e-4 && secs < 30.0 && empty == 0;
  o.detail = std::to_string(checks) + " model/loss checks, max rel err " + fmt("%.2e", worst) + ", " +
             fmt("%.1f", secs) + " s";
  return o;
}

// 2. MNR and NDCG against the brute-force oracle.
Outcome metric_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = harness::random_metric_instance(rng, 1 + i % 4);
    worst = std::max(worst, std::abs(mnr(inst.lists, inst.tree, inst.leaf_of).value -
                                     oracle::mnr(inst.lists, inst.tree, inst.leaf_of)));
    for (bool sum : {true, false}) {
      const auto kind = sum ? RelevanceKind::kSum : RelevanceKind::kMax;
      worst = std::max(worst, std::abs(ndcg(inst.lists, inst.tree, inst.leaf_of, kind).value -
                                       oracle::ndcg(inst.lists, inst.tree, inst.leaf_of, sum)));
    }
  }
  const auto t = oracle::t0();
  const std::vector<NodeId> leaf_of{t.id_of("a1"), t.id_of("a1"), t.id_of("a2"), t.id_of("b1"), t.id_of("b1")};
  const std::vector<RankedList> toy{{0, {1, 2, 3, 4}}};
  const double toy_mnr = mnr(toy, t, leaf_of).value;
  Outcome o;
  o.pass = worst <= 1e-9 && toy_mnr == 0.0625;
  o.detail = "100 instances, max |lib - oracle| " + fmt("%.2e", worst) + ", toy MNR " + fmt("%.17g", toy_mnr);
  return o;
}

// 3. Sampler count, toy triples and the LCA-exclusion invariant.
Outcome sampler() {
  std::mt19937_64 rng(99);
  std::size_t count_mismatch = 0, set_mismatch = 0, violations = 0, total = 0;
  for (int i = 0; i < 50; ++i) {
    const auto t = oracle::random_tree(rng, 4);
    const auto triples = enumerate_node_triples(t);
    count_mismatch += triples.size() != count_node_triples(t);
    std::set<std::tuple<NodeId, NodeId, NodeId>> got;
    for (const auto& x : triples) {
      got.emplace(x.anchor, x.positive, x.negative);
      violations += oracle::under(t, oracle::lca(t, x.anchor, x.positive), x.negative);
    }
    set_mismatch += got != oracle::node_triples(t);
    total += triples.size();
  }
  const auto t = oracle::t0();
  const auto id = [&](const char* n) { return t.id_of(n); };
  const std::set<std::tuple<NodeId, NodeId, NodeId>> expected{
      {id("a1"), id("a2"), id("B")}, {id("a2"), id("a1"), id("B")}, {id("b1"), id("b1"), id("A")},
      {id("a1"), id("a1"), id("a2")}, {id("a2"), id("a2"), id("a1")}};
  std::set<std::tuple<NodeId, NodeId, NodeId>> toy;
  const auto toy_triples = enumerate_node_triples(t);
  for (const auto& x : toy_triples) toy.emplace(x.anchor, x.positive, x.negative);
  Outcome o;
  o.pass = count_mismatch == 0 && set_mismatch == 0 && violations == 0 && toy == expected && toy_triples.size() == 5;
  o.detail = "50 trees, " + std::to_string(total) + " triples, count mismatches " + std::to_string(count_mismatch) +
             ", invariant violations " + std::to_string(violations) + ", toy set " + (toy == expected ? "exact" : "wrong");
  return o;
}

// 4. Flat-tree reduction.
Outcome flat_tree() {
  std::size_t differing = 0, steps = 0, non_standard = 0;
  for (std::size_t leaves = 2; leaves <= 6; ++leaves) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto l = harness::flat_tree_step_losses(leaves, LossSet{LossKind::kLeaf}, seed, 20);
      const auto pl = harness::flat_tree_step_losses(leaves, LossSet{LossKind::kPerLevel}, seed, 20);
      for (std::size_t s = 0; s < l.size(); ++s) differing += l[s] != pl[s];
      steps += l.size();
    }
    const auto t = oracle::flat(leaves);
    for (const auto& x : enumerate_node_triples(t)) {
      non_standard += !(x.anchor == x.positive && t.is_leaf(x.anchor) && t.is_leaf(x.negative) && x.anchor != x.negative);
    }
  }
  Outcome o;
  o.pass = differing == 0 && non_standard == 0;
  o.detail = std::to_string(steps) + " steps, " + std::to_string(differing) + " differing L/PL losses, " +
             std::to_string(non_standard) + " non-standard triplets";
  return o;
}

// 5. Uniform-depth NDCG identity, per query.
Outcome uniform_ndcg() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  std::size_t queries = 0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = harness::random_metric_instance(rng, 1 + i % 4, true);
    for (const auto& l : inst.lists) {
      const std::vector<RankedList> one{l};
      worst = std::max(worst, std::abs(ndcg(one, inst.tree, inst.leaf_of, RelevanceKind::kSum).value -
                                       ndcg(one, inst.tree, inst.leaf_of, RelevanceKind::kMax).value));
      ++queries;
    }
  }
  Outcome o;
  o.pass = worst <= 1e-12;
  o.detail = std::to_string(queries) + " queries on uniform-depth trees, max |sum - max| " + fmt("%.2e", worst);
  return o;
}

struct SeedRun {
  AggregateReport report;
  double baseline = 0.0;
  std::size_t unseen_leaves = 0;
  std::size_t leaves = 0;
  double seconds_per_run = 0.0;
  std::string csv;
};

// Default synthetic profile, one fold, every combination.
SeedRun run_default_profile(std::uint64_t seed, const fs::path& dir) {
  ExperimentConfig c;
  c.seed = seed;
  c.synth.seed = seed;
  c.run_folds = 1;
  c.epochs = 50;
  fs::remove_all(dir);
  const auto start = Clock::now();
  SeedRun r;
  r.report = run_experiment(c, dir);
  r.seconds_per_run = seconds_since(start) / static_cast<double>(c.combinations.size());
  r.csv = read_text(dir / "aggregate.csv");

  const auto t = load_taxonomy(dir / "data" / "taxonomy.json");
  const auto data = load_dataset(dir / "data" / "dataset.jsonl");
  const auto split = split_from_json(t, data, read_json(split_path(dir / "splits", 0)));
  const auto leaf = resolve_leaves(t, data);
  std::vector<NodeId> truths;
  for (auto i : split.indices(Subset::kPrediction)) truths.push_back(leaf[i]);
  r.baseline = random_blind_baseline(t, split, truths);
  r.unseen_leaves = split.unseen_leaves.size();
  r.leaves = t.leaves().size();
  return r;
}

double mean_cell(const std::vector<SeedRun>& runs, const char* combo, const char* column) {
  double s = 0.0;
  for (const auto& r : runs) s += r.report.cell(combo, column).value().mean;
  return s / static_cast<double>(runs.size());
}

void report(int index, const char* name, const Outcome& o, bool& all) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << name << ": " << o.detail << std::endl;
  all = all && o.pass;
}

}  // namespace

int main() {
  bool all = true;
  auto guarded = [](auto&& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("error: ") + e.what()};
    }
  };
  report(1, "gradient check", guarded(gradients), all);
  report(2, "metric oracle", guarded(metric_oracle), all);
  report(3, "sampler", guarded(sampler), all);
  report(4, "flat-tree reduction", guarded(flat_tree), all);
  report(5, "uniform-depth NDCG", guarded(uniform_ndcg), all);

  const auto root = fs::temp_directory_path() / "hierloss_acceptance";
  std::vector<SeedRun> runs;
  Outcome six, seven, eight;
  try {
    for (std::uint64_t seed = 0; seed < 3; ++seed) runs.push_back(run_default_profile(seed, root / ("seed_" + std::to_string(seed))));

    const double mnr_l = mean_cell(runs, "L", "test_mnr"), mnr_pl = mean_cell(runs, "PL", "test_mnr");
    const double ndcg_l = mean_cell(runs, "L", "test_ndcg_sum"), ndcg_pl = mean_cell(runs, "PL", "test_ndcg_sum");
    const double rp_pl = mean_cell(runs, "PL", "test_leaf_rp@5"), rp_plt = mean_cell(runs, "PL+T", "test_leaf_rp@5");
    double slowest = 0.0;
    for (const auto& r : runs) slowest = std::max(slowest, r.seconds_per_run);
    six.pass = mnr_pl < mnr_l && ndcg_pl > ndcg_l && rp_plt >= rp_pl && slowest < 900.0;
    six.detail = "MNR PL " + fmt("%.4f", mnr_pl) + " vs L " + fmt("%.4f", mnr_l) + "; NDCG PL " + fmt("%.4f", ndcg_pl) +
                 " vs L " + fmt("%.4f", ndcg_l) + "; RP@5 PL+T " + fmt("%.4f", rp_plt) + " vs PL " + fmt("%.4f", rp_pl) +
                 "; " + fmt("%.1f", slowest) + " s per run; leaves " + std::to_string(runs[0].leaves);

    double blind = 0.0, baseline = 0.0;
    std::size_t fewest_unseen = SIZE_MAX;
    bool aware_ok = true;
    for (const auto& r : runs) {
      blind += r.report.cell("PL+T", "pred_acc_blind").value().mean;
      baseline += r.baseline;
      fewest_unseen = std::min(fewest_unseen, r.unseen_leaves);
      for (const auto& [combo, _] : r.report.rows) {
        const bool has_pl = LossSet::parse(combo).contains(LossKind::kPerLevel);
        aware_ok = aware_ok && r.report.cell(combo, "pred_acc_aware").has_value() == has_pl;
      }
    }
    blind /= static_cast<double>(runs.size());
    baseline /= static_cast<double>(runs.size());
    seven.pass = blind >= 2.0 * baseline && fewest_unseen >= 5 && aware_ok;
    seven.detail = "acc_blind(PL+T) " + fmt("%.4f", blind) + " vs random " + fmt("%.4f", baseline) + " (" +
                   fmt("%.2f", blind / baseline) + "x); unseen leaves >= " + std::to_string(fewest_unseen) +
                   "; acc_aware only with PL: " + (aware_ok ? "yes" : "no");

    const auto again = run_default_profile(0, root / "seed_0_again");
    eight.pass = again.csv == runs[0].csv;
    eight.detail = std::string("rerun of seed 0 aggregate.csv ") + (eight.pass ? "byte-identical" : "differs");
  } catch (const std::exception& e) {
    for (auto* o : {&six, &seven, &eight}) {
      if (o->detail.empty()) *o = Outcome{false, std::string("error: ") + e.what()};
    }
  }
  report(6, "directional reproduction", six, all);
  report(7, "generalisation metrics", seven, all);
  report(8, "end-to-end determinism", eight, all);
  if (!runs.empty()) {
    std::cout << "\naggregate.csv, seed 0:\n" << runs[0].csv;
  }
  return all ? 0 : 1;
}
