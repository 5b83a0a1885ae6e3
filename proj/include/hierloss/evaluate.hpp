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

#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "hierloss/datasplit.hpp"
#include "hierloss/metrics.hpp"
#include "hierloss/model.hpp"
#include "hierloss/training.hpp"

namespace hierloss {

namespace detail {

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

// Leaf predicted by the leaf head (L) or by the deepest level head (PL),
// as a full-tree node id. Absent when the model has neither head.
inline std::optional<NodeId> predict_leaf(const TrainingProblem& problem, const EmbeddingModel::Output& out) {
  const auto& layout = problem.layout();
  const auto& to_original = problem.pruned().to_original;
  if (!layout.leaf_classes.empty()) return to_original[layout.leaf_classes[detail::argmax(out.leaf)]];
  if (!layout.levels.empty()) {
    const auto& deepest = layout.levels.back();
    return to_original[deepest.classes[detail::argmax(out.levels.back())]];
  }
  return std::nullopt;
}

// Metrics of `model` on one partition. Retrieval candidates are the other
// members of the same partition; tree relevance uses the full taxonomy.
inline MetricsReport evaluate_set(const EmbeddingModel& model, const TrainingProblem& problem, Subset set) {
  detail::require(set == Subset::kTest || set == Subset::kPrediction, "evaluate: only test and prediction sets");
  const auto& t = problem.taxonomy();
  const auto& data = problem.data();
  const auto& split = problem.split();
  const auto pool = split.indices(set);
  detail::require(pool.size() >= 2, "evaluate: ", to_string(set), " set has ", pool.size(), " samples");
  const auto sample_leaf = resolve_leaves(t, data);

  std::vector<EmbeddingModel::Output> outputs;
  std::vector<std::vector<double>> embeddings;
  for (auto i : pool) {
    outputs.push_back(model.forward(data[i].features));
    embeddings.push_back(outputs.back().embedding);
  }
  const auto lists = rank_by_cosine(pool, embeddings);

  MetricsReport r;
  r.samples = pool.size();
  const auto m = mnr(lists, t, sample_leaf);
  r.mnr = m.value;
  r.mnr_skipped_levels = m.skipped_levels;
  const auto ns = ndcg(lists, t, sample_leaf, RelevanceKind::kSum);
  const auto nm = ndcg(lists, t, sample_leaf, RelevanceKind::kMax);
  r.ndcg_sum = ns.value;
  r.ndcg_max = nm.value;
  r.ndcg_skipped_queries = ns.skipped_queries;

  std::vector<NodeId> truths, predicted;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    truths.push_back(sample_leaf[pool[k]]);
    if (auto p = predict_leaf(problem, outputs[k])) predicted.push_back(*p);
  }
  const bool has_leaf_prediction = predicted.size() == pool.size();

  if (set == Subset::kTest) {
    if (has_leaf_prediction) r.leaf_f1 = leaf_f1(predicted, truths, split.seen_leaves);
    if (pool.size() > 5) r.leaf_rp_at_5 = rp_at_k(lists, sample_leaf, 5);
    return r;
  }

  if (has_leaf_prediction) r.acc_blind = acc_blind(t, split, truths, predicted);
  const auto& levels = problem.layout().levels;
  if (!levels.empty()) {
    std::vector<std::size_t> depths;
    for (const auto& l : levels) depths.push_back(l.depth);
    std::vector<std::vector<NodeId>> level_predictions;
    for (const auto& out : outputs) {
      auto& row = level_predictions.emplace_back();
      for (std::size_t j = 0; j < levels.size(); ++j) {
        row.push_back(problem.pruned().to_original[levels[j].classes[detail::argmax(out.levels[j])]]);
      }
    }
    r.acc_aware = acc_aware(t, split, truths, level_predictions, depths);
    if (r.acc_blind && *r.acc_aware > 0.0) r.ratio_blind_aware = *r.acc_blind / *r.acc_aware;
  }
  return r;
}

}  // namespace hierloss
