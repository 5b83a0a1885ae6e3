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

// Classification and retrieval metrics over a label tree. Sample leaves are
// passed as node ids of the full taxonomy, indexed by SampleIndex.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/datasplit.hpp"
#include "hierloss/taxonomy.hpp"
#include "json.hpp"

namespace hierloss {

// Candidates ordered by descending cosine similarity to the query; ties by
// ascending sample index. The query is never its own candidate.
struct RankedList {
  SampleIndex query = 0;
  std::vector<SampleIndex> candidates;

  bool operator==(const RankedList&) const = default;
};

// `embeddings[i]` belongs to `pool[i]`.
inline std::vector<RankedList> rank_by_cosine(std::span<const SampleIndex> pool,
                                              std::span<const std::vector<double>> embeddings) {
  detail::require(pool.size() == embeddings.size(), "metrics: ", pool.size(), " samples but ", embeddings.size(),
                  " embeddings");
  std::vector<std::vector<double>> unit;
  unit.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& e = embeddings[i];
    const double norm = std::sqrt(std::inner_product(e.begin(), e.end(), e.begin(), 0.0));
    detail::require(norm > 0.0, "metrics: sample ", pool[i], " has a zero embedding");
    auto& u = unit.emplace_back(e);
    for (auto& v : u) v /= norm;
  }
  std::vector<RankedList> out;
  out.reserve(pool.size());
  std::vector<std::pair<double, SampleIndex>> scored;
  for (std::size_t q = 0; q < pool.size(); ++q) {
    scored.clear();
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (c == q) continue;
      scored.emplace_back(std::inner_product(unit[q].begin(), unit[q].end(), unit[c].begin(), 0.0), pool[c]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    RankedList list{pool[q], {}};
    list.candidates.reserve(scored.size());
    for (const auto& s : scored) list.candidates.push_back(s.second);
    out.push_back(std::move(list));
  }
  return out;
}

// Macro-averaged F1 over `classes`; a class with no true and no predicted
// samples scores 0 and still counts.
inline double leaf_f1(std::span<const NodeId> predictions, std::span<const NodeId> truths,
                      std::span<const NodeId> classes) {
  detail::require(!truths.empty(), "metrics: F1 of an empty set");
  detail::require(predictions.size() == truths.size(), "metrics: ", predictions.size(), " predictions for ",
                  truths.size(), " samples");
  detail::require(!classes.empty(), "metrics: F1 over zero classes");
  double sum = 0.0;
  for (NodeId c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      const bool p = predictions[i] == c, t = truths[i] == c;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    if (tp == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    sum += 2.0 * precision * recall / (precision + recall);
  }
  return sum / static_cast<double>(classes.size());
}

// Mean fraction of the top-k candidates that share the query's leaf.
inline double rp_at_k(std::span<const RankedList> lists, std::span<const NodeId> sample_leaf, std::size_t k = 5) {
  detail::require(k > 0, "metrics: k must be positive");
  detail::require(!lists.empty(), "metrics: retrieval precision of an empty set");
  double sum = 0.0;
  for (const auto& l : lists) {
    detail::require(l.candidates.size() >= k, "metrics: query ", l.query, " has only ", l.candidates.size(),
                    " candidates, RP@", k, " needs ", k);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) hits += sample_leaf[l.candidates[r]] == sample_leaf[l.query];
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  return sum / static_cast<double>(lists.size());
}

struct MnrResult {
  double value = 0.0;
  std::size_t skipped_levels = 0;  // (query, level) pairs with no correct candidate
};

// Mean normalised rank over the tree's retained levels. At each level the
// query's ancestor-or-self n defines the correct candidates (those in M(n));
// each contributes (rank - 1) / N. Levels without correct candidates are
// skipped for that query.
inline MnrResult mnr(std::span<const RankedList> lists, const Taxonomy& t, std::span<const NodeId> sample_leaf) {
  detail::require(!lists.empty(), "metrics: MNR of an empty set");
  const auto& levels = t.levels();
  detail::require(!levels.empty(), "metrics: MNR needs a tree with a retained level");
  MnrResult out;
  double total = 0.0;
  std::size_t queries = 0;
  for (const auto& l : lists) {
    const auto n = l.candidates.size();
    detail::require(n > 0, "metrics: query ", l.query, " has no candidates");
    double level_sum = 0.0;
    std::size_t used = 0;
    for (const auto& level : levels) {
      const NodeId target = t.target_at_level(sample_leaf[l.query], level.depth);
      double rank_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t r = 0; r < n; ++r) {
        if (!t.is_ancestor_or_self(target, sample_leaf[l.candidates[r]])) continue;
        rank_sum += static_cast<double>(r) / static_cast<double>(n);
        ++correct;
      }
      if (correct == 0) {
        ++out.skipped_levels;
        continue;
      }
      level_sum += rank_sum / static_cast<double>(correct);
      ++used;
    }
    if (used == 0) continue;
    total += level_sum / static_cast<double>(used);
    ++queries;
  }
  out.value = queries ? total / static_cast<double>(queries) : 0.0;
  return out;
}

enum class RelevanceKind { kSum, kMax };

inline std::string_view to_string(RelevanceKind k) { return k == RelevanceKind::kSum ? "sum" : "max"; }

// Tree relevance of two leaves: rel_sum = 1 - (d1 + d2) / D_T and
// rel_max = 1 - max(d1, d2) / H_T, with d the edge count to the LCA.
inline double relevance(const Taxonomy& t, NodeId a, NodeId b, RelevanceKind kind) {
  const NodeId top = t.lca(a, b);
  const auto da = t.node_distance(a, top);
  const auto db = t.node_distance(b, top);
  if (da == 0 && db == 0) return 1.0;
  const auto scale = kind == RelevanceKind::kSum ? t.diameter() : t.height();
  detail::require(scale > 0, "metrics: degenerate tree for distinct nodes '", t.name(a), "', '", t.name(b), "'");
  const auto dist = kind == RelevanceKind::kSum ? da + db : std::max(da, db);
  return 1.0 - static_cast<double>(dist) / static_cast<double>(scale);
}

struct NdcgResult {
  double value = 0.0;
  std::size_t skipped_queries = 0;  // ideal DCG of zero
};

// Linear-gain DCG over the full candidate list, normalised by the DCG of the
// relevance-sorted order; mean over queries.
inline NdcgResult ndcg(std::span<const RankedList> lists, const Taxonomy& t, std::span<const NodeId> sample_leaf,
                       RelevanceKind kind) {
  detail::require(!lists.empty(), "metrics: NDCG of an empty set");
  NdcgResult out;
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> rel;
  for (const auto& l : lists) {
    detail::require(!l.candidates.empty(), "metrics: query ", l.query, " has no candidates");
    rel.clear();
    for (auto c : l.candidates) rel.push_back(relevance(t, sample_leaf[l.query], sample_leaf[c], kind));
    double dcg = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) dcg += rel[i] / std::log2(static_cast<double>(i) + 2.0);
    std::sort(rel.begin(), rel.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) idcg += rel[i] / std::log2(static_cast<double>(i) + 2.0);
    if (idcg <= 0.0) {
      ++out.skipped_queries;
      continue;
    }
    total += dcg / idcg;
    ++used;
  }
  out.value = used ? total / static_cast<double>(used) : 0.0;
  return out;
}

// Lift `node` to depth `d`, or keep it when it is shallower.
inline NodeId lift_to_depth(const Taxonomy& t, NodeId node, std::size_t d) {
  return t.ancestor_at_depth(node, std::min(d, t.depth(node)));
}

// Fraction of samples whose predicted (seen) leaf, lifted to the depth of
// the true leaf's lowest seen ancestor, equals that ancestor.
inline double acc_blind(const Taxonomy& t, const SplitAssignment& split, std::span<const NodeId> true_leaves,
                        std::span<const NodeId> predicted_leaves) {
  detail::require(!true_leaves.empty(), "metrics: blind accuracy of an empty prediction set");
  detail::require(true_leaves.size() == predicted_leaves.size(), "metrics: prediction count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < true_leaves.size(); ++i) {
    const NodeId lsa = lowest_seen_ancestor(t, split, true_leaves[i]);
    correct += lift_to_depth(t, predicted_leaves[i], t.depth(lsa)) == lsa;
  }
  return static_cast<double>(correct) / static_cast<double>(true_leaves.size());
}

// `level_predictions[i][j]` is sample i's argmax class (full-tree id) on the
// j-th retained level of the training tree, whose depth is `level_depths[j]`.
// The head at the LSA's depth is used; when that depth is not a retained
// level the next deeper head is used and its prediction lifted.
inline double acc_aware(const Taxonomy& t, const SplitAssignment& split, std::span<const NodeId> true_leaves,
                        std::span<const std::vector<NodeId>> level_predictions,
                        std::span<const std::size_t> level_depths) {
  detail::require(!true_leaves.empty(), "metrics: aware accuracy of an empty prediction set");
  detail::require(true_leaves.size() == level_predictions.size(), "metrics: prediction count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < true_leaves.size(); ++i) {
    const NodeId lsa = lowest_seen_ancestor(t, split, true_leaves[i]);
    const auto d = t.depth(lsa);
    auto head = std::find_if(level_depths.begin(), level_depths.end(), [&](std::size_t ld) { return ld >= d; });
    detail::require(head != level_depths.end(), "metrics: no level head at or below depth ", d, " for '",
                    t.name(lsa), "'");
    const NodeId pred = level_predictions[i].at(static_cast<std::size_t>(head - level_depths.begin()));
    correct += lift_to_depth(t, pred, d) == lsa;
  }
  return static_cast<double>(correct) / static_cast<double>(true_leaves.size());
}

// Expected acc_blind of a predictor that picks a seen leaf uniformly at random.
inline double random_blind_baseline(const Taxonomy& t, const SplitAssignment& split,
                                    std::span<const NodeId> true_leaves) {
  detail::require(!true_leaves.empty() && !split.seen_leaves.empty(), "metrics: empty baseline");
  double sum = 0.0;
  for (NodeId leaf : true_leaves) {
    const NodeId lsa = lowest_seen_ancestor(t, split, leaf);
    std::size_t hits = 0;
    for (NodeId s : split.seen_leaves) hits += lift_to_depth(t, s, t.depth(lsa)) == lsa;
    sum += static_cast<double>(hits) / static_cast<double>(split.seen_leaves.size());
  }
  return sum / static_cast<double>(true_leaves.size());
}

// Every number for one fold, one loss combination and one evaluated set.
struct MetricsReport {
  std::optional<double> leaf_f1;
  std::optional<double> leaf_rp_at_5;
  std::optional<double> mnr;
  std::optional<double> ndcg_sum;
  std::optional<double> ndcg_max;
  std::optional<double> acc_blind;
  std::optional<double> acc_aware;
  std::optional<double> ratio_blind_aware;
  std::size_t samples = 0;
  std::size_t mnr_skipped_levels = 0;
  std::size_t ndcg_skipped_queries = 0;

  bool operator==(const MetricsReport&) const = default;
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("leaf_f1", r.leaf_f1);
  put("leaf_rp_at_5", r.leaf_rp_at_5);
  put("mnr", r.mnr);
  put("ndcg_sum", r.ndcg_sum);
  put("ndcg_max", r.ndcg_max);
  put("acc_blind", r.acc_blind);
  put("acc_aware", r.acc_aware);
  put("ratio_blind_aware", r.ratio_blind_aware);
  j["samples"] = r.samples;
  j["mnr_skipped_levels"] = r.mnr_skipped_levels;
  j["ndcg_skipped_queries"] = r.ndcg_skipped_queries;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto get = [&](const char* key, std::optional<double>& v) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) v = it->get<double>();
  };
  try {
    get("leaf_f1", r.leaf_f1);
    get("leaf_rp_at_5", r.leaf_rp_at_5);
    get("mnr", r.mnr);
    get("ndcg_sum", r.ndcg_sum);
    get("ndcg_max", r.ndcg_max);
    get("acc_blind", r.acc_blind);
    get("acc_aware", r.acc_aware);
    get("ratio_blind_aware", r.ratio_blind_aware);
    r.samples = j.value("samples", std::size_t{0});
    r.mnr_skipped_levels = j.value("mnr_skipped_levels", std::size_t{0});
    r.ndcg_skipped_queries = j.value("ndcg_skipped_queries", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    detail::fail("metrics: malformed report: ", e.what());
  }
  return r;
}

}  // namespace hierloss
