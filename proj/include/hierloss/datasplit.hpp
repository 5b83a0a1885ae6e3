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
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/random.hpp"
#include "hierloss/taxonomy.hpp"
#include "json.hpp"

namespace hierloss {

// Leaves with fewer samples than this are unseen in every fold.
inline constexpr std::size_t kMinSeenLeafSamples = 10;

enum class Subset : std::uint8_t { kTrain, kValid, kTest, kPrediction };

inline std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::kTrain: return "train";
    case Subset::kValid: return "valid";
    case Subset::kTest: return "test";
    case Subset::kPrediction: return "prediction";
  }
  return "?";
}

inline Subset subset_from_string(std::string_view s) {
  if (s == "train") return Subset::kTrain;
  if (s == "valid") return Subset::kValid;
  if (s == "test") return Subset::kTest;
  if (s == "prediction") return Subset::kPrediction;
  detail::fail("split: unknown subset '", s, "'");
}

struct FoldLeaves {
  std::vector<NodeId> seen;    // pre-order
  std::vector<NodeId> unseen;  // pre-order
};

// Per-leaf sample counts indexed by NodeId (internal nodes ignored).
inline std::vector<std::size_t> leaf_counts(const Taxonomy& t, std::span<const LabeledSample> data) {
  std::vector<std::size_t> counts(t.size(), 0);
  for (NodeId leaf : resolve_leaves(t, data)) ++counts[leaf];
  return counts;
}

// Eligible leaves (>= kMinSeenLeafSamples) are shuffled and dealt round-robin
// into `folds` groups; fold i hides group i plus every small leaf.
inline std::vector<FoldLeaves> split_leaves(const Taxonomy& t, std::span<const std::size_t> counts,
                                            std::size_t folds, std::uint64_t seed) {
  detail::require(folds >= 2, "split: need at least 2 folds, got ", folds);
  detail::require(counts.size() == t.size(), "split: counts must be indexed by node id");
  std::vector<NodeId> eligible;
  for (NodeId leaf : t.leaves()) {
    if (counts[leaf] >= kMinSeenLeafSamples) eligible.push_back(leaf);
  }
  detail::require(!eligible.empty(), "split: no leaf has at least ", kMinSeenLeafSamples, " samples");

  auto rng = make_rng(seed, Stream::kSplitLeaves);
  shuffle(std::span(eligible), rng);
  std::vector<std::size_t> group(t.size(), 0);
  for (std::size_t i = 0; i < eligible.size(); ++i) group[eligible[i]] = i % folds;

  std::vector<FoldLeaves> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    for (NodeId leaf : t.leaves()) {
      const bool hidden = counts[leaf] < kMinSeenLeafSamples || group[leaf] == f;
      (hidden ? out[f].unseen : out[f].seen).push_back(leaf);
    }
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct WithinLeafSplit {
  std::vector<SampleIndex> train, valid, test;
};

// Shuffles then cuts; valid/test sizes are floored and the remainder goes to
// train. All three parts must come out non-empty.
inline WithinLeafSplit split_within_leaf(std::vector<SampleIndex> samples, const SplitRatios& ratios,
                                         Rng& rng) {
  const auto n = samples.size();
  // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
  auto part = [n](double r) { return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)); };
  const auto n_valid = part(ratios.valid);
  const auto n_test = part(ratios.test);
  detail::require(n_valid >= 1 && n_test >= 1 && n > n_valid + n_test, "split: ", n,
                  " samples are too few for non-empty train/valid/test parts");
  shuffle(std::span(samples), rng);
  WithinLeafSplit out;
  const auto n_train = n - n_valid - n_test;
  out.train.assign(samples.begin(), samples.begin() + n_train);
  out.valid.assign(samples.begin() + n_train, samples.begin() + n_train + n_valid);
  out.test.assign(samples.begin() + n_train + n_valid, samples.end());
  return out;
}

inline WithinLeafSplit split_within_leaf(std::vector<SampleIndex> samples, const SplitRatios& ratios,
                                         std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::kSplitWithinLeaf);
  return split_within_leaf(std::move(samples), ratios, rng);
}

struct SplitAssignment {
  std::size_t fold_index = 0;
  std::vector<NodeId> seen_leaves;
  std::vector<NodeId> unseen_leaves;
  std::vector<Subset> partition;  // indexed by SampleIndex

  std::vector<SampleIndex> indices(Subset s) const {
    std::vector<SampleIndex> out;
    for (SampleIndex i = 0; i < partition.size(); ++i) {
      if (partition[i] == s) out.push_back(i);
    }
    return out;
  }

  bool is_seen_leaf(NodeId leaf) const {
    return std::binary_search(seen_leaves.begin(), seen_leaves.end(), leaf);
  }

  bool operator==(const SplitAssignment&) const = default;
};

// Assigns every sample of fold `fold_index`. Seen leaves are split 8:1:1 in
// pre-order with one RNG stream derived from `seed`.
inline SplitAssignment make_split(const Taxonomy& t, std::span<const LabeledSample> data,
                                  const FoldLeaves& leaves, std::size_t fold_index, std::uint64_t seed,
                                  const SplitRatios& ratios = {}) {
  const auto sample_leaf = resolve_leaves(t, data);
  std::vector<std::vector<SampleIndex>> by_leaf(t.size());
  for (SampleIndex i = 0; i < sample_leaf.size(); ++i) by_leaf[sample_leaf[i]].push_back(i);

  SplitAssignment split;
  split.fold_index = fold_index;
  split.seen_leaves = leaves.seen;
  split.unseen_leaves = leaves.unseen;
  std::sort(split.seen_leaves.begin(), split.seen_leaves.end());
  std::sort(split.unseen_leaves.begin(), split.unseen_leaves.end());
  split.partition.assign(data.size(), Subset::kPrediction);

  auto rng = make_rng(seed, Stream::kSplitWithinLeaf);
  for (NodeId leaf : split.seen_leaves) {
    auto parts = split_within_leaf(by_leaf[leaf], ratios, rng);
    for (auto i : parts.train) split.partition[i] = Subset::kTrain;
    for (auto i : parts.valid) split.partition[i] = Subset::kValid;
    for (auto i : parts.test) split.partition[i] = Subset::kTest;
  }
  return split;
}

// A node is seen when at least one seen leaf lies in its subtree.
inline bool is_seen_node(const Taxonomy& t, const SplitAssignment& split, NodeId n) {
  for (NodeId leaf : split.seen_leaves) {
    if (t.is_ancestor_or_self(n, leaf)) return true;
  }
  return false;
}

inline NodeId lowest_seen_ancestor(const Taxonomy& t, const SplitAssignment& split, NodeId unseen_leaf) {
  detail::require(t.is_leaf(unseen_leaf) && !split.is_seen_leaf(unseen_leaf), "split: '",
                  t.name(unseen_leaf), "' is not an unseen leaf");
  NodeId n = unseen_leaf;
  while (t.parent(n)) {
    n = *t.parent(n);
    if (is_seen_node(t, split, n)) return n;
  }
  return n;
}

// The seen part of a taxonomy plus the node correspondence with the original.
struct PrunedTaxonomy {
  Taxonomy tree;
  std::vector<NodeId> to_original;                  // pruned id -> original id
  std::vector<std::optional<NodeId>> from_original;  // original id -> pruned id
};

inline PrunedTaxonomy pruned_seen_taxonomy(const Taxonomy& t, const SplitAssignment& split) {
  detail::require(!split.seen_leaves.empty(), "split: no seen leaves to train on");
  std::vector<std::pair<std::string, std::optional<std::string>>> links;
  for (NodeId n = 0; n < t.size(); ++n) {
    if (!is_seen_node(t, split, n)) continue;
    std::optional<std::string> parent;
    if (t.parent(n)) parent = t.name(*t.parent(n));
    links.emplace_back(t.name(n), parent);
  }
  PrunedTaxonomy out{Taxonomy::from_parent_links(links), {}, std::vector<std::optional<NodeId>>(t.size())};
  out.to_original.resize(out.tree.size());
  for (NodeId p = 0; p < out.tree.size(); ++p) {
    const NodeId o = t.id_of(out.tree.name(p));
    out.to_original[p] = o;
    out.from_original[o] = p;
  }
  return out;
}

inline nlohmann::json split_to_json(const Taxonomy& t, std::span<const LabeledSample> data,
                                    const SplitAssignment& split) {
  nlohmann::json j;
  j["fold"] = split.fold_index;
  j["seen"] = nlohmann::json::array();
  j["unseen"] = nlohmann::json::array();
  for (NodeId n : split.seen_leaves) j["seen"].push_back(t.name(n));
  for (NodeId n : split.unseen_leaves) j["unseen"].push_back(t.name(n));
  auto& part = j["partition"] = nlohmann::json::object();
  for (SampleIndex i = 0; i < data.size(); ++i) part[data[i].id] = std::string(to_string(split.partition[i]));
  return j;
}

inline SplitAssignment split_from_json(const Taxonomy& t, std::span<const LabeledSample> data,
                                       const nlohmann::json& j) {
  SplitAssignment split;
  try {
    split.fold_index = j.at("fold").get<std::size_t>();
    for (const auto& name : j.at("seen")) split.seen_leaves.push_back(t.id_of(name.get<std::string>()));
    for (const auto& name : j.at("unseen")) split.unseen_leaves.push_back(t.id_of(name.get<std::string>()));
    const auto& part = j.at("partition");
    split.partition.reserve(data.size());
    for (const auto& s : data) {
      auto it = part.find(s.id);
      detail::require(it != part.end(), "split: sample '", s.id, "' missing from partition");
      split.partition.push_back(subset_from_string(it->get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    detail::fail("split: malformed document: ", e.what());
  }
  std::sort(split.seen_leaves.begin(), split.seen_leaves.end());
  std::sort(split.unseen_leaves.begin(), split.unseen_leaves.end());
  return split;
}

}  // namespace hierloss
