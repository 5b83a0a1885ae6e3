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

// Offline generalised-triplet mining. Node triples are a pure function of the
// tree; each epoch draws one concrete sample triplet per node triple.

#include <cstdint>
#include <span>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/datasplit.hpp"
#include "hierloss/random.hpp"
#include "hierloss/taxonomy.hpp"

namespace hierloss {

struct NodeTriple {
  NodeId anchor = 0;
  NodeId positive = 0;
  NodeId negative = 0;

  bool operator==(const NodeTriple&) const = default;
  auto operator<=>(const NodeTriple&) const = default;
};

struct TripletInstance {
  SampleIndex anchor = 0;
  SampleIndex positive = 0;
  SampleIndex negative = 0;
  NodeTriple nodes;

  bool operator==(const TripletInstance&) const = default;
};

namespace detail {

// Follows single-child links downwards; every node on the way has the same
// sample set M, so a same-node triple is stated at the lowest such node.
inline NodeId collapse_chain(const Taxonomy& t, NodeId n) {
  while (t.children(n).size() == 1) n = t.children(n).front();
  return n;
}

}  // namespace detail

// For every parent with >= 2 children and every ordered child pair
// (n+, n-): a same-node triple when n+ has <= 1 child, otherwise one triple
// per ordered child pair (n_a, n_p) of n+. Parents are visited in pre-order.
inline std::vector<NodeTriple> enumerate_node_triples(const Taxonomy& t) {
  detail::require(t.leaves().size() >= 2, "sampler: need at least 2 leaves, tree has ",
                  t.leaves().size());
  std::vector<NodeTriple> out;
  for (NodeId v = 0; v < t.size(); ++v) {
    const auto& kids = t.children(v);
    if (kids.size() < 2) continue;
    for (NodeId plus : kids) {
      for (NodeId minus : kids) {
        if (plus == minus) continue;
        const auto& inner = t.children(plus);
        if (inner.size() <= 1) {
          const NodeId both = detail::collapse_chain(t, plus);
          out.push_back({both, both, minus});
          continue;
        }
        for (NodeId a : inner) {
          for (NodeId p : inner) {
            if (a != p) out.push_back({a, p, minus});
          }
        }
      }
    }
  }
  return out;
}

// Closed form of enumerate_node_triples().size():
//   sum over parents v with c_v >= 2 of (c_v - 1) * sum_{n+} g(n+),
//   g(n) = c_n (c_n - 1) if c_n >= 2 else 1.
inline std::size_t count_node_triples(const Taxonomy& t) {
  std::size_t total = 0;
  for (NodeId v = 0; v < t.size(); ++v) {
    const auto c_v = t.children(v).size();
    if (c_v < 2) continue;
    std::size_t g_sum = 0;
    for (NodeId plus : t.children(v)) {
      const auto c = t.children(plus).size();
      g_sum += c >= 2 ? c * (c - 1) : 1;
    }
    total += (c_v - 1) * g_sum;
  }
  return total;
}

// Samples of `pool` grouped by every node of `t` whose subtree holds them.
// Sample leaves are looked up by name, so `t` may be a pruned tree.
inline std::vector<std::vector<SampleIndex>> members_by_node(const Taxonomy& t,
                                                             std::span<const LabeledSample> data,
                                                             std::span<const SampleIndex> pool) {
  std::vector<std::vector<SampleIndex>> members(t.size());
  for (SampleIndex i : pool) {
    auto leaf = t.find(data[i].leaf);
    detail::require(leaf.has_value() && t.is_leaf(*leaf), "sampler: sample '", data[i].id,
                    "' has leaf '", data[i].leaf, "' which is not a leaf of the sampling tree");
    for (NodeId n = *leaf;; n = *t.parent(n)) {
      members[n].push_back(i);
      if (!t.parent(n)) break;
    }
  }
  return members;
}

enum class ShortagePolicy {
  kThrow,  // a node without enough samples is a taxonomy/split mismatch
  kSkip,   // drop the triple (used for sparse validation pools)
};

inline std::vector<TripletInstance> instantiate_triplets(
    const Taxonomy& t, const std::vector<std::vector<SampleIndex>>& members,
    std::span<const NodeTriple> triples, std::uint64_t seed, ShortagePolicy policy = ShortagePolicy::kThrow) {
  auto rng = make_rng(seed, Stream::kEpochTriplets);
  std::vector<TripletInstance> out;
  out.reserve(triples.size());
  for (const auto& tr : triples) {
    const auto& a = members.at(tr.anchor);
    const auto& p = members.at(tr.positive);
    const auto& n = members.at(tr.negative);
    const std::size_t need_ap = tr.anchor == tr.positive ? 2 : 1;
    if (a.size() < need_ap || p.empty() || n.empty()) {
      if (policy == ShortagePolicy::kSkip) continue;
      const NodeId short_node = n.empty() ? tr.negative : (p.empty() ? tr.positive : tr.anchor);
      detail::fail("sampler: node '", t.name(short_node), "' has too few training samples (",
                   members.at(short_node).size(), ") for triple (", t.name(tr.anchor), ", ",
                   t.name(tr.positive), ", ", t.name(tr.negative), ")");
    }
    TripletInstance inst;
    inst.nodes = tr;
    if (tr.anchor == tr.positive) {
      const auto i = uniform_index(rng, a.size());
      auto j = uniform_index(rng, a.size() - 1);
      if (j >= i) ++j;
      inst.anchor = a[i];
      inst.positive = a[j];
    } else {
      inst.anchor = a[uniform_index(rng, a.size())];
      inst.positive = p[uniform_index(rng, p.size())];
    }
    inst.negative = n[uniform_index(rng, n.size())];
    out.push_back(inst);
  }
  return out;
}

// One training-partition triplet per node triple. `t` is the (pruned)
// training tree; `epoch_seed` is fold seed + epoch index.
inline std::vector<TripletInstance> instantiate_epoch(const Taxonomy& t, std::span<const LabeledSample> data,
                                                      const SplitAssignment& split,
                                                      std::span<const NodeTriple> triples,
                                                      std::uint64_t epoch_seed) {
  const auto train = split.indices(Subset::kTrain);
  return instantiate_triplets(t, members_by_node(t, data, train), triples, epoch_seed);
}

}  // namespace hierloss
