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

// Hierarchical Gaussian toy data: every node's mean is its parent's mean plus
// an isotropic offset whose scale decays with depth, and samples scatter
// around their leaf's mean.

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/random.hpp"
#include "hierloss/taxonomy.hpp"

namespace hierloss {

struct IntRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  bool operator==(const IntRange&) const = default;
};

struct SynthConfig {
  std::size_t depth = 4;
  // Children per node at each depth 0..depth-1 (one entry per level).
  std::vector<IntRange> branching = {{3, 4}, {2, 3}, {2, 3}, {2, 2}};
  IntRange samples_per_leaf = {20, 40};
  std::size_t feature_dim = 32;
  double offset_scale = 1.0;
  double decay = 0.6;
  double leaf_noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(depth >= 1, "synth: depth must be at least 1");
    detail::require(branching.size() == depth, "synth: need ", depth, " branching ranges, got ", branching.size());
    for (const auto& b : branching) {
      detail::require(b.lo >= 1 && b.lo <= b.hi, "synth: impossible branching range ", b.lo, "-", b.hi);
    }
    detail::require(samples_per_leaf.lo >= 1 && samples_per_leaf.lo <= samples_per_leaf.hi,
                    "synth: impossible samples-per-leaf range ", samples_per_leaf.lo, "-", samples_per_leaf.hi);
    detail::require(feature_dim >= 2, "synth: feature dimension must be at least 2");
    detail::require(offset_scale >= 0.0 && leaf_noise >= 0.0, "synth: scales must be non-negative");
    detail::require(decay > 0.0 && decay <= 1.0, "synth: decay must lie in (0, 1]");
  }

  // Standard deviation of a node offset at depth d >= 1.
  double offset_sigma(std::size_t d) const { return offset_scale * std::pow(decay, static_cast<double>(d) - 1.0); }
};

struct SyntheticData {
  Taxonomy taxonomy;
  Dataset samples;
  std::vector<std::vector<double>> node_means;  // indexed by NodeId
};

inline SyntheticData generate(const SynthConfig& config) {
  config.validate();
  auto rng = make_rng(config.seed, Stream::kSynthetic);

  // Structure, breadth first.
  std::vector<std::pair<std::string, std::optional<std::string>>> links{{"root", std::nullopt}};
  std::vector<std::string> frontier{"root"};
  for (std::size_t d = 0; d < config.depth; ++d) {
    std::vector<std::string> next;
    for (const auto& parent : frontier) {
      const auto& range = config.branching[d];
      const auto kids = static_cast<std::size_t>(uniform_int(rng, static_cast<long>(range.lo), static_cast<long>(range.hi)));
      for (std::size_t k = 0; k < kids; ++k) {
        std::string name = (parent == "root" ? "c" : parent + ".") + std::to_string(k);
        links.emplace_back(name, parent);
        next.push_back(std::move(name));
      }
    }
    frontier = std::move(next);
  }
  auto taxonomy = Taxonomy::from_parent_links(links);

  // Means, pre-order (parents before children).
  const auto dim = config.feature_dim;
  std::vector<std::vector<double>> means(taxonomy.size(), std::vector<double>(dim, 0.0));
  for (NodeId n = 1; n < taxonomy.size(); ++n) {
    const double sigma = config.offset_sigma(taxonomy.depth(n));
    const auto& parent_mean = means[*taxonomy.parent(n)];
    for (std::size_t i = 0; i < dim; ++i) means[n][i] = parent_mean[i] + sigma * standard_normal(rng);
  }

  // Samples, leaves in pre-order.
  Dataset samples;
  char id[32];
  for (NodeId leaf : taxonomy.leaves()) {
    const auto count = static_cast<std::size_t>(uniform_int(rng, static_cast<long>(config.samples_per_leaf.lo),
                                                            static_cast<long>(config.samples_per_leaf.hi)));
    for (std::size_t s = 0; s < count; ++s) {
      std::snprintf(id, sizeof id, "s%06zu", samples.size());
      LabeledSample sample{id, taxonomy.name(leaf), std::vector<double>(dim)};
      for (std::size_t i = 0; i < dim; ++i) sample.features[i] = means[leaf][i] + config.leaf_noise * standard_normal(rng);
      samples.push_back(std::move(sample));
    }
  }
  return {std::move(taxonomy), std::move(samples), std::move(means)};
}

// E|mean(l1) - mean(l2)|^2 for two distinct leaves whose LCA sits at
// `lca_depth`, both at `leaf_depth`.
inline double expected_mean_sq_distance(const SynthConfig& config, std::size_t lca_depth, std::size_t leaf_depth) {
  double sum = 0.0;
  for (std::size_t j = lca_depth + 1; j <= leaf_depth; ++j) {
    const double s = config.offset_sigma(j);
    sum += s * s;
  }
  return 2.0 * sum * static_cast<double>(config.feature_dim);
}

}  // namespace hierloss
