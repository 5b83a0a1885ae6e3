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

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/taxonomy.hpp"
#include "json.hpp"

namespace hierloss {

struct LabeledSample {
  std::string id;
  std::string leaf;  // leaf name in the taxonomy
  std::vector<double> features;

  bool operator==(const LabeledSample&) const = default;
};

using Dataset = std::vector<LabeledSample>;

// Leaf node id of every sample; throws on labels that are not leaves of `t`.
inline std::vector<NodeId> resolve_leaves(const Taxonomy& t, std::span<const LabeledSample> data) {
  std::vector<NodeId> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    auto id = t.find(s.leaf);
    detail::require(id.has_value(), "dataset: sample '", s.id, "' has unknown leaf label '", s.leaf, "'");
    detail::require(t.is_leaf(*id), "dataset: sample '", s.id, "' is labelled with internal node '",
                    s.leaf, "'");
    out.push_back(*id);
  }
  return out;
}

// M(n): indices of all samples whose leaf lies in the subtree of `n`.
inline std::vector<SampleIndex> node_samples(const Taxonomy& t, std::span<const LabeledSample> data,
                                             NodeId n) {
  const auto leaves = resolve_leaves(t, data);
  std::vector<SampleIndex> out;
  for (SampleIndex i = 0; i < leaves.size(); ++i) {
    if (t.is_ancestor_or_self(n, leaves[i])) out.push_back(i);
  }
  return out;
}

// One JSON object per line: {"id", "leaf", "features"}.
inline void write_dataset(std::ostream& os, std::span<const LabeledSample> data) {
  for (const auto& s : data) {
    nlohmann::json line{{"id", s.id}, {"leaf", s.leaf}, {"features", s.features}};
    os << line.dump() << '\n';
  }
}

inline Dataset read_dataset(std::istream& is) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("leaf").get<std::string>(),
                     j.at("features").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
      detail::fail("dataset: line ", line_no, ": ", e.what());
    }
  }
  if (!out.empty()) {
    const auto dim = out.front().features.size();
    std::unordered_set<std::string_view> ids;
    for (const auto& s : out) {
      detail::require(ids.insert(s.id).second, "dataset: duplicate sample id '", s.id, "'");
      detail::require(s.features.size() == dim, "dataset: sample '", s.id, "' has ", s.features.size(),
                      " features, expected ", dim);
    }
  }
  return out;
}

}  // namespace hierloss
